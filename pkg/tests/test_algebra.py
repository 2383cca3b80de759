"""Exact-arithmetic core: complex rationals, sparse polynomials, composition."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from fischer_nf.algebra import (
    BiPolynomial,
    GaussianRational,
    MatrixPoly,
    TransformPolynomial,
    mi_add,
    mi_degree,
    mi_factorial,
    multi_indices,
    poly_from_json,
    poly_to_json,
    rat,
)

from conftest import random_bipoly


small_rat = st.fractions(min_value=-50, max_value=50, max_denominator=8)
gr = st.builds(lambda a, b: GaussianRational(rat(a), rat(b)), small_rat, small_rat)


# ---------------------------------------------------------------------------
# GaussianRational
# ---------------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(gr, gr, gr)
def test_gaussian_rational_ring_axioms(x, y, z):
    assert (x + y) + z == x + (y + z)
    assert (x * y) * z == x * (y * z)
    assert x + y == y + x
    assert x * y == y * x
    assert x * (y + z) == x * y + x * z
    assert x + GaussianRational(0) == x
    assert x * GaussianRational(1) == x
    assert x - x == GaussianRational(0)


@settings(max_examples=100, deadline=None)
@given(gr, gr)
def test_gaussian_rational_conjugation(x, y):
    assert x.conj().conj() == x
    assert (x * y).conj() == x.conj() * y.conj()
    assert (x + y).conj() == x.conj() + y.conj()
    assert x.abs2() == (x * x.conj()).re
    assert (x * x.conj()).im == 0


@settings(max_examples=60, deadline=None)
@given(gr, gr)
def test_gaussian_rational_division(x, y):
    if y.is_zero():
        with pytest.raises(ZeroDivisionError):
            x / y
    else:
        assert (x / y) * y == x


def test_gaussian_rational_immutable_and_stringable():
    x = GaussianRational("3/4", "-2")
    with pytest.raises(AttributeError):
        x.re = rat(1)
    assert x == GaussianRational.from_strings("3/4", "-2")
    assert hash(x) == hash(GaussianRational(rat(3) / 4, -2))
    assert x.to_complex() == complex(0.75, -2.0)


# ---------------------------------------------------------------------------
# Multi-index helpers
# ---------------------------------------------------------------------------

def test_multi_index_helpers():
    assert mi_add((1, 2), (3, 0)) == (4, 2)
    assert mi_degree((2, 0, 5)) == 7
    assert mi_factorial((3, 2, 0)) == 12
    tuples = list(multi_indices(3, 4))
    assert len(tuples) == math.comb(4 + 2, 2)
    assert all(sum(t) == 4 for t in tuples)
    assert len(set(tuples)) == len(tuples)


# ---------------------------------------------------------------------------
# BiPolynomial ring operations
# ---------------------------------------------------------------------------

def _rand_poly(rng, N, max_deg=3, nterms=4):
    p = BiPolynomial.zero(N)
    for _ in range(nterms):
        m = rng.randint(0, max_deg)
        n = rng.randint(0, max_deg - m) if max_deg - m else 0
        ze = rng.choice(list(multi_indices(2 * N, m)))
        be = rng.choice(list(multi_indices(2 * N, n)))
        c = GaussianRational(rng.randint(-5, 5), rng.randint(-5, 5))
        p = p + BiPolynomial.monomial(N, ze, be, c)
    return p


@pytest.mark.parametrize("seed", range(10))
def test_polynomial_ring_axioms(seed):
    rng = random.Random(seed)
    N = rng.choice([1, 2])
    p, q, r = (_rand_poly(rng, N) for _ in range(3))
    assert (p + q) + r == p + (q + r)
    assert p + q == q + p
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert p - p == BiPolynomial.zero(N)
    assert p * BiPolynomial.one(N) == p


@pytest.mark.parametrize("seed", range(8))
def test_mul_trunc_matches_full_product(seed):
    rng = random.Random(100 + seed)
    N = rng.choice([1, 2])
    p, q = _rand_poly(rng, N), _rand_poly(rng, N)
    for t in (0, 1, 2, 4):
        assert p.mul_trunc(q, t) == (p * q).truncate(t)
    e = rng.randint(0, 3)
    assert p.pow_trunc(e, 4) == _pow_naive(p, e).truncate(4)


def _pow_naive(p, e):
    out = BiPolynomial.one(p.N)
    for _ in range(e):
        out = out * p
    return out


@pytest.mark.parametrize("seed", range(6))
def test_bidegree_partition_and_conjugation(seed):
    rng = random.Random(200 + seed)
    N = rng.choice([1, 2])
    p = _rand_poly(rng, N)
    total = BiPolynomial.zero(N)
    for (m, n) in p.bidegrees():
        part = p.bidegree_part(m, n)
        assert part.is_bihomogeneous()
        total = total + part
    assert total == p
    q = _rand_poly(rng, N)
    assert p.conjugate().conjugate() == p
    assert (p * q).conjugate() == p.conjugate() * q.conjugate()
    assert (p + q).conjugate() == p.conjugate() + q.conjugate()


def test_order_degree_and_parts():
    N = 1
    p = BiPolynomial.z(N, 1, 1) * BiPolynomial.zbar(N, 2, 1) + BiPolynomial.z(N, 2, 1)
    assert p.order() == 1
    assert p.degree() == 2
    assert p.degree_part(1) == BiPolynomial.z(N, 2, 1)
    assert BiPolynomial.zero(N).order() == math.inf
    assert BiPolynomial.zero(N).degree() == -math.inf


# ---------------------------------------------------------------------------
# Composition and evaluation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_substitute_identity_and_points(seed):
    rng = random.Random(300 + seed)
    N = rng.choice([1, 2])
    p = _rand_poly(rng, N)
    ident = [BiPolynomial.z(N, a, j) for a in (1, 2) for j in range(1, N + 1)]
    assert p.substitute(ident, trunc=10) == p.truncate(10)
    # composed polynomial evaluates like composition of evaluations
    targets = [_rand_poly(rng, N, max_deg=1, nterms=2) for _ in range(2 * N)]
    comp = p.substitute(targets, trunc=12)
    zpt = [complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(2 * N)]
    zbarpt = [v.conjugate() for v in zpt]
    inner_vals = [t.evaluate_numeric(zpt, zbarpt) for t in targets]
    inner_bars = [v.conjugate() for v in inner_vals]
    direct = p.evaluate_numeric(inner_vals, inner_bars)
    assert abs(comp.evaluate_numeric(zpt, zbarpt) - direct) < 1e-9


def test_differentiate_on_monomials():
    N = 2
    z11, z12 = BiPolynomial.z(N, 1, 1), BiPolynomial.z(N, 1, 2)
    p = (z11 * z11 * z12).scale(GaussianRational(3, 0))
    d = p.differentiate((2, 0, 0, 0), (0, 0, 0, 0))
    assert d == z12.scale(GaussianRational(6, 0))
    d2 = p.differentiate((2, 1, 0, 0), (0, 0, 0, 0))
    assert d2 == BiPolynomial.one(N).scale(GaussianRational(6, 0))
    assert p.differentiate((3, 0, 0, 0), (0, 0, 0, 0)).is_zero()


def test_transform_polynomial_weighted_degree_and_substitution():
    N = 1
    z11 = TransformPolynomial.z(N, 1, 1)
    w11 = TransformPolynomial.w(N, 1, 1)
    p = z11 * w11
    assert p.weighted_order() == 3
    # under w -> Z conj(Z)^t the image is z11 * (z11 zbar11 + ...)
    phi = MatrixPoly(
        [
            [
                BiPolynomial.z(N, a, 1) * BiPolynomial.zbar(N, b, 1)
                for b in (1, 2)
            ]
            for a in (1, 2)
        ]
    )
    img = p.substitute_w(phi, trunc=6)
    expect = BiPolynomial.z(N, 1, 1) * BiPolynomial.z(N, 1, 1) * BiPolynomial.zbar(N, 1, 1)
    assert img == expect
    # truncation drops the whole image
    assert p.substitute_w(phi, trunc=2).is_zero()


def test_transform_differentiate_var():
    N = 1
    z11 = TransformPolynomial.z(N, 1, 1)
    w12 = TransformPolynomial.w(N, 1, 2)
    p = z11 * z11 * w12
    dz = p.differentiate_var("z", 0)
    assert dz == z11.scale(GaussianRational(2, 0)) * w12
    dw = p.differentiate_var("w", 1)
    assert dw == z11 * z11
    assert p.differentiate_var("w", 0).is_zero()


# ---------------------------------------------------------------------------
# Matrices and serialization
# ---------------------------------------------------------------------------

def test_matrix_ops_and_conj_transpose():
    N = 1
    a = MatrixPoly(
        [[BiPolynomial.z(N, 1, 1), BiPolynomial.zbar(N, 2, 1)],
         [BiPolynomial.one(N), BiPolynomial.zero(N)]]
    )
    b = a.conj_transpose()
    assert b.entries[0][1] == BiPolynomial.one(N)
    assert b.entries[1][0] == BiPolynomial.z(N, 2, 1)
    assert (a - a).is_zero()
    c = a.matmul_trunc(a, 4)
    direct = a.entries[0][0] * a.entries[0][0] + a.entries[0][1] * a.entries[1][0]
    assert c.entries[0][0] == direct.truncate(4)


@pytest.mark.parametrize("seed", range(5))
def test_json_round_trip(seed):
    rng = random.Random(400 + seed)
    N = rng.choice([1, 2])
    p = random_bipoly(rng, N, rng.randint(0, 2), rng.randint(0, 2), density=0.6)
    data = poly_to_json(p)
    q = poly_from_json(data)
    assert q == p
    # canonical: serialization is deterministic
    assert poly_to_json(q) == data


def test_json_round_trip_transform():
    N = 1
    p = TransformPolynomial.z(N, 1, 1) * TransformPolynomial.w(N, 2, 2)
    p = p.scale(GaussianRational("5/3", "-1/7"))
    assert poly_from_json(poly_to_json(p)) == p
