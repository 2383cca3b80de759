"""Shared random-instance builders for the test suite."""

from __future__ import annotations

import random

import pytest

from fischer_nf.algebra import (
    BiPolynomial,
    GaussianRational,
    MatrixPoly,
    multi_indices,
)
from fischer_nf.manifold import ManifoldSpec, enforce_reality


def random_bipoly(rng, N, m, n, density=0.35, scale=6):
    """Dense-ish random bihomogeneous polynomial of bidegree (m, n)."""
    p = BiPolynomial.zero(N)
    for ze in multi_indices(2 * N, m):
        for be in multi_indices(2 * N, n):
            if rng.random() < density:
                c = GaussianRational(rng.randint(-scale, scale), rng.randint(-scale, scale))
                if not c.is_zero():
                    p = p + BiPolynomial.monomial(N, ze, be, c)
    return p


def sparse_bipoly(rng, N, m, n, k=2, scale=4):
    """Random bihomogeneous polynomial with at most k monomials."""
    p = BiPolynomial.zero(N)
    zs = list(multi_indices(2 * N, m))
    bs = list(multi_indices(2 * N, n))
    for _ in range(k):
        c = GaussianRational(rng.randint(-scale, scale), rng.randint(-scale, scale))
        if not c.is_zero():
            p = p + BiPolynomial.monomial(N, rng.choice(zs), rng.choice(bs), c)
    return p


def random_manifold(rng, N, d_max, gen=sparse_bipoly, blocks=((2, 1), (3, 0))):
    """Random order-3 perturbation with the mirror blocks filled in."""
    E = MatrixPoly.zeros(2, 2, N)
    for (m, n) in blocks:
        blk = MatrixPoly([[gen(rng, N, m, n) for _ in range(2)] for _ in range(2)])
        E = E + blk + blk.conj_transpose()
    return enforce_reality(ManifoldSpec(N=N, d_max=d_max, E=E))


def scaled_float_manifold(base: ManifoldSpec, t: str) -> ManifoldSpec:
    """base with every perturbation coefficient scaled by the rational t."""
    E = base.E.map(lambda p: p.scale(GaussianRational(t, 0)))
    return ManifoldSpec(N=base.N, d_max=base.d_max, E=E, hermitian=base.hermitian)


@pytest.fixture
def rng():
    return random.Random(20260826)
