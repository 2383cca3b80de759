"""Quadric model, Hermitian form powers, reality completion, JSON ingestion."""

from __future__ import annotations

import json
import random

import pytest

from fischer_nf.algebra import (
    BiPolynomial,
    GaussianRational,
    MatrixPoly,
    TransformPolynomial,
    mi_add,
    multi_indices,
    rat,
)
from fischer_nf.manifold import (
    ManifoldSpec,
    RealityConflictError,
    enforce_reality,
    form_power,
    hermitian_form,
    ingest,
    emit,
    manifold_from_json,
    manifold_to_json,
    model_rhs,
    verify_model_automorphism,
)

from conftest import random_manifold, sparse_bipoly


# ---------------------------------------------------------------------------
# Hermitian forms and their powers
# ---------------------------------------------------------------------------

def test_hermitian_form_explicit():
    # <l1, l2> at N=2 is z11 zbar21 + z12 zbar22
    N = 2
    f = hermitian_form(1, 2, N)
    expect = (
        BiPolynomial.z(N, 1, 1) * BiPolynomial.zbar(N, 2, 1)
        + BiPolynomial.z(N, 1, 2) * BiPolynomial.zbar(N, 2, 2)
    )
    assert f == expect
    assert hermitian_form(2, 1, N) == f.conjugate()
    assert hermitian_form(1, 1, N).conjugate() == hermitian_form(1, 1, N)


@pytest.mark.parametrize("N", [1, 2])
def test_form_power_multiplicativity(N):
    rng = random.Random(N)
    for _ in range(5):
        I = tuple(rng.randint(0, 2) for _ in range(4))
        J = tuple(rng.randint(0, 1) for _ in range(4))
        assert form_power(mi_add(I, J), N) == form_power(I, N) * form_power(J, N)
    assert form_power((0, 0, 0, 0), N) == BiPolynomial.one(N)


@pytest.mark.parametrize("N", [1, 2])
def test_form_power_conjugate_swaps_mixed_slots(N):
    for I in multi_indices(4, 2):
        swapped = (I[0], I[2], I[1], I[3])
        assert form_power(I, N).conjugate() == form_power(swapped, N)


def test_model_rhs_is_hermitian():
    for N in (1, 2, 3):
        model = model_rhs(N)
        assert (model - model.conj_transpose()).is_zero()
        assert model.entries[0][0] == hermitian_form(1, 1, N)


# ---------------------------------------------------------------------------
# Reality completion
# ---------------------------------------------------------------------------

def test_enforce_reality_completes_and_is_idempotent(rng):
    N = 2
    blk = MatrixPoly(
        [[sparse_bipoly(rng, N, 2, 1) for _ in range(2)] for _ in range(2)]
    )
    spec = ManifoldSpec(N=N, d_max=6, E=blk)
    done = enforce_reality(spec)
    # mirror block appears and matches the conjugate transpose
    assert (done.bidegree_block(1, 2) - blk.conj_transpose()).is_zero()
    again = enforce_reality(done)
    assert (again.E - done.E).is_zero()


def test_enforce_reality_detects_conflicts(rng):
    N = 1
    hi = MatrixPoly([[sparse_bipoly(rng, N, 2, 1, k=3) for _ in range(2)] for _ in range(2)])
    bad_lo = hi.conj_transpose() + MatrixPoly(
        [[BiPolynomial.z(N, 1, 1) * BiPolynomial.zbar(N, 1, 1) * BiPolynomial.zbar(N, 2, 1),
          BiPolynomial.zero(N)], [BiPolynomial.zero(N), BiPolynomial.zero(N)]]
    )
    spec = ManifoldSpec(N=N, d_max=6, E=hi + bad_lo)
    with pytest.raises(RealityConflictError):
        enforce_reality(spec)


def test_enforce_reality_rejects_non_hermitian_diagonal():
    N = 1
    z, zb = BiPolynomial.z(N, 1, 1), BiPolynomial.zbar(N, 1, 1)
    p = z * z * zb * zb  # (2,2) diagonal bidegree
    E = MatrixPoly([[BiPolynomial.zero(N), p], [BiPolynomial.zero(N), BiPolynomial.zero(N)]])
    with pytest.raises(RealityConflictError):
        enforce_reality(ManifoldSpec(N=N, d_max=6, E=E))


# ---------------------------------------------------------------------------
# JSON ingestion / emission
# ---------------------------------------------------------------------------

def test_manifold_json_round_trip(tmp_path, rng):
    for N in (1, 2):
        M = random_manifold(rng, N, 8)
        path = tmp_path / f"m{N}.json"
        emit(M, path)
        back = ingest(path)
        assert back.N == M.N and back.d_max == M.d_max
        assert (back.E - M.E).is_zero()
        # canonical output: re-emission is byte identical
        path2 = tmp_path / f"m{N}b.json"
        emit(back, path2)
        assert path.read_bytes() == path2.read_bytes()


def test_manifold_json_rejects_low_order():
    N = 1
    p = BiPolynomial.z(N, 1, 1) * BiPolynomial.zbar(N, 1, 1)
    data = {
        "N": 1,
        "d_max": 6,
        "E": [{"entry": [1, 1], "bidegree": [1, 1], "poly": {
            "N": 1, "block": "zzbar",
            "terms": [{"zi": [1, 0], "zj_or_w": [1, 0], "re": "1", "im": "0"}],
        }}],
    }
    with pytest.raises(ValueError):
        manifold_from_json(data)


def test_manifold_json_rejects_wrong_bidegree_declaration():
    data = {
        "N": 1,
        "d_max": 6,
        "E": [{"entry": [1, 1], "bidegree": [2, 1], "poly": {
            "N": 1, "block": "zzbar",
            "terms": [{"zi": [3, 0], "zj_or_w": [0, 0], "re": "1", "im": "0"}],
        }}],
    }
    with pytest.raises(ValueError):
        manifold_from_json(data)


def test_hermitian_spec_serializes_only_upper_bidegrees(rng):
    M = random_manifold(rng, 1, 6)
    data = manifold_to_json(M)
    for blk in data["E"]:
        m, n = blk["bidegree"]
        assert m >= n


# ---------------------------------------------------------------------------
# Model automorphisms
# ---------------------------------------------------------------------------

def _linear_map(U, N):
    """Z -> U Z as a 2xN grid, W -> U w conj(U)^t as a 2x2 grid."""
    F = MatrixPoly(
        [
            [
                TransformPolynomial.z(N, 1, j + 1).scale(U[a][0])
                + TransformPolynomial.z(N, 2, j + 1).scale(U[a][1])
                for j in range(N)
            ]
            for a in range(2)
        ]
    )
    G_entries = []
    for a in range(2):
        row = []
        for b in range(2):
            g = TransformPolynomial.zero(N)
            for s in range(2):
                for t in range(2):
                    g = g + TransformPolynomial.w(N, s + 1, t + 1).scale(
                        U[a][s] * U[b][t].conj()
                    )
            row.append(g)
        G_entries.append(row)
    return F, MatrixPoly(G_entries)


@pytest.mark.parametrize("N", [1, 2])
def test_rotation_preserves_model(N):
    c, s = GaussianRational("3/5", 0), GaussianRational("4/5", 0)
    U = [[c, s], [-s, c]]
    F, G = _linear_map(U, N)
    assert verify_model_automorphism(F, G, trunc=6)


@pytest.mark.parametrize("N", [1, 2])
def test_complex_unitary_preserves_model(N):
    c, si = GaussianRational("3/5", 0), GaussianRational(0, "4/5")
    U = [[c, si], [si, c]]
    F, G = _linear_map(U, N)
    assert verify_model_automorphism(F, G, trunc=6)


def test_non_unitary_map_fails_model_check():
    N = 1
    two = GaussianRational(2, 0)
    U = [[two, GaussianRational(0)], [GaussianRational(0), two]]
    F, G = _linear_map(U, N)
    # G built from U w conj(U)^t matches F only if U preserves the form
    F_id, G_id = _linear_map(
        [[GaussianRational(1), GaussianRational(0)], [GaussianRational(0), GaussianRational(1)]], N
    )
    assert not verify_model_automorphism(F, G_id, trunc=6)
