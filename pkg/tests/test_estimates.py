"""Float audit layer: sup norms, inequality audits, iteration bookkeeping."""

from __future__ import annotations

import math
import random

import pytest

from fischer_nf.algebra import (
    BiPolynomial,
    GaussianRational,
    MatrixPoly,
    TransformPolynomial,
    rat,
)
from fischer_nf.estimates import (
    EstimateConstants,
    GateError,
    PolydiscParams,
    audit_lemma42,
    audit_prop44,
    audit_remark43,
    limit_check_lemma31,
    matrix_sup_norm_bounds,
    moser_iterate,
    picard_invert,
    radius_identity_finding,
    radius_sequence,
    sup_norm_bounds,
    truncate_degree,
)
from fischer_nf.manifold import ManifoldSpec, hermitian_form
from fischer_nf.normalform import RefusalError, Transformation, TruncationError

from conftest import random_manifold, scaled_float_manifold


# ---------------------------------------------------------------------------
# Radii
# ---------------------------------------------------------------------------

def test_radius_sequence_exact_values():
    for n in range(8):
        r_n, rho, sigma = radius_sequence(n)
        assert r_n == rat(n + 2) / (2 * (n + 1))
        r_n1 = rat(n + 3) / (2 * (n + 2))
        assert rho == (2 * r_n1 + r_n) / 3
        assert sigma == (2 * r_n1 + rho) / 3
        assert rat(1) / 2 < r_n1 < sigma < rho < r_n <= 1


def test_polydisc_params_validation():
    p = PolydiscParams.from_radii("1", "7/10")
    r, rho, sigma, rp = p.floats()
    assert 0.5 < rp < sigma < rho < r <= 1.0
    with pytest.raises(ValueError):
        PolydiscParams.from_radii("1", "1/3")  # r' <= 1/2
    with pytest.raises(ValueError):
        PolydiscParams(r="1", rho="3/5", sigma="4/5", r_prime="11/20")  # sigma > rho


def test_radius_identity_finding_reports_discrepancy():
    finding = radius_identity_finding()
    rows = finding["evaluations"]
    assert rows, "finding must carry explicit evaluations"
    for row in rows:
        n = row["n"]
        # the defining formula disagrees with the stated identity by a factor 2
        assert row["one_over_gap_defining"] == str(2 * (n + 1) * (n + 2))
        assert row["one_over_gap_stated"] == (n + 1) * (n + 2)


# ---------------------------------------------------------------------------
# Sup norms
# ---------------------------------------------------------------------------

def test_sup_norm_bounds_bracket_known_values():
    N = 1
    z11 = BiPolynomial.z(N, 1, 1)
    lo, up = sup_norm_bounds(z11, 0.75, 4000, seed=1)
    assert up == pytest.approx(0.75)
    assert lo <= up and lo >= 0.74  # phases achieve the sup for a monomial
    p = hermitian_form(1, 1, N) + hermitian_form(2, 2, N)
    lo2, up2 = sup_norm_bounds(p, 1.0, 4000, seed=1)
    assert up2 == pytest.approx(2.0)
    assert lo2 <= up2 + 1e-12


def test_sup_norm_bounds_transform_polynomial_w_radius():
    N = 1
    w = TransformPolynomial.w(N, 1, 1)
    lo, up = sup_norm_bounds(w, 0.8, 2000, seed=2)
    # |w| ranges over sqrt(N) * r on the w-block
    assert up == pytest.approx(0.8)
    assert lo <= up + 1e-12


def test_matrix_sup_norm_and_truncate(rng):
    M = random_manifold(rng, 1, 6)
    lo, up = matrix_sup_norm_bounds(M.E, 0.9, 2000, seed=3)
    assert 0 <= lo <= up
    p = M.E.entries[0][0]
    assert truncate_degree(p, 2).is_zero() or truncate_degree(p, 2).degree() <= 2


def test_estimate_constants():
    c = EstimateConstants(d=3, N=1)
    assert c.A == 324.0 * 37.0
    assert c.B == 18.0 * 37.0
    assert c.D == 6.0
    assert c.E == 48.0 * 6.0 ** 8


# ---------------------------------------------------------------------------
# Limit check
# ---------------------------------------------------------------------------

def test_limit_check_returns_finite_threshold():
    n1 = limit_check_lemma31(1, 1, 1, 1.0, 2.0, 1e-6)
    assert isinstance(n1, int) and n1 >= 2


def test_limit_check_monotone_in_m2():
    # larger m2 weakens the decay factor, so the threshold cannot shrink
    base = limit_check_lemma31(1, 1, 1, 1.0, 2.0, 1e-6)
    slower = limit_check_lemma31(1, 2, 1, 1.0, 2.0, 1e-6)
    assert slower >= base


def test_limit_check_with_explicit_sequence():
    n = limit_check_lemma31(2, 2, 2, 1.0, 2.0, 1e-6, d_sequence=lambda k: 2 ** k + 2)
    assert isinstance(n, int)


def test_limit_check_rejects_bad_args():
    with pytest.raises(ValueError):
        limit_check_lemma31(0, 1, 1, 1.0, 2.0, 1e-6)
    with pytest.raises(ValueError):
        limit_check_lemma31(1, 1, 1, 1.0, 1.0, 1e-6)


# ---------------------------------------------------------------------------
# Picard inversion
# ---------------------------------------------------------------------------

def test_picard_inverts_identity_exactly():
    H = Transformation.identity(1, 6)
    params = PolydiscParams.from_radii("1", "3/5")
    z, w = picard_invert(H, ([0.1 + 0.05j, -0.2j], [0.01, 0.0, 0.0, 0.02]), params)
    assert max(abs(v) for v in z) <= 1.0
    assert abs(z[0] - (0.1 + 0.05j)) < 1e-12 and abs(w[3] - 0.02) < 1e-12


def test_picard_inverts_small_perturbed_map(rng):
    M = scaled_float_manifold(random_manifold(rng, 1, 6), "1/1000")
    from fischer_nf.normalform import normalize

    H = normalize(M, 6).transform
    params = PolydiscParams.from_radii("1", "3/5")
    target = ([0.05 + 0.02j, 0.03j], [0.004, 0.001, 0.001, 0.002])
    z, w = picard_invert(H, target, params)
    z_img = [H.F.entries[a][0].evaluate_numeric(z, w) for a in range(2)]
    assert abs(z_img[0] - target[0][0]) < 1e-9
    assert abs(z_img[1] - target[0][1]) < 1e-9


def test_picard_refuses_large_gradient(rng):
    big = scaled_float_manifold(random_manifold(rng, 1, 6), "50")
    from fischer_nf.normalform import normalize

    H = normalize(big, 6).transform
    params = PolydiscParams.from_radii("1", "3/5")
    with pytest.raises(GateError):
        picard_invert(H, ([0.0, 0.0], [0.0, 0.0, 0.0, 0.0]), params)


# ---------------------------------------------------------------------------
# Homogeneous norm audit
# ---------------------------------------------------------------------------

def test_audit_remark43_structure_and_exact_points():
    N = 1
    S = hermitian_form(1, 1, N)
    report = audit_remark43(S, "9/10", samples=2000, points=100, seed=5)
    assert report["k"] == 2
    assert report["norm_check"]["passed"]
    pw = report["pointwise"]
    assert pw["points"] >= 100
    # both candidate exponents are recorded; the weaker one holds at least
    # as often as the stronger one
    assert 0 <= pw["holds_exponent_2k"] <= pw["points"]
    assert pw["holds_exponent_k"] >= pw["holds_exponent_2k"]


def test_audit_remark43_rejects_inhomogeneous():
    N = 1
    p = BiPolynomial.z(N, 1, 1) + hermitian_form(1, 1, N)
    with pytest.raises(ValueError):
        audit_remark43(p, "9/10")


# ---------------------------------------------------------------------------
# One-step audits
# ---------------------------------------------------------------------------

def _tiny_manifold(rng, t="1/10000"):
    return scaled_float_manifold(
        random_manifold(rng, 1, 6, blocks=((2, 1),)), t
    )


def test_audit_lemma42_small_perturbation_no_violation(rng):
    M = _tiny_manifold(rng)
    params = PolydiscParams.from_radii("1", "3/5")
    report = audit_lemma42(M, params, d=3, samples=2000, seed=7)
    assert report["verdict_counts"]["violation"] == 0
    assert report["gate"]["satisfied_at_upper"]
    assert any(f["name"] == "radius_identity_finding" for f in report["findings"])


def test_audit_lemma42_refuses_out_of_scope(rng):
    M = random_manifold(rng, 1, 6)
    params = PolydiscParams.from_radii("1", "3/5")
    with pytest.raises(GateError):
        audit_lemma42(M, params, d=4)  # order 3 < 4
    deep = random_manifold(rng, 1, 6, blocks=((5, 0),))
    with pytest.raises(TruncationError):
        audit_lemma42(deep, params, d=5)  # needs d_max >= 8


def test_audit_prop44_small_perturbation(rng):
    M = _tiny_manifold(rng)
    params = PolydiscParams.from_radii("1", "3/5")
    report = audit_prop44(M, params, d=3, samples=2000, seed=9)
    assert report["check"]["verdict"] in ("pass", "inconclusive")
    assert report["check"]["verdict"] != "violation"
    assert report["gate"]["sum_upper"] < 0.5


def test_audit_prop44_gate_refusal(rng):
    M = scaled_float_manifold(random_manifold(rng, 1, 6), "80")
    params = PolydiscParams.from_radii("1", "3/5")
    with pytest.raises(GateError):
        audit_prop44(M, params, d=3, samples=1000, seed=9)


# ---------------------------------------------------------------------------
# Iteration driver
# ---------------------------------------------------------------------------

def test_moser_model_manifold_stays_zero():
    M = ManifoldSpec.model(1, 10)
    trace = moser_iterate(M, stages=2, trunc=10, samples=500, seed=1)
    assert len(trace.stages) == 3
    for row in trace.stages:
        assert row["d_n"] is None
        assert row["sup_E_upper"] == 0.0
    assert trace.findings["eps_strictly_decreasing_from_2"]


def test_moser_two_stages_small_instance(rng):
    M = scaled_float_manifold(random_manifold(rng, 1, 10), "1/100")
    trace = moser_iterate(M, stages=2, trunc=10, samples=500, seed=2)
    assert len(trace.stages) == 3
    for n, row in enumerate(trace.stages):
        assert row["d_n"] is None or row["d_n"] >= 2 ** n + 2
    csv = trace.to_csv()
    assert csv.splitlines()[0].split(",")  # header present
    assert "radius_identity" in trace.findings


def test_moser_refusals(rng):
    M = random_manifold(rng, 1, 10)
    with pytest.raises(TruncationError):
        moser_iterate(M, stages=4, trunc=10)
    N = 1
    low = ManifoldSpec(
        N=N,
        d_max=10,
        E=MatrixPoly(
            [[hermitian_form(1, 1, N), BiPolynomial.zero(N)],
             [BiPolynomial.zero(N), BiPolynomial.zero(N)]]
        ),
    )
    with pytest.raises(RefusalError):
        moser_iterate(low, stages=1, trunc=10)
