"""Floating-point norm bounds, inequality audits, and the iteration driver.

Everything exact lives elsewhere; this module converts polynomials to
floats only to measure magnitudes.  Two polydisc flavours appear:

* D_r for perturbations E(Z, xi): both variable blocks on |z| = |xi| = r
  (E is jointly holomorphic in (Z, xi), so sups are attained on the
  distinguished boundary);
* Delta_r for map components F(Z, W): |z| <= r, |w| <= sqrt(N) r.

Sup norms are bracketd as [sampled lower bound, coefficient-sum upper
bound]; inequality audits report `violation` only when the sampled lower
bound already exceeds the claimed right-hand side, `pass` when the upper
bound is below it, and `inconclusive` otherwise.
"""

from __future__ import annotations

import math
import random as _random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import (
    RAT,
    BiPolynomial,
    GaussianRational,
    MatrixPoly,
    TransformPolynomial,
    mi_degree,
    rat,
)
from .fischer import fischer_norm_sq
from .manifold import ManifoldSpec
from .normalform import (
    NormalFormResult,
    RefusalError,
    Transformation,
    TruncationError,
    normalize,
    theta_step,
)


class GateError(RuntimeError):
    """A contraction/smallness gate failed; the audit refuses to proceed."""


# ---------------------------------------------------------------------------
# Dataclasses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolydiscParams:
    """Nested radii 1/2 < r' < sigma < rho < r <= 1.

    rho and sigma interpolate between r' and r:
        rho = (2 r' + r) / 3,   sigma = (2 r' + rho) / 3.
    """

    r: object
    rho: object
    sigma: object
    r_prime: object

    def __post_init__(self):
        r, rho, sigma, rp = (rat(x) for x in (self.r, self.rho, self.sigma, self.r_prime))
        if not (rat(1) / 2 < rp < sigma < rho < r <= 1):
            raise ValueError("radii must satisfy 1/2 < r' < sigma < rho < r <= 1")

    @classmethod
    def from_radii(cls, r, r_prime) -> "PolydiscParams":
        r, rp = rat(r), rat(r_prime)
        rho = (2 * rp + r) / 3
        sigma = (2 * rp + rho) / 3
        return cls(r=r, rho=rho, sigma=sigma, r_prime=rp)

    def floats(self) -> Tuple[float, float, float, float]:
        return (float(self.r), float(self.rho), float(self.sigma), float(self.r_prime))


@dataclass
class NormReport:
    sup_lower: float
    sup_upper: float
    fischer_sq: object
    bound_rhs: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "sup_lower": self.sup_lower,
            "sup_upper": self.sup_upper,
            "fischer_sq": str(self.fischer_sq),
            "bound_rhs": self.bound_rhs,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class EstimateConstants:
    """The d- and N-dependent constants of the one-step error bound."""

    d: int
    N: int

    @property
    def A(self) -> float:
        return 324.0 * (1.0 + (2.0 * self.d) ** (2 * self.N))

    @property
    def B(self) -> float:
        return 18.0 * self.N * (1.0 + (2.0 * self.d) ** (2 * self.N))

    @property
    def D(self) -> float:
        return 6.0 * self.N

    @property
    def E(self) -> float:
        return (48.0 / self.N) * (2.0 * self.d) ** (8 * self.N)


@dataclass
class IterationTrace:
    stages: List[dict] = field(default_factory=list)
    findings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"config": self.config, "stages": self.stages, "findings": self.findings}

    def to_csv(self) -> str:
        if not self.stages:
            return ""
        cols = sorted({k for row in self.stages for k in row})
        lines = [",".join(cols)]
        for row in self.stages:
            lines.append(",".join(str(row.get(c, "")) for c in cols))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Sup norms
# ---------------------------------------------------------------------------

def sup_norm_bounds(p, r: float, samples: int, seed: int = 0) -> Tuple[float, float]:
    """(sampled lower bound, coefficient-sum upper bound) of |p| on its disc.

    BiPolynomial: both blocks independently on |.| = r.  TransformPolynomial:
    z block on |.| = r, w block on |.| = sqrt(N) r.
    """
    if r <= 0 or samples < 1:
        raise ValueError("need r > 0 and samples >= 1")
    if p.is_zero():
        return (0.0, 0.0)
    rng = np.random.default_rng(seed)
    nz = 2 * p.N
    if isinstance(p, TransformPolynomial):
        rw = math.sqrt(p.N) * r
        upper = sum(
            math.sqrt(float(c.abs2())) * r ** mi_degree(k[0]) * rw ** mi_degree(k[1])
            for k, c in p.terms.items()
        )
        zpts = r * np.exp(2j * np.pi * rng.random((samples, nz)))
        wpts = rw * np.exp(2j * np.pi * rng.random((samples, 4)))
        vals = p.eval_grid(zpts, wpts)
    else:
        upper = sum(
            math.sqrt(float(c.abs2())) * r ** (mi_degree(k[0]) + mi_degree(k[1]))
            for k, c in p.terms.items()
        )
        zpts = r * np.exp(2j * np.pi * rng.random((samples, nz)))
        xpts = r * np.exp(2j * np.pi * rng.random((samples, nz)))
        vals = p.eval_grid(zpts, xpts)
    lower = float(np.max(np.abs(vals)))
    return (min(lower, upper), upper)


def matrix_sup_norm_bounds(M: MatrixPoly, r: float, samples: int, seed: int = 0):
    """Entrywise max of sup_norm_bounds over a polynomial matrix."""
    lo = up = 0.0
    for i, row in enumerate(M.entries):
        for j, p in enumerate(row):
            l, u = sup_norm_bounds(p, r, samples, seed + 7919 * (2 * i + j))
            lo, up = max(lo, l), max(up, u)
    return (lo, up)


def truncate_degree(p, D: int):
    """Taylor truncation: drop all terms of total degree > D."""
    if D < 0:
        raise ValueError("D must be >= 0")
    return p.truncate(D)


# ---------------------------------------------------------------------------
# Gradient norms for map components
# ---------------------------------------------------------------------------

def _grad_norm_bounds(p: TransformPolynomial, r: float, samples: int, seed: int = 0):
    """Bounds for sum over variables of sup |partial p| on Delta_r."""
    nz = 2 * p.N
    lo = up = 0.0
    for block, count in (("z", nz), ("w", 4)):
        for slot in range(count):
            d = p.differentiate_var(block, slot)
            if d.is_zero():
                continue
            l, u = sup_norm_bounds(d, r, samples, seed + 31 * slot + (0 if block == "z" else 101))
            lo += l
            up += u
    return (lo, up)


def _map_gradient_totals(H: Transformation, rho: float, samples: int, seed: int = 0):
    """Summed gradient norms of the nonlinear parts of F and G on Delta_rho.

    Returns ((F_lower, F_upper), (G_lower, G_upper)); the totals sum the
    per-component gradient norms over all matrix entries.
    """
    N = H.N
    f_lo = f_up = g_lo = g_up = 0.0
    for a in range(2):
        for j in range(N):
            pert = H.F.entries[a][j] - TransformPolynomial.z(N, a + 1, j + 1)
            l, u = _grad_norm_bounds(pert, rho, samples, seed + 13 * (a * N + j))
            f_lo += l
            f_up += u
    for a in range(2):
        for b in range(2):
            pert = H.G.entries[a][b] - TransformPolynomial.w(N, a + 1, b + 1)
            l, u = _grad_norm_bounds(pert, rho, samples, seed + 17 * (a * 2 + b) + 997)
            g_lo += l
            g_up += u
    return ((f_lo, f_up), (g_lo, g_up))


# ---------------------------------------------------------------------------
# Verdict helper
# ---------------------------------------------------------------------------

def _verdict(lhs_lower: float, lhs_upper: float, rhs: float) -> str:
    if lhs_lower > rhs:
        return "violation"
    if lhs_upper <= rhs:
        return "pass"
    return "inconclusive"


def _check(name: str, lhs_lower: float, lhs_upper: float, rhs: float) -> dict:
    return {
        "name": name,
        "lhs_lower": lhs_lower,
        "lhs_upper": lhs_upper,
        "rhs": rhs,
        "verdict": _verdict(lhs_lower, lhs_upper, rhs),
    }


def radius_identity_finding() -> dict:
    """Discrepancy record for the stated radius-sequence identities.

    The defining formula r_n = (1/2)(1 + 1/(n+1)) gives
    1/(r_n - r_{n+1}) = 2(n+1)(n+2) and r_{n+1}/r_n = 1 - 1/(n+2)^2,
    whereas the stated identities are (n+1)(n+2) and 1 - 1/(n+1)^2.  The
    defining formula is implemented; the discrepancy is reported here.
    """
    rows = []
    for n in range(4):
        r_n = rat(n + 2) / (2 * (n + 1))
        r_n1 = rat(n + 3) / (2 * (n + 2))
        rows.append(
            {
                "n": n,
                "one_over_gap_defining": str(1 / (r_n - r_n1)),
                "one_over_gap_stated": (n + 1) * (n + 2),
                "ratio_defining": str(r_n1 / r_n),
                "ratio_stated": f"1 - 1/{(n + 1) ** 2}",
            }
        )
    return {
        "name": "radius_identity_finding",
        "summary": (
            "defining formula gives 1/(r_n-r_{n+1}) = 2(n+1)(n+2) and "
            "r_{n+1}/r_n = 1 - 1/(n+2)^2; the stated identities are "
            "(n+1)(n+2) and 1 - 1/(n+1)^2; the defining formula is used"
        ),
        "evaluations": rows,
    }


# ---------------------------------------------------------------------------
# Radius sequences
# ---------------------------------------------------------------------------

def radius_sequence(n: int):
    """(r_n, rho_n, sigma_n) exact: r_n = (n+2)/(2(n+1)), interpolants to r_{n+1}."""
    if n < 0:
        raise ValueError("n must be >= 0")
    r_n = rat(n + 2) / (2 * (n + 1))
    r_n1 = rat(n + 3) / (2 * (n + 2))
    rho = (2 * r_n1 + r_n) / 3
    sigma = (2 * r_n1 + rho) / 3
    return (r_n, rho, sigma)


# ---------------------------------------------------------------------------
# Remark-style pointwise/norm audit
# ---------------------------------------------------------------------------

def audit_remark43(
    S: BiPolynomial,
    r,
    samples: int = 2000,
    points: int = 100,
    seed: int = 0,
) -> dict:
    """Audit the homogeneous-polynomial norm and pointwise inequalities.

    Norm inequality: ||S||_F^2 <= k! (k+1)^{2N} / r^{2k} * |S|_r^2, checked
    with the sampled lower bound of |S|_r (escalating the sample count when
    that makes the check fail, since sampling only under-estimates sups).

    Pointwise inequality, checked in exact rational arithmetic at `points`
    rational points with sum |z|^2 <= 1:
        |S(Z, conj Z)|^2 <= (||S||_F^2 / k!) (sum |z|^2)^E
    recorded for both candidate exponents E = 2k and E = k (the displayed
    exponent and the Cauchy-Schwarz one); outcomes are findings, not
    assertions.
    """
    r = rat(r)
    if not (rat(1) / 2 < r <= 1):
        raise ValueError("need 1/2 < r <= 1")
    degs = S.bidegrees()
    if len(degs) > 1 or (degs and len({m + n for m, n in degs}) > 1):
        raise ValueError("S must be homogeneous")
    k = (degs[0][0] + degs[0][1]) if degs else 0
    N = S.N
    fsq = fischer_norm_sq(S)
    factor = math.factorial(k) * (k + 1) ** (2 * N) / float(r) ** (2 * k)
    # escalation: a sampled lower bound can only rise with more samples
    sup_lower = sup_upper = 0.0
    passed = S.is_zero()
    trial = samples
    for _ in range(4):
        sup_lower, sup_upper = sup_norm_bounds(S, float(r), trial, seed)
        passed = float(fsq) <= factor * sup_lower ** 2 + 1e-15
        if passed:
            break
        trial *= 4
    norm_report = NormReport(
        sup_lower=sup_lower,
        sup_upper=sup_upper,
        fischer_sq=fsq,
        bound_rhs=factor * sup_lower ** 2,
        passed=passed,
    )
    # exact pointwise checks at rational points with sum |z|^2 <= 1
    rng = _random.Random(seed)
    outcomes = {"exponent_2k": 0, "exponent_k": 0}
    checked = 0
    ratio_bound = fsq / math.factorial(k)
    while checked < points:
        zv = []
        for _ in range(2 * N):
            zv.append(
                GaussianRational(
                    rat(rng.randint(-8, 8)) / 16, rat(rng.randint(-8, 8)) / 16
                )
            )
        norm2 = sum((v.abs2() for v in zv), rat(0))
        if norm2 > 1:
            continue
        checked += 1
        val2 = S.evaluate_exact(zv).abs2()
        if val2 <= ratio_bound * norm2 ** (2 * k):
            outcomes["exponent_2k"] += 1
        if val2 <= ratio_bound * norm2 ** k:
            outcomes["exponent_k"] += 1
    return {
        "k": k,
        "norm_check": norm_report.to_json(),
        "pointwise": {
            "points": checked,
            "holds_exponent_2k": outcomes["exponent_2k"],
            "holds_exponent_k": outcomes["exponent_k"],
        },
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# One-step map-size audit
# ---------------------------------------------------------------------------

def _f_blocks(H: Transformation) -> Dict[Tuple[int, int], MatrixPoly]:
    """Nonlinear F split into (z-degree, w-degree) blocks."""
    N = H.N
    blocks: Dict[Tuple[int, int], list] = {}
    for a in range(2):
        for j in range(N):
            pert = H.F.entries[a][j] - TransformPolynomial.z(N, a + 1, j + 1)
            for (ze, we), c in pert.terms.items():
                key = (mi_degree(ze), mi_degree(we))
                blocks.setdefault(key, [[TransformPolynomial.zero(N) for _ in range(N)] for _ in range(2)])
                blk = blocks[key]
                blk[a][j] = blk[a][j] + TransformPolynomial.monomial(N, ze, we, c)
    return {key: MatrixPoly(grid) for key, grid in blocks.items()}


def audit_lemma42(
    M: ManifoldSpec,
    params: PolydiscParams,
    d: int,
    samples: int = 20000,
    seed: int = 0,
) -> dict:
    """Audit the one-step size bounds for the degree-d normalizing map.

    Runs the normalization through weighted degree 2d-3 and compares, on
    the nested polydiscs, the measured sizes of the map blocks and their
    gradients (and the Taylor tail of E) against the claimed bounds:

      ||E - J^{2d-3} E||_rho <= (2d)^{4N} ||E||_r / (r-rho)^{2N} (rho/r)^{2d-2}
      |F_{k,l}|_rho <= (4/N)(2d)^{4N} ||E||_r (rho/r)^{2d-3}
      |grad Fhat_{k,l}|_rho <= (36/(r-rho) + 2N)(2d)^{4N} ||E||_r / (N(r-rho)) (rho/r)^{(2d-3)/2}
      |Ghat_{ab}|_rho <= ((2d)^{4N} + (2d)^{6N}) ||E||_r (rho/r)^{2d-2}
      |grad Ghat_{ab}|_rho <= (36(1+(2d)^{2N})/(r-rho) + 6N(1+(2d)^{2N}))(2d)^{4N} ||E||_r / (N(r-rho)) (rho/r)^{d-1}

    ||E||_r enters each right side through its coefficient-sum upper bound.
    """
    if M.order() < d:
        raise GateError(f"perturbation order {M.order()} below audit degree {d}")
    if M.d_max < 2 * d - 2:
        raise TruncationError(f"need E stored to degree >= {2 * d - 2}")
    N = M.N
    r, rho, _, _ = params.floats()
    res = normalize(M, max(3, 2 * d - 3))
    H = res.transform
    e_lo, e_up = matrix_sup_norm_bounds(M.E, r, samples, seed)
    norm_e = e_up
    pow4 = (2.0 * d) ** (4 * N)
    checks: List[dict] = []
    # tail bound
    tail = M.E.map(lambda p: p - truncate_degree(p, 2 * d - 3))
    t_lo, t_up = matrix_sup_norm_bounds(tail, rho, samples, seed + 1)
    rhs = pow4 * norm_e / (r - rho) ** (2 * N) * (rho / r) ** (2 * d - 2)
    checks.append(_check("taylor_tail", t_lo, t_up, rhs))
    # F blocks and their gradients
    rhs_f = (4.0 / N) * pow4 * norm_e * (rho / r) ** (2 * d - 3)
    rhs_df = (
        (36.0 / (r - rho) + 2.0 * N)
        * pow4
        * norm_e
        / (N * (r - rho))
        * (rho / r) ** ((2 * d - 3) / 2.0)
    )
    for (kz, lw), blk in sorted(_f_blocks(H).items()):
        lo = up = dlo = dup = 0.0
        for row in blk.entries:
            for p in row:
                l, u = sup_norm_bounds(p, rho, samples, seed + 2)
                lo, up = max(lo, l), max(up, u)
                gl, gu = _grad_norm_bounds(p, rho, samples, seed + 3)
                dlo, dup = max(dlo, gl), max(dup, gu)
        checks.append(_check(f"F_block_{kz}_{lw}", lo, up, rhs_f))
        checks.append(_check(f"grad_F_block_{kz}_{lw}", dlo, dup, rhs_df))
    # G perturbation entries and gradients
    rhs_g = (pow4 + (2.0 * d) ** (6 * N)) * norm_e * (rho / r) ** (2 * d - 2)
    rhs_dg = (
        (36.0 * (1 + (2.0 * d) ** (2 * N)) / (r - rho) + 6.0 * N * (1 + (2.0 * d) ** (2 * N)))
        * pow4
        * norm_e
        / (N * (r - rho))
        * (rho / r) ** (d - 1)
    )
    for a in range(2):
        for b in range(2):
            pert = H.G.entries[a][b] - TransformPolynomial.w(N, a + 1, b + 1)
            lo, up = sup_norm_bounds(pert, rho, samples, seed + 4) if not pert.is_zero() else (0.0, 0.0)
            checks.append(_check(f"G_entry_{a + 1}{b + 1}", lo, up, rhs_g))
            gl, gu = _grad_norm_bounds(pert, rho, samples, seed + 5)
            checks.append(_check(f"grad_G_entry_{a + 1}{b + 1}", gl, gu, rhs_dg))
    (f_lo, f_up), (g_lo, g_up) = _map_gradient_totals(H, rho, samples, seed + 6)
    return {
        "d": d,
        "N": N,
        "radii": {"r": str(params.r), "rho": str(params.rho)},
        "norm_E_r": {"lower": e_lo, "upper": e_up},
        "checks": checks,
        "gate": {
            "grad_F_total": {"lower": f_lo, "upper": f_up},
            "grad_G_total": {"lower": g_lo, "upper": g_up},
            "sum_upper": f_up + g_up,
            "threshold": 0.5,
            "satisfied_at_upper": f_up + g_up < 0.5,
        },
        "findings": [radius_identity_finding()],
        "seed": seed,
        "samples": samples,
        "verdict_counts": {
            v: sum(1 for c in checks if c["verdict"] == v)
            for v in ("pass", "inconclusive", "violation")
        },
    }


# ---------------------------------------------------------------------------
# One-step error-size audit
# ---------------------------------------------------------------------------

def audit_prop44(
    M: ManifoldSpec,
    params: PolydiscParams,
    d: int,
    samples: int = 20000,
    seed: int = 0,
) -> dict:
    """Audit the one-step error bound ||E'||_{r'} against the assembled RHS.

    Refuses when the contraction gate |grad F| + |grad G| < 1/2 (evaluated
    from the computed map's coefficient-sum upper bounds on Delta_rho) does
    not hold.
    """
    if M.order() < d:
        raise GateError(f"perturbation order {M.order()} below audit degree {d}")
    if M.d_max < 2 * d - 2:
        raise TruncationError(f"need E stored to degree >= {2 * d - 2}")
    N = M.N
    r, rho, _, rp = params.floats()
    res = normalize(M, max(3, 2 * d - 3))
    (f_lo, f_up), (g_lo, g_up) = _map_gradient_totals(res.transform, rho, samples, seed)
    if f_up + g_up >= 0.5:
        raise GateError(
            f"contraction gate failed: |grad F| + |grad G| <= {f_up + g_up:.6g} "
            f">= 1/2 on Delta_rho (rho={rho})"
        )
    M_next = theta_step(M, d)
    e_lo, e_up = matrix_sup_norm_bounds(M.E, r, samples, seed + 1)
    norm_e = e_up
    ep_lo, ep_up = matrix_sup_norm_bounds(M_next.E, rp, samples, seed + 2)
    c = EstimateConstants(d=d, N=N)
    pow4 = (2.0 * d) ** (4 * N)
    gap = r - rp
    ratio = rp / r
    rhs = norm_e * 3.0 ** (2 * N) * pow4 / gap ** (2 * N) * ratio ** (d - 1)
    rhs += norm_e ** 2 * (
        pow4
        / (N * gap)
        * (
            (c.A / gap + c.B) * ratio ** ((d - 1) / 2.0)
            + (108.0 / gap + c.D) * ratio ** ((2 * d - 3) / 4.0)
        )
        + c.E * ratio ** (2 * d - 3)
    )
    check = _check("next_error_norm", ep_lo, ep_up, rhs)
    return {
        "d": d,
        "N": N,
        "radii": {"r": str(params.r), "r_prime": str(params.r_prime), "rho": str(params.rho)},
        "norm_E_r": {"lower": e_lo, "upper": e_up},
        "norm_E_next_r_prime": {"lower": ep_lo, "upper": ep_up},
        "constants": {"A": c.A, "B": c.B, "D": c.D, "E": c.E},
        "gate": {
            "grad_F_total_upper": f_up,
            "grad_G_total_upper": g_up,
            "sum_upper": f_up + g_up,
            "threshold": 0.5,
        },
        "check": check,
        "findings": [radius_identity_finding()],
        "seed": seed,
        "samples": samples,
    }


# ---------------------------------------------------------------------------
# Limit check
# ---------------------------------------------------------------------------

def limit_check_lemma31(
    m1: int,
    m2: int,
    m3: int,
    C: float,
    a: float,
    tol: float,
    d_sequence: Optional[Sequence[int]] = None,
    step_cap: int = 100000,
) -> int:
    """First n >= 2 with t_n = n^{m3} d_n^{m1} (1 - 1/n^{m2})^{d_n} < tol,
    followed by 20 strictly decreasing terms.

    d_n = ceil(C a^n) unless an explicit sequence/callable is supplied.
    Evaluated in log space (log1p) to avoid underflow.
    """
    if min(m1, m2, m3) < 1 or C <= 0 or a <= 1 or tol <= 0:
        raise ValueError("need m1,m2,m3 >= 1, C > 0, a > 1, tol > 0")

    def d_of(n: int) -> int:
        if d_sequence is None:
            return max(1, math.ceil(C * a ** n))
        if callable(d_sequence):
            return int(d_sequence(n))
        return int(d_sequence[n])

    def log_t(n: int) -> float:
        return (
            m3 * math.log(n)
            + m1 * math.log(d_of(n))
            + d_of(n) * math.log1p(-1.0 / n ** m2)
        )

    log_tol = math.log(tol)
    n = 2
    while n < step_cap:
        if log_t(n) < log_tol:
            prev = log_t(n)
            ok = True
            for k in range(n + 1, n + 21):
                cur = log_t(k)
                if cur >= prev:
                    ok = False
                    break
                prev = cur
            if ok:
                return n
        n += 1
    raise RuntimeError(
        f"no n < {step_cap} with t_n < {tol} and 20 decreasing successors; "
        "this contradicts the limit claim"
    )


# ---------------------------------------------------------------------------
# Picard inversion
# ---------------------------------------------------------------------------

def picard_invert(
    H: Transformation,
    point: Tuple[Sequence[complex], Sequence[complex]],
    params: PolydiscParams,
    tol: float = 1e-12,
    max_iter: int = 500,
    samples: int = 2000,
    seed: int = 0,
) -> Tuple[List[complex], List[complex]]:
    """Invert (Z', W') = H(Z, W) at a target point inside Delta_rho.

    Requires the contraction gate |grad F| + |grad G| < 1/2 on Delta_rho
    (coefficient-sum upper bounds); iterates
        (Z, W) <- (Z' - Fpert(Z, W), W' - Gpert(Z, W))
    until the residual drops below `tol`.
    """
    N = H.N
    _, rho, _, _ = params.floats()
    (f_lo, f_up), (g_lo, g_up) = _map_gradient_totals(H, rho, samples, seed)
    if f_up + g_up >= 0.5:
        raise GateError(
            f"contraction gate failed: |grad F| + |grad G| <= {f_up + g_up:.6g} >= 1/2"
        )
    z_t, w_t = [complex(v) for v in point[0]], [complex(v) for v in point[1]]
    if len(z_t) != 2 * N or len(w_t) != 4:
        raise ValueError("point must supply 2N z-values and 4 w-values")
    f_pert = [
        H.F.entries[a][j] - TransformPolynomial.z(N, a + 1, j + 1)
        for a in range(2)
        for j in range(N)
    ]
    g_pert = [
        H.G.entries[a][b] - TransformPolynomial.w(N, a + 1, b + 1)
        for a in range(2)
        for b in range(2)
    ]
    z, w = list(z_t), list(w_t)
    for _ in range(max_iter):
        z_new = [zt - p.evaluate_numeric(z, w) for zt, p in zip(z_t, f_pert)]
        w_new = [wt - p.evaluate_numeric(z, w) for wt, p in zip(w_t, g_pert)]
        resid = max(
            max(abs(zn - zo) for zn, zo in zip(z_new, z)),
            max(abs(wn - wo) for wn, wo in zip(w_new, w)),
        )
        z, w = z_new, w_new
        if resid < tol:
            break
    else:
        raise RuntimeError(f"no convergence within {max_iter} iterations")
    # confirm the preimage maps back within tolerance and lies in Delta_rho
    z_img = [
        H.F.entries[a][j].evaluate_numeric(z, w)
        for a in range(2)
        for j in range(N)
    ]
    w_img = [
        H.G.entries[a][b].evaluate_numeric(z, w) for a in range(2) for b in range(2)
    ]
    err = max(
        max(abs(u - v) for u, v in zip(z_img, z_t)),
        max(abs(u - v) for u, v in zip(w_img, w_t)),
    )
    if err > 10 * tol:
        raise RuntimeError(f"inverse residual {err} exceeds tolerance")
    rw = math.sqrt(N) * rho
    if any(abs(v) > rho + 1e-9 for v in z) or any(abs(v) > rw + 1e-9 for v in w):
        raise RuntimeError("preimage escaped Delta_rho")
    return (z, w)


# ---------------------------------------------------------------------------
# Iteration driver
# ---------------------------------------------------------------------------

def _pol_expressions(n: int, d_n: int, N: int) -> dict:
    """log10 of the four stage-limit expressions along the radius sequence."""
    c = EstimateConstants(d=d_n, N=N)
    pow4 = (2.0 * d_n) ** (4 * N)
    # r_{n+1}/r_n = 1 - 1/(n+2)^2 from the defining radius formula
    # (see radius_identity_finding for the discrepancy with the stated form)
    lq = math.log1p(-1.0 / (n + 2) ** 2)
    g = (n + 2) * (n + 1)

    def log10(x: float, extra: float = 0.0) -> float:
        return (math.log(x) + extra) / math.log(10.0)

    return {
        "pol_grad_term": log10((c.A * g + c.B) * pow4, (d_n - 1) / 2.0 * lq),
        "pol_quad_term": log10(c.E * pow4 / g, (2 * d_n - 3) * lq),
        "pol_mid_term": log10((108.0 * g + c.D) * pow4, (2 * d_n - 3) / 4.0 * lq),
        "pol_linear_term": log10(3.0 ** (2 * N) * pow4 * g ** (2 * N), (d_n - 1) * lq),
    }


def _pol_decay_confirmation(N: int, tol: float = 1e-6, n_cap: int = 200) -> dict:
    """Extend the stage-limit expressions with d_n = 2^n + 2 until they decay.

    The expressions grow for small n; this records the n beyond which each
    is strictly decreasing and has fallen below `tol` (a recorded finding,
    not an assertion).
    """
    out = {}
    for key in ("pol_grad_term", "pol_quad_term", "pol_mid_term", "pol_linear_term"):
        prev = None
        decreasing_since = None
        below_at = None
        for n in range(1, n_cap):
            d_n = 2 ** n + 2 if n < 60 else 2 ** 60
            val = _pol_expressions(n, d_n, N)[key]
            if prev is not None and val < prev:
                if decreasing_since is None:
                    decreasing_since = n
            elif prev is not None:
                decreasing_since = None
            if below_at is None and val < math.log10(tol):
                below_at = n
            prev = val
            if below_at is not None and decreasing_since is not None and n > below_at + 5:
                break
        out[key] = {"decreasing_since": decreasing_since, "below_tol_at": below_at}
    return out


def moser_iterate(
    M: ManifoldSpec,
    stages: int,
    trunc: int,
    samples: int = 2000,
    seed: int = 0,
) -> IterationTrace:
    """Run `stages` order-doubling steps along the shrinking radius sequence.

    Per stage n: records the exact order d_n of E_n (asserted >= 2^n + 2),
    the bracketed sup norm of E_n on D_{r_n}, the size ratio
    eps_n = ||E_n||_{r_n} / (r_n - r_{n+1})^2, and the stage-limit
    expressions; then applies the order-doubling step at degree
    min(d_n, (trunc+2)//2) so the doubled order stays inside the stored
    truncation.
    """
    if stages < 0:
        raise ValueError("stages must be >= 0")
    if trunc < 2 ** stages + 2:
        raise TruncationError(
            f"trunc={trunc} cannot certify {stages} stages; need >= {2 ** stages + 2}"
        )
    if M.order() < 3:
        raise RefusalError("perturbation must vanish to order 3")
    trace = IterationTrace(
        config={"stages": stages, "trunc": trunc, "samples": samples, "seed": seed, "N": M.N}
    )
    cur = M.truncated(trunc)
    eps_list: List[float] = []
    for n in range(stages + 1):
        r_n, rho_n, sigma_n = radius_sequence(n)
        r_next = rat(n + 3) / (2 * (n + 2))
        o_n = cur.order()
        if o_n != math.inf and o_n < 2 ** n + 2:
            raise RuntimeError(
                f"stage {n}: certified order {o_n} below 2^{n}+2 = {2 ** n + 2}"
            )
        lo, up = matrix_sup_norm_bounds(cur.E, float(r_n), samples, seed + 101 * n)
        gap2 = float((r_n - r_next) ** 2)
        eps_up = up / gap2
        eps_lo = lo / gap2
        eps_list.append(eps_up)
        d_n = None if o_n == math.inf else int(o_n)
        row = {
            "n": n,
            "r_n": str(r_n),
            "rho_n": str(rho_n),
            "sigma_n": str(sigma_n),
            "d_n": d_n,
            "sup_E_lower": lo,
            "sup_E_upper": up,
            "eps_lower": eps_lo,
            "eps_upper": eps_up,
        }
        if d_n is not None:
            row.update(_pol_expressions(n, d_n, M.N))
        trace.stages.append(row)
        if n == stages:
            break
        if o_n == math.inf:
            continue  # model manifold: every stage stays zero
        d_used = min(int(o_n), (trunc + 2) // 2)
        row["d_used"] = d_used
        cur = theta_step(cur, d_used)
    eps_tail = eps_list[2:]
    trace.findings = {
        "eps_strictly_decreasing_from_2": all(
            b < a for a, b in zip(eps_tail, eps_tail[1:])
        )
        if len(eps_tail) >= 2
        else True,
        "pol_decay": _pol_decay_confirmation(M.N),
        "radius_identity": radius_identity_finding(),
    }
    return trace
