"""Quadric model, Hermitian forms, and defining-series containers.

A manifold is described by W = Z * conj(Z)^t + E(Z, conj Z) where Z is 2xN,
W is 2x2, and the perturbation E is a 2x2 matrix of bihomogeneous pieces of
total degree >= 3 stored up to a declared truncation degree d_max.

For a *real* manifold the perturbation satisfies the mirror symmetry
E_{(n,m)} = conj(E_{(m,n)})^t (as 2x2 matrices), so user-facing files only
need the bidegrees with m >= n; the remainder is completed here.  Internal
pipeline stages can produce perturbations that are exactly real only on pure
(m,0)/(0,m) bidegrees; those carry hermitian=False and skip the mirror
completion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

from .algebra import (
    BiPolynomial,
    MatrixPoly,
    TransformPolynomial,
    poly_from_json,
    poly_to_json,
)


# ---------------------------------------------------------------------------
# Hermitian forms and their powers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def hermitian_form(a: int, b: int, N: int) -> BiPolynomial:
    """<l_a, l_b> = sum_j z_{aj} * zbar_{bj}."""
    if a not in (1, 2) or b not in (1, 2):
        raise ValueError("row indices must be 1 or 2")
    out = BiPolynomial.zero(N)
    for j in range(1, N + 1):
        out = out + BiPolynomial.z(N, a, j) * BiPolynomial.zbar(N, b, j)
    return out


@dataclass(frozen=True)
class HermitianFormPower:
    """Exponent vector I = (i1,i2,i3,i4) for <l1,l1>^i1 <l1,l2>^i2 <l2,l1>^i3 <l2,l2>^i4."""

    I: Tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.I) != 4 or any(e < 0 for e in self.I):
            raise ValueError("I must be four non-negative integers")

    @property
    def degree(self) -> int:
        return sum(self.I)

    def conjugate_index(self) -> "HermitianFormPower":
        """conj(H^I) = H^{I'} with the two mixed slots swapped."""
        i1, i2, i3, i4 = self.I
        return HermitianFormPower((i1, i3, i2, i4))


_FORM_SLOTS = ((1, 1), (1, 2), (2, 1), (2, 2))


@lru_cache(maxsize=None)
def _form_power_cached(I: Tuple[int, int, int, int], N: int) -> BiPolynomial:
    out = BiPolynomial.one(N)
    for (a, b), e in zip(_FORM_SLOTS, I):
        if e:
            out = out * hermitian_form(a, b, N).pow_trunc(e, None)
    return out


def form_power(I, N: int) -> BiPolynomial:
    """Expanded product of Hermitian-form powers; bidegree (|I|, |I|)."""
    if isinstance(I, HermitianFormPower):
        I = I.I
    return _form_power_cached(tuple(I), N)


@lru_cache(maxsize=None)
def model_rhs(N: int) -> MatrixPoly:
    """The 2x2 quadric right-hand side Z * conj(Z)^t."""
    return MatrixPoly([[hermitian_form(a, b, N) for b in (1, 2)] for a in (1, 2)])


# ---------------------------------------------------------------------------
# ManifoldSpec
# ---------------------------------------------------------------------------

@dataclass
class ManifoldSpec:
    """Defining data W = Z*conj(Z)^t + E, truncated at total degree d_max.

    `hermitian` marks whether E satisfies the full mirror symmetry
    E_{(n,m)} = conj(E_{(m,n)})^t.  Outputs of the normalization pipeline
    satisfy it only on pure bidegrees and set the flag False.
    """

    N: int
    d_max: int
    E: MatrixPoly
    hermitian: bool = True

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.d_max < 2:
            raise ValueError("d_max must be >= 2")
        if self.E.rows != 2 or self.E.cols != 2:
            raise ValueError("E must be 2x2")
        if self.E.N != self.N:
            raise ValueError("E entries must share N")

    def order(self) -> float:
        """Minimum total degree appearing in E (+inf when E = 0)."""
        return min(p.order() for row in self.E.entries for p in row)

    def bidegrees(self):
        out = set()
        for row in self.E.entries:
            for p in row:
                out.update(p.bidegrees())
        return sorted(out)

    def bidegree_block(self, m: int, n: int) -> MatrixPoly:
        return self.E.map(lambda p: p.bidegree_part(m, n))

    def phi_matrix(self) -> MatrixPoly:
        """Z*conj(Z)^t + E, the full substitution target for w."""
        return model_rhs(self.N) + self.E

    def truncated(self, d_max: int) -> "ManifoldSpec":
        return ManifoldSpec(
            N=self.N,
            d_max=min(self.d_max, d_max),
            E=self.E.map(lambda p: p.truncate(d_max)),
            hermitian=self.hermitian,
        )

    @classmethod
    def model(cls, N: int, d_max: int) -> "ManifoldSpec":
        return cls(N=N, d_max=d_max, E=MatrixPoly.zeros(2, 2, N))


class RealityConflictError(ValueError):
    """Input supplies both mirror bidegrees and they disagree."""


def _mirror(block: MatrixPoly) -> MatrixPoly:
    return block.conj_transpose()


def enforce_reality(spec: ManifoldSpec) -> ManifoldSpec:
    """Complete/validate the mirror symmetry E_{(n,m)} = conj(E_{(m,n)})^t.

    Bidegrees present only with m > n get their mirror filled in; bidegrees
    present in both orientations must agree exactly; diagonal blocks (n,n)
    must be Hermitian.  Idempotent.  Specs flagged non-Hermitian are
    returned unchanged.
    """
    if not spec.hermitian:
        return spec
    bidegs = spec.bidegrees()
    new_E = MatrixPoly.zeros(2, 2, spec.N)
    seen = set()
    for (m, n) in bidegs:
        pair = (max(m, n), min(m, n))
        if pair in seen:
            continue
        seen.add(pair)
        hi = spec.bidegree_block(pair[0], pair[1])
        lo = spec.bidegree_block(pair[1], pair[0])
        if pair[0] == pair[1]:
            if not (hi - _mirror(hi)).is_zero():
                raise RealityConflictError(
                    f"diagonal bidegree {pair} block is not Hermitian"
                )
            new_E = new_E + hi
            continue
        if lo.is_zero():
            lo = _mirror(hi)
        elif hi.is_zero():
            hi = _mirror(lo)
        elif not (lo - _mirror(hi)).is_zero():
            raise RealityConflictError(
                f"bidegrees {pair} and {pair[::-1]} supplied but inconsistent"
            )
        new_E = new_E + hi + lo
    return ManifoldSpec(N=spec.N, d_max=spec.d_max, E=new_E, hermitian=True)


# ---------------------------------------------------------------------------
# JSON ingestion / emission
# ---------------------------------------------------------------------------

def manifold_to_json(spec: ManifoldSpec) -> dict:
    """Canonical JSON form; Hermitian specs list only m >= n bidegrees."""
    blocks = []
    for (m, n) in spec.bidegrees():
        if spec.hermitian and m < n:
            continue
        for a in (1, 2):
            for b in (1, 2):
                p = spec.E.entries[a - 1][b - 1].bidegree_part(m, n)
                if p.is_zero():
                    continue
                blocks.append(
                    {"entry": [a, b], "bidegree": [m, n], "poly": poly_to_json(p)}
                )
    out = {"N": spec.N, "d_max": spec.d_max, "E": blocks}
    if not spec.hermitian:
        out["hermitian"] = False
    return out


def manifold_from_json(data: dict) -> ManifoldSpec:
    try:
        N = int(data["N"])
        d_max = int(data["d_max"])
        raw_blocks = data["E"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed manifold object: {exc}") from exc
    hermitian = bool(data.get("hermitian", True))
    E = MatrixPoly.zeros(2, 2, N)
    for blk in raw_blocks:
        a, b = (int(x) for x in blk["entry"])
        if a not in (1, 2) or b not in (1, 2):
            raise ValueError(f"bad matrix entry index {blk['entry']}")
        p = poly_from_json(blk["poly"])
        if not isinstance(p, BiPolynomial) or p.N != N:
            raise ValueError("perturbation blocks must be zzbar polynomials sharing N")
        m, n = (int(x) for x in blk["bidegree"])
        if not (p - p.bidegree_part(m, n)).is_zero():
            raise ValueError(
                f"block declared bidegree ({m},{n}) but contains other terms"
            )
        row = E.entries[a - 1]
        row[b - 1] = row[b - 1] + p
    spec = ManifoldSpec(N=N, d_max=d_max, E=E, hermitian=hermitian)
    spec = enforce_reality(spec)
    if spec.order() < 3:
        raise ValueError("perturbation must vanish to order 3 (E = O(3))")
    if spec.order() != float("inf") and spec.d_max < 3:
        raise ValueError("d_max too small for a degree-3 perturbation")
    return spec


def ingest(path) -> ManifoldSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return manifold_from_json(data)


def emit(spec: ManifoldSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifold_to_json(spec), fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Model automorphism verification
# ---------------------------------------------------------------------------

def verify_model_automorphism(F, G: Optional[MatrixPoly] = None, trunc: int = 8) -> bool:
    """Check that a candidate map preserves W = Z*conj(Z)^t up to `trunc`.

    Accepts either (F, G) MatrixPoly grids of TransformPolynomial (F is 2xN,
    G is 2x2) or any object with .F/.G attributes.  Returns True iff
    G(Z, Z*conj(Z)^t) - F(Z, Z*conj(Z)^t) * conj(F(...))^t vanishes exactly
    through total degree `trunc`.
    """
    if G is None:
        F, G = F.F, F.G
    N = F.N
    model = model_rhs(N)
    fhat = F.map(lambda p: p.substitute_w(model, trunc))
    ghat = G.map(lambda p: p.substitute_w(model, trunc))
    prod = fhat.matmul_trunc(fhat.conj_transpose(), trunc)
    resid = ghat - prod
    return resid.map(lambda p: p.truncate(trunc)).is_zero()
