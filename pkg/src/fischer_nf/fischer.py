"""Weighted apolar inner product and generalized divisor decompositions.

The inner product pairs monomials diagonally with factorial weights:
    <z^I zbar^J, z^K zbar^L> = I! J! [I=K][J=L]
so multiplication by a fixed polynomial P has the differential operator
P*(D) = sum conj(p_{I,J}) d^I/dz^I d^J/dzbar^J as its adjoint.  A bidegree
(m,n) polynomial splits orthogonally into a span component (multiples of a
divisor family) and a remainder annihilated by every adjoint operator:

* type1 (m >= n): divisors are the Hermitian form powers H^I, |I| = n;
  quotients are z-polynomials of degree m - n.
* type2 (m < n, m >= 1): divisors are (z_{1j} + z_{2j}) * H^I, |I| = m - 1;
  quotients are zbar-polynomials of degree n - m + 1.

Both are computed by solving the exact normal equations of the orthogonal
projection over Gaussian rationals, with minimum-norm quotients whenever the
spanning products are linearly dependent.  Every certificate carries exact
reconstruction and kernel evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .algebra import (
    GR_ONE,
    GR_ZERO,
    BiPolynomial,
    GaussianRational,
    mi_degree,
    mi_factorial,
    multi_indices,
    poly_to_json,
    rat,
)
from .manifold import form_power


# ---------------------------------------------------------------------------
# Inner product / adjoint
# ---------------------------------------------------------------------------

def fischer_inner(p: BiPolynomial, q: BiPolynomial) -> GaussianRational:
    """<p, q> = sum over shared (I,J) of c_p * conj(c_q) * I! * J!."""
    if p.N != q.N:
        raise ValueError("N mismatch")
    a, b = p.terms, q.terms
    if len(b) < len(a):
        small, other, flip = b, a, True
    else:
        small, other, flip = a, b, False
    total = GR_ZERO
    for key, c in small.items():
        d = other.get(key)
        if d is None:
            continue
        w = mi_factorial(key[0]) * mi_factorial(key[1])
        if flip:
            total = total + d * c.conj() * w
        else:
            total = total + c * d.conj() * w
    return total


def fischer_norm_sq(p: BiPolynomial):
    """sum I! J! |c_{I,J}|^2 as an exact rational; zero iff p = 0."""
    total = rat(0)
    for (i, j), c in p.terms.items():
        total = total + mi_factorial(i) * mi_factorial(j) * c.abs2()
    return total


def adjoint_apply(p: BiPolynomial, target: BiPolynomial) -> BiPolynomial:
    """Apply P*(D) = sum conj(c_{I,J}) d^I/dz^I d^J/dzbar^J to target."""
    if p.N != target.N:
        raise ValueError("N mismatch")
    out = BiPolynomial.zero(p.N)
    for (i, j), c in p.terms.items():
        d = target.differentiate(i, j)
        if not d.is_zero():
            out = out + d.scale(c.conj())
    return out


def verify_pythagoras(f: BiPolynomial, g: BiPolynomial, h: BiPolynomial) -> bool:
    """True iff ||f||^2 = ||g||^2 + ||h||^2 exactly."""
    return fischer_norm_sq(f) == fischer_norm_sq(g) + fischer_norm_sq(h)


# ---------------------------------------------------------------------------
# Divisor families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DivisorFamily:
    """One of the two divisor families; `form_degree` is |I|."""

    mode: str  # "type1" | "type2"
    N: int
    form_degree: int

    def __post_init__(self):
        if self.mode not in ("type1", "type2"):
            raise ValueError("mode must be 'type1' or 'type2'")
        if self.form_degree < 0:
            raise ValueError("form degree must be >= 0")

    def divisors(self) -> List[Tuple[object, BiPolynomial]]:
        """(label, divisor polynomial) pairs in canonical label order."""
        out = []
        if self.mode == "type1":
            for I in multi_indices(4, self.form_degree):
                out.append((I, form_power(I, self.N)))
        else:
            for j in range(1, self.N + 1):
                lin = BiPolynomial.z(self.N, 1, j) + BiPolynomial.z(self.N, 2, j)
                for I in multi_indices(4, self.form_degree):
                    out.append(((j, I), lin * form_power(I, self.N)))
        return out


def type1_family(N: int, n: int) -> DivisorFamily:
    return DivisorFamily("type1", N, n)


def type2_family(N: int, form_degree: int) -> DivisorFamily:
    return DivisorFamily("type2", N, form_degree)


# ---------------------------------------------------------------------------
# Exact linear algebra (Hermitian normal equations, minimum-norm solve)
# ---------------------------------------------------------------------------

class _GramSolver:
    """Reusable exact solver for G c = b with G Hermitian PSD, b in range(G).

    Precomputes a row reduction [G | I] -> [R | T] with R in reduced row
    echelon form (so T G = R), a nullspace basis of G, and the inverse of
    the small Hermitian Gram matrix of that basis.  solve(b) then returns
    the minimum-norm solution by projecting the particular solution off the
    nullspace.
    """

    def __init__(self, G: List[List[GaussianRational]]):
        n = len(G)
        rows = [
            list(G[i]) + [GR_ONE if j == i else GR_ZERO for j in range(n)]
            for i in range(n)
        ]
        pivots: List[int] = []
        r = 0
        for col in range(n):
            piv = next((i for i in range(r, n) if not rows[i][col].is_zero()), None)
            if piv is None:
                continue
            rows[r], rows[piv] = rows[piv], rows[r]
            inv = GR_ONE / rows[r][col]
            rows[r] = [x * inv for x in rows[r]]
            for i in range(n):
                if i != r and not rows[i][col].is_zero():
                    f = rows[i][col]
                    rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
            pivots.append(col)
            r += 1
            if r == n:
                break
        self.n = n
        self.rank = r
        self.pivots = pivots
        self.R = [row[:n] for row in rows]
        self.T = [row[n:] for row in rows]
        free = [c for c in range(n) if c not in set(pivots)]
        V: List[List[GaussianRational]] = []
        for fc in free:
            v = [GR_ZERO] * n
            v[fc] = GR_ONE
            for ri, pc in enumerate(pivots):
                v[pc] = -self.R[ri][fc]
            V.append(v)
        self.V = V
        if V:
            k = len(V)
            M = [
                [
                    sum((V[a][j].conj() * V[b][j] for j in range(n)), GR_ZERO)
                    for b in range(k)
                ]
                for a in range(k)
            ]
            self.M_inv = _invert_hermitian(M)
        else:
            self.M_inv = None

    def solve(self, b: List[GaussianRational]) -> List[GaussianRational]:
        n = self.n
        rhs = [
            sum((self.T[i][j] * b[j] for j in range(n)), GR_ZERO) for i in range(n)
        ]
        for i in range(self.rank, n):
            if not rhs[i].is_zero():
                raise ValueError("inconsistent normal equations (b not in range)")
        c = [GR_ZERO] * n
        for i, pc in enumerate(self.pivots):
            c[pc] = rhs[i]
        if self.V:
            k = len(self.V)
            vh_c = [
                sum((self.V[a][j].conj() * c[j] for j in range(n)), GR_ZERO)
                for a in range(k)
            ]
            y = [
                sum((self.M_inv[a][t] * vh_c[t] for t in range(k)), GR_ZERO)
                for a in range(k)
            ]
            c = [
                c[j] - sum((self.V[a][j] * y[a] for a in range(k)), GR_ZERO)
                for j in range(n)
            ]
        return c


def _invert_hermitian(M: List[List[GaussianRational]]) -> List[List[GaussianRational]]:
    """Exact inverse of a nonsingular matrix by Gauss-Jordan elimination."""
    k = len(M)
    rows = [
        list(M[i]) + [GR_ONE if j == i else GR_ZERO for j in range(k)]
        for i in range(k)
    ]
    for col in range(k):
        piv = next((i for i in range(col, k) if not rows[i][col].is_zero()), None)
        if piv is None:
            raise ValueError("singular matrix")
        rows[col], rows[piv] = rows[piv], rows[col]
        inv = GR_ONE / rows[col][col]
        rows[col] = [x * inv for x in rows[col]]
        for i in range(k):
            if i != col and not rows[i][col].is_zero():
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[col])]
    return [row[k:] for row in rows]


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass
class FischerCertificate:
    """Exact record of one orthogonal decomposition.

    input = sum over labels of divisor * quotient + remainder, and every
    family divisor's adjoint operator annihilates the remainder.
    """

    mode: str
    family: DivisorFamily
    input: BiPolynomial
    quotients: Dict[object, BiPolynomial]
    remainder: BiPolynomial
    kernel_evidence: List[Tuple[object, BiPolynomial]]

    def span_part(self) -> BiPolynomial:
        out = BiPolynomial.zero(self.input.N)
        for label, div in self.family.divisors():
            q = self.quotients.get(label)
            if q is not None and not q.is_zero():
                out = out + div * q
        return out

    def verify(self) -> bool:
        """Exact reconstruction, kernel evidence, and Pythagoras."""
        span = self.span_part()
        if not (self.input - span - self.remainder).is_zero():
            return False
        if any(not ev.is_zero() for _, ev in self.kernel_evidence):
            return False
        return verify_pythagoras(self.input, span, self.remainder)

    def to_json(self) -> dict:
        def label_str(label):
            return str(list(label) if isinstance(label, tuple) and not isinstance(label[0], int) else label)

        quotients = []
        for label in sorted(self.quotients, key=str):
            q = self.quotients[label]
            if q.is_zero():
                continue
            quotients.append({"label": str(label), "poly": poly_to_json(q)})
        return {
            "mode": self.mode,
            "quotients": quotients,
            "remainder": poly_to_json(self.remainder),
            "kernel_checks": [
                {"label": str(label), "is_zero": ev.is_zero()}
                for label, ev in self.kernel_evidence
            ],
        }


# ---------------------------------------------------------------------------
# Decompositions
# ---------------------------------------------------------------------------

_GRAM_CACHE: Dict[tuple, tuple] = {}


def _monomials(N: int, degree: int, block: str) -> List[BiPolynomial]:
    """All degree-`degree` monomials in the z block or the zbar block."""
    zero = (0,) * (2 * N)
    out = []
    for e in multi_indices(2 * N, degree):
        if block == "z":
            out.append(BiPolynomial.monomial(N, e, zero))
        else:
            out.append(BiPolynomial.monomial(N, zero, e))
    return out


def _build_basis(family: DivisorFamily, comp_degree: int, comp_block: str):
    """Products (complementary monomial) x (divisor), exact-duplicate-free.

    Returns (kept basis entries, column groups) where each basis entry is
    ((label, monomial key), product polynomial) and duplicates keep only the
    canonically first (label, monomial) pair.
    """
    monos = _monomials(family.N, comp_degree, comp_block)
    entries = []
    for label, div in family.divisors():
        for mono in monos:
            key = next(iter(mono.terms))  # the monomial's multi-index pair
            entries.append(((label, key), div * mono, mono))
    entries.sort(key=lambda e: str(e[0]))
    seen = {}
    kept = []
    for ident, prod, mono in entries:
        sig = frozenset(prod.terms.items())
        if sig in seen:
            continue
        seen[sig] = ident
        kept.append((ident, prod, mono))
    return kept


def _gram_solve(family: DivisorFamily, comp_degree: int, comp_block: str, p: BiPolynomial):
    """Minimum-norm projection coefficients of p onto the product span."""
    cache_key = (family.mode, family.N, family.form_degree, comp_degree, comp_block)
    cached = _GRAM_CACHE.get(cache_key)
    if cached is None:
        kept = _build_basis(family, comp_degree, comp_block)
        basis = [prod for _, prod, _ in kept]
        n = len(basis)
        G = [[fischer_inner(basis[l], basis[k]) for l in range(n)] for k in range(n)]
        solver = _GramSolver(G)
        cached = (kept, solver)
        _GRAM_CACHE[cache_key] = cached
    kept, solver = cached
    b = [fischer_inner(p, prod) for _, prod, _ in kept]
    coeffs = solver.solve(b)
    return kept, coeffs


def _bidegree_of(p: BiPolynomial) -> Tuple[int, int]:
    degs = p.bidegrees()
    if len(degs) != 1:
        raise ValueError("input must be nonzero and bihomogeneous")
    return degs[0]


def decompose_type1(p: BiPolynomial, family: DivisorFamily) -> FischerCertificate:
    """p (bidegree (m,n), m >= n) = sum_I Q_I(Z) H^I + remainder.

    Quotients are z-polynomials of degree m - n; the remainder is
    annihilated by (H^I)*(D) for every |I| = n.
    """
    if family.mode != "type1":
        raise ValueError("family mode must be type1")
    if p.is_zero():
        return FischerCertificate(
            "type1", family, p, {}, p,
            [(label, BiPolynomial.zero(p.N)) for label, _ in family.divisors()],
        )
    m, n = _bidegree_of(p)
    if m < n:
        raise ValueError(f"type1 needs m >= n, got bidegree ({m},{n})")
    if family.form_degree != n or family.N != p.N:
        raise ValueError("family degree must equal the zbar-degree of p")
    kept, coeffs = _gram_solve(family, m - n, "z", p)
    quotients: Dict[object, BiPolynomial] = {}
    span = BiPolynomial.zero(p.N)
    for ((label, mono_key), prod, mono), c in zip(kept, coeffs):
        if c.is_zero():
            continue
        quotients[label] = quotients.get(label, BiPolynomial.zero(p.N)) + mono.scale(c)
        span = span + prod.scale(c)
    remainder = p - span
    evidence = [
        (label, adjoint_apply(div, remainder)) for label, div in family.divisors()
    ]
    return FischerCertificate("type1", family, p, quotients, remainder, evidence)


def decompose_type2(p: BiPolynomial, family: DivisorFamily) -> FischerCertificate:
    """p (bidegree (m,n), 1 <= m < n) = sum_{j,I} (z_{1j}+z_{2j}) H^I Q^j_I(Zbar) + remainder.

    Quotients are zbar-polynomials of degree n - m + 1; the remainder is
    annihilated by ((z_{1j}+z_{2j}) H^I)*(D) for all j, |I| = m - 1.
    """
    if family.mode != "type2":
        raise ValueError("family mode must be type2")
    if p.is_zero():
        return FischerCertificate(
            "type2", family, p, {}, p,
            [(label, BiPolynomial.zero(p.N)) for label, _ in family.divisors()],
        )
    m, n = _bidegree_of(p)
    if m == 0:
        # degenerate family: nothing to divide by
        return FischerCertificate("type2", family, p, {}, p, [])
    if m >= n:
        raise ValueError(f"type2 needs m < n, got bidegree ({m},{n})")
    if family.form_degree != m - 1 or family.N != p.N:
        raise ValueError("family form degree must be m - 1")
    kept, coeffs = _gram_solve(family, n - m + 1, "zbar", p)
    quotients: Dict[object, BiPolynomial] = {}
    span = BiPolynomial.zero(p.N)
    for ((label, mono_key), prod, mono), c in zip(kept, coeffs):
        if c.is_zero():
            continue
        quotients[label] = quotients.get(label, BiPolynomial.zero(p.N)) + mono.scale(c)
        span = span + prod.scale(c)
    remainder = p - span
    evidence = [
        (label, adjoint_apply(div, remainder)) for label, div in family.divisors()
    ]
    return FischerCertificate("type2", family, p, quotients, remainder, evidence)
