"""Exact sparse polynomial arithmetic over Gaussian rationals.

Two variable layouts are supported, both for a 2xN matrix of holomorphic
coordinates Z and its conjugate:

* ``BiPolynomial`` — polynomials in the 2N variables z_{aj} and the 2N
  conjugated variables zbar_{aj}.  A term is keyed by a pair of
  multi-indices (z-exponents, zbar-exponents); the *bidegree* of a term is
  (|I|, |J|).
* ``TransformPolynomial`` — polynomials in the 2N variables z_{aj} and the
  four auxiliary variables w_{alpha,beta} (alpha, beta in {1,2}).  The
  *weighted degree* of a term is z-degree + 2 * w-degree, reflecting that w
  stands in for a quadric in (z, zbar).

Variables are flattened row-major: z_{aj} lives at slot (a-1)*N + (j-1) of
a length-2N exponent tuple, and w_{alpha,beta} at slot (alpha-1)*2 +
(beta-1) of a length-4 exponent tuple.

All coefficients are ``GaussianRational`` (exact complex rationals), so
every zero test in the decomposition and normal-form machinery is exact.
Floating point appears only in the estimate/audit layer.
"""

from __future__ import annotations

import math
import operator
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

try:  # gmpy2.mpq is a drop-in, much faster exact rational
    from gmpy2 import mpq as RAT
    from gmpy2 import lcm as _lcm
except ImportError:  # pragma: no cover - environment without gmpy2
    from fractions import Fraction as RAT
    from math import lcm as _lcm

_R0 = RAT(0)
_R1 = RAT(1)


def rat(value) -> "RAT":
    """Coerce ints, rationals, or 'p/q' strings to the rational type."""
    if isinstance(value, str):
        return RAT(value)
    return RAT(value)


def rat_str(value) -> str:
    """Canonical 'p/q' (or plain integer) string for a rational."""
    return str(RAT(value))


class GaussianRational:
    """An exact complex number a + b*i with rational a, b."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", rat(re))
        object.__setattr__(self, "im", rat(im))

    def __setattr__(self, name, value):
        raise AttributeError("GaussianRational is immutable")

    # -- constructors -------------------------------------------------
    @classmethod
    def from_strings(cls, re: str, im: str) -> "GaussianRational":
        return cls(rat(re), rat(im))

    # -- predicates ----------------------------------------------------
    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def is_real(self) -> bool:
        return self.im == 0

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other) -> "GaussianRational":
        if type(other) is not GaussianRational:
            other = _coerce(other)
        return _gr_fast(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other) -> "GaussianRational":
        if type(other) is not GaussianRational:
            other = _coerce(other)
        return _gr_fast(self.re - other.re, self.im - other.im)

    def __rsub__(self, other) -> "GaussianRational":
        return _coerce(other) - self

    def __neg__(self) -> "GaussianRational":
        return _gr_fast(-self.re, -self.im)

    def __mul__(self, other) -> "GaussianRational":
        if type(other) is not GaussianRational:
            other = _coerce(other)
        return _gr_fast(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "GaussianRational":
        other = _coerce(other)
        d = other.abs2()
        if d == 0:
            raise ZeroDivisionError("division by zero GaussianRational")
        return GaussianRational(
            (self.re * other.re + self.im * other.im) / d,
            (self.im * other.re - self.re * other.im) / d,
        )

    def __rtruediv__(self, other) -> "GaussianRational":
        return _coerce(other) / self

    def conj(self) -> "GaussianRational":
        return _gr_fast(self.re, -self.im)

    def abs2(self):
        """|self|^2 as an exact rational."""
        return self.re * self.re + self.im * self.im

    # -- comparisons / hashing -------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, (int, type(_R0))):
            other = GaussianRational(other)
        if not isinstance(other, GaussianRational):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    # -- conversions --------------------------------------------------------
    def to_complex(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __repr__(self) -> str:
        if self.im == 0:
            return f"GR({self.re})"
        return f"GR({self.re}, {self.im})"


def _gr_fast(re, im) -> GaussianRational:
    """Build a GaussianRational from components already known to be rationals."""
    g = object.__new__(GaussianRational)
    object.__setattr__(g, "re", re)
    object.__setattr__(g, "im", im)
    return g


GR_ZERO = GaussianRational(0, 0)
GR_ONE = GaussianRational(1, 0)
GR_I = GaussianRational(0, 1)


def _coerce(value) -> GaussianRational:
    if isinstance(value, GaussianRational):
        return value
    if isinstance(value, (int, type(_R0))):
        return GaussianRational(value, 0)
    if isinstance(value, str):
        return GaussianRational(rat(value), 0)
    raise TypeError(f"cannot coerce {type(value).__name__} to GaussianRational")


# ---------------------------------------------------------------------------
# Multi-index helpers
# ---------------------------------------------------------------------------

_op_add = operator.add


def mi_add(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(map(_op_add, a, b))

def mi_degree(a: Tuple[int, ...]) -> int:
    return sum(a)

def mi_factorial(a: Tuple[int, ...]) -> int:
    out = 1
    for e in a:
        out *= math.factorial(e)
    return out

def multi_indices(length: int, degree: int) -> Iterator[Tuple[int, ...]]:
    """All length-`length` tuples of non-negative ints summing to `degree`."""
    if length == 0:
        if degree == 0:
            yield ()
        return
    if length == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in multi_indices(length - 1, degree - first):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# Sparse polynomial core
# ---------------------------------------------------------------------------

TermKey = Tuple[Tuple[int, ...], Tuple[int, ...]]


class _SparsePoly:
    """Shared machinery for both variable layouts.

    Terms map (first-block exponents, second-block exponents) to nonzero
    GaussianRational coefficients.  Subclasses fix block arities and the
    degree weight of the second block.
    """

    __slots__ = ("N", "terms", "_deg_items", "_pack_cache")

    _W2 = 1  # degree weight of the second variable block

    def __init__(self, N: int, terms: Optional[Dict[TermKey, GaussianRational]] = None):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.N = N
        self._deg_items = None
        self._pack_cache = None
        self.terms: Dict[TermKey, GaussianRational] = {}
        if terms:
            a1, a2 = self._arities()
            for (k1, k2), c in terms.items():
                if len(k1) != a1 or len(k2) != a2:
                    raise ValueError("multi-index arity mismatch")
                c = _coerce(c)
                if not c.is_zero():
                    self.terms[(tuple(k1), tuple(k2))] = c

    def _arities(self) -> Tuple[int, int]:
        raise NotImplementedError

    def _new(self, terms: Dict[TermKey, GaussianRational]):
        out = type(self)(self.N)
        out.terms = terms
        return out

    def _degree_sorted(self):
        """Terms as (degree, key, coeff) triples sorted by degree (cached)."""
        cached = self._deg_items
        if cached is None or len(cached) != len(self.terms):
            deg = self._term_degree
            cached = sorted(
                ((deg(k), k, c) for k, c in self.terms.items()), key=lambda t: t[0]
            )
            self._deg_items = cached
        return cached

    def _check_compat(self, other):
        if type(other) is not type(self) or other.N != self.N:
            raise ValueError(
                f"incompatible polynomials: {type(self).__name__}(N={self.N}) "
                f"vs {type(other).__name__}(N={getattr(other, 'N', '?')})"
            )

    # -- term degree ----------------------------------------------------
    @classmethod
    def _term_degree(cls, key: TermKey) -> int:
        return mi_degree(key[0]) + cls._W2 * mi_degree(key[1])

    # -- predicates / inspection ------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def order(self) -> float:
        """Minimum (weighted) term degree; +inf for the zero polynomial."""
        if not self.terms:
            return math.inf
        return min(self._term_degree(k) for k in self.terms)

    def degree(self) -> float:
        """Maximum (weighted) term degree; -inf for the zero polynomial."""
        if not self.terms:
            return -math.inf
        return max(self._term_degree(k) for k in self.terms)

    def coefficient(self, k1: Sequence[int], k2: Sequence[int]) -> GaussianRational:
        return self.terms.get((tuple(k1), tuple(k2)), GR_ZERO)

    def sorted_terms(self) -> List[Tuple[TermKey, GaussianRational]]:
        return sorted(self.terms.items(), key=lambda kv: kv[0])

    # -- ring operations ---------------------------------------------------
    def __add__(self, other):
        self._check_compat(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            s = terms.get(k)
            s = c if s is None else s + c
            if s.is_zero():
                terms.pop(k, None)
            else:
                terms[k] = s
        return self._new(terms)

    def __sub__(self, other):
        self._check_compat(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            s = terms.get(k)
            s = -c if s is None else s - c
            if s.is_zero():
                terms.pop(k, None)
            else:
                terms[k] = s
        return self._new(terms)

    def __neg__(self):
        return self._new({k: -c for k, c in self.terms.items()})

    def scale(self, c) -> "_SparsePoly":
        c = _coerce(c)
        if c.is_zero():
            return self._new({})
        cr, ci = c.re, c.im
        return self._new(
            {
                k: _gr_fast(v.re * cr - v.im * ci, v.re * ci + v.im * cr)
                for k, v in self.terms.items()
            }
        )

    def __mul__(self, other):
        if isinstance(other, (GaussianRational, int, type(_R0))):
            return self.scale(other)
        return self.mul_trunc(other, None)

    def __rmul__(self, other):
        if isinstance(other, (GaussianRational, int, type(_R0))):
            return self.scale(other)
        return NotImplemented

    def _packed(self):
        """Cached packing header: (n_terms, max slot exponent, common
        denominator, {bits: packed term list})."""
        pc = self._pack_cache
        if pc is None or pc[0] != len(self.terms):
            m = 0
            den = 1
            for (k1, k2), c in self.terms.items():
                for e in k1:
                    if e > m:
                        m = e
                for e in k2:
                    if e > m:
                        m = e
                d = c.re.denominator
                if d != 1:
                    den = _lcm(den, d)
                d = c.im.denominator
                if d != 1:
                    den = _lcm(den, d)
            pc = (len(self.terms), m, den, {})
            self._pack_cache = pc
        return pc

    def _packed_sorted(self, bits: int):
        """Terms as (degree, packed key, re numerator, im numerator) plus the
        common denominator, sorted by degree (cached per bit width).

        Packing maps the concatenated exponent tuple to an integer with
        `bits` bits per slot, so adding packed keys adds exponents slotwise
        as long as no slot overflows its field.  Coefficients are scaled to
        integers over one shared denominator so products need no gcd work.
        """
        _, _, den, by_bits = self._packed()
        items = by_bits.get(bits)
        if items is None:
            items = []
            for deg, (k1, k2), c in self._degree_sorted():
                p = 0
                for e in k1:
                    p = (p << bits) | e
                for e in k2:
                    p = (p << bits) | e
                re, im = c.re, c.im
                items.append(
                    (
                        deg,
                        p,
                        re.numerator * (den // re.denominator),
                        im.numerator * (den // im.denominator),
                    )
                )
            by_bits[bits] = items
        return items, den

    def _diff_slot(self, block: int, slot: int):
        """First partial derivative w.r.t. one slot of one variable block."""
        out: Dict[TermKey, GaussianRational] = {}
        for (a, b), c in self.terms.items():
            src = a if block == 0 else b
            e = src[slot]
            if not e:
                continue
            lst = list(src)
            lst[slot] = e - 1
            k = (tuple(lst), b) if block == 0 else (a, tuple(lst))
            out[k] = _gr_fast(c.re * e, c.im * e)
        return self._new(out)

    def mul_trunc(self, other, trunc: Optional[int], _extra_den: int = 1):
        """Product, dropping terms of (weighted) degree > trunc if given.

        `_extra_den` divides every output coefficient (a free scale fold-in
        for callers that would otherwise rescale the result)."""
        self._check_compat(other)
        if not self.terms or not other.terms:
            return self._new({})
        # pack exponent tuples into single integers so the inner loop is one
        # int add and one int-keyed dict probe per term pair
        a1n, a2n = self._arities()
        nslots = a1n + a2n
        bits = (self._packed()[1] + other._packed()[1] + 1).bit_length()
        items_a, den_a = self._packed_sorted(bits)
        items_b, den_b = other._packed_sorted(bits)
        acc: Dict[int, list] = {}
        acc_get = acc.get
        if trunc is None:
            trunc = math.inf
        deg_b0 = items_b[0][0]
        for da, pa, car, cai in items_a:
            if da + deg_b0 > trunc:
                break
            for db, pb, cbr, cbi in items_b:
                if da + db > trunc:
                    break
                k = pa + pb
                s = acc_get(k)
                if s is None:
                    acc[k] = [car * cbr - cai * cbi, car * cbi + cai * cbr]
                else:
                    s[0] += car * cbr - cai * cbi
                    s[1] += car * cbi + cai * cbr
        den = den_a * den_b * _extra_den
        mask = (1 << bits) - 1
        out: Dict[TermKey, GaussianRational] = {}
        for p, (re, im) in acc.items():
            if re or im:
                exps = []
                for _ in range(nslots):
                    exps.append(p & mask)
                    p >>= bits
                exps.reverse()
                out[(tuple(exps[:a1n]), tuple(exps[a1n:]))] = _gr_fast(
                    RAT(re, den), RAT(im, den)
                )
        return self._new(out)

    def pow_trunc(self, e: int, trunc: Optional[int]):
        if e < 0:
            raise ValueError("negative power")
        out = type(self).one(self.N)
        base = self
        while e:
            if e & 1:
                out = out.mul_trunc(base, trunc)
            e >>= 1
            if e:
                base = base.mul_trunc(base, trunc)
        return out

    def truncate(self, max_degree: int):
        """Drop every term of (weighted) degree > max_degree."""
        return self._new(
            {k: c for k, c in self.terms.items() if self._term_degree(k) <= max_degree}
        )

    def degree_part(self, d: int):
        """Terms of (weighted) degree exactly d."""
        return self._new(
            {k: c for k, c in self.terms.items() if self._term_degree(k) == d}
        )

    # -- equality ------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.N == other.N and self.terms == other.terms

    def __hash__(self):
        return hash((type(self).__name__, self.N, frozenset(self.terms.items())))

    def __bool__(self) -> bool:
        return bool(self.terms)

    # -- constructors shared by subclasses ----------------------------------
    @classmethod
    def zero(cls, N: int):
        return cls(N)

    @classmethod
    def one(cls, N: int):
        p = cls(N)
        a1, a2 = p._arities()
        p.terms[((0,) * a1, (0,) * a2)] = GR_ONE
        return p

    @classmethod
    def monomial(cls, N: int, k1: Sequence[int], k2: Sequence[int], coeff=GR_ONE):
        p = cls(N)
        c = _coerce(coeff)
        a1, a2 = p._arities()
        k1, k2 = tuple(k1), tuple(k2)
        if len(k1) != a1 or len(k2) != a2:
            raise ValueError("multi-index arity mismatch")
        if not c.is_zero():
            p.terms[(k1, k2)] = c
        return p

    def coefficient_abs_sum(self) -> float:
        """Sum of coefficient moduli (float); used for fast upper bounds."""
        return sum(math.sqrt(float(c.abs2())) for c in self.terms.values())

    def __repr__(self) -> str:
        if not self.terms:
            return f"{type(self).__name__}(N={self.N}, 0)"
        parts = [f"{c!r}*{k}" for k, c in self.sorted_terms()[:6]]
        more = "" if len(self.terms) <= 6 else f" ... ({len(self.terms)} terms)"
        return f"{type(self).__name__}(N={self.N}, {' + '.join(parts)}{more})"


# ---------------------------------------------------------------------------
# BiPolynomial: variables z (2N) and zbar (2N)
# ---------------------------------------------------------------------------

class BiPolynomial(_SparsePoly):
    """Polynomial in z_{aj} and zbar_{aj}, a in {1,2}, j in 1..N."""

    __slots__ = ()
    _W2 = 1

    def _arities(self) -> Tuple[int, int]:
        return (2 * self.N, 2 * self.N)

    # -- structure ----------------------------------------------------------
    def conjugate(self) -> "BiPolynomial":
        """Swap z and zbar exponents and conjugate coefficients."""
        return self._new({(j, i): c.conj() for (i, j), c in self.terms.items()})

    def bidegree_part(self, m: int, n: int) -> "BiPolynomial":
        return self._new(
            {
                (i, j): c
                for (i, j), c in self.terms.items()
                if mi_degree(i) == m and mi_degree(j) == n
            }
        )

    def bidegrees(self) -> List[Tuple[int, int]]:
        """Sorted list of bidegrees carrying at least one term."""
        return sorted({(mi_degree(i), mi_degree(j)) for (i, j) in self.terms})

    def is_bihomogeneous(self) -> bool:
        return len(self.bidegrees()) <= 1

    def substitute(
        self,
        zvals: Sequence["BiPolynomial"],
        zbarvals: Optional[Sequence["BiPolynomial"]] = None,
        trunc: Optional[int] = None,
        _cache: Optional[Dict] = None,
    ) -> "BiPolynomial":
        """Compose: replace z-slot i by zvals[i] and zbar-slot i by zbarvals[i].

        zbarvals defaults to the conjugates of zvals.  Total degree is
        truncated at `trunc` when given.  `_cache` memoizes truncated
        monomial images across calls sharing the same substitution targets;
        it is keyed by (z-exponents, zbar-exponents, trunc).
        """
        arity = 2 * self.N
        if len(zvals) != arity:
            raise ValueError("need 2N substitution values for the z block")
        if zbarvals is None:
            zbarvals = [v.conjugate() for v in zvals]
        if len(zbarvals) != arity:
            raise ValueError("need 2N substitution values for the zbar block")
        cache = _cache if _cache is not None else {}
        zero_mi = (0,) * arity

        def mono_image(ze, be, t) -> "BiPolynomial":
            key = (ze, be, t)
            hit = cache.get(key)
            if hit is not None:
                return hit
            if ze == zero_mi and be == zero_mi:
                val = BiPolynomial.one(self.N)
            else:
                # peel one variable off the first nonzero slot so partial
                # products are shared across monomials
                slot = next((i for i, e in enumerate(ze) if e), None)
                if slot is not None:
                    sub = list(ze)
                    sub[slot] -= 1
                    val = mono_image(tuple(sub), be, t).mul_trunc(zvals[slot], t)
                else:
                    slot = next(i for i, e in enumerate(be) if e)
                    sub = list(be)
                    sub[slot] -= 1
                    val = mono_image(ze, tuple(sub), t).mul_trunc(zbarvals[slot], t)
            cache[key] = val
            return val

        out = BiPolynomial.zero(self.N)
        for (ze, be), c in self.terms.items():
            if trunc is not None and mi_degree(ze) + mi_degree(be) > trunc:
                continue
            img = mono_image(ze, be, trunc)
            if not img.is_zero():
                out = out + img.scale(c)
        return out

    def substitute_shifted(
        self,
        svals: Sequence["BiPolynomial"],
        trunc: int,
        sbarvals: Optional[Sequence["BiPolynomial"]] = None,
        _spow_cache: Optional[Dict] = None,
        _deriv_cache: Optional[Dict] = None,
    ) -> "BiPolynomial":
        """Compose with z -> z + s and zbar -> zbar + sbar, truncating.

        Every nonzero shift must have order >= 2.  Computed as the Taylor
        expansion around the identity substitution,

            sum over (A, B) of  d^(A,B) self / (A! B!) * s^A * sbar^B,

        which beats monomial-by-monomial substitution when the shifts have
        high order q: a summand has order >= order(self) + (q-1)*(|A|+|B|),
        so |A| + |B| is capped at (trunc - order(self)) / (q - 1) and only a
        few derivative products survive.  `_spow_cache` memoizes shift-power
        products s^A*sbar^B (reusable while the shifts are unchanged);
        `_deriv_cache` memoizes derivatives of self.
        """
        arity = 2 * self.N
        if len(svals) != arity:
            raise ValueError("need 2N shift values for the z block")
        if sbarvals is None:
            sbarvals = [s.conjugate() for s in svals]
        if len(sbarvals) != arity:
            raise ValueError("need 2N shift values for the zbar block")
        if not self.terms:
            return self._new({})
        q = math.inf
        for s in tuple(svals) + tuple(sbarvals):
            o = s.order()
            if o < q:
                q = o
        base = self.truncate(trunc)
        if q == math.inf:
            return base
        if q < 2:
            raise ValueError("shift composition needs shifts of order >= 2")
        kmax = (trunc - int(self.order())) // (int(q) - 1)
        # pointwise derivative caps: beyond the largest exponent in a slot
        # (or for a zero shift) the summand vanishes
        caps = [0] * (2 * arity)
        for (ze, be) in self.terms:
            for i, e in enumerate(ze):
                if e > caps[i]:
                    caps[i] = e
            for i, e in enumerate(be):
                if e > caps[arity + i]:
                    caps[arity + i] = e
        for i in range(arity):
            if svals[i].is_zero():
                caps[i] = 0
            if sbarvals[i].is_zero():
                caps[arity + i] = 0
        spow = _spow_cache if _spow_cache is not None else {}
        deriv = _deriv_cache if _deriv_cache is not None else {}
        zero_AB = ((0,) * arity, (0,) * arity)
        deriv.setdefault(zero_AB, self)
        spow.setdefault(zero_AB, BiPolynomial.one(self.N))

        def spower(A, B) -> "BiPolynomial":
            key = (A, B)
            hit = spow.get(key)
            if hit is not None:
                return hit
            slot = next((i for i, e in enumerate(A) if e), None)
            if slot is not None:
                sub = list(A)
                sub[slot] -= 1
                prev = spower(tuple(sub), B)
                val = prev.mul_trunc(svals[slot], trunc) if prev.terms else prev
            else:
                slot = next(i for i, e in enumerate(B) if e)
                sub = list(B)
                sub[slot] -= 1
                prev = spower(A, tuple(sub))
                val = prev.mul_trunc(sbarvals[slot], trunc) if prev.terms else prev
            spow[key] = val
            return val

        def derivative(A, B) -> "BiPolynomial":
            key = (A, B)
            hit = deriv.get(key)
            if hit is not None:
                return hit
            slot = next((i for i, e in enumerate(A) if e), None)
            if slot is not None:
                sub = list(A)
                sub[slot] -= 1
                val = derivative(tuple(sub), B)._diff_slot(0, slot)
            else:
                slot = next(i for i, e in enumerate(B) if e)
                sub = list(B)
                sub[slot] -= 1
                val = derivative(A, tuple(sub))._diff_slot(1, slot)
            deriv[key] = val
            return val

        acc: Dict[TermKey, GaussianRational] = dict(base.terms)

        def emit(AB: List[int]) -> None:
            A, B = tuple(AB[:arity]), tuple(AB[arity:])
            dp = derivative(A, B)
            if not dp.terms:
                return
            sp = spower(A, B)
            if not sp.terms:
                return
            fac = 1
            for e in AB:
                fac *= math.factorial(e)
            term = dp.mul_trunc(sp, trunc, _extra_den=fac)
            for k, c in term.terms.items():
                s = acc.get(k)
                s = c if s is None else s + c
                if s.is_zero():
                    acc.pop(k, None)
                else:
                    acc[k] = s

        nslots = 2 * arity
        cur = [0] * nslots

        def rec(i: int, rem: int, nonzero: bool) -> None:
            if i == nslots:
                if nonzero:
                    emit(cur)
                return
            top = min(caps[i], rem)
            for e in range(top + 1):
                cur[i] = e
                rec(i + 1, rem - e, nonzero or e > 0)
            cur[i] = 0

        rec(0, kmax, False)
        return self._new(acc)

    def differentiate(self, I: Sequence[int], J: Sequence[int]) -> "BiPolynomial":
        """Apply the operator d^I/dz^I d^J/dzbar^J."""
        I, J = tuple(I), tuple(J)
        out: Dict[TermKey, GaussianRational] = {}
        for (a, b), c in self.terms.items():
            mult = 1
            ok = True
            for e, d in zip(a, I):
                if e < d:
                    ok = False
                    break
                mult *= math.perm(e, d)
            if not ok:
                continue
            for e, d in zip(b, J):
                if e < d:
                    ok = False
                    break
                mult *= math.perm(e, d)
            if not ok:
                continue
            k = (tuple(e - d for e, d in zip(a, I)), tuple(e - d for e, d in zip(b, J)))
            s = out.get(k, GR_ZERO) + c * mult
            if s.is_zero():
                out.pop(k, None)
            else:
                out[k] = s
        return self._new(out)

    # -- evaluation -----------------------------------------------------------
    def evaluate_exact(self, zvals: Sequence[GaussianRational]) -> GaussianRational:
        """Evaluate at exact points with zbar = conj(z)."""
        zv = [_coerce(v) for v in zvals]
        if len(zv) != 2 * self.N:
            raise ValueError("need 2N z-values")
        zc = [v.conj() for v in zv]
        total = GR_ZERO
        for (a, b), c in self.terms.items():
            term = c
            for v, e in zip(zv, a):
                for _ in range(e):
                    term = term * v
            for v, e in zip(zc, b):
                for _ in range(e):
                    term = term * v
            total = total + term
        return total

    def evaluate_numeric(self, zvals, zbarvals) -> complex:
        """Evaluate with independent complex slots for z and zbar."""
        total = 0j
        for (a, b), c in self.terms.items():
            term = c.to_complex()
            for v, e in zip(zvals, a):
                if e:
                    term *= v ** e
            for v, e in zip(zbarvals, b):
                if e:
                    term *= v ** e
            total += term
        return total

    def eval_grid(self, zpts, zbarpts):
        """Vectorized evaluation: zpts/zbarpts are (S, 2N) complex arrays."""
        import numpy as np

        S = zpts.shape[0]
        total = np.zeros(S, dtype=complex)
        for (a, b), c in self.terms.items():
            term = np.full(S, c.to_complex())
            for col, e in enumerate(a):
                if e:
                    term = term * zpts[:, col] ** e
            for col, e in enumerate(b):
                if e:
                    term = term * zbarpts[:, col] ** e
            total += term
        return total

    # -- variable constructors -------------------------------------------------
    @classmethod
    def z(cls, N: int, a: int, j: int) -> "BiPolynomial":
        """The variable z_{aj} (1-based indices a in {1,2}, j in 1..N)."""
        e = [0] * (2 * N)
        e[(a - 1) * N + (j - 1)] = 1
        return cls.monomial(N, tuple(e), (0,) * (2 * N))

    @classmethod
    def zbar(cls, N: int, a: int, j: int) -> "BiPolynomial":
        e = [0] * (2 * N)
        e[(a - 1) * N + (j - 1)] = 1
        return cls.monomial(N, (0,) * (2 * N), tuple(e))


# ---------------------------------------------------------------------------
# TransformPolynomial: variables z (2N) and w (4); weighted degree m + 2n
# ---------------------------------------------------------------------------

class TransformPolynomial(_SparsePoly):
    """Polynomial in z_{aj} and w_{alpha,beta}; w carries degree weight 2."""

    __slots__ = ()
    _W2 = 2

    def _arities(self) -> Tuple[int, int]:
        return (2 * self.N, 4)

    def weighted_order(self) -> float:
        return self.order()

    def substitute_w(
        self,
        phi: "MatrixPoly",
        trunc: int,
        _cache: Optional[Dict] = None,
    ) -> BiPolynomial:
        """Replace each w_{alpha,beta} by phi entry (alpha,beta), truncating.

        `phi` must be a 2x2 MatrixPoly of BiPolynomial sharing this N.  Every
        monomial of total (z, zbar) degree > trunc is discarded.  `_cache`
        (optional) memoizes truncated w-monomial images across calls that
        share the same phi; it is keyed by (w-exponents, trunc).
        """
        if phi.rows != 2 or phi.cols != 2:
            raise ValueError("phi must be 2x2")
        out = BiPolynomial.zero(self.N)
        if trunc < 0:
            return out
        entries = [phi.entries[0][0], phi.entries[0][1], phi.entries[1][0], phi.entries[1][1]]
        cache = _cache if _cache is not None else {}

        def w_image(wexp: Tuple[int, int, int, int], t: int) -> BiPolynomial:
            key = (wexp, t)
            hit = cache.get(key)
            if hit is not None:
                return hit
            if not any(wexp):
                val = BiPolynomial.one(self.N)
            else:
                # peel one factor off the first nonzero slot so partial
                # products are shared across w-monomials
                slot = next(i for i, e in enumerate(wexp) if e)
                sub = list(wexp)
                sub[slot] -= 1
                val = w_image(tuple(sub), t).mul_trunc(entries[slot], t)
            cache[key] = val
            return val

        _add = _op_add
        acc: Dict[TermKey, GaussianRational] = {}
        for (zexp, wexp), c in self.terms.items():
            zdeg = mi_degree(zexp)
            if zdeg > trunc:
                continue
            img = w_image(tuple(wexp), trunc)
            if img.is_zero():
                continue
            budget = trunc - zdeg
            for (ze, be), ic in img.terms.items():
                if mi_degree(ze) + mi_degree(be) > budget:
                    continue
                key = (tuple(map(_add, ze, zexp)), be)
                v = c * ic
                s = acc.get(key)
                s = v if s is None else s + v
                if s.is_zero():
                    acc.pop(key, None)
                else:
                    acc[key] = s
        out.terms = acc
        return out

    def differentiate_var(self, block: str, slot: int) -> "TransformPolynomial":
        """First partial derivative w.r.t. z-slot or w-slot `slot`."""
        out: Dict[TermKey, GaussianRational] = {}
        for (a, b), c in self.terms.items():
            src = a if block == "z" else b
            e = src[slot]
            if not e:
                continue
            lst = list(src)
            lst[slot] = e - 1
            k = (tuple(lst), b) if block == "z" else (a, tuple(lst))
            s = out.get(k, GR_ZERO) + c * e
            if s.is_zero():
                out.pop(k, None)
            else:
                out[k] = s
        return self._new(out)

    def evaluate_numeric(self, zvals, wvals) -> complex:
        total = 0j
        for (a, b), c in self.terms.items():
            term = c.to_complex()
            for v, e in zip(zvals, a):
                if e:
                    term *= v ** e
            for v, e in zip(wvals, b):
                if e:
                    term *= v ** e
            total += term
        return total

    def eval_grid(self, zpts, wpts):
        """Vectorized evaluation: zpts (S, 2N) and wpts (S, 4) complex arrays."""
        import numpy as np

        S = zpts.shape[0]
        total = np.zeros(S, dtype=complex)
        for (a, b), c in self.terms.items():
            term = np.full(S, c.to_complex())
            for col, e in enumerate(a):
                if e:
                    term = term * zpts[:, col] ** e
            for col, e in enumerate(b):
                if e:
                    term = term * wpts[:, col] ** e
            total += term
        return total

    @classmethod
    def z(cls, N: int, a: int, j: int) -> "TransformPolynomial":
        e = [0] * (2 * N)
        e[(a - 1) * N + (j - 1)] = 1
        return cls.monomial(N, tuple(e), (0, 0, 0, 0))

    @classmethod
    def w(cls, N: int, alpha: int, beta: int) -> "TransformPolynomial":
        e = [0, 0, 0, 0]
        e[(alpha - 1) * 2 + (beta - 1)] = 1
        return cls.monomial(N, (0,) * (2 * N), tuple(e))


# ---------------------------------------------------------------------------
# MatrixPoly
# ---------------------------------------------------------------------------

class MatrixPoly:
    """A rows x cols grid of polynomials sharing N (all same subclass)."""

    __slots__ = ("rows", "cols", "N", "entries")

    def __init__(self, entries: Sequence[Sequence[_SparsePoly]]):
        self.entries = [list(row) for row in entries]
        self.rows = len(self.entries)
        if self.rows == 0 or any(len(r) != len(self.entries[0]) for r in self.entries):
            raise ValueError("entries must be a non-empty rectangular grid")
        self.cols = len(self.entries[0])
        self.N = self.entries[0][0].N
        for row in self.entries:
            for p in row:
                if p.N != self.N:
                    raise ValueError("all entries must share N")

    @classmethod
    def zeros(cls, rows: int, cols: int, N: int, poly_cls=BiPolynomial) -> "MatrixPoly":
        return cls([[poly_cls.zero(N) for _ in range(cols)] for _ in range(rows)])

    def __getitem__(self, idx: Tuple[int, int]) -> _SparsePoly:
        return self.entries[idx[0]][idx[1]]

    def map(self, fn) -> "MatrixPoly":
        return MatrixPoly([[fn(p) for p in row] for row in self.entries])

    def __add__(self, other: "MatrixPoly") -> "MatrixPoly":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch")
        return MatrixPoly(
            [
                [self.entries[i][j] + other.entries[i][j] for j in range(self.cols)]
                for i in range(self.rows)
            ]
        )

    def __sub__(self, other: "MatrixPoly") -> "MatrixPoly":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch")
        return MatrixPoly(
            [
                [self.entries[i][j] - other.entries[i][j] for j in range(self.cols)]
                for i in range(self.rows)
            ]
        )

    def __neg__(self) -> "MatrixPoly":
        return self.map(lambda p: -p)

    def matmul_trunc(self, other: "MatrixPoly", trunc: Optional[int]) -> "MatrixPoly":
        if self.cols != other.rows:
            raise ValueError("shape mismatch for product")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = type(self.entries[0][0]).zero(self.N)
                for k in range(self.cols):
                    acc = acc + self.entries[i][k].mul_trunc(other.entries[k][j], trunc)
                row.append(acc)
            out.append(row)
        return MatrixPoly(out)

    def __matmul__(self, other: "MatrixPoly") -> "MatrixPoly":
        return self.matmul_trunc(other, None)

    def conj_transpose(self) -> "MatrixPoly":
        return MatrixPoly(
            [
                [self.entries[j][i].conjugate() for j in range(self.rows)]
                for i in range(self.cols)
            ]
        )

    def transpose(self) -> "MatrixPoly":
        return MatrixPoly(
            [[self.entries[j][i] for j in range(self.rows)] for i in range(self.cols)]
        )

    def is_zero(self) -> bool:
        return all(p.is_zero() for row in self.entries for p in row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatrixPoly):
            return NotImplemented
        return (
            (self.rows, self.cols) == (other.rows, other.cols)
            and self.entries == other.entries
        )

    def __repr__(self) -> str:
        return f"MatrixPoly({self.rows}x{self.cols}, N={self.N})"


def z_matrix(N: int, poly_cls=TransformPolynomial) -> MatrixPoly:
    """The 2xN coordinate matrix Z as polynomials."""
    return MatrixPoly([[poly_cls.z(N, a, j) for j in range(1, N + 1)] for a in (1, 2)])


# ---------------------------------------------------------------------------
# Module-level operation surface
# ---------------------------------------------------------------------------

def poly_add(a: _SparsePoly, b: _SparsePoly) -> _SparsePoly:
    return a + b

def poly_mul(a: _SparsePoly, b: _SparsePoly) -> _SparsePoly:
    return a * b

def conjugate(p: BiPolynomial) -> BiPolynomial:
    return p.conjugate()

def bidegree_part(p: BiPolynomial, m: int, n: int) -> BiPolynomial:
    if m < 0 or n < 0:
        raise ValueError("bidegree components must be non-negative")
    return p.bidegree_part(m, n)

def substitute_w(f: TransformPolynomial, phi: MatrixPoly, trunc: int) -> BiPolynomial:
    return f.substitute_w(phi, trunc)

def weighted_order(f: TransformPolynomial) -> float:
    return f.weighted_order()


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

def poly_to_json(p: _SparsePoly) -> dict:
    block = "zzbar" if isinstance(p, BiPolynomial) else "zw"
    return {
        "N": p.N,
        "block": block,
        "terms": [
            {
                "zi": list(k1),
                "zj_or_w": list(k2),
                "re": rat_str(c.re),
                "im": rat_str(c.im),
            }
            for (k1, k2), c in p.sorted_terms()
        ],
    }


def poly_from_json(d: dict) -> _SparsePoly:
    try:
        N = int(d["N"])
        block = d["block"]
        raw_terms = d["terms"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed polynomial object: {exc}") from exc
    if block == "zzbar":
        cls = BiPolynomial
    elif block == "zw":
        cls = TransformPolynomial
    else:
        raise ValueError(f"unknown variable block {block!r}")
    p = cls(N)
    a1, a2 = p._arities()
    for t in raw_terms:
        k1 = tuple(int(e) for e in t["zi"])
        k2 = tuple(int(e) for e in t["zj_or_w"])
        if len(k1) != a1 or len(k2) != a2 or any(e < 0 for e in k1 + k2):
            raise ValueError(f"bad multi-index in term {t!r}")
        c = GaussianRational.from_strings(t["re"], t["im"])
        if c.is_zero():
            continue
        prev = p.terms.get((k1, k2), GR_ZERO) + c
        if prev.is_zero():
            p.terms.pop((k1, k2), None)
        else:
            p.terms[(k1, k2)] = prev
    return p
