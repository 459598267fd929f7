"""Truncated polynomial maps, k-jets and the jet manifold Y.

Every jet is stored as its canonical representative: the unique polynomial
map of degree at most ``k`` written in powers of ``z - base_point``.  The
coefficient vector of each component is indexed by all multi-indices of
degree ``<= k`` in graded lexicographic order (degree ascending, and inside
one degree the exponent tuples in descending lexicographic order, so that
``z1`` precedes ``z2`` and ``z1**2`` precedes ``z1*z2``).

The :class:`Series` type does the arithmetic.  It holds coefficient arrays
with arbitrary leading batch dimensions, so a whole batch of truncated
expansions can be pushed through a flow in one pass.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AnchorMismatch, DegenerateJet

DEGENERACY_RTOL = 1e-12
ANCHOR_TOL = 1e-8


def _exponents(n: int, d: int) -> list[tuple[int, ...]]:
    out = []
    for combo in itertools.combinations_with_replacement(range(n), d):
        e = [0] * n
        for m in combo:
            e[m] += 1
        out.append(tuple(e))
    return sorted(set(out), reverse=True)


class IndexSet:
    """Multi-indices of degree ``<= k`` in ``n`` variables, graded lex order."""

    def __init__(self, n: int, k: int):
        if n < 1 or k < 0:
            raise ValueError(f"invalid index set n={n}, k={k}")
        self.n = n
        self.k = k
        exps = []
        for d in range(k + 1):
            exps.extend(_exponents(n, d))
        self.exponents = np.array(exps, dtype=int).reshape(len(exps), n)
        self.degrees = self.exponents.sum(axis=1)
        self.size = len(exps)
        self.position = {e: i for i, e in enumerate(exps)}
        self.var_pos = [self.position[tuple(int(m == j) for m in range(n))] for j in range(n)] if k >= 1 else []
        L = self.size
        mul = np.zeros((L * L, L))
        for a in range(L):
            for b in range(L):
                if self.degrees[a] + self.degrees[b] <= k:
                    c = self.position[tuple(self.exponents[a] + self.exponents[b])]
                    mul[a * L + b, c] = 1.0
        self.mul_matrix = mul
        # factor each index as (parent, variable) with parent + e_var == index
        self.parent = [-1] * L
        self.parent_var = [-1] * L
        for i in range(1, L):
            e = self.exponents[i]
            m = int(np.flatnonzero(e)[0])
            p = e.copy()
            p[m] -= 1
            self.parent[i] = self.position[tuple(p)]
            self.parent_var[i] = m

    def __repr__(self):
        return f"IndexSet(n={self.n}, k={self.k})"


@functools.lru_cache(maxsize=None)
def index_set(n: int, k: int) -> IndexSet:
    return IndexSet(n, k)


def dim_Y(n: int, k: int, N: int) -> int:
    """Complex dimension of the manifold of N-tuples of nondegenerate k-jets on C^n."""
    if n < 1 or k < 0 or N < 1:
        raise ValueError("need n >= 1, k >= 0, N >= 1")
    return N * n * math.comb(n + k, k)


class Series:
    """Truncated power series in ``n`` variables with batched coefficients.

    ``c`` has shape ``(..., L)``.  Arithmetic with plain scalars or arrays
    broadcasts them against the batch shape ``c.shape[:-1]``.
    """

    __slots__ = ("c", "idx")
    __array_priority__ = 100

    def __init__(self, c, idx: IndexSet):
        self.c = np.asarray(c, dtype=complex)
        self.idx = idx

    @classmethod
    def constant(cls, value, idx: IndexSet) -> "Series":
        value = np.asarray(value, dtype=complex)
        c = np.zeros(value.shape + (idx.size,), dtype=complex)
        c[..., 0] = value
        return cls(c, idx)

    @property
    def const(self) -> np.ndarray:
        return self.c[..., 0]

    def _coerce(self, other):
        if isinstance(other, Series):
            return other.c
        return None

    def __add__(self, other):
        oc = self._coerce(other)
        if oc is not None:
            return Series(self.c + oc, self.idx)
        if np.ndim(other) == 0:
            c = self.c.copy()
            c[..., 0] += other
            return Series(c, self.idx)
        c = np.array(np.broadcast_to(self.c, np.broadcast_shapes(self.c.shape, np.shape(other) + (1,))), dtype=complex)
        c[..., 0] += other
        return Series(c, self.idx)

    __radd__ = __add__

    def __neg__(self):
        return Series(-self.c, self.idx)

    def __sub__(self, other):
        if isinstance(other, Series):
            return Series(self.c - other.c, self.idx)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        oc = self._coerce(other)
        if oc is None:
            if np.ndim(other) == 0:
                return Series(self.c * other, self.idx)
            return Series(self.c * np.asarray(other)[..., None], self.idx)
        L = self.idx.size
        a, b = (self.c, oc) if self.c.shape == oc.shape else np.broadcast_arrays(self.c, oc)
        outer = (a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (L * L,))
        return Series(outer @ self.idx.mul_matrix, self.idx)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Series):
            return self * other.reciprocal()
        return Series(self.c / np.asarray(other)[..., None], self.idx)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p: int):
        if not isinstance(p, (int, np.integer)) or p < 0:
            raise ValueError("only nonnegative integer powers")
        result = Series.constant(np.ones(self.c.shape[:-1]), self.idx)
        base = self
        while p:
            if p & 1:
                result = result * base
            p >>= 1
            if p:
                base = base * base
        return result

    def _nilpotent_split(self):
        c0 = self.c[..., 0]
        rest = self.c.copy()
        rest[..., 0] = 0.0
        return c0, Series(rest, self.idx)

    def exp(self) -> "Series":
        c0, rest = self._nilpotent_split()
        term = Series.constant(np.ones(c0.shape), self.idx)
        total = term
        for m in range(1, self.idx.k + 1):
            term = term * rest / m
            total = total + term
        return total * np.exp(c0)

    def reciprocal(self) -> "Series":
        c0, rest = self._nilpotent_split()
        x = rest / c0
        term = Series.constant(np.ones(c0.shape), self.idx)
        total = term
        for _ in range(self.idx.k):
            term = -(term * x)
            total = total + term
        return total / c0

    def __repr__(self):
        return f"Series(shape={self.c.shape}, {self.idx})"


def exp(x):
    """Exponential for scalars, arrays and :class:`Series` alike."""
    if isinstance(x, Series):
        return x.exp()
    return np.exp(x)


def variables(point, idx: IndexSet) -> list[Series]:
    """Coordinate series ``z_m = point_m + u_m`` expanded at ``point`` (shape (..., n))."""
    point = np.asarray(point, dtype=complex)
    comps = []
    for m in range(idx.n):
        c = np.zeros(point.shape[:-1] + (idx.size,), dtype=complex)
        c[..., 0] = point[..., m]
        if idx.k >= 1:
            c[..., idx.var_pos[m]] = 1.0
        comps.append(Series(c, idx))
    return comps


def monomials(h: Sequence, idx_out: IndexSet):
    """All products ``h^I`` for ``I`` in ``idx_out`` (h_m scalars/arrays or Series)."""
    one = h[0] * 0 + 1
    monos = [one]
    for i in range(1, idx_out.size):
        monos.append(monos[idx_out.parent[i]] * h[idx_out.parent_var[i]])
    return monos


def poly_eval(coeffs, idx: IndexSet, center, z: Sequence):
    """Evaluate ``sum_I coeffs[..., I] (z - center)^I`` per output component.

    ``coeffs`` has shape (n_out, L); ``z`` is a list of components (arrays or
    Series).  Returns a list of ``n_out`` components.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    h = [z[m] - center[m] for m in range(idx.n)]
    monos = monomials(h, idx)
    out = []
    for row in coeffs:
        acc = 0
        for i in np.flatnonzero(row):
            acc = monos[i] * row[i] + acc
        if isinstance(acc, int):
            acc = z[0] * 0
        out.append(acc)
    return out


def compose_coeffs(outer, outer_base, inner, idx: IndexSet):
    """Coefficients of ``outer(inner(u))`` truncated to order k.

    ``outer`` (..., n, L) is a polynomial in powers of ``y - outer_base``;
    ``inner`` (..., n, L) is a series in ``u``.  Exact for polynomial
    ``outer`` because truncation is a ring homomorphism.
    """
    outer = np.asarray(outer, dtype=complex)
    inner = np.asarray(inner, dtype=complex)
    outer_base = np.asarray(outer_base, dtype=complex)
    h = [Series(inner[..., m, :], idx) - outer_base[..., m] for m in range(idx.n)]
    monos = monomials(h, idx)
    stack = np.stack(np.broadcast_arrays(*[m.c for m in monos]), axis=-2)  # (..., L_I, L)
    return np.einsum("...ci,...il->...cl", outer, stack)


def _check_nondegenerate(A: np.ndarray) -> None:
    n = A.shape[0]
    norm = np.linalg.norm(A, 2)
    det = abs(np.linalg.det(A))
    if not np.isfinite(det) or norm == 0.0 or det < DEGENERACY_RTOL * norm**n:
        raise DegenerateJet(f"|det| = {det:.3e} below threshold for ||A|| = {norm:.3e}")


def is_nondegenerate(A: np.ndarray) -> bool:
    try:
        _check_nondegenerate(A)
    except DegenerateJet:
        return False
    return True


@dataclass(frozen=True, eq=False)
class TruncatedPolyMap:
    """n-tuple of degree <= k polynomials in powers of ``z - base_point``."""

    base_point: np.ndarray
    coeffs: np.ndarray
    order_k: int

    def __post_init__(self):
        bp = np.asarray(self.base_point, dtype=complex).reshape(-1)
        c = np.asarray(self.coeffs, dtype=complex)
        n = bp.shape[0]
        if c.shape != (n, math.comb(n + self.order_k, self.order_k)):
            raise ValueError(f"coefficient shape {c.shape} does not match n={n}, k={self.order_k}")
        bp.setflags(write=False)
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "base_point", bp)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim_n(self) -> int:
        return self.base_point.shape[0]

    @property
    def idx(self) -> IndexSet:
        return index_set(self.dim_n, self.order_k)

    @classmethod
    def identity(cls, base_point, k: int) -> "TruncatedPolyMap":
        bp = np.asarray(base_point, dtype=complex)
        idx = index_set(bp.shape[0], k)
        c = np.zeros((idx.n, idx.size), dtype=complex)
        c[:, 0] = bp
        for m in range(idx.n if k >= 1 else 0):
            c[m, idx.var_pos[m]] = 1.0
        return cls(bp, c, k)

    def evaluate(self, z):
        """Evaluate at points ``z`` of shape (..., n)."""
        z = np.asarray(z, dtype=complex)
        comps = poly_eval(self.coeffs, self.idx, self.base_point, [z[..., m] for m in range(self.dim_n)])
        return np.stack(np.broadcast_arrays(*comps), axis=-1)

    def apply(self, z: Sequence):
        return poly_eval(self.coeffs, self.idx, self.base_point, z)


@dataclass(frozen=True, eq=False)
class Jet:
    """A k-jet at ``rep.base_point`` stored by its canonical representative."""

    rep: TruncatedPolyMap

    @property
    def base_point(self) -> np.ndarray:
        return self.rep.base_point

    @property
    def k(self) -> int:
        return self.rep.order_k

    @property
    def n(self) -> int:
        return self.rep.dim_n

    @property
    def image(self) -> np.ndarray:
        return self.rep.coeffs[:, 0]

    @property
    def linear_part(self) -> np.ndarray | None:
        if self.k < 1:
            return None
        return self.rep.coeffs[:, self.rep.idx.var_pos]

    def is_nondegenerate(self) -> bool:
        return self.k == 0 or is_nondegenerate(self.linear_part)

    def check(self) -> "Jet":
        if self.k >= 1:
            _check_nondegenerate(self.linear_part)
        return self

    @classmethod
    def identity(cls, base_point, k: int) -> "Jet":
        return cls(TruncatedPolyMap.identity(base_point, k))


def _series_to_coeffs(out, idx: IndexSet, batch_shape=()) -> np.ndarray:
    rows = []
    for comp in out:
        if isinstance(comp, Series):
            rows.append(np.broadcast_to(comp.c, batch_shape + (idx.size,)))
        else:
            rows.append(Series.constant(np.broadcast_to(np.asarray(comp, dtype=complex), batch_shape), idx).c)
    return np.stack(rows, axis=-2)


def jet_of_map(F, p, k: int, check: bool = True) -> Jet:
    """k-jet of ``F`` at ``p``.

    ``F`` may be a :class:`TruncatedPolyMap`, a :class:`Jet` (re-expanded
    exactly as a polynomial), any object with an ``apply(components)``
    method, or a callable taking and returning a list of ``n`` components.
    The components passed in are :class:`Series`, so ``F`` gets
    differentiated exactly to order ``k`` as long as it is built from ring
    operations and :func:`exp`.
    """
    p = np.asarray(p, dtype=complex).reshape(-1)
    idx = index_set(p.shape[0], k)
    if isinstance(F, Jet):
        F = F.rep
    if isinstance(F, TruncatedPolyMap):
        if F.dim_n != idx.n:
            raise ValueError("dimension mismatch")
        wide = index_set(idx.n, max(k, F.order_k))
        outer = pad_coeffs(F.coeffs, F.idx, wide)
        ident = np.stack([v.c for v in variables(p, wide)])
        coeffs = truncate_coeffs(compose_coeffs(outer, F.base_point, ident, wide), wide, idx)
    else:
        fn = F.apply if hasattr(F, "apply") else F
        out = fn(variables(p, idx))
        coeffs = _series_to_coeffs(out, idx)
    jet = Jet(TruncatedPolyMap(p, coeffs, k))
    if check:
        jet.check()
    return jet


def pad_coeffs(coeffs, src: IndexSet, dst: IndexSet) -> np.ndarray:
    """Re-index coefficients from a lower-order index set into a higher one."""
    coeffs = np.asarray(coeffs, dtype=complex)
    out = np.zeros(coeffs.shape[:-1] + (dst.size,), dtype=complex)
    for i, e in enumerate(map(tuple, src.exponents)):
        out[..., dst.position[e]] = coeffs[..., i]
    return out


def truncate_coeffs(coeffs, src: IndexSet, dst: IndexSet) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    sel = [src.position[tuple(e)] for e in dst.exponents]
    return coeffs[..., sel]


def jet_compose(outer: Jet, inner: Jet) -> Jet:
    """Jet of ``outer ∘ inner`` anchored at ``inner.base_point``."""
    if outer.n != inner.n or outer.k != inner.k:
        raise ValueError("jets of different shape")
    gap = np.max(np.abs(outer.base_point - inner.image))
    if gap > ANCHOR_TOL * (1.0 + np.max(np.abs(inner.image))):
        raise AnchorMismatch(f"outer anchored {gap:.3e} away from inner image")
    idx = index_set(inner.n, inner.k)
    c = compose_coeffs(outer.rep.coeffs, outer.base_point, inner.rep.coeffs, idx)
    return Jet(TruncatedPolyMap(inner.base_point, c, inner.k))


def jet_inverse(gamma: Jet) -> Jet:
    """Jet of the local inverse, anchored at ``gamma.image``, by series reversion."""
    gamma.check()
    idx = index_set(gamma.n, gamma.k)
    p, q = gamma.base_point, gamma.image
    if gamma.k == 0:
        return Jet(TruncatedPolyMap(q, p[:, None], 0))
    A = gamma.linear_part
    Ainv = np.linalg.inv(A)
    higher = gamma.rep.coeffs.copy()
    higher[:, idx.degrees <= 1] = 0.0
    # G(v) = A^{-1} (v - h(G(v))), each sweep fixes one more order
    ident = np.zeros((idx.n, idx.size), dtype=complex)
    for m in range(idx.n):
        ident[m, idx.var_pos[m]] = 1.0
    G = Ainv @ ident
    zero = np.zeros(idx.n)
    for _ in range(gamma.k - 1):
        hG = compose_coeffs(higher, zero, G, idx)
        G = Ainv @ (ident - hG)
    G = G.copy()
    G[:, 0] = p
    return Jet(TruncatedPolyMap(q, G, gamma.k))


class JetTuple:
    """A point of Y: N jets anchored at distinct base points with distinct images."""

    def __init__(self, jets: Sequence[Jet], check: bool = True):
        jets = tuple(jets)
        if not jets:
            raise ValueError("empty jet tuple")
        n, k = jets[0].n, jets[0].k
        if any(j.n != n or j.k != k for j in jets):
            raise ValueError("jets of mixed shape")
        self.jets = jets
        self.n, self.k, self.N = n, k, len(jets)
        self.base_points = np.stack([j.base_point for j in jets])
        self.base_points.setflags(write=False)
        if check:
            self.validate()

    @classmethod
    def from_coeffs(cls, base_points, coeffs, check: bool = True) -> "JetTuple":
        base_points = np.asarray(base_points, dtype=complex)
        coeffs = np.asarray(coeffs, dtype=complex)
        n = base_points.shape[1]
        L = coeffs.shape[-1]
        k = next(k for k in range(64) if math.comb(n + k, k) == L)
        return cls([Jet(TruncatedPolyMap(b, c, k)) for b, c in zip(base_points, coeffs)], check=check)

    @classmethod
    def identity(cls, base_points, k: int) -> "JetTuple":
        return cls([Jet.identity(b, k) for b in np.asarray(base_points, dtype=complex)])

    @property
    def idx(self) -> IndexSet:
        return index_set(self.n, self.k)

    @property
    def images(self) -> np.ndarray:
        return np.stack([j.image for j in self.jets])

    @property
    def coeffs(self) -> np.ndarray:
        """Coefficient array of shape (N, n, L)."""
        return np.stack([j.rep.coeffs for j in self.jets])

    def vector(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def with_coeffs(self, coeffs, check: bool = True) -> "JetTuple":
        return JetTuple.from_coeffs(self.base_points, np.asarray(coeffs).reshape(self.coeffs.shape), check=check)

    def series(self) -> list[Series]:
        """Representatives as n Series components with batch shape (N,)."""
        c = self.coeffs
        return [Series(c[:, m, :], self.idx) for m in range(self.n)]

    @staticmethod
    def _min_separation(points: np.ndarray) -> float:
        if len(points) < 2:
            return math.inf
        d = np.abs(points[:, None, :] - points[None, :, :]).max(axis=-1)
        return float(d[np.triu_indices(len(points), 1)].min())

    def validate(self) -> "JetTuple":
        for j in self.jets:
            j.check()
        scale = 1.0 + float(np.abs(self.base_points).max())
        if self._min_separation(self.base_points) <= 1e-12 * scale:
            raise ValueError("base points are not pairwise distinct")
        if self._min_separation(self.images) <= 1e-12 * (1.0 + float(np.abs(self.images).max())):
            raise DegenerateJet("images collide (tuple lies in the diagonal)")
        return self

    def is_valid(self) -> bool:
        try:
            self.validate()
        except (DegenerateJet, ValueError):
            return False
        return True

    def __repr__(self):
        return f"JetTuple(N={self.N}, n={self.n}, k={self.k})"


@dataclass(frozen=True)
class JetMetricValue:
    value: float

    def __float__(self):
        return self.value

    def __lt__(self, other):
        return self.value < float(other)

    def __le__(self, other):
        return self.value <= float(other)


def _same_base(a: JetTuple, b: JetTuple) -> None:
    if a.base_points.shape != b.base_points.shape or a.k != b.k:
        raise AnchorMismatch("jet tuples of different shape")
    if not np.allclose(a.base_points, b.base_points, rtol=0, atol=1e-12):
        raise AnchorMismatch("jet tuples anchored at different base points")


def jet_distance(a: JetTuple, b: JetTuple) -> JetMetricValue:
    """Max over anchors of the sup distance between canonical coefficients."""
    _same_base(a, b)
    return JetMetricValue(float(np.abs(a.coeffs - b.coeffs).max()))


def coeff_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(np.asarray(a) - np.asarray(b)).max())


def tuple_compose(outer: JetTuple, inner: JetTuple) -> JetTuple:
    return JetTuple([jet_compose(o, i) for o, i in zip(outer.jets, inner.jets)], check=False)


def tuple_inverse(gamma: JetTuple) -> JetTuple:
    return JetTuple([jet_inverse(j) for j in gamma.jets], check=False)


def jets_of_map(F: Callable | object, base_points, k: int, check: bool = True) -> JetTuple:
    """Jets of one map at several base points, as a JetTuple."""
    return JetTuple([jet_of_map(F, p, k, check=check) for p in np.asarray(base_points, dtype=complex)], check=check)
