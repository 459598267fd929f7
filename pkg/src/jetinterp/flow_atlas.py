"""Complete vector fields on C^n, flow words, lifts to jet space, spanning bases.

Two families of complete fields are used.  Both act along a direction
``v`` and have a profile that is constant along ``v``:

* shear      ``z -> f(Λ(z-c)) v``,               flow ``z + t f v``
* overshear  ``z -> <μ, z-c> f(Λ(z-c)) v``,      flow ``z + (e^{t f} - 1) <μ, z-c> v``

Here ``Λ`` is a stack of covectors annihilating ``v`` and ``<μ, v> = 1``.
All pairings are bilinear (no conjugation).

A :class:`FlowWord` applies its letters in list order, so the word
``[(θ1, t1), ..., (θM, tM)]`` is the automorphism ``φ_θM^tM ∘ ... ∘ φ_θ1^t1``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
import numpy.polynomial.polynomial as P
import scipy.linalg

from .errors import InfeasibleDecomposition, NumericOverflow, RankDeficient
from .jet_core import (
    IndexSet,
    JetTuple,
    Series,
    _exponents,
    dim_Y,
    exp,
    index_set,
    monomials,
    poly_eval,
    variables,
)

ORTHO_TOL = 1e-12
RANK_RTOL = 1e-8
DECOMP_TOL = 1e-10


def _as_vec(x, n=None) -> np.ndarray:
    a = np.asarray(x, dtype=complex).reshape(-1)
    if n is not None and a.shape[0] != n:
        raise ValueError(f"expected a vector of length {n}")
    a = a.copy()
    a.setflags(write=False)
    return a


def _profile_tuple(profile) -> tuple:
    if isinstance(profile, dict):
        items = profile.items()
    else:
        items = profile
    out = []
    for e, c in items:
        e = (int(e),) if np.isscalar(e) else tuple(int(x) for x in e)
        out.append((e, complex(c)))
    return tuple(sorted(out, key=lambda ec: (sum(ec[0]), tuple(-x for x in ec[0]))))


class _ProfiledField:
    kind = ""

    def _init_common(self, v, lam, profile, center):
        v = _as_vec(v)
        n = v.shape[0]
        lam = np.asarray(lam, dtype=complex).reshape(-1, n).copy()
        lam.setflags(write=False)
        if np.any(np.abs(lam @ v) >= ORTHO_TOL * max(1.0, float(np.abs(lam).max()))):
            raise ValueError("covectors must annihilate the direction v")
        prof = _profile_tuple(profile)
        if any(len(e) != lam.shape[0] for e, _ in prof):
            raise ValueError("profile exponents must match the number of covectors")
        center = _as_vec(np.zeros(n) if center is None else center, n)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "profile", prof)
        object.__setattr__(self, "center", center)

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.profile), default=0)

    def _forms(self, z):
        h = [z[m] - self.center[m] for m in range(self.n)]
        forms = []
        for row in self.lam:
            acc = 0
            for m in np.flatnonzero(row):
                acc = h[m] * row[m] + acc
            if isinstance(acc, int):
                acc = h[0] * 0
            forms.append(acc)
        return forms, h

    def _profile_value(self, forms):
        if len(forms) == 1:
            coeffs = {e[0]: c for e, c in self.profile}
            dmax = max(coeffs, default=0)
            s = forms[0]
            acc = s * 0 + coeffs.get(dmax, 0.0)
            for d in range(dmax - 1, -1, -1):
                acc = acc * s + coeffs.get(d, 0.0)
            return acc
        powers = {}
        acc = forms[0] * 0
        for e, c in self.profile:
            term = c
            for r, p in enumerate(e):
                if p:
                    key = (r, p)
                    if key not in powers:
                        powers[key] = forms[r] ** p
                    term = powers[key] * term
            acc = acc + term
        return acc

    def scaled(self, factor):
        return self.replace(profile=tuple((e, c * factor) for e, c in self.profile))

    def _dict(self):
        return dict(v=self.v, lam=self.lam, profile=self.profile, center=self.center)


@dataclass(frozen=True, eq=False, init=False)
class ShearField(_ProfiledField):
    """``z -> f(Λ(z - c)) v`` with ``Λ v = 0``; exact flow ``z + t f v``."""

    v: np.ndarray
    lam: np.ndarray
    profile: tuple
    center: np.ndarray
    kind = "shear"

    def __init__(self, v, lam, profile, center=None):
        self._init_common(v, lam, profile, center)

    def vector(self, z):
        f = self._profile_value(self._forms(z)[0])
        return [f * self.v[m] if self.v[m] != 0 else z[m] * 0 for m in range(self.n)]

    def flow(self, z, t):
        step = self._profile_value(self._forms(z)[0]) * t
        return [z[m] + step * self.v[m] if self.v[m] != 0 else z[m] for m in range(self.n)]

    def replace(self, **kw):
        d = self._dict()
        d.update(kw)
        return ShearField(**d)


@dataclass(frozen=True, eq=False, init=False)
class OvershearField(_ProfiledField):
    """``z -> <μ, z - c> f(Λ(z - c)) v`` with ``Λ v = 0`` and ``<μ, v> = 1``."""

    v: np.ndarray
    lam: np.ndarray
    profile: tuple
    center: np.ndarray
    mu: np.ndarray
    kind = "overshear"

    def __init__(self, v, lam, profile, center=None, mu=None):
        self._init_common(v, lam, profile, center)
        mu = _as_vec(np.conj(self.v) if mu is None else mu, self.n)
        if abs(mu @ self.v - 1.0) > 1e-12:
            raise ValueError("overshear needs <mu, v> = 1")
        object.__setattr__(self, "mu", mu)

    @property
    def degree(self) -> int:
        return super().degree + 1

    def _linear(self, h):
        acc = 0
        for m in np.flatnonzero(self.mu):
            acc = h[m] * self.mu[m] + acc
        return acc

    def vector(self, z):
        forms, h = self._forms(z)
        g = self._linear(h) * self._profile_value(forms)
        return [g * self.v[m] if self.v[m] != 0 else z[m] * 0 for m in range(self.n)]

    def flow(self, z, t):
        forms, h = self._forms(z)
        growth = exp(self._profile_value(forms) * t) - 1.0
        g = growth * self._linear(h)
        return [z[m] + g * self.v[m] if self.v[m] != 0 else z[m] for m in range(self.n)]

    def replace(self, **kw):
        d = self._dict()
        d["mu"] = self.mu
        d.update(kw)
        return OvershearField(**d)


CompleteField = ShearField | OvershearField


class PolynomialField:
    """A polynomial vector field ``z -> sum_I c[:, I] (z - center)^I``."""

    def __init__(self, coeffs, idx: IndexSet, center=None):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.idx = idx
        self.center = np.zeros(idx.n, dtype=complex) if center is None else np.asarray(center, dtype=complex)
        if self.coeffs.shape != (idx.n, idx.size):
            raise ValueError("coefficient shape does not match index set")

    @classmethod
    def monomial(cls, I: Sequence[int], j: int, n: int, center=None) -> "PolynomialField":
        idx = index_set(n, sum(I))
        c = np.zeros((n, idx.size), dtype=complex)
        c[j, idx.position[tuple(I)]] = 1.0
        return cls(c, idx, center)

    def vector(self, z):
        return poly_eval(self.coeffs, self.idx, self.center, z)


def field_coefficients(fields, n: int, degree: int, center=None) -> np.ndarray:
    """Coefficients (n, L) of the sum of ``fields`` in powers of ``z - center``."""
    idx = index_set(n, degree)
    center = np.zeros(n) if center is None else np.asarray(center, dtype=complex)
    z = variables(center, idx)
    total = np.zeros((n, idx.size), dtype=complex)
    for f in fields:
        out = f.vector(z)
        for m in range(n):
            total[m] += out[m].c if isinstance(out[m], Series) else Series.constant(out[m], idx).c
    return total


@dataclass(frozen=True)
class FlowWord:
    letters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple((f, complex(t)) for f, t in self.letters))

    @classmethod
    def from_fields(cls, fields, times) -> "FlowWord":
        return cls(tuple(zip(fields, np.asarray(times, dtype=complex).reshape(-1))))

    @property
    def fields(self) -> tuple:
        return tuple(f for f, _ in self.letters)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for _, t in self.letters], dtype=complex)

    def __len__(self):
        return len(self.letters)

    def __add__(self, other: "FlowWord") -> "FlowWord":
        return FlowWord(self.letters + other.letters)

    def inverse(self) -> "FlowWord":
        return FlowWord(tuple((f, -t) for f, t in reversed(self.letters)))

    def with_times(self, times) -> "FlowWord":
        return FlowWord.from_fields(self.fields, times)

    def apply(self, z):
        for f, t in self.letters:
            if t != 0:
                z = f.flow(z, t)
        return z

    def __call__(self, z):
        return self.apply(z)

    def dropping_zeros(self) -> "FlowWord":
        return FlowWord(tuple((f, t) for f, t in self.letters if t != 0))


def flow_eval(word: FlowWord, z) -> np.ndarray:
    """Apply the word to points ``z`` of shape (..., n)."""
    # extended precision between letters, one rounding at the end
    z = np.asarray(z, dtype=np.clongdouble)
    with np.errstate(over="ignore", invalid="ignore"):
        comps = word.apply([z[..., m] for m in range(z.shape[-1])])
        out = np.stack(np.broadcast_arrays(*comps), axis=-1).astype(complex)
    if not np.all(np.isfinite(out)):
        raise NumericOverflow("flow word produced non-finite values")
    return out


def push_coeffs(fields, times, anchor_coeffs, idx: IndexSet) -> np.ndarray:
    """Jets of ``word(times) ∘ anchor``.

    ``anchor_coeffs`` has shape (N, n, L); ``times`` has shape (..., T) and
    the batch dimensions are carried through: the result is (..., N, n, L).
    """
    times = np.asarray(times, dtype=complex)
    anchor_coeffs = np.asarray(anchor_coeffs, dtype=complex)
    z = [Series(anchor_coeffs[:, m, :], idx) for m in range(idx.n)]
    batch = times.shape[:-1]
    with np.errstate(over="ignore", invalid="ignore"):
        for i, f in enumerate(fields):
            t = times[..., i]
            if not np.any(t):
                continue
            z = f.flow(z, t[..., None])
        out = np.stack([np.broadcast_to(s.c, batch + anchor_coeffs[:, 0, :].shape) for s in z], axis=-2)
    if not np.all(np.isfinite(out)):
        raise NumericOverflow("flow produced non-finite jet coefficients")
    return out


def lift_at(V, gamma: JetTuple) -> np.ndarray:
    """Tangent vector d/dt|0 [φ_V^t ∘ γ] as a flat coefficient vector.

    ``V`` is anything with a ``vector(components)`` method (complete
    fields, :class:`PolynomialField`) or a callable on components.
    """
    fn = V.vector if hasattr(V, "vector") else V
    out = fn(gamma.series())
    N, idx = gamma.N, gamma.idx
    rows = []
    for comp in out:
        if isinstance(comp, Series):
            rows.append(np.broadcast_to(comp.c, (N, idx.size)))
        else:
            rows.append(Series.constant(np.broadcast_to(comp, (N,)), idx).c)
    return np.stack(rows, axis=1).reshape(-1)


def lift_matrix(fields, gamma: JetTuple) -> np.ndarray:
    return np.stack([lift_at(f, gamma) for f in fields], axis=1)


# ---------------------------------------------------------------------------
# decomposition into complete fields


def _primitive(v: np.ndarray) -> np.ndarray:
    g = math.gcd(*[abs(int(x)) for x in v])
    v = v // g
    if v[np.flatnonzero(v)[0]] < 0:
        v = -v
    return v


def _integer_perp_basis(v: np.ndarray) -> list[np.ndarray]:
    n = len(v)
    p = int(np.flatnonzero(v)[0])
    basis = []
    for m in range(n):
        if m == p:
            continue
        b = np.zeros(n, dtype=int)
        b[p] = -v[m]
        b[m] = v[p]
        basis.append(_primitive(b) if b.any() else b)
    return basis


@functools.lru_cache(maxsize=None)
def direction_set(n: int, radius: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic (v, λ) pairs with integer entries bounded by ``radius``."""
    pairs = []
    seen_v = set()
    for raw in itertools.product(range(-radius, radius + 1), repeat=n):
        v = np.array(raw, dtype=int)
        if not v.any():
            continue
        v = _primitive(v)
        if tuple(v) in seen_v:
            continue
        seen_v.add(tuple(v))
        basis = _integer_perp_basis(v)
        seen_l = set()
        for w in itertools.product(range(-radius, radius + 1), repeat=len(basis)):
            if not any(w):
                continue
            lam = sum(wi * b for wi, b in zip(w, basis))
            if not lam.any():
                continue
            lam = _primitive(lam)
            if tuple(lam) in seen_l:
                continue
            seen_l.add(tuple(lam))
            pairs.append((v.astype(complex), lam.astype(complex)))
    return pairs


def _random_directions(n: int, count: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        lam = rng.normal(size=n) + 1j * rng.normal(size=n)
        lam = lam - (lam @ v) / (v @ v) * v
        out.append((v, lam))
    return out


def _homogeneous_power(lam: np.ndarray, d: int, exps: list[tuple[int, ...]]) -> np.ndarray:
    out = np.empty(len(exps), dtype=complex)
    for i, e in enumerate(exps):
        coef = math.factorial(d)
        for x in e:
            coef //= math.factorial(x)
        out[i] = coef * np.prod([lam[m] ** x for m, x in enumerate(e) if x])
    return out


def _candidate_columns(pairs, d: int, n: int):
    exps = _exponents(n, d)
    pos = {e: i for i, e in enumerate(exps)}
    shear_cols, over_cols = [], []
    for v, lam in pairs:
        vu = v / np.linalg.norm(v)
        mu = np.conj(vu)
        shear_cols.append(np.outer(vu, _homogeneous_power(lam, d, exps)).reshape(-1))
        if d >= 1:
            lower = _exponents(n, d - 1)
            low = _homogeneous_power(lam, d - 1, lower)
            p = np.zeros(len(exps), dtype=complex)
            for a, ea in enumerate(lower):
                for m in range(n):
                    e = list(ea)
                    e[m] += 1
                    p[pos[tuple(e)]] += low[a] * mu[m]
            over_cols.append(np.outer(vu, p).reshape(-1))
    return shear_cols, over_cols, exps


_PINV_CACHE: dict = {}


def _solve_degree(target: np.ndarray, key, pairs, d: int, n: int):
    cache_key = (key, d, n) if key[0] == "grid" else None
    if cache_key is not None and cache_key in _PINV_CACHE:
        A, pinv, ns = _PINV_CACHE[cache_key]
    else:
        shear_cols, over_cols, _ = _candidate_columns(pairs, d, n)
        A = np.stack(shear_cols + over_cols, axis=1)
        pinv, ns = np.linalg.pinv(A, rcond=1e-13), len(shear_cols)
        if cache_key is not None:
            _PINV_CACHE[cache_key] = (A, pinv, ns)
    x = pinv @ target
    err = float(np.abs(A @ x - target).max())
    return x[:ns], x[ns:], err


def decompose_field(field: PolynomialField, seed: int = 0, max_radius: int = 4) -> list:
    """Write a polynomial field as an exact finite sum of shears and overshears.

    Homogeneous parts are matched degree by degree against ``<λ,u>^d v``
    and ``<μ,u><λ,u>^{d-1} v`` over a deterministic direction set, which is
    enlarged (then padded with seeded random directions) until the linear
    system is solved to ``DECOMP_TOL``.
    """
    idx, n = field.idx, field.idx.n
    if n < 2:
        raise InfeasibleDecomposition("complete-field decomposition needs n >= 2")
    scale = max(1.0, float(np.abs(field.coeffs).max()))
    targets = {}
    for d in range(idx.k + 1):
        sel = np.flatnonzero(idx.degrees == d)
        part = field.coeffs[:, sel]
        if np.any(part):
            targets[d] = part.reshape(-1)
    if not targets:
        return []
    def attempts():
        for r in range(1, max_radius + 1):
            yield ("grid", r), direction_set(n, r)
        for a in range(3):
            yield ("random", a), direction_set(n, max_radius) + _random_directions(n, 8 * (a + 1), seed + a)

    for key, pairs in attempts():
        sols = {}
        ok = True
        for d, tgt in targets.items():
            xs, xo, err = _solve_degree(tgt, key, pairs, d, n)
            if err > DECOMP_TOL * scale:
                ok = False
                break
            sols[d] = (xs, xo)
        if ok:
            break
    else:
        raise InfeasibleDecomposition("direction set exhausted without an exact decomposition")
    fields = []
    cutoff = 1e-15 * scale
    for a, (v, lam) in enumerate(pairs):
        # keep the primitive direction so <λ,v> = 0 and <μ,v> = 1 hold exactly in floating point
        norm = np.linalg.norm(v)
        sprof = {(d,): xs[a] / norm for d, (xs, _) in sols.items() if abs(xs[a]) > cutoff}
        oprof = {(d - 1,): xo[a] for d, (_, xo) in sols.items() if d >= 1 and abs(xo[a]) > cutoff}
        if sprof:
            fields.append(ShearField(v, lam[None, :], sprof, field.center))
        if oprof:
            fields.append(OvershearField(v, lam[None, :], oprof, field.center, mu=np.conj(v) / np.vdot(v, v).real))
    return fields


def decompose_monomial_field(I: Sequence[int], j: int, n: int | None = None, center=None, seed: int = 0) -> list:
    """Complete fields summing exactly to ``(z - center)^I ∂/∂z_j``."""
    I = tuple(int(x) for x in I)
    n = len(I) if n is None else n
    if n < 2:
        raise InfeasibleDecomposition("complete-field decomposition needs n >= 2")
    e_j = np.zeros(n)
    e_j[j] = 1.0
    others = [m for m in range(n) if m != j]
    lam = np.eye(n)[others]
    rest = tuple(I[m] for m in others)
    if I[j] == 0:
        return [ShearField(e_j, lam, {rest: 1.0}, center)]
    if I[j] == 1:
        return [OvershearField(e_j, lam, {rest: 1.0}, center, mu=e_j)]
    return decompose_field(PolynomialField.monomial(I, j, n, center), seed=seed)


# ---------------------------------------------------------------------------
# spanning basis


@dataclass(frozen=True, eq=False)
class SpanningBasis:
    fields: tuple
    anchor: JetTuple
    chart_jacobian: np.ndarray
    delta_chart: float | None = None
    singular_values: np.ndarray = dc_field(default=None)

    @property
    def M(self) -> int:
        return len(self.fields)

    @property
    def rank(self) -> int:
        s = self.singular_values
        return int(np.sum(s >= RANK_RTOL * s[0]))

    def reanchor(self, gamma: JetTuple) -> "SpanningBasis":
        """Same fields, chart Jacobian recomputed at ``gamma``."""
        J = lift_matrix(self.fields, gamma)
        s = np.linalg.svd(J, compute_uv=False)
        if s[-1] < RANK_RTOL * s[0] or J.shape[1] < J.shape[0]:
            raise RankDeficient(f"lifted fields lose rank at the new anchor (σ_min/σ_max = {s[-1] / s[0]:.2e})")
        return SpanningBasis(self.fields, gamma, J, self.delta_chart, s)

    def with_delta(self, delta: float) -> "SpanningBasis":
        return SpanningBasis(self.fields, self.anchor, self.chart_jacobian, delta, self.singular_values)


SEPARATION_RTOL = 0.3


def _hermite_profile(d: int, gaps: Sequence[complex], k: int) -> tuple:
    """Coefficients in ``u`` of ``u^d * prod_l ((u + g_l) / g_l)^(k+1)``.

    With ``u = <λ, z - y_i>`` and ``g_l = <λ, y_i - y_l>`` the factor is 1 at
    ``y_i`` and vanishes to order k+1 wherever ``<λ, z> = <λ, y_l>``.
    """
    poly = np.zeros(d + 1, dtype=complex)
    poly[d] = 1.0
    for g in gaps:
        poly = P.polymul(poly, P.polypow(np.array([1.0, 1.0 / g]), k + 1))
    return tuple(((p,), c) for p, c in enumerate(poly) if c != 0)


def anchored_fields(anchor: JetTuple, pairs) -> list:
    """Single-form shears and overshears attached to each anchor.

    For every base point ``i`` and direction pair ``(v, λ)`` this yields the
    shears ``f(<λ, z - y_i>) v`` and overshears ``<μ, z - y_i> f(<λ, z - y_i>) v``
    whose profiles come from :func:`_hermite_profile`, so their k-jets vanish
    at every other image.  Directions are transported by the linear part
    ``A`` of the i-th jet (``v -> A v``, ``λ -> λ A^-1``), which makes the
    lifts at the anchor a unitriangular image of the lifts at the identity.
    Pairs whose covector barely separates ``y_i`` from another image are
    skipped.
    """
    n, k, N = anchor.n, anchor.k, anchor.N
    y = anchor.images
    out = []
    for i in range(N):
        A = anchor.jets[i].linear_part
        Ainv = None if A is None else np.linalg.inv(A)
        others = [l for l in range(N) if l != i]
        sep = min((np.linalg.norm(y[i] - y[l]) for l in others), default=1.0)
        for v0, lam0 in pairs:
            vu = v0 / np.linalg.norm(v0)
            v, lam, mu = vu, lam0, np.conj(vu)
            if A is not None:
                v, lam, mu = A @ vu, lam0 @ Ainv, np.conj(vu) @ Ainv
                cv = np.conj(v)
                lam = lam - (lam @ v) / (cv @ v) * cv
                mu = mu / (mu @ v)
            gaps = [complex(lam @ (y[i] - y[l])) for l in others]
            if any(abs(g) < SEPARATION_RTOL * np.linalg.norm(lam) * sep for g in gaps):
                continue
            for d in range(k + 1):
                out.append(ShearField(v, lam, _hermite_profile(d, gaps, k), y[i]))
            for d in range(1, k + 1):
                out.append(OvershearField(v, lam, _hermite_profile(d - 1, gaps, k), y[i], mu))
    return out


def _select_basis(candidates, anchor: JetTuple, target_rank: int):
    C = lift_matrix(candidates, anchor)
    norms = np.linalg.norm(C, axis=0)
    keep = np.flatnonzero(norms > 1e-14 * norms.max())
    Cn = C[:, keep] / norms[keep]
    _, _, piv = scipy.linalg.qr(Cn, pivoting=True, mode="economic")
    chosen = keep[np.sort(piv[:target_rank])]
    J = C[:, chosen] / norms[chosen]
    s = np.linalg.svd(J, compute_uv=False)
    ok = len(chosen) == target_rank and s[-1] >= RANK_RTOL * s[0]
    return chosen, norms, J, s, ok


def build_spanning_basis(anchor: JetTuple, n: int | None = None, k: int | None = None, N: int | None = None,
                         seed: int = 0, max_radius: int = 4) -> SpanningBasis:
    """Complete fields whose lifts at ``anchor`` form a basis of T_anchor Y.

    Candidates are :func:`anchored_fields` over the integer direction sets of
    growing radius, padded with seeded random directions as a last resort;
    a full-rank subset is picked by column-pivoted QR on the normalized
    lifted coordinates.
    """
    if (n, k, N) != (None, None, None) and (n, k, N) != (anchor.n, anchor.k, anchor.N):
        raise ValueError("(n, k, N) disagree with the anchor")
    anchor.validate()
    target_rank = dim_Y(anchor.n, anchor.k, anchor.N)
    attempts = [direction_set(anchor.n, r) for r in range(1, max_radius + 1)]
    attempts.append(direction_set(anchor.n, max_radius) + _random_directions(anchor.n, 4 * target_rank, seed))
    s = np.array([0.0, 1.0])
    for pairs in attempts:
        candidates = anchored_fields(anchor, pairs)
        if len(candidates) < target_rank:
            continue
        chosen, norms, J, s, ok = _select_basis(candidates, anchor, target_rank)
        if ok:
            fields = tuple(candidates[c].scaled(1.0 / norms[c]) for c in chosen)
            return SpanningBasis(fields, anchor, J, None, s)
    raise RankDeficient(f"spanning basis reached only σ_min/σ_max = {s[-1] / s[0]:.2e}")
