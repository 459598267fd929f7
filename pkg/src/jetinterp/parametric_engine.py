"""Parameter-dependent realization over a sampled polydisc of parameters.

Families of jets are sampled on a :class:`ParamGrid`; every realized family
shares one letter structure, the same basis fields repeated once per
segment of a uniform t-grid, so only the times depend on the parameter.
Those times are then fitted by polynomials in ``w``.

The staged induction runs on top of that.  Stage ``k`` walks from the
current jets ``A_k`` back along a homotopy ``h_k`` to the identity.  The
walked homotopy and ``h_k`` are then merged by :func:`homotopy_surgery`
into the next, uniformly small ``h_{k+1}``.  Every budget condition is
measured and recorded in the :class:`StageResult` it belongs to.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.interpolate

from .errors import BudgetViolated, NumericOverflow, PreconditionViolated, SampleFailed, UnderdeterminedFit
from .flow_atlas import FlowWord, SpanningBasis, flow_eval, push_coeffs
from .jet_core import IndexSet, JetTuple, index_set
from .realizer import gauss_newton, prepare_basis, word_jets

T_GRID = 33
SEGMENT_TOL = 1e-12
HOLDOUT_EVERY = 5
THETA_STEP = 1e-5
INDUCTION_DEGREE = 14
RESIDUAL_FLOOR = 1e-10
ANALYTIC_TOL = 1e-12


# ---------------------------------------------------------------------------
# parameter grids and sampled families


@dataclass(frozen=True, eq=False)
class ParamGrid:
    """Closed polydisc in C^m together with a finite sample set."""

    center: np.ndarray
    radii: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=complex))
        r = np.atleast_1d(np.asarray(self.radii, dtype=float))
        w = np.asarray(self.samples, dtype=complex).reshape(-1, c.shape[0])
        if np.any(r <= 0):
            raise ValueError("radii must be positive")
        if np.any(np.abs(w - c) > r * (1 + 1e-12)):
            raise ValueError("samples must lie in the polydisc")
        if not np.any(np.all(np.abs(w - c) <= 1e-14 * r, axis=1)):
            raise ValueError("the center must be one of the samples")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "samples", w)

    @classmethod
    def polydisc(cls, center=0.0, radii=1.0, rings: int = 3, angles: int = 8, random: int = 0,
                 seed: int = 0) -> "ParamGrid":
        """Tensor grid of the center plus ``rings`` circles of ``angles`` points per coordinate."""
        c = np.atleast_1d(np.asarray(center, dtype=complex))
        r = np.broadcast_to(np.asarray(radii, dtype=float), c.shape)
        unit = [0.0] + [(j / rings) * np.exp(2j * np.pi * a / angles)
                        for j in range(1, rings + 1) for a in range(angles)]
        pts = [c + r * np.array(p) for p in itertools.product(unit, repeat=c.shape[0])]
        if random:
            rng = np.random.default_rng(seed)
            rad = np.sqrt(rng.uniform(size=(random, c.shape[0])))
            ang = rng.uniform(0, 2 * np.pi, size=(random, c.shape[0]))
            pts.extend(c + r * rad * np.exp(1j * ang))
        return cls(c, r, np.array(pts))

    @property
    def m(self) -> int:
        return self.center.shape[0]

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def scaled(self, w) -> np.ndarray:
        return (np.asarray(w, dtype=complex) - self.center) / self.radii

    def level(self) -> np.ndarray:
        """Sup-norm of each sample in scaled coordinates (0 at the center, 1 on the boundary)."""
        return np.abs(self.scaled(self.samples)).max(axis=1)

    def within(self, fraction: float) -> np.ndarray:
        return self.level() <= fraction * (1 + 1e-12)


@dataclass(eq=False)
class ParamJetFamily:
    """Jet tuples at fixed base points, one per grid sample."""

    grid: ParamGrid
    base_points: np.ndarray
    coeffs: np.ndarray
    analytic: Callable | None = None

    def __post_init__(self):
        self.base_points = np.asarray(self.base_points, dtype=complex)
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        S, N, n, L = self.coeffs.shape
        if S != self.grid.size or (N, n) != self.base_points.shape:
            raise ValueError("coefficient array does not match grid and base points")
        if self.analytic is not None:
            ref = np.stack([np.asarray(self.analytic(w), dtype=complex) for w in self.grid.samples])
            if np.abs(ref - self.coeffs).max() > ANALYTIC_TOL:
                raise ValueError("sampled jets disagree with the analytic description")

    @classmethod
    def from_function(cls, grid: ParamGrid, base_points, fn: Callable) -> "ParamJetFamily":
        coeffs = np.stack([np.asarray(fn(w), dtype=complex) for w in grid.samples])
        return cls(grid, base_points, coeffs, fn)

    @classmethod
    def identity(cls, grid: ParamGrid, base_points, k: int) -> "ParamJetFamily":
        ident = JetTuple.identity(base_points, k).coeffs
        return cls(grid, base_points, np.broadcast_to(ident, (grid.size,) + ident.shape).copy())

    @property
    def N(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n(self) -> int:
        return self.coeffs.shape[2]

    @property
    def k(self) -> int:
        return next(k for k in range(64) if math.comb(self.n + k, k) == self.coeffs.shape[3])

    @property
    def idx(self) -> IndexSet:
        return index_set(self.n, self.k)

    def jets(self, i: int, check: bool = True) -> JetTuple:
        return JetTuple.from_coeffs(self.base_points, self.coeffs[i], check=check)

    def invalid_samples(self) -> list[int]:
        return [i for i in range(self.grid.size) if not self.jets(i, check=False).is_valid()]


def diag_family(grid: ParamGrid, a: float = 0.25) -> ParamJetFamily:
    """Linear 1-jets ``diag(1 + a w, 1 / (1 + a w))`` at the origin of C^2."""
    if grid.m != 1:
        raise ValueError("the diagonal family has a single parameter")

    def fn(w):
        lam = 1.0 + a * complex(np.asarray(w).reshape(-1)[0])
        return np.array([[[0.0, lam, 0.0], [0.0, 0.0, 1.0 / lam]]], dtype=complex)

    return ParamJetFamily.from_function(grid, np.zeros((1, 2)), fn)


@dataclass(eq=False)
class JetHomotopy:
    """Sampled homotopy ``(sample, t) -> JetTuple`` on a uniform t-grid."""

    base_points: np.ndarray
    coeffs: np.ndarray  # (S, G, N, n, L)

    def __post_init__(self):
        self.base_points = np.asarray(self.base_points, dtype=complex)
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 5 or self.coeffs.shape[1] < 2:
            raise ValueError("homotopy coefficients must be (S, G, N, n, L) with G >= 2")

    @classmethod
    def linear(cls, family: ParamJetFamily, G: int = T_GRID) -> "JetHomotopy":
        """Coefficient-linear homotopy from the identity tuple to ``family``."""
        ident = JetTuple.identity(family.base_points, family.k).coeffs
        t = np.linspace(0.0, 1.0, G)[None, :, None, None, None]
        return cls(family.base_points, (1 - t) * ident + t * family.coeffs[:, None])

    @property
    def G(self) -> int:
        return self.coeffs.shape[1]

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.G)

    def at(self, i: int, g: int, check: bool = True) -> JetTuple:
        return JetTuple.from_coeffs(self.base_points, self.coeffs[i, g], check=check)


# ---------------------------------------------------------------------------
# realized families and time fits


def _fit_exponents(m: int, d: int) -> list[tuple[int, ...]]:
    exps = [e for e in itertools.product(range(d + 1), repeat=m) if sum(e) <= d]
    return sorted(exps, key=lambda e: (sum(e), tuple(-x for x in e)))


def _vandermonde(u: np.ndarray, exps) -> np.ndarray:
    return np.stack([np.prod(u ** np.array(e), axis=-1) for e in exps], axis=-1)


@dataclass(frozen=True, eq=False)
class TimeFit:
    """Polynomial fit of letter times in the scaled parameter ``(w - c) / r``."""

    degree: int
    exponents: tuple
    coeffs: np.ndarray  # (n_monomials, T)
    residual: float
    train: tuple
    holdout: tuple

    def evaluate(self, grid: ParamGrid, w) -> np.ndarray:
        u = grid.scaled(np.atleast_2d(w))
        return _vandermonde(u, self.exponents) @ self.coeffs


@dataclass(eq=False)
class ParamFlowFamily:
    """Per-sample words sharing one letter structure.

    ``times[i]`` holds the times of sample ``i``; the letters are ``fields``
    repeated ``segments`` times.  The word carries ``anchor[i]`` to
    ``target[i]``.  Samples outside ``realized`` carry zero times.
    """

    grid: ParamGrid
    fields: tuple
    segments: int
    times: np.ndarray
    realized: np.ndarray
    base_points: np.ndarray
    anchor: np.ndarray
    target: np.ndarray
    residuals: np.ndarray
    fit: TimeFit | None = None

    @property
    def letters_per_segment(self) -> int:
        return len(self.fields)

    @property
    def letters(self) -> tuple:
        return self.fields * self.segments

    @property
    def idx(self) -> IndexSet:
        n = self.base_points.shape[1]
        L = self.anchor.shape[-1]
        return index_set(n, next(k for k in range(64) if math.comb(n + k, k) == L))

    def sample_times(self, i: int, fitted: bool = False) -> np.ndarray:
        if fitted:
            if self.fit is None:
                raise ValueError("family has no fitted times")
            return self.fit.evaluate(self.grid, self.grid.samples[i])[0]
        return self.times[i]

    def times_at(self, w) -> np.ndarray:
        if self.fit is None:
            raise ValueError("family has no fitted times")
        return self.fit.evaluate(self.grid, w)[0]

    def word(self, i: int, upto: int | None = None, fitted: bool = False) -> FlowWord:
        """Word of sample ``i``; with ``upto`` only the first ``upto`` segments act."""
        t = self.sample_times(i, fitted).copy()
        if upto is not None:
            t[upto * self.letters_per_segment:] = 0.0
        return FlowWord.from_fields(self.letters, t)

    def word_at(self, w, upto: int | None = None) -> FlowWord:
        t = self.times_at(w).copy()
        if upto is not None:
            t[upto * self.letters_per_segment:] = 0.0
        return FlowWord.from_fields(self.letters, t)

    def recompose(self, i: int, fitted: bool = False) -> np.ndarray:
        return push_coeffs(self.letters, self.sample_times(i, fitted), self.anchor[i], self.idx)


def _neighbour_order(grid: ParamGrid, members: np.ndarray) -> list[tuple[int, int | None]]:
    """Process samples outward from the center, each warm-started from its nearest done neighbour."""
    idx = np.flatnonzero(members)
    order = idx[np.lexsort((idx, grid.level()[idx]))]
    done: list[int] = []
    out = []
    for i in order:
        nb = None
        if done:
            d = np.abs(grid.samples[done] - grid.samples[i]).max(axis=1)
            nb = done[int(np.argmin(d))]
        out.append((int(i), nb))
        done.append(int(i))
    return out


def _chain(fields, idx: IndexSet, base_points, anchors, waypoints, grid: ParamGrid, members,
           tol: float = SEGMENT_TOL, max_iter: int = 20):
    """Walk every member sample from its anchor through its waypoints, one segment per waypoint.

    Returns ``(times, failures)`` with ``times`` of shape (S, P*M).
    """
    M = len(fields)
    S, P = waypoints.shape[:2]
    times = np.zeros((S, P * M), dtype=complex)
    failures: dict[int, str] = {}
    for i, nb in _neighbour_order(grid, members):
        current = anchors[i]
        for p in range(P):
            target = waypoints[i, p]
            if not JetTuple.from_coeffs(base_points, target, check=False).is_valid():
                failures[i] = f"waypoint {p} is degenerate"
                break
            sl = slice(p * M, (p + 1) * M)
            starts = [times[nb, sl]] if nb is not None and nb not in failures else []
            starts.append(None)
            out = None
            for t0 in starts:
                try:
                    out = gauss_newton(fields, current, target, idx, tol, max_iter=max_iter, t0=t0)
                except NumericOverflow:
                    out = None
                if out is not None and out.converged:
                    break
            if out is None or not out.converged:
                failures[i] = f"segment {p} did not converge"
                break
            times[i, sl] = out.times
            current = push_coeffs(fields, out.times, current, idx)
    return times, failures


def param_realize(family: ParamJetFamily, basis: SpanningBasis, tol: float = 1e-8,
                  path: JetHomotopy | None = None) -> ParamFlowFamily:
    """Realize every sample of ``family`` by words sharing one letter structure.

    The letters are the basis fields once per segment of the t-grid of
    ``path``.  Each segment is a local Newton solve, warm-started from the
    neighbouring sample so the times vary smoothly with the parameter.
    """
    path = JetHomotopy.linear(family) if path is None else path
    ident = basis.anchor.coeffs
    if np.abs(path.coeffs[:, 0] - ident).max() > 1e-12:
        raise ValueError("path must start at the basis anchor")
    bad = {i: "target is degenerate" for i in family.invalid_samples()}
    members = np.ones(family.grid.size, dtype=bool)
    members[list(bad)] = False
    anchors = np.broadcast_to(ident, family.coeffs.shape)
    times, failures = _chain(basis.fields, family.idx, family.base_points, anchors, path.coeffs[:, 1:],
                             family.grid, members)
    failures.update(bad)
    if failures:
        raise SampleFailed(sorted(failures), failures)
    out = ParamFlowFamily(family.grid, tuple(basis.fields), path.G - 1, times, members, family.base_points,
                          np.array(anchors), family.coeffs, np.zeros(family.grid.size))
    anchor_tuple = basis.anchor
    for i in range(family.grid.size):
        got = word_jets(out.word(i), anchor_tuple)
        out.residuals[i] = float(np.abs(got.coeffs - family.coeffs[i]).max())
    worst = np.flatnonzero(out.residuals > tol)
    if worst.size:
        raise SampleFailed(worst.tolist(), {int(i): f"certified residual {out.residuals[i]:.2e}" for i in worst})
    return out


def max_fit_degree(m: int, n_train: int) -> int:
    d = 0
    while math.comb(m + d + 1, d + 1) <= n_train:
        d += 1
    return d


def fit_times(family: ParamFlowFamily, degree: int) -> ParamFlowFamily:
    """Least-squares polynomial fit of every letter time in the scaled parameter.

    Every fifth realized sample is held out; the reported residual is the
    largest coefficient error of the recomposed jets on the held-out samples
    (on the training samples when none are held out).
    """
    grid = family.grid
    realized = np.flatnonzero(family.realized)
    holdout = tuple(int(i) for i in realized if i % HOLDOUT_EVERY == HOLDOUT_EVERY - 1)
    train = tuple(int(i) for i in realized if i % HOLDOUT_EVERY != HOLDOUT_EVERY - 1)
    exps = _fit_exponents(grid.m, degree)
    if len(train) < len(exps):
        raise UnderdeterminedFit(f"degree {degree} needs {len(exps)} samples, have {len(train)}")
    V = _vandermonde(grid.scaled(grid.samples[list(train)]), exps)
    coeffs, *_ = np.linalg.lstsq(V, family.times[list(train)], rcond=None)
    fit = TimeFit(degree, tuple(exps), coeffs, math.nan, train, holdout)
    out = ParamFlowFamily(family.grid, family.fields, family.segments, family.times, family.realized,
                          family.base_points, family.anchor, family.target, family.residuals, fit)
    check = holdout or train
    res = 0.0
    for i in check:
        try:
            got = out.recompose(i, fitted=True)
            res = max(res, float(np.abs(got - family.target[i]).max()))
        except NumericOverflow:
            res = math.inf
    out.fit = TimeFit(degree, tuple(exps), coeffs, res, train, holdout)
    return out


# ---------------------------------------------------------------------------
# the time-dependent generator


@dataclass(frozen=True, eq=False)
class WordHomotopy:
    """Words ``s -> ψ^{s,w}`` with a fixed letter structure and times ``times_fn(s, w)``."""

    fields: tuple
    times_fn: Callable

    def word(self, s: float, w=None) -> FlowWord:
        return FlowWord.from_fields(self.fields, self.times_fn(s, w))

    @classmethod
    def autonomous(cls, field) -> "WordHomotopy":
        return cls((field,), lambda s, w: np.array([s], dtype=complex))

    @classmethod
    def from_samples(cls, fields, ts, times) -> "WordHomotopy":
        """Cubic-spline interpolation in ``s`` of times sampled at ``ts`` (shape (G, T))."""
        spline = scipy.interpolate.CubicSpline(np.asarray(ts, dtype=float), np.asarray(times, dtype=complex), axis=0)
        return cls(tuple(fields), lambda s, w: spline(s))


def theta_generator(psi: WordHomotopy, t: float, w, z, h: float = THETA_STEP):
    """``d/ds|_{s=t} ψ^{1-s}((ψ^{1-t})^{-1}(z))`` by central differences.

    ``z`` is either an array of points (..., n) or a list of components
    (numbers or series), so the generator can be lifted to jet space.
    """
    as_array = not isinstance(z, (list, tuple))
    if as_array:
        z = np.asarray(z, dtype=complex)
        comps = [z[..., m] for m in range(z.shape[-1])]
    else:
        comps = list(z)
    y = psi.word(1 - t, w).inverse().apply(comps)
    fwd = psi.word(1 - (t + h), w).apply(y)
    bwd = psi.word(1 - (t - h), w).apply(y)
    out = [(a - b) / (2 * h) for a, b in zip(fwd, bwd)]
    if as_array:
        return np.stack(np.broadcast_arrays(*out), axis=-1)
    return out


def theta_field(psi: WordHomotopy, t: float, w=None, h: float = THETA_STEP) -> Callable:
    """Θ^{t,w} as a callable on components, suitable for :func:`lift_at`."""
    return lambda comps: theta_generator(psi, t, w, list(comps), h)


# ---------------------------------------------------------------------------
# homotopy surgery


def homotopy_surgery(h: JetHomotopy, F: JetHomotopy, alpha: float, inner=None) -> JetHomotopy:
    """Replace the loop "out along ``h``, back along ``F``" by a homotopy that stays near the identity.

    ``F[:, g]`` is the point of the return trip matched with ``h[:, g]``, so
    ``F[:, -1]`` is the turning point ``h[:, -1]`` and ``F[:, 0]`` is where the
    loop ends.  In the affine coefficient chart

        H[g] = id + F[G-1-g] - h[G-1-g],

    which starts at the identity, ends at ``F[:, 0]`` and satisfies
    ``d(H, id) = d(F, h) < α/2`` wherever the retrace is α/2-close.
    ``inner`` masks the samples on which closeness is required.
    """
    if h.coeffs.shape != F.coeffs.shape:
        raise ValueError("h and F must be sampled on the same grid")
    S, G = h.coeffs.shape[:2]
    inner = np.ones(S, dtype=bool) if inner is None else np.asarray(inner, dtype=bool)
    ident = JetTuple.identity(h.base_points, _k_of(h)).coeffs
    if np.abs(h.coeffs[:, 0] - ident).max() > 1e-10:
        raise PreconditionViolated("h must start at the identity tuple", gap=None)
    turn = np.abs(F.coeffs[:, -1] - h.coeffs[:, -1]).reshape(S, -1).max(axis=1)
    if turn[inner].size and turn[inner].max() > 1e-10:
        raise PreconditionViolated(f"retrace does not start at the turning point (gap {turn[inner].max():.2e})",
                                   gap=float(turn[inner].max()), offending=np.flatnonzero(inner & (turn > 1e-10)).tolist())
    gaps = np.abs(F.coeffs - h.coeffs).reshape(S, -1).max(axis=1)
    bad = np.flatnonzero(inner & (gaps >= alpha / 2))
    if bad.size:
        gap = float(gaps[inner].max())
        raise PreconditionViolated(f"retrace gap {gap:.3e} is not below alpha/2 = {alpha / 2:.3e}",
                                   gap=gap, offending=bad.tolist())
    H = ident[None, None] + F.coeffs[:, ::-1] - h.coeffs[:, ::-1]
    return JetHomotopy(h.base_points, H)


def _k_of(h: JetHomotopy) -> int:
    n, L = h.coeffs.shape[3], h.coeffs.shape[4]
    return next(k for k in range(64) if math.comb(n + k, k) == L)


# ---------------------------------------------------------------------------
# staged induction


@dataclass(frozen=True)
class StageSchedule:
    """Nested parameter compacts, space compacts and per-stage budgets.

    ``L`` are radii of sub-polydiscs of the grid as fractions of its radii;
    ``K`` are radii of polydiscs about the origin of C^n; ``eps[j]`` is the
    budget of stage ``j``.  A run has ``len(L)`` stages and needs
    ``len(K) == len(eps) == len(L) + 1``.
    """

    L: tuple
    K: tuple
    eps: tuple

    def __post_init__(self):
        L, K, eps = tuple(map(float, self.L)), tuple(map(float, self.K)), tuple(map(float, self.eps))
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "eps", eps)
        if not L or len(K) != len(L) + 1 or len(eps) != len(L) + 1:
            raise ValueError("need len(K) == len(eps) == len(L) + 1 >= 2")
        if any(b <= a for a, b in zip(L, L[1:])) or L[0] <= 0 or L[-1] > 1:
            raise ValueError("parameter compacts must be strictly nested inside the grid")
        if any(b <= a for a, b in zip(K, K[1:])) or K[0] <= 0:
            raise ValueError("space compacts must be strictly nested")
        if any(e <= 0 for e in eps):
            raise ValueError("budgets must be positive")
        for j in range(1, len(K)):
            if not eps[j] < K[j] - K[j - 1]:
                raise ValueError(f"budget eps[{j}] = {eps[j]} is not below the gap {K[j] - K[j - 1]} between K[{j - 1}] and K[{j}]")

    @classmethod
    def geometric(cls, L=(0.5, 0.8, 1.0), K=(1.0, 1.5, 2.0, 2.5)) -> "StageSchedule":
        return cls(tuple(L), tuple(K), tuple(2.0 ** (-j - 2) for j in range(len(L) + 1)))

    @property
    def stages(self) -> int:
        return len(self.L)

    def alpha(self, k: int, delta: float) -> float:
        return min(self.eps[k], delta) / 2


@dataclass
class Condition:
    measured: float
    budget: float

    @property
    def ok(self) -> bool:
        return self.measured < self.budget


@dataclass
class StageResult:
    k: int
    family: ParamFlowFamily
    deviation: np.ndarray  # per sample sup |φ_k^t(z) - z|, nan where not required
    jet_residual: float  # max over L_{k+1} of d([φ_k^1 ∘ A_k], id)
    endpoint_residual: np.ndarray  # per sample d([F_k ∘ γ^1], id)
    budget: float
    alpha: float
    delta: float
    envelope: float  # radius of the polydisc C_k
    conditions: dict = field(default_factory=dict)
    members: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions.values())


@dataclass
class InductionRun:
    results: list
    final: ParamFlowFamily
    schedule: StageSchedule
    gamma1: ParamJetFamily
    cloud: np.ndarray


def unit_cloud(n: int, size: int, seed: int) -> np.ndarray:
    """Seeded points of the closed unit polydisc in C^n, corners included."""
    rng = np.random.default_rng(seed)
    pts = np.sqrt(rng.uniform(size=(size, n))) * np.exp(2j * np.pi * rng.uniform(size=(size, n)))
    corners = np.array(list(itertools.product([1, -1, 1j, -1j], repeat=n)), dtype=complex)
    return np.concatenate([pts, corners])


def _sup_dev(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max()) if a.size else 0.0


def _stage_maps(results, i: int, upto: int | None, stages: range) -> FlowWord:
    word = FlowWord()
    for j in stages:
        word = word + results[j].family.word(i, upto=upto, fitted=True)
    return word


def run_induction(gamma1: ParamJetFamily, schedule: StageSchedule, homotopy: JetHomotopy | None = None,
                  basis: SpanningBasis | None = None, degree: int = INDUCTION_DEGREE, seed: int = 0, cloud_size: int = 48,
                  strict: bool = True) -> InductionRun:
    """Staged composition with measured budget conditions.

    Stage k works on the samples of ``L[k]``.  It walks each sample from
    ``A_k`` back along ``h_k``, fits the times and records four measured
    conditions:

    (a) ``φ_k^0`` is the identity on the space cloud;
    (b) the walked homotopy stays within ``α_k`` of ``h_k``;
    (c) the radius of the envelope ``C_k``;
    (d) for k >= 1, ``φ_k^t`` moves ``K_k`` and the images of the earlier
        stages by less than ``ε_k``.

    The walked homotopy and ``h_k`` are merged into ``h_{k+1}`` by
    :func:`homotopy_surgery`.
    """
    grid, idx, bp = gamma1.grid, gamma1.idx, gamma1.base_points
    homotopy = JetHomotopy.linear(gamma1) if homotopy is None else homotopy
    ident = JetTuple.identity(bp, gamma1.k).coeffs
    if np.abs(homotopy.coeffs[:, -1] - gamma1.coeffs).max() > 1e-12:
        raise ValueError("homotopy must end at the family")
    if basis is None:
        basis = prepare_basis(JetTuple.identity(bp, gamma1.k), seed=seed)
    delta = basis.delta_chart if basis.delta_chart is not None else 1.0
    fields = tuple(basis.fields)
    G = homotopy.G
    level = grid.level()
    ring = np.array([next((j + 1 for j, r in enumerate(schedule.L) if lv <= r * (1 + 1e-12)), 0) for lv in level])
    cloud = unit_cloud(gamma1.n, cloud_size, seed)

    A = gamma1.coeffs.copy()
    h = homotopy.coeffs.copy()
    results: list[StageResult] = []
    for k in range(schedule.stages):
        members = grid.within(schedule.L[k])
        eps_k = schedule.eps[k]
        alpha_k = schedule.alpha(k, delta)
        waypoints = h[:, ::-1][:, 1:]
        times, failures = _chain(fields, idx, bp, A, waypoints, grid, members)
        if failures:
            raise SampleFailed(sorted(failures), failures)
        fam = ParamFlowFamily(grid, fields, G - 1, times, members, bp, A.copy(), h[:, 0].copy(),
                              np.zeros(grid.size))
        train = sum(1 for i in np.flatnonzero(members) if i % HOLDOUT_EVERY != HOLDOUT_EVERY - 1)
        fam = fit_times(fam, min(degree, max_fit_degree(grid.m, train)))

        # walked homotopy ret[g] = [φ_k^{1-t_g} ∘ A_k] with fitted times, on every sample
        ret = np.empty_like(h)
        M = len(fields)
        for i in range(grid.size):
            t = fam.sample_times(i, fitted=True)
            cur = A[i]
            ret[i, G - 1] = cur
            for q in range(1, G):
                cur = push_coeffs(fields, t[(q - 1) * M:q * M], cur, idx)
                ret[i, G - 1 - q] = cur
        A_next = ret[:, 0]
        fam.residuals = np.abs(A_next - h[:, 0]).reshape(grid.size, -1).max(axis=1)

        conds: dict[str, Condition] = {}
        K_k = schedule.K[k] * cloud
        a_dev = 0.0
        for i in np.flatnonzero(members):
            a_dev = max(a_dev, _sup_dev(flow_eval(fam.word(i, upto=0, fitted=True), K_k), K_k))
        conds["a"] = Condition(a_dev, 1e-12)
        gap = np.abs(ret - h).reshape(grid.size, -1).max(axis=1)
        conds["b"] = Condition(float(gap[members].max()), alpha_k)

        deviation = np.full(grid.size, np.nan)
        envelope = float(np.abs(K_k).max())
        for i in np.flatnonzero(members & (ring <= max(k, 1)) & (ring >= 1)) if k >= 1 else []:
            j = ring[i]
            dev = 0.0
            for g in range(G):
                # images F_{k-1}^t (F_{j-1}^t)^{-1}(K_k) = φ_{k-1}^t ∘ ... ∘ φ_j^t (K_k)
                pts = K_k
                if j <= k - 1:
                    pts = np.concatenate([K_k, flow_eval(_stage_maps(results, i, g, range(j, k)), K_k)])
                moved = flow_eval(fam.word(i, upto=g, fitted=True), pts)
                dev = max(dev, _sup_dev(moved, pts))
                envelope = max(envelope, float(np.abs(moved).max()))
            deviation[i] = dev
        envelope += eps_k / 2
        if k >= 1:
            checked = deviation[~np.isnan(deviation)]
            conds["c"] = Condition(envelope, math.inf)
            conds["d"] = Condition(float(checked.max()) if checked.size else 0.0, eps_k)
        else:
            conds["c"] = Condition(envelope, math.inf)

        endpoint = np.abs(A_next - ident).reshape(grid.size, -1).max(axis=1)
        result = StageResult(k, fam, deviation, float(endpoint[members].max()), endpoint, eps_k, alpha_k,
                             delta, envelope, conds, members)
        results.append(result)
        if strict:
            for name, c in conds.items():
                if not c.ok:
                    raise BudgetViolated(k, name, c.measured, c.budget)

        inner = members
        h = homotopy_surgery(JetHomotopy(bp, h), JetHomotopy(bp, ret), 2 * alpha_k, inner=inner).coeffs
        A = A_next

    final = _compose_families(results, gamma1)
    return InductionRun(results, final, schedule, gamma1, cloud)


def _compose_families(results, gamma1: ParamJetFamily) -> ParamFlowFamily:
    """``φ_last^1 ∘ ... ∘ φ_0^1`` per sample as one family with fitted times."""
    first = results[0].family
    grid = first.grid
    letters = tuple(l for r in results for l in r.family.letters)
    times = np.concatenate([np.stack([r.family.sample_times(i, fitted=True) for i in range(grid.size)])
                            for r in results], axis=1)
    members = results[-1].members.copy()
    ident = JetTuple.identity(gamma1.base_points, gamma1.k).coeffs
    target = np.broadcast_to(ident, gamma1.coeffs.shape).copy()
    return ParamFlowFamily(grid, letters, 1, times, members, gamma1.base_points, gamma1.coeffs.copy(), target,
                           results[-1].endpoint_residual.copy())


# ---------------------------------------------------------------------------
# convergence certification


@dataclass
class TailCheck:
    stage: int
    measured: float
    budget: float

    @property
    def margin(self) -> float:
        return self.budget - self.measured

    @property
    def ratio(self) -> float:
        return math.inf if self.measured == 0 else self.budget / self.measured


@dataclass
class ConvergenceReport:
    tails: list
    residuals: list
    monotone: bool
    failures: list

    @property
    def ok(self) -> bool:
        return self.monotone and not self.failures and all(t.margin >= 0 for t in self.tails)


def certify_convergence(results: Sequence[StageResult], K0: float, cloud: np.ndarray | None = None,
                        seed: int = 0) -> ConvergenceReport:
    """Check the Cauchy tail bound on ``K0`` and the per-stage budgets.

    With ``F_k = φ_k^1 ∘ ... ∘ φ_0^1`` the tail ``max_{m>k} sup |F_m - F_k|``
    over the cloud of radius ``K0`` and the samples of the first parameter
    compact must not exceed ``sum_{j>k} ε_j``.  The jet residuals of the
    composed maps must not increase from stage to stage (values below
    ``RESIDUAL_FLOOR`` count as equal), and every recorded
    deviation must respect its stage budget.
    """
    failures: list[str] = []
    if not results:
        return ConvergenceReport([], [], True, [])
    first = results[0]
    grid = first.family.grid
    n = first.family.base_points.shape[1]
    cloud = unit_cloud(n, 48, seed) if cloud is None else cloud
    pts0 = K0 * cloud
    samples = np.flatnonzero(first.members)
    images = []
    for i in samples:
        word = FlowWord()
        per = []
        for r in results:
            word = word + r.family.word(i, fitted=True)
            per.append(flow_eval(word, pts0))
        images.append(per)
    tails = []
    for k in range(len(results)):
        budget = float(sum(r.budget for r in results[k + 1:]))
        measured = 0.0
        for per in images:
            for m in range(k + 1, len(results)):
                measured = max(measured, _sup_dev(per[m], per[k]))
        tails.append(TailCheck(k, measured, budget))
        if measured > budget:
            failures.append(f"stage {k}: Cauchy tail {measured:.3e} exceeds budget {budget:.3e} on K0")
    residuals = [float(r.endpoint_residual[samples].max()) for r in results]
    monotone = all(b <= max(a, RESIDUAL_FLOOR) for a, b in zip(residuals, residuals[1:]))
    if not monotone:
        failures.append(f"jet residuals are not nonincreasing: {residuals}")
    for r in results:
        for i in np.flatnonzero(~np.isnan(r.deviation)):
            if r.deviation[i] > r.budget:
                w = grid.samples[i]
                failures.append(f"stage {r.k}, sample {i} (w={np.round(w, 6).tolist()}): deviation "
                                f"{r.deviation[i]:.3e} exceeds budget {r.budget:.3e}")
    return ConvergenceReport(tails, residuals, monotone, failures)


def stage_rows(results: Sequence[StageResult]) -> list[tuple]:
    """Report rows ``(stage, sample, residual, sup_deviation, budget, margin)``."""
    rows = []
    for r in results:
        for i in np.flatnonzero(r.members):
            dev = r.deviation[i]
            margin = r.budget - dev if not np.isnan(dev) else math.nan
            rows.append((r.k, int(i), float(r.family.residuals[i]), float(dev), r.budget, float(margin)))
    return rows
