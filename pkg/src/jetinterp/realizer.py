"""Realize target jet tuples exactly by flow words.

The chart of a :class:`SpanningBasis` is ``t -> [φ_θM^tM ∘ ... ∘ φ_θ1^t1 ∘ anchor]``.
:func:`realize_local` inverts it by damped Gauss-Newton; :func:`realize_path`
chains local solves along a homotopy, re-anchoring the chart at every
accepted sample.  Every returned result is re-certified through an
independent jet computation before it is handed back.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateJet, NoConvergence, NumericOverflow, PathStuck, RankDeficient
from .flow_atlas import FlowWord, SpanningBasis, build_spanning_basis, flow_eval, push_coeffs
from .jet_core import (
    IndexSet,
    JetMetricValue,
    JetTuple,
    coeff_distance,
    jet_distance,
    jets_of_map,
    tuple_compose,
)

log = logging.getLogger(__name__)

FD_STEP = 1e-6
ARMIJO_C = 1e-4
MAX_HALVINGS = 30
MIN_PATH_STEP = 1e-6
PATH_SAMPLES = 33


@dataclass
class NewtonOutcome:
    times: np.ndarray
    residual: float
    iterations: int
    converged: bool


def fd_jacobian(fields, times, anchor_coeffs, idx: IndexSet, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of the chart map (holomorphic in each time)."""
    T = len(fields)
    steps = np.eye(T) * h
    batch = np.concatenate([times + steps, times - steps])
    out = push_coeffs(fields, batch, anchor_coeffs, idx).reshape(2 * T, -1)
    return ((out[:T] - out[T:]) / (2 * h)).T


def gauss_newton(fields, anchor_coeffs, target_coeffs, idx: IndexSet, tol: float, max_iter: int = 20,
                 t0=None, jac0=None) -> NewtonOutcome:
    """Damped Gauss-Newton with minimum-norm steps and Armijo backtracking."""
    T = len(fields)
    t = np.zeros(T, dtype=complex) if t0 is None else np.array(t0, dtype=complex)
    target = np.asarray(target_coeffs, dtype=complex).reshape(-1)

    def residual(times):
        return push_coeffs(fields, times, anchor_coeffs, idx).reshape(-1) - target

    r = residual(t)
    sup = float(np.abs(r).max())
    it = 0
    while sup > tol and it < max_iter:
        J = jac0 if (it == 0 and jac0 is not None and t0 is None) else fd_jacobian(fields, t, anchor_coeffs, idx)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        phi = float(np.vdot(r, r).real)
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            try:
                r_new = residual(t + alpha * step)
                phi_new = float(np.vdot(r_new, r_new).real)
            except NumericOverflow:
                phi_new = math.inf
            if phi_new <= (1.0 - 2.0 * ARMIJO_C * alpha) * phi:
                break
            alpha *= 0.5
        else:
            return NewtonOutcome(t, sup, it, False)
        t = t + alpha * step
        r = r_new
        sup = float(np.abs(r).max())
        it += 1
    return NewtonOutcome(t, sup, it, sup <= tol)


@dataclass
class RealizationProblem:
    target: JetTuple
    basis: SpanningBasis
    tol: float = 1e-8
    path: Sequence[JetTuple] | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        self.target.validate()


@dataclass
class RealizationResult:
    word: FlowWord
    residual: JetMetricValue
    newton_iterations: int
    path_steps: int
    meta: dict = field(default_factory=dict)


def word_jets(word: FlowWord, anchor: JetTuple) -> JetTuple:
    """Jets of ``word ∘ anchor`` at the anchor's base points (unbatched route)."""
    outer = jets_of_map(word, anchor.images, anchor.k, check=False)
    return tuple_compose(outer, anchor)


def certify(word: FlowWord, anchor: JetTuple, target: JetTuple) -> JetMetricValue:
    return jet_distance(word_jets(word, anchor), target)


def estimate_chart_radius(basis: SpanningBasis, seed: int = 0, trials: int = 20, max_iter: int = 10,
                          tol: float = 1e-10, max_power: int = 20) -> float:
    """Largest 2^-m such that Newton converges from every seeded random target at that distance."""
    rng = np.random.default_rng(seed)
    anchor = basis.anchor
    idx = anchor.idx
    base = anchor.coeffs
    directions = []
    for _ in range(trials):
        d = rng.normal(size=base.shape) + 1j * rng.normal(size=base.shape)
        directions.append(d / np.abs(d).max())
    for m in range(max_power + 1):
        r = 2.0**-m
        ok = True
        for d in directions:
            target = base + r * d
            if not JetTuple.from_coeffs(anchor.base_points, target, check=False).is_valid():
                ok = False
                break
            out = gauss_newton(basis.fields, base, target, idx, tol, max_iter=max_iter, jac0=basis.chart_jacobian)
            if not out.converged:
                ok = False
                break
        if ok:
            return r
    return 2.0 ** -(max_power + 1)


def prepare_basis(anchor: JetTuple, seed: int = 0) -> SpanningBasis:
    """Spanning basis at ``anchor`` with its chart radius estimated."""
    basis = build_spanning_basis(anchor, seed=seed)
    return basis.with_delta(estimate_chart_radius(basis, seed=seed))


def realize_local(target: JetTuple, basis: SpanningBasis, tol: float = 1e-10, max_iter: int = 20,
                  certified: bool = True) -> RealizationResult:
    """Times for the basis fields whose word carries ``basis.anchor`` to ``target``.

    With ``certified`` the residual is recomputed through an independent jet
    evaluation of the word; path continuation turns this off for its inner
    steps and certifies the concatenated word once instead.
    """
    target.validate()
    anchor = basis.anchor
    dist = jet_distance(target, anchor).value
    if basis.delta_chart is not None and dist > basis.delta_chart:
        raise NoConvergence(f"target at distance {dist:.3e} outside chart radius {basis.delta_chart:.3e}")
    out = gauss_newton(basis.fields, anchor.coeffs, target.coeffs, anchor.idx, tol, max_iter=max_iter,
                       jac0=basis.chart_jacobian)
    if not out.converged:
        raise NoConvergence(f"residual stagnated at {out.residual:.3e} after {out.iterations} iterations")
    word = FlowWord.from_fields(basis.fields, out.times)
    residual = certify(word, anchor, target) if certified else JetMetricValue(out.residual)
    if residual.value > tol:
        raise NoConvergence(f"certified residual {residual.value:.3e} exceeds tol {tol:.1e}")
    return RealizationResult(word, residual, out.iterations, 0)


def straight_path(start: JetTuple, end: JetTuple, samples: int = PATH_SAMPLES, seed: int = 0,
                  attempts: int = 10) -> list[JetTuple]:
    """Coefficient-linear path, bent by a seeded bump if it leaves Y."""
    rng = np.random.default_rng(seed)
    a, b = start.coeffs, end.coeffs
    s = np.linspace(0.0, 1.0, samples)
    bump = np.zeros_like(a)
    for attempt in range(attempts + 1):
        path = [JetTuple.from_coeffs(start.base_points, (1 - si) * a + si * b + si * (1 - si) * bump, check=False)
                for si in s]
        if all(p.is_valid() for p in path):
            return path
        scale = 0.5 * (1.0 + np.abs(b - a).max())
        bump = scale * (rng.normal(size=a.shape) + 1j * rng.normal(size=a.shape))
    raise PathStuck("could not find a path inside Y")


def _interp(path: Sequence[JetTuple], s: float) -> JetTuple:
    G = len(path) - 1
    x = s * G
    i = min(int(math.floor(x)), G - 1)
    w = x - i
    c = (1 - w) * path[i].coeffs + w * path[i + 1].coeffs
    return JetTuple.from_coeffs(path[0].base_points, c, check=False)


def _rebuild(basis: SpanningBasis, gamma: JetTuple, seed: int) -> SpanningBasis:
    fresh = build_spanning_basis(gamma, seed=seed)
    return fresh.with_delta(basis.delta_chart) if basis.delta_chart else fresh


def _drift(built: JetTuple, current: JetTuple) -> float:
    """How far ``current`` has moved from the jet a chart was built at.

    Image motion is measured against the smallest image separation and the
    linear parts by ``|A_cur A_built^-1 - I|``; localized fields stay well
    conditioned while both are small.
    """
    moved = float(np.abs(current.images - built.images).max())
    sep = _min_pair_gap(built.images)
    out = moved / sep if np.isfinite(sep) else 0.0
    for a, b in zip(built.jets, current.jets):
        if a.linear_part is not None:
            out = max(out, float(np.abs(b.linear_part @ np.linalg.inv(a.linear_part) - np.eye(a.n)).max()))
    return out


REBUILD_DRIFT = 0.1


def realize_path(problem: RealizationProblem, seed: int = 0, compress: bool = False,
                 max_iter: int = 10) -> RealizationResult:
    """Chain local solves along ``problem.path`` from the basis anchor to the target.

    The chart is re-anchored at every accepted sample: the same fields are
    kept while the realized jet stays close to where they were built, and
    rebuilt at the current jet once it drifts or Newton stops converging.
    The step in the path parameter halves on failure and doubles on success.
    """
    basis = problem.basis
    start = basis.anchor
    path = list(problem.path) if problem.path is not None else straight_path(start, problem.target, seed=seed)
    if coeff_distance(path[0].coeffs, start.coeffs) > 1e-10:
        raise ValueError("path must start at the basis anchor")
    if coeff_distance(path[-1].coeffs, problem.target.coeffs) > 1e-10:
        raise ValueError("path must end at the target")
    grid = 1.0 / (len(path) - 1) if len(path) > 1 else 1.0
    word = FlowWord()
    current = start
    chart, built = basis, start
    s, step = 0.0, grid
    iters = steps = rebuilds = 0
    tol = problem.tol
    while s < 1.0 - 1e-15 and len(path) > 1:
        s_next = min(1.0, s + step)
        target = problem.target if s_next == 1.0 else _interp(path, s_next)
        delta = chart.delta_chart
        far = delta is not None and coeff_distance(target.coeffs, current.coeffs) > delta
        try:
            if far or not target.is_valid():
                raise NoConvergence("sample outside the chart or outside Y")
            local = realize_local(target, chart, tol=tol * 0.5 if s_next == 1.0 else tol, max_iter=max_iter,
                                  certified=False)
        except (NoConvergence, DegenerateJet, NumericOverflow) as exc:
            if built is not current and not far:
                chart, built = _rebuild(chart, current, seed), current
                rebuilds += 1
                continue
            step *= 0.5
            log.debug("bisecting at s=%.6f: %s", s, exc)
            if step < MIN_PATH_STEP:
                raise PathStuck(f"step fell below {MIN_PATH_STEP} at path parameter {s:.6f}") from exc
            continue
        iters += local.newton_iterations
        steps += 1
        if np.any(local.word.times):
            word = word + local.word
            c = push_coeffs(chart.fields, local.word.times, current.coeffs, current.idx)
            current = JetTuple.from_coeffs(current.base_points, c)
            if _drift(built, current) > REBUILD_DRIFT:
                chart, built = _rebuild(chart, current, seed), current
                rebuilds += 1
            else:
                chart = SpanningBasis(chart.fields, current, fd_jacobian(chart.fields, np.zeros(chart.M),
                                      current.coeffs, current.idx), chart.delta_chart, chart.singular_values)
        s = s_next
        step = min(1.0, 2 * step)
    if compress and basis.delta_chart and jet_distance(problem.target, start).value <= basis.delta_chart:
        try:
            short = realize_local(problem.target, basis, tol=problem.tol)
            word, iters = short.word, iters + short.newton_iterations
        except NoConvergence:
            pass
    residual = certify(word, start, problem.target)
    if residual.value > problem.tol:
        raise NoConvergence(f"certified path residual {residual.value:.3e} exceeds tol {problem.tol:.1e}")
    return RealizationResult(word, residual, iters, steps, {"rebuilds": rebuilds})


def _min_pair_gap(points: np.ndarray) -> float:
    if len(points) < 2:
        return math.inf
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return float(d[np.triu_indices(len(points), 1)].min())


def avoiding_point_path(start: np.ndarray, end: np.ndarray, samples: int = PATH_SAMPLES, seed: int = 0,
                        attempts: int = 10, fine: int = 513) -> tuple[list[np.ndarray], float]:
    """Straight-line point paths, with midpoint offsets for pairs that collide.

    Returns the sampled path and the minimum pairwise gap seen on a fine grid.
    """
    rng = np.random.default_rng(seed)
    start = np.asarray(start, dtype=complex)
    end = np.asarray(end, dtype=complex)
    N, n = start.shape
    scale = 1.0 + float(np.abs(end - start).max())
    s_fine = np.linspace(0.0, 1.0, fine)
    floor = 1e-3 * min(_min_pair_gap(start), _min_pair_gap(end))
    offsets = np.zeros_like(start)

    def at(s):
        return (1 - s) * start + s * end + 4 * s * (1 - s) * offsets

    if N < 2:
        return [at(s) for s in np.linspace(0.0, 1.0, samples)], math.inf
    for _ in range(attempts + 1):
        gaps = [_min_pair_gap(at(s)) for s in s_fine]
        gap = min(gaps)
        if gap > floor:
            return [at(s) for s in np.linspace(0.0, 1.0, samples)], gap
        worst = s_fine[int(np.argmin(gaps))]
        pts = at(worst)
        d = np.where(np.eye(N, dtype=bool), np.inf, np.linalg.norm(pts[:, None] - pts[None], axis=-1))
        i, j = np.unravel_index(np.argmin(d), d.shape)
        for a in (i, j):
            offsets[a] += 0.25 * scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
    raise PathStuck("could not route the points around the diagonal")


def realize_points(base_points, targets, tol: float = 1e-10, seed: int = 0,
                   basis: SpanningBasis | None = None) -> RealizationResult:
    """k = 0 case: an automorphism word sending each base point to its target."""
    base_points = np.asarray(base_points, dtype=complex)
    targets = np.asarray(targets, dtype=complex)
    if _min_pair_gap(targets) <= 0:
        raise ValueError("targets must be pairwise distinct")
    start = JetTuple.identity(base_points, 0)
    end = JetTuple.from_coeffs(base_points, targets[:, :, None])
    if basis is None:
        basis = prepare_basis(start, seed=seed)
    pts, gap = avoiding_point_path(base_points, targets, seed=seed)
    path = [JetTuple.from_coeffs(base_points, p[:, :, None], check=False) for p in pts]
    path[-1] = end
    result = realize_path(RealizationProblem(end, basis, tol, path), seed=seed)
    result.meta["min_gap"] = gap
    result.meta["path_points"] = pts
    return result


def inverse_word_error(word: FlowWord, points) -> float:
    """Max |word^{-1}(word(z)) - z| over ``points``."""
    points = np.asarray(points, dtype=complex)
    back = flow_eval(word.inverse(), flow_eval(word, points))
    return float(np.abs(back - points).max())
