"""Acceptance criteria 1-12, one test each, with tolerances pinned below.

Every test appends a ``criterion N: PASS|FAIL ...`` line that the terminal
summary prints in order, then asserts.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import sympy

import conftest
from jetinterp.cli import main
from jetinterp.errors import NumericOverflow
from jetinterp.flow_atlas import (FlowWord, OvershearField, ShearField, build_spanning_basis,
                                  decompose_monomial_field, field_coefficients, flow_eval, lift_at, push_coeffs)
from jetinterp.jet_core import Jet, JetTuple, TruncatedPolyMap, dim_Y, index_set, jet_compose, jet_inverse
from jetinterp.parametric_engine import (ParamGrid, StageSchedule, WordHomotopy, certify_convergence, diag_family,
                                         fit_times, param_realize, run_induction, theta_field, theta_generator)
from jetinterp.realizer import (RealizationProblem, inverse_word_error, prepare_basis, realize_local, realize_path,
                                word_jets)
from jetinterp.sl_factor import (W, E, ElementaryFactor, FactorWord, _series_matrix_product, factor_constant,
                                 factor_diagonal_family, obstruction_check, psi_rank)
from oracles import brute_compose, polydisc_points, random_jet_coeffs

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

GROUP_TOL = 1e-10
ORACLE_TOL = 1e-12
LIFT_TOL = 1e-5
RANK_RTOL = 1e-8
DECOMP_TOL = 1e-10
WITNESS_TOL = 1e-11
REALIZE_TOL = 1e-8
INVERSE_TOL = 1e-10
INVERSE_RADIUS = 5.0
SMALLNESS_FACTOR = 3.0
PARAM_TOL = 1e-8
FIT_TOL = 1e-4
THETA_TOL = 1e-6
LIFTED_THETA_TOL = 1e-5
SL_TOL = 1e-12


def record(number, ok, detail, elapsed=None):
    timing = f" ({elapsed:.1f} s)" if elapsed is not None else ""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}{timing}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def make_jet(c, base, k):
    return Jet(TruncatedPolyMap(base, c, k))


def test_criterion_01_jet_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    group = oracle = 0.0
    for trial in range(200):
        n, k = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        p = rng.normal(size=n)
        f, g, h = (make_jet(random_jet_coeffs(rng, n, k, image=p), p, k) for _ in range(3))
        group = max(group, np.abs(jet_compose(jet_compose(f, g), h).rep.coeffs
                                  - jet_compose(f, jet_compose(g, h)).rep.coeffs).max())
        ident = Jet.identity(p, k).rep.coeffs
        group = max(group, np.abs(jet_compose(Jet.identity(p, k), f).rep.coeffs - f.rep.coeffs).max())
        group = max(group, np.abs(jet_compose(jet_inverse(f), f).rep.coeffs - ident).max())
        group = max(group, np.abs(jet_compose(f, jet_inverse(f)).rep.coeffs - ident).max())
        inner_c = random_jet_coeffs(rng, n, k)
        inner = make_jet(inner_c, rng.normal(size=n), k)
        outer_c = random_jet_coeffs(rng, n, k, image=rng.normal(size=n))
        outer = make_jet(outer_c, inner.image, k)
        got = jet_compose(outer, inner).rep.coeffs
        ref = brute_compose(outer_c, inner.image, inner_c, n, k)
        oracle = max(oracle, np.abs(got - ref).max() / max(1.0, np.abs(ref).max()))
    elapsed = time.perf_counter() - t0
    ok = group < GROUP_TOL and oracle < ORACLE_TOL and elapsed < 10
    record(1, ok, f"200 jets, group axioms max err {group:.2e} (< {GROUP_TOL:.0e}), "
                  f"oracle rel err {oracle:.2e} (< {ORACLE_TOL:.0e})", elapsed)


def _random_field(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    v /= np.linalg.norm(v)
    lam = 0.5 * (rng.normal(size=2) + 1j * rng.normal(size=2))
    lam -= (lam @ v) * np.conj(v)
    profile = [(d, complex(*(0.2 * rng.normal(size=2)))) for d in range(3)]
    cls = OvershearField if rng.uniform() < 0.5 else ShearField
    return cls(v, lam, profile, 0.2 * rng.normal(size=2))


def test_criterion_02_lift_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    h = 1e-6
    worst = 0.0
    bp = np.array([[0.0, 0.0]])
    for _ in range(50):
        V = _random_field(rng)
        gamma = JetTuple.from_coeffs(bp, random_jet_coeffs(rng, 2, 2, image=bp[0], scale=0.2)[None])
        fd = (push_coeffs([V], [h], gamma.coeffs, gamma.idx) - gamma.coeffs).reshape(-1) / h
        worst = max(worst, np.abs(fd - lift_at(V, gamma)).max())
    elapsed = time.perf_counter() - t0
    record(2, worst < LIFT_TOL and elapsed < 10, f"50 pairs, lift vs finite difference max err {worst:.2e} "
                                                 f"(< {LIFT_TOL:.0e})", elapsed)


def test_criterion_03_spanning_ranks():
    t0 = time.perf_counter()
    parts, ok = [], True
    for n, k, N in [(2, 1, 1), (2, 2, 1), (3, 1, 1), (2, 1, 2), (2, 2, 2)]:
        bp = np.zeros((N, n))
        bp[:, 0] = 3.0 * np.arange(N)
        basis = build_spanning_basis(JetTuple.identity(bp, k))
        s = basis.singular_values
        ratio = s[-1] / s[0]
        good = basis.rank == dim_Y(n, k, N) and ratio >= RANK_RTOL
        ok &= good
        parts.append(f"({n},{k},{N}) rank {basis.rank}/{dim_Y(n, k, N)} smin/smax {ratio:.1e}")
    elapsed = time.perf_counter() - t0
    record(3, ok and elapsed < 30, "; ".join(parts), elapsed)


def test_criterion_04_decomposition():
    rng = np.random.default_rng(4)
    coeff_err = witness = 0.0
    count = 0
    for n in (2, 3):
        idx = index_set(n, 3)
        for e in idx.exponents:
            for j in range(n):
                I = tuple(int(x) for x in e)
                fields = decompose_monomial_field(I, j)
                want = np.zeros((n, idx.size), dtype=complex)
                want[j, idx.position[I]] = 1.0
                coeff_err = max(coeff_err, np.abs(field_coefficients(fields, n, 3) - want).max())
                for f in fields:
                    z = polydisc_points(rng, n, 100, 1.0)
                    t = 10 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
                    back = flow_eval(FlowWord.from_fields([f, f], [t, -t]), z)
                    witness = max(witness, np.abs(back - z).max())
                    count += 1
    ok = coeff_err < DECOMP_TOL and witness < WITNESS_TOL
    record(4, ok, f"all z^I d/dz_j with |I| <= 3, n in {{2,3}}: coeff err {coeff_err:.2e} (< {DECOMP_TOL:.0e}); "
                  f"{count} fields, flow at t then -t max err {witness:.2e} (< {WITNESS_TOL:.0e}, |t| <= 10)")


def test_criterion_05_realization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    words, residuals = [], []
    for N in (1, 2):
        bp = np.array([[0.0, 0.0], [1.0, 0.0]])[:N]
        anchor = JetTuple.identity(bp, 2)
        basis = prepare_basis(anchor, seed=0)
        for s in range(25):
            shape = anchor.coeffs.shape
            c = anchor.coeffs + 0.3 * (rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape))
            out = realize_path(RealizationProblem(JetTuple.from_coeffs(bp, c), basis, REALIZE_TOL), seed=s)
            residuals.append(out.residual.value)
            words.append(out.word)
    lin = JetTuple.identity(np.zeros((1, 2)), 1)
    path = []
    for t in np.linspace(0, 1, 33):
        c = lin.coeffs.copy()
        c[0, :, 1:] = np.diag([2.0**t, 2.0**-t])
        path.append(JetTuple.from_coeffs(lin.base_points, c))
    out = realize_path(RealizationProblem(path[-1], prepare_basis(lin), REALIZE_TOL, path))
    residuals.append(out.residual.value)
    words.append(out.word)

    def inverse_errors(radius):
        errs = []
        for word in words:
            pts = polydisc_points(rng, 2, 100, radius)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    e = inverse_word_error(word, pts)
            except NumericOverflow:
                e = math.inf
            errs.append(e if np.isfinite(e) else math.inf)
        return np.array(errs)

    errs = inverse_errors(INVERSE_RADIUS)
    passed = int(np.sum(errs <= INVERSE_TOL))
    # diagnostic only: largest radius at which every word passes
    reach = next((r for r in (2.0, 1.0, 0.5, 0.25, 0.1) if np.all(inverse_errors(r) <= INVERSE_TOL)), 0.0)
    elapsed = time.perf_counter() - t0
    worst = max(residuals)
    ok = worst <= REALIZE_TOL and passed == len(words) and elapsed < 120
    record(5, ok, f"51 targets, max residual {worst:.2e} (<= {REALIZE_TOL:.0e}); inverse-word check on radius "
                  f"{INVERSE_RADIUS:g}: {passed}/{len(words)} words within {INVERSE_TOL:.0e} "
                  f"(every word passes up to radius {reach:g})", elapsed)


def test_criterion_06_smallness_regression():
    rng = np.random.default_rng(6)
    basis = prepare_basis(JetTuple.identity(np.zeros((1, 2)), 2), seed=0)
    pts = np.concatenate([polydisc_points(rng, 2, 400, 3.0),
                          3.0 * np.array([[a, b] for a in (1, -1, 1j, -1j) for b in (1, -1, 1j, -1j)])])
    directions = []
    for _ in range(5):
        d = rng.uniform(-1, 1, size=(1, 2, 6)) + 1j * rng.uniform(-1, 1, size=(1, 2, 6))
        directions.append(d / np.abs(d).max())
    C = {}
    for delta in (1e-2, 1e-3, 1e-4):
        ratio = 0.0
        for d in directions:
            target = JetTuple.from_coeffs(basis.anchor.base_points, basis.anchor.coeffs + delta * d)
            out = realize_local(target, basis, tol=1e-12)
            ratio = max(ratio, np.abs(flow_eval(out.word, pts) - pts).max() / delta)
        C[delta] = ratio
    spread = max(C.values()) / min(C.values())
    record(6, spread <= SMALLNESS_FACTOR,
           "C(delta) on radius-3 polydisc: " + ", ".join(f"{d:.0e} -> {c:.3f}" for d, c in C.items())
           + f"; spread {spread:.3f} (<= {SMALLNESS_FACTOR:g})")


@pytest.fixture(scope="module")
def diag_grid():
    return ParamGrid.polydisc(0.0, 1.0)


def test_criterion_07_parametric(diag_grid):
    t0 = time.perf_counter()
    family = diag_family(diag_grid)
    basis = prepare_basis(JetTuple.identity(np.zeros((1, 2)), 1), seed=0)
    flow = param_realize(family, basis, tol=PARAM_TOL)
    fitted = fit_times(flow, 6)
    worst = float(flow.residuals.max())
    ok = diag_grid.size == 25 and worst < PARAM_TOL and fitted.fit.residual < FIT_TOL
    record(7, ok, f"{diag_grid.size} samples, max residual {worst:.2e} (< {PARAM_TOL:.0e}); degree-6 held-out "
                  f"residual {fitted.fit.residual:.2e} (< {FIT_TOL:.0e}) on {len(fitted.fit.holdout)} samples",
           time.perf_counter() - t0)


def test_criterion_08_induction(diag_grid):
    t0 = time.perf_counter()
    schedule = StageSchedule.geometric()
    run = run_induction(diag_family(diag_grid), schedule, strict=False)
    report = certify_convergence(run.results, K0=schedule.K[0], cloud=run.cloud)
    conds = [(r.k, name, c) for r in run.results for name, c in sorted(r.conditions.items())]
    bad = [f"stage {k} ({name}) {c.measured:.2e} >= {c.budget:.2e}" for k, name, c in conds if not c.ok]
    margins = [t.margin for t in report.tails]
    elapsed = time.perf_counter() - t0
    ok = not bad and report.ok and min(margins) >= 0 and elapsed < 300
    record(8, ok, f"{len(run.results)} stages, eps = {schedule.eps}: {len(conds) - len(bad)}/{len(conds)} conditions "
                  f"hold{'; ' + '; '.join(bad) if bad else ''}; Cauchy margins "
                  f"{', '.join(f'{m:.3e}' for m in margins)}; jet residuals "
                  f"{', '.join(f'{r:.1e}' for r in report.residuals)}", elapsed)


def test_criterion_09_theta():
    rng = np.random.default_rng(9)
    auto = 0.0
    for _ in range(10):
        V = ShearField([1, 0], [0, 1], [(d, complex(*(0.3 * rng.normal(size=2)))) for d in range(3)])
        if rng.uniform() < 0.5:
            V = ShearField([0, 1], [1, 0], V.profile)
        z = polydisc_points(rng, 2, 20, 1.0)
        vz = np.stack(V.vector([z[:, 0], z[:, 1]]), axis=-1)
        for t in (0.1, 0.5, 0.9):
            auto = max(auto, np.abs(theta_generator(WordHomotopy.autonomous(V), t, None, z) + vz).max())
    lifted = 0.0
    anchor = JetTuple.identity(np.zeros((1, 2)), 2)
    h = 1e-4
    for _ in range(10):
        fields = tuple(_random_field(rng) for _ in range(2))
        a, b = 0.5 * rng.normal(size=(2, 2))
        psi = WordHomotopy(fields, lambda s, w, a=a, b=b: a * s + b * s**2)

        def gamma(s, psi=psi):
            return word_jets(psi.word(s), anchor).coeffs

        for t in (0.25, 0.6):
            lhs = ((gamma(1 - (t + h)) - gamma(1 - (t - h))) / (2 * h)).reshape(-1)
            rhs = lift_at(theta_field(psi, t), anchor.with_coeffs(gamma(1 - t)))
            lifted = max(lifted, np.abs(lhs - rhs).max())
    record(9, auto < THETA_TOL and lifted < LIFTED_THETA_TOL,
           f"autonomous shears: |Theta + V| max {auto:.2e} (< {THETA_TOL:.0e}); lifted identity on 10 random "
           f"2-letter families max err {lifted:.2e} (< {LIFTED_THETA_TOL:.0e})")


def _random_factor_word(rng, n, letters, entry):
    out = []
    for _ in range(letters):
        i, j = rng.choice(n, size=2, replace=False)
        out.append(ElementaryFactor(n, int(i), int(j), entry()))
    return FactorWord(tuple(out), n)


def test_criterion_10_sl_suite():
    from fractions import Fraction

    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    float_err = 0.0
    for _ in range(100):
        A = _random_factor_word(rng, 3, 12, lambda: complex(*rng.uniform(-1, 1, size=2))).product()
        float_err = max(float_err, np.abs(factor_constant(A).product() - A).max())
    exact = 0
    for _ in range(20):
        A = _random_factor_word(rng, 3, 12, lambda: Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 6))))
        A = A.exact_product()
        exact += factor_constant(A, rational=True).exact_product() == A
    white = factor_diagonal_family(W).symbolic_product() == sympy.diag(W, 1 / W)
    zero = 0
    for _ in range(500):
        factors = []
        for _ in range(10):
            q = sum(Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4))) * W**d for d in range(3))
            entry = sympy.expand((W - 1) * q)
            factors.append(E(1, 2, entry) if rng.uniform() < 0.5 else E(2, 1, entry))
        P = _series_matrix_product(FactorWord(tuple(factors), 2), 2)
        zero += P[1][1].coeffs[1] == 0
    verdict = obstruction_check(FactorWord(tuple(factors), 2), sympy.diag(1 / W, W))
    elapsed = time.perf_counter() - t0
    ok = (float_err < SL_TOL and exact == 20 and white and zero == 500 and verdict.verdict == "Incompatible"
          and elapsed < 60)
    record(10, ok, f"float recomposition max {float_err:.2e} (< {SL_TOL:.0e}) on 100 SL3; exact {exact}/20; "
                   f"Whitehead word symbolic {'ok' if white else 'mismatch'}; (w-1)^1 coefficient zero on {zero}/500; "
                   f"counterexample target {verdict.verdict} [{verdict.certificate}]", elapsed)


def test_criterion_11_psi_dichotomy():
    rng = np.random.default_rng(11)
    parts, ok = [], True
    for M in range(2, 7):
        off = on = 0
        for _ in range(100):
            z = rng.normal(size=M) + 1j * rng.normal(size=M)
            off += psi_rank(M, z).rank == 2
            z[: M - 1] = 0
            on += psi_rank(M, z).rank <= 1
        ok &= off == 100 and on == 100
        parts.append(f"M={M}: {off}/100 rank 2 off S, {on}/100 rank <= 1 on S")
    record(11, ok, "; ".join(parts))


def test_criterion_12_determinism(tmp_path):
    t0 = time.perf_counter()
    commands = {"obstruction": "obstruct"}
    mismatched, total = [], 0
    for prob in sorted(PROBLEMS.glob("*.json")):
        kind = json.loads(prob.read_text())["kind"]
        runs = []
        for r in range(2):
            out = tmp_path / f"{prob.stem}_{r}"
            with np.errstate(all="ignore"):
                main([commands.get(kind, kind), "--input", str(prob), "--out-dir", str(out)])
            runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"})
            runs[-1]["outputs"] = json.dumps(json.loads((out / "manifest.json").read_text())["outputs"]).encode()
        total += len(runs[0])
        mismatched += [f"{prob.stem}/{name}" for name in runs[0] if runs[0][name] != runs[1].get(name)]
    record(12, not mismatched and total > 0,
           f"{total} report files over {len(list(PROBLEMS.glob('*.json')))} problems, "
           f"{len(mismatched)} differ between two runs{': ' + ', '.join(mismatched) if mismatched else ''}",
           time.perf_counter() - t0)
