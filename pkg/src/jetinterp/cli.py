"""Batch front end: ``jetinterp <subcommand> --input problem.json --out-dir out/``.

Exit status is 0 when every certified check passes, 1 when a check fails
or the computation is infeasible, and 2 for malformed input.  Each run
writes its reports plus ``manifest.json`` (input digest, seed, thresholds,
wall time and output digests).  Wall time appears only in the manifest,
so report files are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np
import sympy

from . import __version__
from .errors import JetInterpError, SchemaError
from .io import (decode_complex, decode_jet_tuple, decode_word, encode_complex, encode_jet_tuple, encode_word,
                 sha256_file, write_csv, write_json)
from .jet_core import JetTuple, coeff_distance
from .parametric_engine import (ParamGrid, ParamJetFamily, StageSchedule, certify_convergence, diag_family,
                                fit_times, param_realize, run_induction, stage_rows)
from .realizer import RealizationProblem, certify, prepare_basis, realize_path, realize_points
from .sl_factor import (E, FactorWord, factor_constant, factor_diagonal_family, obstruction_check, psi_rank)

SUBCOMMANDS = ("realize", "realize-param", "induction", "factor", "obstruct", "psi-rank")
KIND_OF = {"obstruct": "obstruction"}

COMPLEX = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
POINTS = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": COMPLEX}}
COEFFS = {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": COMPLEX}}}
JETS = {
    "type": "object", "additionalProperties": False, "required": ["n", "k", "base_points", "coeffs"],
    "properties": {"n": {"type": "integer", "minimum": 1}, "k": {"type": "integer", "minimum": 0},
                   "base_points": POINTS, "coeffs": COEFFS},
}
GRID = {
    "type": "object", "additionalProperties": False,
    "properties": {"center": {"type": "array", "minItems": 1, "items": COMPLEX},
                   "radii": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                   "rings": {"type": "integer", "minimum": 1}, "angles": {"type": "integer", "minimum": 1},
                   "random": {"type": "integer", "minimum": 0}},
}
FAMILY = {"oneOf": [
    {"type": "object", "additionalProperties": False, "required": ["builtin"],
     "properties": {"builtin": {"const": "diag"}, "a": {"type": "number"}}},
    {"type": "object", "additionalProperties": False, "required": ["n", "k", "base_points", "coeffs"],
     "properties": {"n": {"type": "integer", "minimum": 1}, "k": {"type": "integer", "minimum": 0},
                    "base_points": POINTS, "coeffs": {"type": "array", "items": COEFFS}}},
]}
ENTRY = {"oneOf": [{"type": "number"}, {"type": "string"}, COMPLEX]}
PAYLOADS = {
    "realize": {"type": "object", "additionalProperties": False, "required": ["target"],
                "properties": {"target": JETS}},
    "realize-param": {"type": "object", "additionalProperties": False, "required": ["family"],
                      "properties": {"family": FAMILY, "grid": GRID,
                                     "fit_degree": {"type": "integer", "minimum": 0}}},
    "induction": {"type": "object", "additionalProperties": False, "required": ["family", "schedule"],
                  "properties": {"family": FAMILY, "grid": GRID,
                                 "fit_degree": {"type": "integer", "minimum": 0},
                                 "cloud_size": {"type": "integer", "minimum": 1},
                                 "schedule": {"type": "object", "additionalProperties": False,
                                              "required": ["L", "K", "eps"],
                                              "properties": {x: {"type": "array", "items": {"type": "number"}}
                                                             for x in ("L", "K", "eps")}}}},
    "factor": {"oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["matrix"],
         "properties": {"matrix": {"type": "array", "minItems": 1, "items": {"type": "array", "items": ENTRY}}}},
        {"type": "object", "additionalProperties": False, "required": ["diagonal"],
         "properties": {"diagonal": {"type": "string"}}},
    ]},
    "obstruction": {"type": "object", "additionalProperties": False, "required": ["word", "target"],
                    "properties": {
                        "word": {"type": "array", "items": {
                            "type": "object", "additionalProperties": False, "required": ["position", "entry"],
                            "properties": {"position": {"enum": [[1, 2], [2, 1]]}, "entry": {"type": "string"}}}},
                        "target": {"type": "array", "minItems": 2, "maxItems": 2,
                                   "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                             "items": {"type": "string"}}}}},
    "psi-rank": {"type": "object", "additionalProperties": False, "required": ["M"],
                 "properties": {"M": {"type": "integer", "minimum": 2}, "points": POINTS,
                                "random": {"type": "integer", "minimum": 1}, "critical": {"type": "boolean"}}},
}
PROBLEM = {
    "type": "object", "additionalProperties": False, "required": ["kind", "payload"],
    "properties": {
        "kind": {"enum": sorted(PAYLOADS)},
        "seed": {"type": "integer", "minimum": 0},
        "thresholds": {"type": "object", "additionalProperties": False,
                       "properties": {"tol": {"type": "number", "exclusiveMinimum": 0},
                                      "fit_tol": {"type": "number", "exclusiveMinimum": 0}}},
        "payload": {"type": "object"},
    },
}
DEFAULT_TOL = {"realize": 1e-10, "realize-param": 1e-8, "induction": 1e-6, "factor": 1e-12}
DEFAULT_FIT_TOL = 1e-4


def _location(err: jsonschema.ValidationError, prefix=()) -> str:
    return ".".join(str(p) for p in (*prefix, *err.absolute_path)) or "<root>"


def validate_problem(problem) -> None:
    """Raise :class:`SchemaError` naming the offending field."""
    _check(PROBLEM, problem, ())
    _check(PAYLOADS[problem["kind"]], problem["payload"], ("payload",))


def _check(schema, node, prefix) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(node))
    if err is not None:
        raise SchemaError(err.message, _location(err, prefix))


# ---------------------------------------------------------------------------
# payload decoding


def _grid(d: dict | None) -> ParamGrid:
    d = d or {}
    center = decode_complex(d.get("center", [[0.0, 0.0]]), "payload.grid.center")
    radii = d.get("radii", [1.0] * len(center))
    try:
        return ParamGrid.polydisc(center, radii, d.get("rings", 3), d.get("angles", 8), d.get("random", 0))
    except ValueError as exc:
        raise SchemaError(str(exc), "payload.grid") from exc


def _family(d: dict, grid: ParamGrid) -> ParamJetFamily:
    if "builtin" in d:
        return diag_family(grid, d.get("a", 0.25))
    bp = decode_complex(d["base_points"], "payload.family.base_points")
    coeffs = decode_complex(d["coeffs"], "payload.family.coeffs")
    try:
        return ParamJetFamily(grid, bp, coeffs)
    except ValueError as exc:
        raise SchemaError(str(exc), "payload.family.coeffs") from exc


def _entry(x, rational: bool, where: str):
    try:
        if rational:
            if isinstance(x, list):
                raise SchemaError("complex entries are not allowed in rational mode", where)
            return Fraction(x) if not isinstance(x, float) else Fraction(str(x))
        if isinstance(x, list):
            return complex(x[0], x[1])
        if isinstance(x, str):
            return complex(float(Fraction(x)))
        return complex(x)
    except (ValueError, ZeroDivisionError) as exc:
        raise SchemaError(f"cannot parse matrix entry {x!r}", where) from exc


def _sym(expr: str, where: str):
    try:
        return sympy.sympify(expr, locals={"w": sympy.Symbol("w")}, rational=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SchemaError(f"cannot parse expression {expr!r}", where) from exc


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, complex):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# subcommands; each returns (ok, {name: path})


def run_realize(payload, seed, th, out: Path):
    target = decode_jet_tuple(payload["target"], "payload.target")
    tol = th["tol"]
    anchor = JetTuple.identity(target.base_points, target.k)
    if target.k == 0:
        result = realize_points(target.base_points, target.images, tol=tol, seed=seed)
    else:
        basis = prepare_basis(anchor, seed=seed)
        result = realize_path(RealizationProblem(target, basis, tol), seed=seed)
    word = result.word.dropping_zeros()
    residual = certify(word, anchor, target).value
    files = {
        "word.json": write_json(out / "word.json", {"anchor": encode_jet_tuple(anchor), "word": encode_word(word),
                                                    "tol": tol}),
        "report.csv": write_csv(out / "report.csv",
                                ["residual", "newton_iterations", "word_length", "path_steps", "tol", "certified"],
                                [(residual, result.newton_iterations, len(word), result.path_steps, tol,
                                  residual <= tol)]),
    }
    return residual <= tol, files


def run_realize_param(payload, seed, th, out: Path):
    grid = _grid(payload.get("grid"))
    family = _family(payload["family"], grid)
    basis = prepare_basis(JetTuple.identity(family.base_points, family.k), seed=seed)
    flow = param_realize(family, basis, tol=th["tol"])
    degree = payload.get("fit_degree", 6)
    fitted = fit_times(flow, degree)
    fit_res = fitted.fit.residual
    rows = [(i, json.dumps(encode_complex(grid.samples[i])), float(flow.residuals[i]))
            for i in range(grid.size)]
    files = {
        "family.json": write_json(out / "family.json", {
            "base_points": encode_complex(family.base_points), "segments": flow.segments,
            "letters": encode_word(flow.word(0))["fields"], "samples": encode_complex(grid.samples),
            "times": encode_complex(flow.times), "fit": {"degree": degree, "exponents": [list(e) for e in fitted.fit.exponents],
                                                         "coeffs": encode_complex(fitted.fit.coeffs)}}),
        "report.csv": write_csv(out / "report.csv", ["sample", "w", "residual"], rows),
        "fit.csv": write_csv(out / "fit.csv", ["degree", "held_out_residual", "train", "held_out", "fit_tol"],
                             [(degree, fit_res, len(fitted.fit.train), len(fitted.fit.holdout), th["fit_tol"])]),
    }
    ok = bool(np.all(flow.residuals <= th["tol"])) and fit_res < th["fit_tol"]
    return ok, files


def run_induction_cmd(payload, seed, th, out: Path):
    grid = _grid(payload.get("grid"))
    family = _family(payload["family"], grid)
    sched = payload["schedule"]
    try:
        schedule = StageSchedule(tuple(sched["L"]), tuple(sched["K"]), tuple(sched["eps"]))
    except ValueError as exc:
        raise SchemaError(str(exc), "payload.schedule") from exc
    kw = {"seed": seed, "strict": False}
    if "fit_degree" in payload:
        kw["degree"] = payload["fit_degree"]
    if "cloud_size" in payload:
        kw["cloud_size"] = payload["cloud_size"]
    run = run_induction(family, schedule, **kw)
    report = certify_convergence(run.results, schedule.K[0], cloud=run.cloud)
    cond_rows = [(r.k, name, c.measured, c.budget, c.ok) for r in run.results for name, c in sorted(r.conditions.items())]
    conv_rows = [(t.stage, t.measured, t.budget, t.margin, report.residuals[t.stage]) for t in report.tails]
    final = report.residuals[-1] if report.residuals else 0.0
    files = {
        "stages.csv": write_csv(out / "stages.csv", ["stage", "sample", "residual", "sup_deviation", "budget", "margin"],
                                stage_rows(run.results)),
        "conditions.csv": write_csv(out / "conditions.csv", ["stage", "condition", "measured", "budget", "ok"],
                                    cond_rows),
        "convergence.csv": write_csv(out / "convergence.csv",
                                     ["stage", "tail_measured", "tail_budget", "margin", "jet_residual"], conv_rows),
        "failures.csv": write_csv(out / "failures.csv", ["message"], [(f,) for f in report.failures]),
    }
    ok = all(r.ok for r in run.results) and report.ok and final <= th["tol"]
    return ok, files


def run_factor(payload, seed, th, out: Path, rational: bool):
    if "diagonal" in payload:
        a = _sym(payload["diagonal"], "payload.diagonal")
        word = factor_diagonal_family(a)
        rows = [(len(word), "symbolic", 0, True)]
        ok = True
    else:
        A = [[_entry(x, rational, f"payload.matrix.{r}.{c}") for c, x in enumerate(row)]
             for r, row in enumerate(payload["matrix"])]
        if any(len(row) != len(A) for row in A):
            raise SchemaError("matrix must be square", "payload.matrix")
        word = factor_constant(A, rational=rational)
        if rational:
            err = 0 if word.exact_product() == A else 1
            rows = [(len(word), "rational", err, err == 0)]
            ok = err == 0
        else:
            err = float(np.abs(word.product() - np.array(A, dtype=complex)).max())
            ok = err < th["tol"]
            rows = [(len(word), "float", err, ok)]
    factors = [{"position": [f.i + 1, f.j + 1], "entry": _fmt(f.entry)} for f in word.factors]
    files = {
        "word.json": write_json(out / "word.json", {"n": word.n, "factors": factors}),
        "report.csv": write_csv(out / "report.csv", ["length", "mode", "recomposition_error", "certified"], rows),
    }
    return ok, files


def run_obstruct(payload, seed, th, out: Path):
    factors = [E(*f["position"], _sym(f["entry"], f"payload.word.{i}.entry"))
               for i, f in enumerate(payload["word"])]
    target = sympy.Matrix([[_sym(x, f"payload.target.{r}.{c}") for c, x in enumerate(row)]
                           for r, row in enumerate(payload["target"])])
    verdict = obstruction_check(FactorWord(tuple(factors), 2), target)
    files = {"report.csv": write_csv(out / "report.csv",
                                     ["verdict", "product_coefficient", "target_coefficient", "structural", "certificate"],
                                     [(verdict.verdict, verdict.product_coeff, verdict.target_coeff,
                                       verdict.structural, verdict.certificate)])}
    return verdict.structural, files


def run_psi_rank(payload, seed, th, out: Path):
    M = payload["M"]
    if "points" in payload:
        pts = decode_complex(payload["points"], "payload.points")
        if pts.shape[1] != M:
            raise SchemaError(f"points must lie in C^{M}", "payload.points")
    else:
        rng = np.random.default_rng(seed)
        count = payload.get("random", 100)
        pts = rng.normal(size=(count, M)) + 1j * rng.normal(size=(count, M))
        if payload.get("critical", False):
            pts[:, : M - 1] = 0
    rows, ok = [], True
    for i, z in enumerate(pts):
        rep = psi_rank(M, z)
        good = rep.rank <= 1 if rep.on_critical_set else rep.rank == 2
        ok &= good
        rows.append((i, rep.rank, float(rep.singular_values[0]), float(rep.singular_values[-1]),
                     rep.on_critical_set, good))
    files = {"report.csv": write_csv(out / "report.csv",
                                     ["point", "rank", "sigma_max", "sigma_min", "on_critical_set", "dichotomy_ok"], rows)}
    return ok, files


def run_verify(word_path: Path, target_path: Path, tol: float | None):
    try:
        wd = json.loads(Path(word_path).read_text())
        td = json.loads(Path(target_path).read_text())
        anchor = decode_jet_tuple(wd["anchor"], "anchor")
        word = decode_word(wd["word"], "word")
        if "payload" in td:
            td = td["payload"]["target"]
        elif "target" in td:
            td = td["target"]
        target = decode_jet_tuple(td, "target")
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"cannot parse input: {exc}") from exc
    tol = tol if tol is not None else wd.get("tol", DEFAULT_TOL["realize"])
    if coeff_distance(anchor.base_points, target.base_points) > 0:
        raise SchemaError("word anchor and target have different base points", "target.base_points")
    residual = certify(word, anchor, target).value
    return residual, tol


# ---------------------------------------------------------------------------


def _manifest(out: Path, command: str, input_bytes: bytes, seed: int, th: dict, threads: int, wall: float, files,
              ok: bool) -> Path:
    return write_json(out / "manifest.json", {
        "tool": "jetinterp", "version": __version__, "command": command,
        "input_sha256": hashlib.sha256(input_bytes).hexdigest(), "seed": seed, "thresholds": th,
        "threads": threads, "wall_time_s": wall, "certified": ok,
        "outputs": {name: sha256_file(p) for name, p in sorted(files.items())},
    })


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jetinterp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=f"solve a problem file of kind {KIND_OF.get(name, name)}")
        s.add_argument("--input", required=True, type=Path, help="problem file (JSON)")
        s.add_argument("--out-dir", type=Path, default=Path("."), help="directory for reports and manifest")
        s.add_argument("--seed", type=int, default=None, help="override the problem seed")
        s.add_argument("--tol", type=float, default=None, help="override the certification tolerance")
        s.add_argument("--threads", type=int, default=1,
                       help="recorded in the manifest; computations run sequentially")
        if name == "factor":
            s.add_argument("--rational", action="store_true", help="exact rational arithmetic")
    v = sub.add_parser("verify", help="recertify a word file against a target")
    v.add_argument("word", type=Path, help="word file written by 'realize'")
    v.add_argument("target", type=Path, help="jet tuple file or realize problem file")
    v.add_argument("--tol", type=float, default=None, help="pass threshold (default: the word file's tol)")
    v.add_argument("--out-dir", type=Path, default=None, help="also write verify.csv here")
    return p


def _dispatch(kind, payload, seed, th, out: Path, args):
    if kind == "realize":
        return run_realize(payload, seed, th, out)
    if kind == "realize-param":
        return run_realize_param(payload, seed, th, out)
    if kind == "induction":
        return run_induction_cmd(payload, seed, th, out)
    if kind == "factor":
        return run_factor(payload, seed, th, out, args.rational)
    if kind == "obstruction":
        return run_obstruct(payload, seed, th, out)
    return run_psi_rank(payload, seed, th, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            residual, tol = run_verify(args.word, args.target, args.tol)
            print(f"residual {residual!r} tol {tol!r} {'PASS' if residual <= tol else 'FAIL'}")
            if args.out_dir is not None:
                args.out_dir.mkdir(parents=True, exist_ok=True)
                write_csv(args.out_dir / "verify.csv", ["residual", "tol", "certified"], [(residual, tol, residual <= tol)])
            return 0 if residual <= tol else 1
        try:
            raw = args.input.read_bytes()
            problem = json.loads(raw)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read problem file: {exc}", str(args.input)) from exc
        validate_problem(problem)
        kind = KIND_OF.get(args.command, args.command)
        if problem["kind"] != kind:
            raise SchemaError(f"problem kind {problem['kind']!r} does not match subcommand {args.command!r}", "kind")
        seed = args.seed if args.seed is not None else problem.get("seed", 0)
        th = {"tol": DEFAULT_TOL.get(kind)}
        if kind == "realize-param":
            th["fit_tol"] = DEFAULT_FIT_TOL
        th |= problem.get("thresholds", {})
        if args.tol is not None:
            th["tol"] = args.tol
        th = {k: v for k, v in th.items() if v is not None}
        out = args.out_dir
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        payload = problem["payload"]
        try:
            # overflowing trial steps are rejected by the solvers themselves
            with np.errstate(over="ignore", invalid="ignore"):
                ok, files = _dispatch(kind, payload, seed, th, out, args)
        except SchemaError:
            raise
        except JetInterpError as exc:
            files = {"failure.csv": write_csv(out / "failure.csv", ["error", "message"],
                                              [(type(exc).__name__, str(exc))])}
            ok = False
        manifest = _manifest(out, args.command, raw, seed, th, args.threads, time.perf_counter() - t0, files, ok)
        if not ok:
            print(f"certified check failed; see {sorted(files.values())[0]} and {manifest}", file=sys.stderr)
            return 1
        return 0
    except SchemaError as exc:
        print(f"schema error at {exc.location or '<root>'}: {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
