"""Command-line front end: manifest-driven experiments with NDJSON records.

Verbs: randomize, evolve, solve, tail, scaling, theorem, khinchin.  Each takes
--manifest PATH plus overrides (--seed, --samples, --T, --lambda, --out,
--csv).  Exit status: 0 success, 2 validation error, 3 statistical-contract
failure, 1 I/O or runtime failure.  Ensemble parallelism honours the
RANDNS_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import dataclasses
import json
import sys
import time

import numpy as np

from . import __version__
from .evolution import picard_solve, reference_timestepper, residual
from .manifests import (
    KINDS,
    ExperimentManifest,
    ManifestError,
    normalize_manifest,
)
from .montecarlo import (
    khinchin_moments,
    scaling_in_T,
    tail_probability,
    theorem_experiment,
)
from .randomization import RandomizationDraw, randomize, supercritical_datum
from .records import (
    jsonable,
    read_run_record,
    stable_aggregate,
    write_run_record,
)
from .snapshots import SnapshotError, load_field, save_field, save_trajectory
from .spectral import (
    SpectralVectorField,
    TorusSpec,
    shear_field,
    sobolev_norm,
    taylor_green_field,
)
from .trajectories import TimeGrid

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_CONTRACT = 3


@dataclasses.dataclass
class RunResult:
    rows: list[dict]
    aggregate: dict
    contract_ok: bool
    record_path: str
    artifact_paths: list[str]


def build_datum(man: ExperimentManifest) -> SpectralVectorField:
    spec = TorusSpec(man.dim, man.torus[0], man.torus[1])
    if man.data_source == "canonical":
        return supercritical_datum(spec, man.s, amplitude=man.data_amplitude)
    if man.data_source == "shear":
        return shear_field(spec, man.data_amplitude)
    if man.data_source == "taylor-green":
        return taylor_green_field(spec, man.data_amplitude)
    field, _ = load_field(man.data_path)
    if field.spec != spec:
        raise ManifestError(
            f"snapshot {man.data_path} has spec {field.spec}, manifest wants {spec}"
        )
    return field


def _records_path(man: ExperimentManifest) -> tuple[str, str | None]:
    """(record path, artifact path or None) per kind."""
    if man.kind == "randomize":
        artifact = man.out or "randomize.nsrf1"
        return artifact + ".ndjson", artifact
    if man.kind in ("evolve", "solve"):
        artifact = man.out or f"{man.kind}.nstj1"
        return artifact + ".ndjson", artifact
    return man.out or f"{man.kind}.ndjson", None


def run_manifest(man: ExperimentManifest) -> RunResult:
    """Dispatch a validated manifest and write its record and artifacts."""
    record_path, artifact = _records_path(man)
    started = time.monotonic()
    runner = _RUNNERS[man.kind]
    rows, aggregate, contract_ok, artifacts = runner(man, artifact)
    aggregate = {**aggregate, "contract_ok": contract_ok,
                 "wall_clock_s": time.monotonic() - started}
    write_run_record(record_path, man.normalized, man.digest(), rows,
                     aggregate, __version__)
    if man.csv:
        _write_csv(man, rows)
        artifacts = artifacts + [man.csv]
    return RunResult(rows, aggregate, contract_ok, record_path, artifacts)


def _run_randomize(man, artifact):
    f = build_datum(man)
    draw = RandomizationDraw(man.base_seed, man.sample_index)
    fw = randomize(f, draw)
    save_field(artifact, fw, s=man.s)
    row = {
        "type": "sample",
        "sample_index": man.sample_index,
        "hs_norm": sobolev_norm(fw, man.s),
        "l2_norm": sobolev_norm(fw, 0.0),
        "solenoidal": fw.solenoidal,
    }
    return [row], {"snapshot": artifact}, True, [artifact]


def _run_evolve(man, artifact):
    f = build_datum(man)
    grid = TimeGrid(man.T, man.steps)
    traj = reference_timestepper(f, grid)
    save_trajectory(artifact, traj, s=man.s)
    row = {
        "type": "sample",
        "final_l2": sobolev_norm(traj.state(grid.steps), 0.0),
        "initial_l2": sobolev_norm(f, 0.0),
    }
    return [row], {"snapshot": artifact, "T": man.T, "steps": man.steps}, True, [artifact]


def _run_solve(man, artifact):
    f = build_datum(man)
    if man.data_source == "canonical":
        f = randomize(f, RandomizationDraw(man.base_seed, man.sample_index))
    grid = TimeGrid(man.T, man.steps)
    lam = man.lam if man.lam is not None else np.inf
    out = picard_solve(f, grid, man.params, lam=lam, tol=man.tol,
                       max_iter=man.max_iter)
    save_trajectory(artifact, out.u, s=man.s)
    res = residual(out.u, f) if out.diagnostics.converged else None
    row = {
        "type": "sample",
        "sample_index": man.sample_index,
        "iterations": out.diagnostics.iterations,
        "converged": out.diagnostics.converged,
        "diverged": out.diagnostics.diverged,
        "event_member": out.event_member,
        "event_norm": out.diagnostics.event_norm_value,
        "diffs": out.diagnostics.diffs,
        "residual": res,
    }
    ok = out.diagnostics.converged and (res is None or res <= 10 * man.tol)
    return [row], {"snapshot": artifact}, ok, [artifact]


def _run_tail(man, artifact):
    f = build_datum(man)
    est = tail_probability(f, man.params, man.selector, T=man.T,
                           samples=man.samples, base_seed=man.base_seed,
                           lambdas=man.lambda_grid, steps=man.steps)
    rows = [{"type": "sample", "sample_index": i, "norm": v}
            for i, v in enumerate(est.norms)]
    rows += [
        {"type": "point", "lambda": lam, "p_hat": p, "ci_low": lo,
         "ci_high": hi, "exceed": int(k)}
        for lam, p, lo, hi, k in zip(est.lambdas, est.p_hat, est.ci_low,
                                     est.ci_high, est.exceed_counts)
    ]
    aggregate = {"selector": est.selector, "T": est.T, "scale": est.scale,
                 "fit_ok": est.fit_ok, "c1": est.c1, "c2": est.c2,
                 "r_squared": est.r_squared}
    ok = (not est.fit_ok) or (est.c2 > 0 and est.r_squared >= 0.9)
    return rows, aggregate, ok, []


def _run_scaling(man, artifact):
    f = build_datum(man)
    if man.T_grid is None:
        raise ManifestError("kind 'scaling' requires time.T_grid")
    r = man.r if man.r is not None else 2.0
    fit = scaling_in_T(f, man.params, man.selector, r, man.T_grid,
                       samples=man.samples, base_seed=man.base_seed,
                       steps=man.steps)
    rows = []
    for ti, T in enumerate(fit.T_grid):
        rows += [{"type": "sample", "T": T, "sample_index": i, "norm": v}
                 for i, v in enumerate(fit.norms[ti])]
    rows += [{"type": "point", "T": T, "moment": m, "moment_se": se}
             for T, m, se in zip(fit.T_grid, fit.moments, fit.moment_ses)]
    aggregate = {"selector": fit.selector, "r": fit.r, "slope": fit.slope,
                 "slope_se": fit.slope_se, "theta": fit.theta}
    ok = fit.slope >= fit.theta - 0.1
    return rows, aggregate, ok, []


def _run_theorem(man, artifact):
    f = build_datum(man)
    T_grid = man.T_grid if man.T_grid is not None else [man.T]
    study = theorem_experiment(f, man.params, T_grid, man.lam,
                               samples=man.samples, base_seed=man.base_seed,
                               steps=man.steps, tol=man.tol,
                               max_iter=man.max_iter)
    rows = []
    for point in study.points:
        for rec in point.records:
            rows.append({"type": "sample", "T": point.T, **dataclasses.asdict(rec)})
        rows.append({
            "type": "point", "T": point.T, "members": point.members,
            "member_fraction": point.member_fraction, "ci_low": point.ci_low,
            "ci_high": point.ci_high,
            "members_converged": point.members_converged,
            "members_contracting": point.members_contracting,
            "max_member_residual": point.max_member_residual,
        })
    aggregate = {
        "lambda": study.lam,
        "all_members_contract": study.all_members_contract(),
        "monotone_within_ci": study.monotone_within_ci(),
    }
    ok = study.all_members_contract() and study.monotone_within_ci()
    return rows, aggregate, ok, []


def _run_khinchin(man, artifact):
    r_values = man.r_values or [2.0, 4.0, 8.0, 16.0]
    if man.coefficients is not None:
        vectors = [np.asarray(c, dtype=float) for c in man.coefficients]
    else:
        rng = np.random.default_rng(man.base_seed)
        vectors = [rng.standard_normal(man.vector_length)
                   for _ in range(man.vectors)]
    rows = []
    worst = 0.0
    for vi, c in enumerate(vectors):
        ests = khinchin_moments(c, r_values, man.samples,
                                base_seed=man.base_seed + vi)
        l2 = float(np.linalg.norm(c))
        for r, est in zip(r_values, ests):
            ratio = est / (np.sqrt(r) * l2)
            worst = max(worst, ratio)
            rows.append({"type": "point", "vector": vi, "r": r,
                         "estimate": est, "l2": l2, "ratio": ratio})
    aggregate = {"max_ratio": worst, "r_values": r_values,
                 "vectors": len(vectors), "samples": man.samples}
    return rows, aggregate, worst <= 1.2, []


_RUNNERS = {
    "randomize": _run_randomize,
    "evolve": _run_evolve,
    "solve": _run_solve,
    "tail": _run_tail,
    "scaling": _run_scaling,
    "theorem": _run_theorem,
    "khinchin": _run_khinchin,
}


def _write_csv(man: ExperimentManifest, rows: list[dict]) -> None:
    points = [r for r in rows if r.get("type") == "point"]
    if not points:
        return
    keys = sorted({k for row in points for k in row} - {"type"})
    with open(man.csv, "w", newline="") as fh:
        writer = csv_mod.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in points:
            writer.writerow({k: jsonable(row.get(k)) for k in keys})


def replay_run_record(path) -> tuple[bool, RunResult]:
    """Re-run the manifest embedded in a record and compare per-sample rows."""
    old = read_run_record(path)
    man = normalize_manifest(old["manifest"])
    man.out = str(path) + ".replay"
    man.csv = None
    result = run_manifest(man)
    same_rows = jsonable(result.rows) == jsonable(old["rows"])
    same_agg = (stable_aggregate(jsonable(result.aggregate))
                == stable_aggregate(old.get("aggregate", {})))
    return same_rows and same_agg, result


# --- argparse front end ---------------------------------------------------------

def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="JSON manifest path")
    parser.add_argument("--seed", type=int, help="override ensemble.base_seed")
    parser.add_argument("--samples", type=int, help="override ensemble.samples")
    parser.add_argument("--T", type=float, help="override time.T")
    parser.add_argument("--lambda", dest="lam", type=float,
                        help="override the lambda threshold")
    parser.add_argument("--out", help="override the output path")
    parser.add_argument("--csv", help="also export point rows as CSV")


def _apply_overrides(raw: dict, args: argparse.Namespace) -> dict:
    if args.seed is not None:
        raw.setdefault("ensemble", {})["base_seed"] = args.seed
    if args.samples is not None:
        raw.setdefault("ensemble", {})["samples"] = args.samples
    if args.T is not None:
        raw.setdefault("time", {})["T"] = args.T
    if args.lam is not None:
        raw["lambda"] = args.lam
    if args.out is not None:
        raw["out"] = args.out
    if args.csv is not None:
        raw["csv"] = args.csv
    return raw


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="randns",
        description="Randomized rough-data Navier-Stokes experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for kind in KINDS:
        _add_common_flags(sub.add_parser(kind, help=f"run a {kind} experiment"))
    replay = sub.add_parser("replay", help="re-run a record and verify it")
    replay.add_argument("record", help="NDJSON record path")
    args = parser.parse_args(argv)

    try:
        if args.verb == "replay":
            same, result = replay_run_record(args.record)
            print(f"replay {'matches' if same else 'DIFFERS'}: {args.record}")
            return EXIT_OK if same else EXIT_CONTRACT
        with open(args.manifest) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ManifestError("manifest must be a JSON object")
        raw = _apply_overrides(raw, args)
        if raw.get("kind") is None:
            raw["kind"] = args.verb
        elif raw["kind"] != args.verb:
            raise ManifestError(
                f"manifest kind {raw['kind']!r} does not match verb {args.verb!r}"
            )
        man = normalize_manifest(raw)
        result = run_manifest(man)
    except (ManifestError, SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(jsonable({"record": result.record_path,
                               "artifacts": result.artifact_paths,
                               **result.aggregate}), sort_keys=True))
    return EXIT_OK if result.contract_ok else EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
