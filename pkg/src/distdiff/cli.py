"""Command-line entry point: ``distdiff <command> [options]``.

Exit codes: 0 success, 1 invariant failure, 2 insufficient data,
3 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import acceptance, counterexample, ddf, models, wave
from .config import DEFAULT_K, DEFAULT_RESOLUTION, DEFAULT_SAMPLES, Tolerances
from .errors import (
    ChecksumError,
    CorruptModelError,
    CounterexampleBrokenError,
    DatasetVersionError,
    DistDiffError,
    IncompatibleDatasetError,
    InsufficientDataError,
    NoArrivalError,
    RequiresInstrumentedError,
    SeparationViolatedError,
)
from .invariants import HARD, dataset_checks
from .manifold import ManifoldModel, load_model, save_model
from .reconstruct import reports
from .reconstruct.embedding import match_datasets
from .reconstruct.pipeline import run_reconstruction

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INSUFFICIENT = 2
EXIT_CONFIG = 3

log = logging.getLogger("distdiff")

# library errors that mean the inputs themselves are unusable
CONFIG_ERRORS = (CorruptModelError, DatasetVersionError, ChecksumError, IncompatibleDatasetError,
                 SeparationViolatedError, ValueError)


class ConfigError(Exception):
    """Bad flags, unreadable inputs, or unwritable outputs."""


def _setup_logging() -> None:
    level = os.environ.get("DISTDIFF_LOG", "WARNING").upper()
    if level.isdigit():
        level = int(level)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def parse_tolerances(extra: list[str]) -> Tolerances:
    """Read ``--tol.<name>=<value>`` flags; anything else is a configuration error."""
    tol = Tolerances()
    for item in extra:
        if not item.startswith("--tol.") or "=" not in item:
            raise ConfigError(f"unrecognised argument {item!r}")
        name, value = item[len("--tol."):].split("=", 1)
        try:
            tol.override(name, float(value))
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return tol


def load_model_arg(spec: str | None, resolution: int = DEFAULT_RESOLUTION) -> ManifoldModel:
    """Built-in model name or a model JSON file."""
    spec = spec or "disc-in-torus"
    if spec in models.BUILTIN:
        return models.BUILTIN[spec](resolution)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"unknown model {spec!r}; built-ins: {', '.join(sorted(models.BUILTIN))}")
    return load_model(path)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _load_dataset(path) -> ddf.DDFDataset:
    if path is None:
        raise ConfigError("--dataset is required")
    try:
        return ddf.load_dataset(path)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc


# ---------------------------------------------------------------------------


def cmd_generate(args, tol: Tolerances) -> int:
    model = load_model_arg(args.model, args.resolution)
    out = _out_dir(args)
    fs = ddf.sample_F_points(model, args.K, strategy=args.strategy, seed=args.seed, anchors=args.anchors)
    X = ddf.uniform_hidden_points(model, args.samples, seed=args.seed + 1)
    ds = ddf.generate_dataset(model, X, fs, seed=args.seed, jobs=args.jobs)
    ddf.save_dataset(ds.blind_view(), out / "dataset.blind.ddf")
    if not args.blind:
        ddf.save_dataset(ds, out / "dataset.ddf")
    save_model(model, out / "model.json")
    reports.write_json(out / "provenance.json", {
        "model": model.name, "model_hash": model.model_hash, "K": ds.K, "samples": len(ds),
        "eps_solver": ds.eps_solver, "seed": args.seed, "blind": bool(args.blind),
        "tolerances": tol.as_dict()})
    print(f"wrote {len(ds)} samples (K={ds.K}, eps_solver={ds.eps_solver:.4g}) to {out}")
    return EXIT_OK


def cmd_reconstruct(args, tol: Tolerances) -> int:
    ds = _load_dataset(args.dataset)
    model = load_model_arg(args.model, args.resolution) if args.model else None
    out = _out_dir(args)
    rec = run_reconstruction(ds, model, tol, seed=args.seed, n_charts=args.charts, jobs=args.jobs)
    rec.write(out)
    acc = rec.summary.get("chart_acceptance")
    print(f"charts accepted: {'n/a' if acc is None else f'{acc:.1%}'}; gaps: {len(rec.gaps)}")
    return EXIT_OK


def cmd_verify(args, tol: Tolerances) -> int:
    code = EXIT_OK
    matrix: dict = {"tolerances": tol.as_dict()}
    if args.dataset is not None:
        ds = _load_dataset(args.dataset)
        if ds.blind:
            raise RequiresInstrumentedError("verify needs an instrumented dataset (with ground truth)")
        if len(ds) == 0:
            raise InsufficientDataError("dataset has no samples")
        model = load_model_arg(args.model, args.resolution)
        checks = dataset_checks(ds, model, tol, jobs=args.jobs)
        matrix["checks"] = [c.as_dict() for c in checks]
        for c in checks:
            print(f"[{'PASS' if c.passed else 'FAIL'}] {c.kind:9s} {c.name}: value={c.value} limit={c.limit}")
        if any(not c.passed and c.kind == HARD for c in checks):
            code = EXIT_INVARIANT
    elif not args.full:
        raise ConfigError("verify needs --dataset (and --model) or --full")
    if args.full:
        results = acceptance.run(jobs=args.jobs, echo=print)
        matrix["acceptance"] = [{"number": r.number, "title": r.title, "passed": r.passed,
                                 "metrics": r.metrics, "seconds": r.seconds} for r in results]
        if not all(r.passed for r in results):
            code = EXIT_INVARIANT
        if args.out:
            _acceptance_plots(results, _out_dir(args))
    if args.out:
        reports.write_json(_out_dir(args) / "verify.json", matrix)
    return code


def _acceptance_plots(results, out: Path) -> None:
    for r in results:
        if "drift" in r.artifacts:
            reports.svg_series(out / "matveev_drift.svg", r.artifacts["drift"],
                               "relative I0 drift along geodesics")
        if "overlay" in r.artifacts:
            bg, groups, curves = r.artifacts["overlay"]
            reports.svg_overlay(out / "sigma_overlay.svg", bg, groups, curves,
                                "sigma-sets and traced geodesics (first anchor)")


def _events_for(model: ManifoldModel, n: int, seed: int, min_f_distance: float):
    from scipy.ndimage import distance_transform_edt

    if n <= 0:
        return []
    far = distance_transform_edt(model.m_mask) * model.h >= min_f_distance
    region = model.with_region(far)
    pts = ddf.stratified_hidden_points(region, n, seed=seed, min_sep=5.5 * model.h)
    rng = np.random.default_rng(seed)
    return [wave.SourceEvent(p, float(rng.uniform(0.0, 2.0))) for p in pts]


def cmd_wave(args, tol: Tolerances) -> int:
    model = load_model_arg(args.model or "four-disc-torus", args.resolution)
    out = _out_dir(args)
    if args.events_file:
        events = wave.load_events(args.events_file)
    else:
        events = _events_for(model, args.events, args.seed, args.min_f_distance * model.h)
    if not events:
        raise InsufficientDataError("no source events")
    fs = ddf.sample_F_points(model, args.K, seed=args.seed)
    try:
        rows = wave.arrival_dataset_rows(model, events, fs, jobs=args.jobs)
    except NoArrivalError as exc:
        raise InsufficientDataError(str(exc)) from exc
    wave.save_events(events, out / "events.json")
    Y = np.array([e.y for e in events])
    eik = ddf.generate_dataset(model, Y, fs, seed=args.seed, jobs=args.jobs)
    # generate_dataset shuffles; undo it so rows line up with events
    order = np.array([int(np.argmin(np.linalg.norm(eik.ground_truth - y, axis=1))) for y in Y])
    eik = ddf.with_samples(eik, eik.rho[order], eik.ground_truth[order])
    arrivals = ddf.with_samples(eik, rows, None)
    ddf.save_dataset(arrivals, out / "wave_dataset.blind.ddf")
    dt = wave.WaveOperator(model).max_dt()
    bound = 4 * model.h + 4 * dt
    err = np.abs(rows - eik.rho).max(axis=1)
    corr = match_datasets(eik, arrivals, threshold=bound)
    rate = float(np.mean(corr.pairing == np.arange(len(events))))
    reports.write_csv(out / "wave_vs_eikonal.csv", ["event", "s", "sup_error", "matched_to"],
                      [[i, e.s, float(err[i]), int(corr.pairing[i])] for i, e in enumerate(events)])
    summary = {"events": len(events), "dt": dt, "h": model.h, "bound": bound,
               "max_sup_error": float(err.max()), "within_bound": bool(np.all(err <= bound)),
               "match_rate": rate, "tolerances": tol.as_dict()}
    reports.write_json(out / "wave_report.json", summary)
    print(f"{len(events)} events: max error {err.max() / model.h:.2f}h "
          f"(bound {bound / model.h:.2f}h), match rate {rate:.1%}")
    return EXIT_OK if summary["within_bound"] and rate == 1.0 else EXIT_INVARIANT


def cmd_counterexample(args, tol: Tolerances) -> int:
    ranks = tuple(int(r) for r in args.ranks.split(","))
    g1, g2 = counterexample.build_example_graphs(args.arm_length, ranks)
    report = counterexample.compare(g1, g2)
    if args.out:
        out = _out_dir(args)
        (out / "counterexample.json").write_text(report.to_json() + "\n")
        g1.to_edge_csv(out / "G1_edges.csv")
        g2.to_edge_csv(out / "G2_edges.csv")
    print(f"{report.verdict}: {report.n_vectors} vectors, datasets equal={report.datasets_equal}, "
          f"non-isomorphic={report.non_isomorphic}")
    try:
        counterexample.assert_counterexample(g1, g2)
    except CounterexampleBrokenError:
        return EXIT_INVARIANT
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="built-in model name or model JSON file")
    common.add_argument("--dataset", help="dataset file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker cap")
    common.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    common.add_argument("--blind", action="store_true", help="write only the blind dataset")

    parser = argparse.ArgumentParser(prog="distdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="simulate a distance-difference dataset")
    p.add_argument("-K", "--K", type=int, default=DEFAULT_K, help="number of F-samples")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--anchors", type=int, default=0, help="gradient-stencil anchors for sigma-sets")
    p.add_argument("--strategy", default=ddf.BOUNDARY_BIASED, choices=[ddf.BOUNDARY_BIASED, ddf.UNIFORM])
    p.set_defaults(func=cmd_generate, out="distdiff-out")

    p = sub.add_parser("reconstruct", parents=[common], help="run the reconstruction pipeline")
    p.add_argument("--charts", type=int, default=64, help="number of chart centres")
    p.set_defaults(func=cmd_reconstruct, out="distdiff-out")

    p = sub.add_parser("verify", parents=[common], help="check dataset invariants")
    p.add_argument("--full", action="store_true", help="also run the acceptance suite")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("wave", parents=[common], help="wave arrivals vs eikonal data")
    p.add_argument("--events", type=int, default=50, help="number of random events")
    p.add_argument("--events-file", help="JSON list of {y, s, kappa}")
    p.add_argument("-K", "--K", type=int, default=DEFAULT_K)
    p.add_argument("--min-f-distance", type=float, default=10.0, help="event distance from F, in h")
    p.set_defaults(func=cmd_wave, out="distdiff-out")

    p = sub.add_parser("counterexample", parents=[common], help="graph non-uniqueness example")
    p.add_argument("--arm-length", default="20")
    p.add_argument("--ranks", default=",".join(map(str, counterexample.DEFAULT_RANKS)))
    p.set_defaults(func=cmd_counterexample)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        tol = parse_tolerances(extra)
        return args.func(args, tol)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientDataError, RequiresInstrumentedError) as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except DistDiffError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, CONFIG_ERRORS) else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
