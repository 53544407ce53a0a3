"""``rfsentinel`` command line: gen, train, classify, eval.

Exit codes: 0 success, 2 usage error, 3 data or file-format error,
4 numeric or model error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import evaluation as ev
from .catalogue import Catalogue, capture_seed
from .classifiers import KINDS, ClassifierConfig
from .dataset import open_dataset, read_raw, write_dataset
from .errors import (FileFormatError, InvalidArgumentError, NotFittedError, NumericError,
                     RfSentinelError)
from .markov import sweep_threshold
from .nca import NcaConfig
from .signals import NOISE, WIFI, SampledSignal, bluetooth, generate_noise, uav
from .transient import FEATURE_NAMES

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("rfsentinel")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _kinds(text: str) -> list[str]:
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise argparse.ArgumentTypeError(f"classifiers must be drawn from {','.join(KINDS)}")
    return kinds


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfsentinel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a capture dataset")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--n-uav", type=int, default=15, help="controller classes (15 or 17)")
    g.add_argument("--count", type=_positive_int, default=100, help="captures per controller")
    g.add_argument("--noise-count", type=int, default=0)
    g.add_argument("--wifi-count", type=int, default=0)
    g.add_argument("--bluetooth-count", type=int, default=0, help="captures per Bluetooth device")
    g.add_argument("--snr", type=float, default=25.0)
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="fit detector / NCA / classifier on a dataset")
    t.add_argument("--dataset", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--components", default="detector,nca,classifier")
    t.add_argument("--models", type=Path, help="existing bundle to extend")
    t.add_argument("--delta", type=float, default=3.5, help="detector threshold in noise sigmas")
    t.add_argument("--top-k", type=_positive_int, default=3)
    t.add_argument("--clf", choices=KINDS, default="knn")
    t.add_argument("--nca-lambda", type=float)
    t.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("classify", help="run the multistage pipeline on raw captures")
    c.add_argument("--models", required=True, type=Path)
    c.add_argument("--out", type=Path, help="JSON-lines output (default stdout)")
    c.add_argument("files", nargs="*", type=Path)

    e = sub.add_parser("eval", help="evaluation protocols with CSV/JSON reports and figures")
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--dataset", type=Path, help="evaluate stored UAV captures instead of generating")
    e.add_argument("--n-uav", type=int, default=15)
    e.add_argument("--count", type=_positive_int, default=100)
    e.add_argument("--snr-grid", type=_floats)
    e.add_argument("--train-snr", type=float, help="train at this SNR, test on each grid point")
    e.add_argument("--delta-grid", type=_floats, help="run the detector sweep instead")
    e.add_argument("--sweep-captures", type=_positive_int, default=2000,
                   help="signal and noise captures per sweep (half train, half test)")
    e.add_argument("--runs", type=_positive_int, default=10)
    e.add_argument("--features", choices=ev.FEATURE_SETS, default="top3")
    e.add_argument("--clf", type=_kinds, default=["knn", "randf", "da"])
    e.add_argument("--top-k", type=_positive_int, default=3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--no-plots", action="store_true")
    return p


# gen ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    if min(args.noise_count, args.wifi_count, args.bluetooth_count) < 0:
        raise UsageError("counts must be nonnegative")
    try:
        cat = Catalogue(n_uav=args.n_uav)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    jobs = [(uav(i), k) for i in range(cat.n_uav) for k in range(args.count)]
    jobs += [(NOISE, k) for k in range(args.noise_count)]
    jobs += [(WIFI, k) for k in range(args.wifi_count)]
    jobs += [(bluetooth(i), k) for i in range(len(cat.bluetooth_specs))
             for k in range(args.bluetooth_count)]
    captures = (cat.synthesize(lab, args.snr, capture_seed(args.seed, lab, k)) for lab, k in jobs)
    ds = write_dataset(args.out, captures, cat.sample_rate_hz)
    digest = hashlib.sha256((args.out / "manifest.json").read_bytes()).hexdigest()
    print(json.dumps({"out": str(args.out), "captures": len(ds), "manifest_sha256": digest}))
    return EXIT_OK


# train -------------------------------------------------------------------------

def cmd_train(args) -> int:
    components = [c.strip() for c in args.components.split(",") if c.strip()]
    bad = set(components) - set(ev.COMPONENTS)
    if bad or not components:
        raise UsageError(f"--components must be drawn from {','.join(ev.COMPONENTS)}")
    ds = open_dataset(args.dataset)
    captures = list(ds)
    base = ev.TrainedModels.load(args.models) if args.models else None
    models = ev.train_models(captures, components, delta_multiple=args.delta, top_k=args.top_k,
                             kind=args.clf, nca_config=NcaConfig(lam=args.nca_lambda),
                             classifier_config=ClassifierConfig(seed=args.seed), base=base)
    models.save(args.out)
    summary = {"out": str(args.out), "components": components}
    if models.nca is not None:
        summary["selected_features"] = [FEATURE_NAMES[i] for i in models.nca.selected_indices]
    print(json.dumps(summary))
    return EXIT_OK


# classify ----------------------------------------------------------------------

def cmd_classify(args) -> int:
    if not args.files:
        raise UsageError("no capture files given")
    models = ev.TrainedModels.load(args.models)
    lines = []
    for path in args.files:
        samples = read_raw(path).astype(float)
        signal = SampledSignal(samples, models.sample_rate_hz)
        lines.append(json.dumps(ev.run_multistage(signal, models).to_record(str(path)),
                                sort_keys=True, default=ev._json_default))
    text = "\n".join(lines) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# eval --------------------------------------------------------------------------

def _run_config(args) -> dict:
    """Flags embedded in reports; output locations are left out so reruns compare equal."""
    skip = {"out", "verbose", "command", "no_plots"}
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        cfg[k] = str(v) if isinstance(v, Path) else v
    return cfg


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _eval_sweep(args, out: Path, plots: bool) -> dict:
    cat = Catalogue(n_uav=args.n_uav)
    snr_grid = args.snr_grid or [-10.0, -5.0, 0.0, 5.0, 10.0]
    n = args.sweep_captures
    bursts = [cat.clean_burst(uav(i % cat.n_uav), capture_seed(args.seed, uav(i % cat.n_uav), i))
              for i in range(n)]
    noise = [generate_noise(cat.n_samples, 1.0, capture_seed(args.seed, NOISE, i),
                            cat.sample_rate_hz) for i in range(n)]
    rows = sweep_threshold(bursts, noise, args.delta_grid, snr_grid, seed=args.seed)
    csv = ["snr_db,delta_multiple,detection_accuracy,far,n_signal,n_noise"]
    csv += [f"{r.snr_db!r},{r.delta_multiple!r},{r.detection_accuracy!r},{r.far!r},"
            f"{r.n_signal},{r.n_noise}" for r in rows]
    _write(out / "detector_sweep.csv", "\n".join(csv) + "\n")
    payload = {"protocol": "detector_sweep", "run_config": _run_config(args),
               "rows": [r.__dict__ for r in rows],
               "trials_per_cell": {"signal": rows[0].n_signal, "noise": rows[0].n_noise}}
    if plots:
        from .plotting import plot_detector_sweep
        plot_detector_sweep(rows, out / "detector_sweep.png")
    return payload


def _eval_classification(args, out: Path, plots: bool) -> dict:
    protocol = ev.ProtocolConfig(runs=args.runs, top_k=args.top_k, seed=args.seed)
    reports: list[tuple[float, ev.EvaluationReport]] = []
    if args.dataset is not None:
        table = ev.fingerprint_table(list(open_dataset(args.dataset)))
        reports += [(table.snr_db, r) for r in
                    ev.monte_carlo_many(table, args.clf, args.features, protocol)]
    else:
        cat = Catalogue(n_uav=args.n_uav)
        train_table = None
        if args.train_snr is not None:
            train_table = ev.build_uav_table(cat, args.train_snr, args.count, args.seed)
        for snr in args.snr_grid or [25.0]:
            table = ev.build_uav_table(cat, snr, args.count, args.seed)
            if train_table is None:
                reps = ev.monte_carlo_many(table, args.clf, args.features, protocol)
            else:
                reps = ev.monte_carlo_many(train_table, args.clf, args.features, protocol, table)
            reports += [(snr, r) for r in reps]

    runs_csv = ["snr_db,classifier,feature_set,run,accuracy"]
    stats_csv = ["snr_db,classifier,feature_set,mean,median,q1,q3,min,max"]
    for snr, r in reports:
        snr_text = "" if snr is None or not math.isfinite(snr) else repr(float(snr))
        runs_csv += [f"{snr_text},{r.classifier},{r.feature_set},{i},{a!r}"
                     for i, a in enumerate(r.accuracies)]
        s = r.stats
        stats_csv.append(f"{snr_text},{r.classifier},{r.feature_set},"
                         + ",".join(repr(s[k]) for k in ("mean", "median", "q1", "q3", "min", "max")))
        tag = f"{r.classifier}_{r.feature_set}" + (f"_{snr_text}dB" if snr_text else "")
        _write(out / f"confusion_{tag}.csv", r.confusion_csv())
        if plots:
            from .plotting import plot_confusion
            plot_confusion(r, out / f"confusion_{tag}.png")
    _write(out / "accuracy_runs.csv", "\n".join(runs_csv) + "\n")
    _write(out / "accuracy_stats.csv", "\n".join(stats_csv) + "\n")

    snrs = sorted({snr for snr, _ in reports if snr is not None and math.isfinite(snr)})
    if plots:
        from .plotting import plot_accuracy_boxes, plot_accuracy_vs_snr, plot_feature_weights
        last = [r for snr, r in reports if snr == (snrs[-1] if snrs else snr)]
        plot_accuracy_boxes(last, out / "accuracy_boxplot.png")
        if len(snrs) > 1:
            rows = [ev.SnrRow(snr, r.classifier, r.feature_set, r.stats) for snr, r in reports]
            plot_accuracy_vs_snr(rows, out / "accuracy_vs_snr.png")
        if last and last[0].feature_weights:
            plot_feature_weights(np.mean(last[0].feature_weights, axis=0), FEATURE_NAMES,
                                 out / "nca_weights.png")
    return {"protocol": "classification", "run_config": _run_config(args),
            "reports": [{"snr_db": snr, **r.payload()} for snr, r in reports]}


def cmd_eval(args) -> int:
    if args.dataset is not None and (args.snr_grid or args.train_snr is not None):
        raise UsageError("--dataset fixes the data; it cannot be combined with --snr-grid/--train-snr")
    if args.delta_grid is not None and (args.dataset is not None or args.train_snr is not None):
        raise UsageError("--delta-grid runs the detector sweep on generated captures only")
    if args.delta_grid is not None and not args.delta_grid:
        raise UsageError("--delta-grid is empty")
    if args.snr_grid is not None and not args.snr_grid:
        raise UsageError("--snr-grid is empty")
    try:
        Catalogue(n_uav=args.n_uav)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    t0 = time.perf_counter()
    plots = not args.no_plots
    if args.delta_grid is not None:
        payload = _eval_sweep(args, out, plots)
    else:
        payload = _eval_classification(args, out, plots)
    _write(out / "report.json", ev.dumps(payload))
    _write(out / "run_log.json", ev.dumps({"started_unix": started,
                                           "runtime_s": time.perf_counter() - t0}))
    print(json.dumps({"out": str(out), "report": str(out / "report.json")}))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "classify": cmd_classify, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems with exit status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, NotFittedError) as exc:
        print(f"numeric/model error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileFormatError, InvalidArgumentError, RfSentinelError, OSError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
