"""Training bundles, the multistage classifier and the evaluation protocol.

The protocol follows the usual fingerprinting setup: stratified 80/20 splits,
repeated Monte-Carlo runs, box-plot statistics and confusion matrices, either
on all informative features or on the NCA top-k subset.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import interference as itf
from ._parallel import ordered_map
from .catalogue import Catalogue, capture_seed
from .classifiers import (ClassifierConfig, TrainedClassifier, fit_classifier,
                          informative_columns)
from .errors import InvalidArgumentError, NotFittedError, RfSentinelError
from .markov import DetectorModel, detect, fit_detector
from .nca import FeatureWeights, NcaConfig, fit_weights, nca_dataset
from .signals import NOISE, SampledSignal, uav
from .transient import (FEATURE_NAMES, SpectrogramConfig, TransientConfig,
                        fingerprint_capture)
from .wavelet import preprocess

FEATURE_SETS = ("all", "top3")


# Feature tables -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Fingerprints of UAV captures, one row per capture."""

    matrix: np.ndarray
    controller_ids: np.ndarray
    seeds: np.ndarray
    snr_db: float

    def to_csv(self) -> str:
        lines = [",".join(("label", "controller_id", "snr_db") + FEATURE_NAMES)]
        snr = "" if math.isinf(self.snr_db) else repr(float(self.snr_db))
        for row, cid in zip(self.matrix, self.controller_ids):
            lines.append(",".join(["uav", str(int(cid)), snr] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


def fingerprint_table(captures: Sequence[SampledSignal],
                      config: TransientConfig = TransientConfig()) -> FeatureTable:
    caps = [c for c in captures if c.label.kind == "uav"]
    if not caps:
        raise InvalidArgumentError("no UAV captures to fingerprint")
    rows = ordered_map(lambda c: fingerprint_capture(c, config).as_array(), caps)
    snrs = {c.snr_db for c in caps}
    snr = snrs.pop() if len(snrs) == 1 and None not in snrs else math.nan
    return FeatureTable(np.array(rows), np.array([c.label.ident for c in caps]),
                        np.array([c.seed for c in caps]), snr)


def build_uav_table(catalogue: Catalogue, snr_db: float, per_class: int, seed: int,
                    config: TransientConfig = TransientConfig()) -> FeatureTable:
    """Synthesize ``per_class`` captures per controller and fingerprint them."""
    if per_class < 1:
        raise InvalidArgumentError("per_class must be positive")
    jobs = [(uav(c), capture_seed(seed, uav(c), k))
            for c in range(catalogue.n_uav) for k in range(per_class)]

    def one(job):
        label, s = job
        return fingerprint_capture(catalogue.synthesize(label, snr_db, s), config).as_array()

    rows = ordered_map(one, jobs)
    return FeatureTable(np.array(rows), np.array([lab.ident for lab, _ in jobs]),
                        np.array([s for _, s in jobs]), float(snr_db))


# Protocol -------------------------------------------------------------------------

def split(labels, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified, seeded train/test indices; every class keeps ``round(p * n_c)`` test rows."""
    y = np.asarray(labels)
    if not 0 < test_fraction < 1:
        raise InvalidArgumentError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 5:
            raise InvalidArgumentError(f"class {c} has {idx.size} rows; at least 5 needed")
        idx = rng.permutation(idx)
        n_test = int(round(test_fraction * idx.size))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def confusion_matrix(predictions, truths, catalogue: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Counts ``[truth, predicted]`` and row-normalized confusion probabilities."""
    pred, true = list(predictions), list(truths)
    if len(pred) != len(true):
        raise InvalidArgumentError("predictions and truths differ in length")
    index = {c: i for i, c in enumerate(catalogue)}
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    for t, p in zip(true, pred):
        if t not in index or p not in index:
            raise InvalidArgumentError(f"label outside the catalogue: {t if t not in index else p}")
        counts[index[t], index[p]] += 1
    totals = counts.sum(axis=1, keepdims=True)
    rho = np.divide(counts, totals, out=np.zeros(counts.shape), where=totals > 0)
    return counts, rho


def box_stats(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"mean": float(v.mean()), "median": float(med), "q1": float(q1), "q3": float(q3),
            "min": float(v.min()), "max": float(v.max())}


@dataclass(eq=False)
class EvaluationReport:
    classifier: str
    feature_set: str
    classes: list
    accuracies: list[float]
    confusion: np.ndarray
    selected_features: list[list[int]]
    config: dict
    runtime_s: float = 0.0
    feature_weights: list[list[float]] = field(default_factory=list)

    @property
    def stats(self) -> dict:
        return box_stats(self.accuracies)

    @property
    def rho(self) -> np.ndarray:
        totals = self.confusion.sum(axis=1, keepdims=True)
        return np.divide(self.confusion, totals, out=np.zeros(self.confusion.shape),
                         where=totals > 0)

    def payload(self) -> dict:
        """Deterministic content; runtime is kept out so reruns compare byte for byte."""
        return {"classifier": self.classifier, "feature_set": self.feature_set,
                "classes": [int(c) for c in self.classes], "accuracies": self.accuracies,
                "stats": self.stats, "confusion": self.confusion.tolist(),
                "rho": self.rho.tolist(),
                "selected_features": [[FEATURE_NAMES[i] for i in s] for s in self.selected_features],
                "feature_weights": self.feature_weights,
                "config": self.config}

    def confusion_csv(self) -> str:
        names = [f"uav:{c}" for c in self.classes]
        lines = ["truth," + ",".join(names)]
        lines += [names[i] + "," + ",".join(str(int(v)) for v in row)
                  for i, row in enumerate(self.confusion)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProtocolConfig:
    runs: int = 10
    test_fraction: float = 0.2
    top_k: int = 3
    seed: int = 0
    nca: NcaConfig = NcaConfig()
    classifier: ClassifierConfig = ClassifierConfig()


def _run_seeds(seed: int, runs: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]


def monte_carlo_many(table: FeatureTable, kinds: Sequence[str], feature_set: str = "all",
                     protocol: ProtocolConfig = ProtocolConfig(),
                     test_table: Optional[FeatureTable] = None) -> list[EvaluationReport]:
    """Monte-Carlo evaluation of several classifiers on shared splits and NCA fits.

    ``test_table`` (same rows, other SNR) evaluates models trained on ``table``.
    """
    if feature_set not in FEATURE_SETS:
        raise InvalidArgumentError(f"feature_set must be one of {FEATURE_SETS}")
    if protocol.runs < 1:
        raise InvalidArgumentError("runs must be positive")
    x, y = table.matrix, table.controller_ids
    x_test = x if test_table is None else test_table.matrix
    if x_test.shape != x.shape:
        raise InvalidArgumentError("test table must match the training table row for row")
    classes = sorted(int(c) for c in np.unique(y))
    reports = {k: EvaluationReport(k, feature_set, classes, [],
                                   np.zeros((len(classes), len(classes)), dtype=np.int64), [],
                                   _config_snapshot(table, feature_set, protocol, test_table))
               for k in kinds}
    t0 = time.perf_counter()
    for run_seed in _run_seeds(protocol.seed, protocol.runs):
        tr, te = split(y, protocol.test_fraction, run_seed)
        cols = informative_columns(x[tr])
        if feature_set == "top3":
            ds = nca_dataset(x[tr][:, cols], y[tr], [FEATURE_NAMES[i] for i in cols])
            weights = fit_weights(ds, protocol.nca, top_k=protocol.top_k)
            selected = [cols[i] for i in weights.selected_indices]
            full = np.zeros(x.shape[1])
            full[cols] = weights.w
        else:
            selected = cols
            full = None
        clf_config = ClassifierConfig(**{**asdict(protocol.classifier), "seed": run_seed})
        for kind, rep in reports.items():
            clf = fit_classifier(kind, x[tr], y[tr], selected, clf_config)
            pred = clf.predict(x_test[te])
            counts, _ = confusion_matrix(pred, y[te].tolist(), classes)
            rep.confusion += counts
            rep.accuracies.append(float(np.trace(counts) / counts.sum()))
            rep.selected_features.append(list(selected))
            if full is not None:
                rep.feature_weights.append(full.tolist())
    elapsed = time.perf_counter() - t0
    for rep in reports.values():
        rep.runtime_s = elapsed / len(reports)
    return list(reports.values())


def monte_carlo(table: FeatureTable, classifier_kind: str, feature_set: str = "all",
                protocol: ProtocolConfig = ProtocolConfig()) -> EvaluationReport:
    return monte_carlo_many(table, [classifier_kind], feature_set, protocol)[0]


def _config_snapshot(table, feature_set, protocol, test_table) -> dict:
    snap = {"feature_set": feature_set, "n_rows": int(table.matrix.shape[0]),
            "train_snr_db": _json_float(table.snr_db),
            "test_snr_db": _json_float(table.snr_db if test_table is None else test_table.snr_db),
            **{k: v for k, v in asdict(protocol).items()}}
    return json.loads(json.dumps(snap, default=_json_default))


@dataclass(frozen=True)
class SnrRow:
    snr_db: float
    classifier: str
    feature_set: str
    stats: dict


def accuracy_vs_snr(snr_grid: Sequence[float], kinds: Sequence[str], feature_set: str = "all",
                    catalogue: Catalogue = Catalogue(), per_class: int = 100,
                    protocol: ProtocolConfig = ProtocolConfig(), data_seed: int = 0,
                    train_snr_db: Optional[float] = None) -> list[SnrRow]:
    """Regenerate the dataset at every SNR and run the Monte-Carlo protocol.

    By default models are retrained at each SNR; ``train_snr_db`` instead trains
    once per split at that SNR and tests on each grid point.
    """
    if len(snr_grid) == 0:
        raise InvalidArgumentError("empty SNR grid")
    train_table = None
    if train_snr_db is not None:
        train_table = build_uav_table(catalogue, train_snr_db, per_class, data_seed)
    rows = []
    for snr in snr_grid:
        table = build_uav_table(catalogue, snr, per_class, data_seed)
        if train_table is None:
            reports = monte_carlo_many(table, kinds, feature_set, protocol)
        else:
            reports = monte_carlo_many(train_table, kinds, feature_set, protocol, table)
        rows.extend(SnrRow(float(snr), r.classifier, feature_set, r.stats) for r in reports)
    return rows


# Trained bundle and the multistage path -------------------------------------------

@dataclass(eq=False)
class TrainedModels:
    sample_rate_hz: float
    detector: Optional[DetectorModel] = None
    interference: itf.InterferenceConfig = itf.InterferenceConfig()
    transient: TransientConfig = TransientConfig()
    nca: Optional[FeatureWeights] = None
    classifier: Optional[TrainedClassifier] = None

    def to_dict(self) -> dict:
        return {"format_version": 1, "sample_rate_hz": self.sample_rate_hz,
                "detector": None if self.detector is None else self.detector.to_dict(),
                "interference": asdict(self.interference),
                "transient": asdict(self.transient),
                "nca": None if self.nca is None else self.nca.to_dict(),
                "classifier": None if self.classifier is None else self.classifier.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModels":
        t = dict(d["transient"])
        t["spectrogram"] = SpectrogramConfig(**t["spectrogram"])
        return cls(float(d["sample_rate_hz"]),
                   None if d.get("detector") is None else DetectorModel.from_dict(d["detector"]),
                   itf.InterferenceConfig(**d["interference"]),
                   TransientConfig(**t),
                   None if d.get("nca") is None else FeatureWeights.from_dict(d["nca"]),
                   None if d.get("classifier") is None
                   else TrainedClassifier.from_dict(d["classifier"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModels":
        return cls.from_dict(json.loads(Path(path).read_text()))


COMPONENTS = ("detector", "nca", "classifier")


def train_models(captures: Sequence[SampledSignal], components: Iterable[str] = COMPONENTS, *,
                 delta_multiple: float = 3.5, top_k: int = 3, kind: str = "knn",
                 nca_config: NcaConfig = NcaConfig(),
                 classifier_config: ClassifierConfig = ClassifierConfig(),
                 transient: TransientConfig = TransientConfig(),
                 interference: itf.InterferenceConfig = itf.InterferenceConfig(),
                 base: Optional[TrainedModels] = None) -> TrainedModels:
    """Fit the requested components on labelled captures.

    The detector contrasts noise captures with everything else; NCA and the
    classifier use UAV captures only. The classifier uses the NCA selection
    when one is present in the bundle.
    """
    components = set(components)
    unknown = components - set(COMPONENTS)
    if unknown:
        raise InvalidArgumentError(f"unknown components {sorted(unknown)}")
    if not captures:
        raise InvalidArgumentError("no training captures")
    rate = captures[0].sample_rate_hz
    models = base or TrainedModels(rate, interference=interference, transient=transient)
    if "detector" in components:
        noise = [c for c in captures if c.label == NOISE]
        signal = [c for c in captures if c.label != NOISE]
        if not noise or not signal:
            raise InvalidArgumentError("detector training needs noise and emission captures")
        models.detector = fit_detector(signal, noise, delta_multiple)
    if components & {"nca", "classifier"}:
        table = fingerprint_table(captures, models.transient)
        cols = informative_columns(table.matrix)
        if "nca" in components:
            ds = nca_dataset(table.matrix[:, cols], table.controller_ids,
                             [FEATURE_NAMES[i] for i in cols])
            w = fit_weights(ds, nca_config)
            full = np.zeros(len(FEATURE_NAMES))
            full[cols] = w.w
            models.nca = FeatureWeights(full, w.objective_trace, w.lam, w.kernel_width,
                                        w.iterations, w.converged).with_selection(top_k)
        if "classifier" in components:
            selected = list(models.nca.selected_indices) if models.nca is not None else cols
            models.classifier = fit_classifier(kind, table.matrix, table.controller_ids,
                                               selected, classifier_config)
    return models


@dataclass(frozen=True)
class MultistageResult:
    verdict: str                       # noise | wifi | bluetooth | uav:<id> | undetermined
    stage_trace: tuple[str, ...]
    failed_stage: Optional[str] = None
    detail: dict = field(default_factory=dict)

    def to_record(self, file: str = "") -> dict:
        return {"file": file, "verdict": self.verdict, "stages": list(self.stage_trace),
                "failed_stage": self.failed_stage, **self.detail}


def run_multistage(capture: SampledSignal, models: TrainedModels) -> MultistageResult:
    """Detection, bandwidth triage, FSK triage, then controller classification."""
    if models.detector is None or models.classifier is None:
        raise NotFittedError("bundle needs a fitted detector and classifier")
    trace: list[str] = []
    detail: dict = {}
    stage = "detection"
    try:
        trace.append(stage)
        det = detect(preprocess(capture), models.detector)
        detail["log_posterior_signal"] = det.log_posterior_signal
        detail["log_posterior_noise"] = det.log_posterior_noise
        if not det.is_signal:
            return MultistageResult("noise", tuple(trace), None, detail)

        stage = "bandwidth"
        trace.append(stage)
        cfg = models.interference
        bw = itf.occupied_bandwidth(capture, cfg.power_fraction,
                                    subtract_floor=cfg.subtract_noise_floor)
        detail["bandwidth_hz"] = bw
        if itf.classify_bandwidth(bw, cfg.wifi_threshold_hz) == itf.WIFI:
            return MultistageResult("wifi", tuple(trace), None, detail)

        stage = "demodulation"
        trace.append(stage)
        verdict = itf.classify_interference(itf.modulation_features(capture, cfg), cfg)
        f = verdict.features
        detail.update(freq_deviation_hz=f.freq_deviation_hz, symbol_duration_s=f.symbol_duration_s,
                      start_index=f.start_index)
        if verdict.verdict == itf.BLUETOOTH:
            return MultistageResult("bluetooth", tuple(trace), None, detail)

        stage = "fingerprint"
        trace.append(stage)
        row = fingerprint_capture(capture, models.transient).as_array()

        stage = "classification"
        trace.append(stage)
        controller = int(models.classifier.predict(row[None, :])[0])
        return MultistageResult(str(uav(controller)), tuple(trace), None, detail)
    except RfSentinelError as exc:
        detail["error"] = f"{type(exc).__name__}: {exc}"
        return MultistageResult("undetermined", tuple(trace), stage, detail)


# JSON helpers ---------------------------------------------------------------------

def _json_float(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(payload) -> str:
    """Canonical JSON used for every report file."""
    return json.dumps(payload, sort_keys=True, indent=1, default=_json_default) + "\n"
