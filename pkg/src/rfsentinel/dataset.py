"""On-disk capture datasets: a JSON manifest plus headerless float32 files."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import FileFormatError, InvalidArgumentError
from .signals import SampledSignal, SignalLabel

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    label: SignalLabel
    snr_db: Optional[float]
    seed: int
    n_samples: int

    def to_dict(self) -> dict:
        d = {"file": self.file, "label": self.label.kind}
        if self.label.ident is not None:
            d["controller_id"] = self.label.ident
        d["snr_db"] = None if self.snr_db is None or math.isinf(self.snr_db) else self.snr_db
        d["seed"] = self.seed
        d["n_samples"] = self.n_samples
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        try:
            label = SignalLabel(d["label"], d.get("controller_id"))
            return cls(str(d["file"]), label, d.get("snr_db"), int(d["seed"]), int(d["n_samples"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"bad manifest entry {d!r}: {exc}") from exc


@dataclass(frozen=True)
class Dataset:
    root: Path
    sample_rate_hz: float
    entries: tuple[ManifestEntry, ...]

    def load(self, entry: ManifestEntry) -> SampledSignal:
        x = read_raw(self.root / entry.file)
        if x.size != entry.n_samples:
            raise FileFormatError(f"{entry.file}: {x.size} samples, manifest says {entry.n_samples}")
        snr = math.inf if entry.snr_db is None else entry.snr_db
        return SampledSignal(x.astype(float), self.sample_rate_hz, entry.label, entry.seed, snr)

    def __iter__(self):
        return (self.load(e) for e in self.entries)

    def __len__(self):
        return len(self.entries)


def write_raw(path: os.PathLike, samples: np.ndarray) -> None:
    np.asarray(samples, dtype="<f4").tofile(path)


def read_raw(path: os.PathLike) -> np.ndarray:
    path = Path(path)
    try:
        size = path.stat().st_size
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    if size % 4:
        raise FileFormatError(f"{path}: length {size} is not a multiple of 4 bytes")
    return np.fromfile(path, dtype="<f4")


def write_dataset(out_dir: os.PathLike, captures: Iterable[SampledSignal],
                  sample_rate_hz: float) -> Dataset:
    """Write captures and the manifest; file names follow capture order."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sig in enumerate(captures):
        if sig.sample_rate_hz != sample_rate_hz:
            raise InvalidArgumentError("all captures must share the dataset sample rate")
        name = f"{i:06d}_{str(sig.label).replace(':', '')}.f32"
        write_raw(root / name, sig.samples)
        entries.append(ManifestEntry(name, sig.label, sig.snr_db, sig.seed, sig.n_samples))
    manifest = {"format_version": FORMAT_VERSION, "sample_rate_hz": sample_rate_hz,
                "entries": [e.to_dict() for e in entries]}
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return Dataset(root, sample_rate_hz, tuple(entries))


def open_dataset(root: os.PathLike) -> Dataset:
    root = Path(root)
    path = root / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise FileFormatError(f"missing manifest {path}") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported format_version {manifest.get('format_version')!r}")
    try:
        rate = float(manifest["sample_rate_hz"])
        entries = tuple(ManifestEntry.from_dict(d) for d in manifest["entries"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return Dataset(root, rate, entries)
