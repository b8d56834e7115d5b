"""ROI time-series datasets: CSV ingestion, synthetic subjects, stratified folds.

Canonical CSV layout, one row per (subject, ROI)::

    subject_id,group,roi,t0,...,t139

with ``group`` 0 (healthy) or 1 (EMCI) and ``roi`` in 1..116.
"""
from __future__ import annotations

import configparser
import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import DataError, ParseError, ShapeError

N_ROIS = 116
SERIES_LEN = 140
TR_SECONDS = 3.0
HEADER = ["subject_id", "group", "roi"] + [f"t{i}" for i in range(SERIES_LEN)]
TOP9_ROIS = (1, 84, 18, 17, 39, 38, 23, 92, 110)


@dataclass(frozen=True)
class Sample:
    series: np.ndarray
    label: int
    subject_id: str
    roi: int


@dataclass
class SubjectRecord:
    subject_id: str
    label: int
    matrix: np.ndarray  # (116, 140), row r is ROI r + 1

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (N_ROIS, SERIES_LEN):
            raise ShapeError(f"subject {self.subject_id}: matrix shape {self.matrix.shape}")
        if self.label not in (0, 1):
            raise DataError(f"subject {self.subject_id}: label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train: np.ndarray
    test: np.ndarray


# ---------------------------------------------------------------- CSV

def save_dataset(records, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for rec in records:
            for r in range(N_ROIS):
                writer.writerow([rec.subject_id, rec.label, r + 1, *map(repr, rec.matrix[r].tolist())])
    return path


def load_dataset(path) -> list[SubjectRecord]:
    """Read and validate a dataset CSV; subjects keep their file order."""
    rows: dict[str, dict] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != HEADER[:3]:
            raise ParseError("expected header subject_id,group,roi,t0,...", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise ShapeError(
                    f"line {line_no}: row has {len(row) - 3} time points, expected {SERIES_LEN}"
                )
            sid = row[0]
            try:
                group = int(row[1])
                roi = int(row[2])
                values = np.array(row[3:], dtype=float)
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from None
            if group not in (0, 1):
                raise ParseError(f"group must be 0 or 1, got {group}", line=line_no)
            if not 1 <= roi <= N_ROIS:
                raise ParseError(f"roi {roi} outside 1..{N_ROIS}", line=line_no)
            entry = rows.setdefault(sid, {"label": group, "series": {}})
            if entry["label"] != group:
                raise ParseError(f"subject {sid} has conflicting group labels", line=line_no)
            if roi in entry["series"]:
                raise ParseError(f"subject {sid} repeats roi {roi}", line=line_no)
            entry["series"][roi] = values

    records = []
    for sid, entry in rows.items():
        missing = set(range(1, N_ROIS + 1)) - entry["series"].keys()
        if missing:
            raise DataError(f"subject {sid} is missing {len(missing)} ROIs, e.g. {min(missing)}")
        matrix = np.stack([entry["series"][r] for r in range(1, N_ROIS + 1)])
        records.append(SubjectRecord(sid, entry["label"], matrix))
    return records


def standardize_series(x, axis=-1):
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=axis, keepdims=True)
    std = x.std(axis=axis, keepdims=True)
    return (x - mean) / np.where(std > 0, std, 1.0)


def standardize_records(records) -> list[SubjectRecord]:
    return [SubjectRecord(r.subject_id, r.label, standardize_series(r.matrix)) for r in records]


def roi_slice(records, roi: int) -> list[Sample]:
    if not 1 <= roi <= N_ROIS:
        raise DataError(f"roi {roi} outside 1..{N_ROIS}")
    return [Sample(rec.matrix[roi - 1], rec.label, rec.subject_id, roi) for rec in records]


def labels_of(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples.astype(int)
    return np.array([s.label if isinstance(s, Sample) else int(s) for s in samples], dtype=int)


# ---------------------------------------------------------------- folds and weights

def stratified_kfold(samples, k: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Shuffle each class, then deal its members round-robin over the folds.

    Class 1 starts dealing where class 0 stopped, which keeps the fold sizes
    within one sample of each other as well.
    """
    labels = labels_of(samples)
    rng = np.random.default_rng(seed)
    assignment = np.empty(labels.size, dtype=int)
    start = 0
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        assignment[members] = (start + np.arange(members.size)) % k
        start = (start + members.size) % k
    everything = np.arange(labels.size)
    return [
        FoldSplit(f, everything[assignment != f], everything[assignment == f])
        for f in range(k)
    ]


def class_weights(samples) -> np.ndarray:
    """w_c = N / (2 N_c)."""
    labels = labels_of(samples)
    counts = np.bincount(labels, minlength=2)
    if labels.size == 0 or np.any(counts == 0):
        raise DataError(f"class weights need both classes present, counts {counts.tolist()}")
    return labels.size / (2.0 * counts)


# ---------------------------------------------------------------- synthetic data

@dataclass
class SyntheticConfig:
    n_healthy: int = 200
    n_emci: int = 200
    separation: float = 1.0
    seed: int = 0
    affected_rois: tuple = TOP9_ROIS
    ar_coef: float = 0.5
    amplitude: float = 2.0
    band_hz: tuple = (0.01, 0.1)
    n_components: int = 1
    freq_jitter_hz: float = 0.002
    coupling_seed: int | None = None
    coupling_targets: tuple = ()
    coupling_strength: float = 1.0

    @classmethod
    def from_file(cls, path) -> "SyntheticConfig":
        """Read the ``[synthetic]`` section of an INI-style key = value file."""
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        section = parser["synthetic"] if parser.has_section("synthetic") else parser[parser.default_section]
        return cls.from_mapping(section)

    @classmethod
    def from_mapping(cls, mapping) -> "SyntheticConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            key = key.replace("-", "_")
            if key not in known:
                raise DataError(f"unknown synthetic config key {key!r}")
            kwargs[key] = _coerce(known[key].default, raw)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(default, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    raw = raw.strip()
    if isinstance(default, tuple):
        items = [v for v in raw.replace(",", " ").split() if v]
        cast = float if default and isinstance(default[0], float) else int
        return tuple(cast(v) for v in items)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int) or default is None:
        return None if raw.lower() in ("", "none") else int(raw)
    return float(raw)


def _ar1(rng, shape, coef, burn=50):
    noise = rng.standard_normal(shape[:-1] + (shape[-1] + burn,))
    return lfilter([1.0], [1.0, -coef], noise, axis=-1)[..., burn:]


def _band_component(rng, n_subjects, n_rois, cfg):
    """Unit-variance in-band oscillation, shape (n_subjects, n_rois, 140).

    Each ROI gets ``n_components`` frequencies drawn once per dataset from the
    band; phases are drawn per subject, with a small per-subject frequency jitter.
    """
    t = np.arange(SERIES_LEN) * TR_SECONDS
    lo, hi = cfg.band_hz
    base = rng.uniform(lo, hi, size=(1, n_rois, cfg.n_components, 1))
    jitter = rng.normal(0.0, cfg.freq_jitter_hz, size=(n_subjects, n_rois, cfg.n_components, 1))
    freqs = np.clip(base + jitter, lo, hi)
    phases = rng.uniform(0, 2 * np.pi, size=(n_subjects, n_rois, cfg.n_components, 1))
    wave = np.sin(2 * np.pi * freqs * t + phases).sum(axis=2)
    return standardize_series(wave)


def generate_synthetic(config: SyntheticConfig | None = None, **overrides) -> list[SubjectRecord]:
    """AR(1) background for every ROI; EMCI subjects get an in-band oscillation.

    The oscillation is added to ``affected_rois`` with amplitude
    ``amplitude * separation``. If ``coupling_seed`` is set, EMCI subjects also
    get ``coupling_strength * separation`` times the seed ROI's series added to
    each of ``coupling_targets``. Every series is standardised at the end, so
    ``separation = 0`` makes the two groups identically distributed.
    """
    cfg = config or SyntheticConfig()
    if overrides:
        cfg = SyntheticConfig(**{**cfg.to_dict(), **overrides})
    if cfg.n_healthy < 1 or cfg.n_emci < 1:
        raise DataError("need at least one subject per group")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_healthy + cfg.n_emci
    labels = np.array([0] * cfg.n_healthy + [1] * cfg.n_emci)
    data = _ar1(rng, (n, N_ROIS, SERIES_LEN), cfg.ar_coef)
    emci = labels == 1
    rois = [r - 1 for r in cfg.affected_rois]
    if rois:
        osc = _band_component(rng, n, len(rois), cfg)
        data[:, rois] += (cfg.amplitude * cfg.separation) * osc * emci[:, None, None]
    if cfg.coupling_seed is not None and cfg.coupling_targets:
        seed_series = standardize_series(data[:, cfg.coupling_seed - 1])
        targets = [r - 1 for r in cfg.coupling_targets]
        gain = cfg.coupling_strength * cfg.separation
        data[:, targets] += gain * seed_series[:, None, :] * emci[:, None, None]
    data = standardize_series(data)
    width = len(str(n))
    return [
        SubjectRecord(f"sub{i:0{width}d}", int(labels[i]), data[i])
        for i in range(n)
    ]
