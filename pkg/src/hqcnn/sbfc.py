"""Seed-based functional connectivity: seed maps, group differences, lobe summary."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import stats
from .data import N_ROIS
from .errors import ConfigError, DataError, DegenerateError

LOBES = ("frontal", "temporal", "occipital", "parietal", "posterior_fossa")
R_CLAMP = 1.0 - 1e-12
T_THRESHOLD = 2.0
ALPHA = 0.05
SIGNIFICANCE_HEADER = ["seed", "target", "t", "p", "significant"]
EDGE_HEADER = ["seed_lobe", "target_lobe", "count"]


@dataclass(frozen=True)
class ConnectivityMap:
    subject_id: str
    seed: int
    r: np.ndarray  # (116,), index i is ROI i + 1
    z: np.ndarray


@dataclass(frozen=True)
class GroupDiffResult:
    seed: int
    t: np.ndarray  # (116,), NaN at the seed
    p: np.ndarray
    significant: tuple  # ROI numbers, ascending


@dataclass(frozen=True)
class LobeSummary:
    edges: dict  # (seed_lobe, target_lobe) -> count

    @property
    def total(self) -> int:
        return sum(self.edges.values())

    def rows(self):
        order = {lobe: i for i, lobe in enumerate(LOBES)}
        keys = sorted(self.edges, key=lambda k: (order[k[0]], order[k[1]]))
        return [(a, b, self.edges[(a, b)]) for a, b in keys]


def _check_roi(roi):
    if not 1 <= roi <= N_ROIS:
        raise DataError(f"roi {roi} outside 1..{N_ROIS}")


def fisher_z(r):
    return np.arctanh(np.clip(r, -R_CLAMP, R_CLAMP))


def seed_map(record, seed: int) -> ConnectivityMap:
    """Pearson r between the seed series and every ROI series of one subject."""
    _check_roi(seed)
    centred = record.matrix - record.matrix.mean(axis=1, keepdims=True)
    ss = (centred * centred).sum(axis=1)
    if np.any(ss == 0.0):
        flat = np.flatnonzero(ss == 0.0) + 1
        raise DegenerateError(f"subject {record.subject_id}: flat series at ROI(s) {flat.tolist()}")
    # elementwise products summed per row keep r(a, b) and r(b, a) bitwise equal
    num = (centred * centred[seed - 1]).sum(axis=1)
    r = np.clip(num / np.sqrt(ss * ss[seed - 1]), -1.0, 1.0)
    r[seed - 1] = 1.0
    return ConnectivityMap(record.subject_id, seed, r, fisher_z(r))


def group_difference(records, seed: int, t_threshold: float = T_THRESHOLD,
                     alpha: float = ALPHA) -> GroupDiffResult:
    """Welch test (healthy minus EMCI) on Fisher-z values for every target ROI.

    A target is significant when |t| > t_threshold and the two-tailed p < alpha.
    """
    _check_roi(seed)
    healthy = [r for r in records if r.label == 0]
    emci = [r for r in records if r.label == 1]
    if len(healthy) < 2 or len(emci) < 2:
        raise DataError(f"each group needs at least 2 subjects, got {len(healthy)} and {len(emci)}")
    zh = np.stack([seed_map(r, seed).z for r in healthy])
    ze = np.stack([seed_map(r, seed).z for r in emci])
    t = np.full(N_ROIS, np.nan)
    p = np.full(N_ROIS, np.nan)
    significant = []
    for i in range(N_ROIS):
        if i == seed - 1:
            continue
        try:
            res = stats.welch_ttest(zh[:, i], ze[:, i])
        except DegenerateError:
            continue
        t[i], p[i] = res.t, res.p_two_tail
        if abs(res.t) > t_threshold and res.p_two_tail < alpha:
            significant.append(i + 1)
    return GroupDiffResult(seed, t, p, tuple(significant))


def load_lobe_map(path=None) -> dict:
    """Read a ``roi,lobe`` CSV; defaults to the bundled AAL-116 assignment."""
    if path is None:
        text = resources.files("hqcnn").joinpath("resources/aal116_lobes.csv").read_text()
    else:
        text = Path(path).read_text()
    mapping = {}
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or not {"roi", "lobe"} <= set(reader.fieldnames):
        raise ConfigError("lobe map needs a roi,lobe header")
    for row in reader:
        roi, lobe = int(row["roi"]), row["lobe"].strip()
        if lobe not in LOBES:
            raise ConfigError(f"roi {roi}: unknown lobe {lobe!r}")
        if roi in mapping:
            raise ConfigError(f"roi {roi} mapped twice")
        mapping[roi] = lobe
    return mapping


def summarize_lobes(diffs, lobe_map: dict) -> LobeSummary:
    edges = Counter()
    for diff in diffs:
        for target in diff.significant:
            for roi in (diff.seed, target):
                if roi not in lobe_map:
                    raise ConfigError(f"roi {roi} has no lobe assignment")
            edges[(lobe_map[diff.seed], lobe_map[target])] += 1
    return LobeSummary(dict(edges))


def write_significance(path, diffs) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SIGNIFICANCE_HEADER)
        for diff in diffs:
            chosen = set(diff.significant)
            for i in range(N_ROIS):
                if i == diff.seed - 1:
                    continue
                writer.writerow([diff.seed, i + 1, repr(float(diff.t[i])), repr(float(diff.p[i])),
                                 int(i + 1 in chosen)])


def write_edge_list(path, summary: LobeSummary) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EDGE_HEADER)
        writer.writerows(summary.rows())
