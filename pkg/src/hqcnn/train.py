"""Training, cross-validated sweeps over (ROI, model) cells, and ROI ranking."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import model as model_mod
from . import nn
from .errors import DegenerateError, MetricError, NumericsError, ParseError

log = logging.getLogger(__name__)

HYBRIDS = ("hybrid1", "hybrid2", "hybrid4")
RESULTS_HEADER = ["roi", "spec", "fold", "balanced_accuracy"]
SUMMARY_HEADER = ["roi", *model_mod.KINDS, "norm_diff1", "norm_diff2", "norm_diff3"]


def balanced_accuracy(tp: int, fn: int, tn: int, fp: int) -> float:
    if tp + fn <= 0 or tn + fp <= 0:
        raise MetricError(f"balanced accuracy needs both classes (tp+fn={tp + fn}, tn+fp={tn + fp})")
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    return tp, fn, tn, fp


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "baseline"
    lr: float = 1e-4
    batch: int = 1
    epochs: int = 100
    seed: int = 0
    class_weighted: bool = True
    folds: int = 5

    def __post_init__(self):
        model_mod.build_spec(self.kind)
        if self.batch != 1:
            raise ValueError("only batch size 1 is supported")
        if self.lr <= 0 or self.epochs < 0 or self.folds < 2:
            raise ValueError(f"invalid training config {self}")


@dataclass
class TrainResult:
    params: np.ndarray
    balanced_accuracy: float
    loss_history: list
    confusion: tuple
    predictions: np.ndarray


def cell_seed(seed: int, roi: int, kind: str, fold: int) -> np.random.SeedSequence:
    """Independent stream per sweep cell, so any cell reruns in isolation."""
    return np.random.SeedSequence([seed, roi, model_mod.KINDS.index(kind), fold])


def roi_arrays(samples):
    if isinstance(samples, tuple):
        return samples
    xs = np.stack([s.series for s in samples])
    ys = np.array([s.label for s in samples], dtype=int)
    return xs, ys


def train_one(config: TrainConfig, fold: data_mod.FoldSplit, samples, seed=None) -> TrainResult:
    """Per-sample Adam on the fold's training part, evaluated on its test part.

    ``samples`` is a list of :class:`Sample` or an ``(X, y)`` array pair.
    ``seed`` may be an int or a SeedSequence; it drives init, shuffling and dropout.
    """
    xs, ys = roi_arrays(samples)
    spec = model_mod.build_spec(config.kind)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = model_mod.init_params(spec, rng)
    train_x, train_y = xs[fold.train], ys[fold.train]
    weights = data_mod.class_weights(train_y) if config.class_weighted else np.ones(2)
    adam = nn.AdamState(params.size, lr=config.lr)

    history = []
    for _ in range(config.epochs):
        total = 0.0
        for i in rng.permutation(train_y.size):
            logits, trace = model_mod.forward(spec, params, train_x[i], training=True, rng=rng)
            loss, dlogits = nn.weighted_softmax_xent(logits, train_y[i], weights)
            if not math.isfinite(loss):
                raise NumericsError(f"loss diverged at epoch {len(history)}")
            grad = model_mod.backward(spec, params, trace, dlogits)
            params = nn.adam_step(params, grad, adam)
            total += loss
        history.append(total / max(train_y.size, 1))

    preds = np.array([model_mod.predict(spec, params, x) for x in xs[fold.test]], dtype=int)
    counts = confusion(ys[fold.test], preds)
    return TrainResult(params, balanced_accuracy(*counts), history, counts, preds)


# ---------------------------------------------------------------- sweeps

@dataclass
class ExperimentResult:
    roi: int
    fold_scores: dict = field(default_factory=dict)  # kind -> {fold: BA}
    failures: dict = field(default_factory=dict)  # (kind, fold) -> message

    def mean(self, kind: str) -> float:
        scores = self.fold_scores.get(kind, {})
        values = [v for v in scores.values() if not math.isnan(v)]
        return float(np.mean(values)) if values else float("nan")


def train_cell(xs, ys, roi: int, kind: str, fold: int, config: TrainConfig) -> TrainResult:
    """Train one sweep cell exactly as :func:`run_sweep` does."""
    folds = data_mod.stratified_kfold(ys, config.folds, seed=config.seed)
    return train_one(replace(config, kind=kind), folds[fold], (xs, ys),
                     seed=cell_seed(config.seed, roi, kind, fold))


def _run_cell(task):
    roi, kind, fold_idx, xs, ys, config = task
    try:
        result = train_cell(xs, ys, roi, kind, fold_idx, config)
        return roi, kind, fold_idx, result.balanced_accuracy, None
    except Exception as exc:  # one bad cell must not abort the sweep
        return roi, kind, fold_idx, float("nan"), f"{type(exc).__name__}: {exc}"


def read_results(path) -> dict:
    done = {}
    path = Path(path)
    if not path.exists():
        return done
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            done[(int(row["roi"]), row["spec"], int(row["fold"]))] = float(row["balanced_accuracy"])
    return done


def write_results(path, cells: dict) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for roi, kind, fold in sorted(cells, key=lambda c: (c[0], model_mod.KINDS.index(c[1]), c[2])):
            writer.writerow([roi, kind, fold, repr(cells[(roi, kind, fold)])])


def run_sweep(records, rois, kinds, config: TrainConfig, results_path=None, workers: int = 1,
              progress=None) -> list[ExperimentResult]:
    """Train every (roi, kind, fold) cell; resumable through ``results_path``.

    Completed cells are appended to the results CSV as they finish and the file
    is rewritten in canonical order at the end. Cells already present with a
    finite score are skipped. Results do not depend on ``workers``.
    """
    cells = read_results(results_path) if results_path else {}
    cells = {k: v for k, v in cells.items() if not math.isnan(v)}
    failures = {}
    tasks = []
    for roi in rois:
        xs, ys = roi_arrays(data_mod.roi_slice(records, roi))
        for kind in kinds:
            for fold in range(config.folds):
                if (roi, kind, fold) not in cells:
                    tasks.append((roi, kind, fold, xs, ys, config))

    sink = None
    if results_path:
        new_file = not Path(results_path).exists() or not cells
        if new_file:
            write_results(results_path, cells)
        sink = Path(results_path).open("a", newline="")
    try:
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = pool.map(_run_cell, tasks)
                _collect(outcomes, cells, failures, sink, progress, len(tasks))
        else:
            _collect(map(_run_cell, tasks), cells, failures, sink, progress, len(tasks))
    finally:
        if sink:
            sink.close()
    if results_path:
        write_results(results_path, cells)

    results = []
    for roi in rois:
        res = ExperimentResult(roi)
        for kind in kinds:
            res.fold_scores[kind] = {f: cells.get((roi, kind, f), float("nan")) for f in range(config.folds)}
        res.failures = {(k, f): msg for (r, k, f), msg in failures.items() if r == roi}
        results.append(res)
    return results


def _collect(outcomes, cells, failures, sink, progress, total):
    writer = csv.writer(sink) if sink else None
    for n, (roi, kind, fold, score, error) in enumerate(outcomes, 1):
        cells[(roi, kind, fold)] = score
        if error:
            failures[(roi, kind, fold)] = error
            log.warning("cell roi=%s spec=%s fold=%s failed: %s", roi, kind, fold, error)
        if writer:
            writer.writerow([roi, kind, fold, repr(score)])
            sink.flush()
        if progress:
            progress(n, total, roi, kind, fold, score)


# ---------------------------------------------------------------- ranking

@dataclass
class SummaryTable:
    rois: np.ndarray
    scores: dict  # kind -> (n,) mean balanced accuracy
    normalized: np.ndarray | None = None  # (n, 3) if supplied with the table


def summary_from_results(results) -> SummaryTable:
    rois = np.array([r.roi for r in results])
    kinds = [k for k in model_mod.KINDS if all(k in r.fold_scores for r in results)]
    scores = {k: np.array([r.mean(k) for r in results]) for k in kinds}
    return SummaryTable(rois, scores)


@dataclass
class Ranking:
    rois: np.ndarray
    differences: np.ndarray | None  # (n, h) hybrid minus baseline
    normalized: np.ndarray  # (n, h), each column min-max scaled to [0, 1]
    average: np.ndarray
    order: np.ndarray  # ROI numbers, best first

    def top(self, k: int = 9):
        pos = {roi: i for i, roi in enumerate(self.rois)}
        return [(int(roi), float(self.average[pos[roi]])) for roi in self.order[:k]]


def _rank(rois, normalized, differences=None) -> Ranking:
    average = normalized.mean(axis=1)
    order = sorted(range(len(rois)), key=lambda i: (-average[i], rois[i]))
    return Ranking(np.asarray(rois), differences, normalized, average, np.asarray(rois)[order])


def normalized_differences(table: SummaryTable) -> Ranking:
    """Min-max normalise (hybrid - baseline) per hybrid, average, rank descending."""
    if len(table.rois) < 2:
        raise DegenerateError("min-max normalisation needs at least two ROIs")
    hybrids = [h for h in HYBRIDS if h in table.scores]
    if "baseline" not in table.scores or not hybrids:
        raise DegenerateError("need baseline and at least one hybrid column")
    diffs = np.column_stack([table.scores[h] - table.scores["baseline"] for h in hybrids])
    lo, hi = diffs.min(axis=0), diffs.max(axis=0)
    if np.any(hi - lo == 0):
        raise DegenerateError("a difference column has zero spread")
    return _rank(table.rois, (diffs - lo) / (hi - lo), diffs)


def rank_summary(table: SummaryTable, use_supplied: bool = True) -> Ranking:
    """Rank from the table's own normalised columns when present, else recompute."""
    if use_supplied and table.normalized is not None:
        return _rank(table.rois, table.normalized)
    return normalized_differences(table)


def write_summary(path, table: SummaryTable, ranking: Ranking | None = None) -> None:
    if ranking is None and len(table.rois) >= 2:
        try:
            ranking = normalized_differences(table)
        except DegenerateError:
            ranking = None
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for i, roi in enumerate(table.rois):
            row = [int(roi)]
            row += [repr(float(table.scores[k][i])) if k in table.scores else "" for k in model_mod.KINDS]
            if ranking is not None and ranking.normalized.shape[1] == 3:
                row += [repr(float(v)) for v in ranking.normalized[i]]
            else:
                row += ["", "", ""]
            writer.writerow(row)


def read_summary(path) -> SummaryTable:
    rois, scores, normalized = [], {k: [] for k in model_mod.KINDS}, []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "roi" not in reader.fieldnames or "baseline" not in reader.fieldnames:
            raise ParseError("summary needs at least roi and baseline columns", line=1)
        for line_no, row in enumerate(reader, start=2):
            try:
                rois.append(int(row["roi"]))
                for k in model_mod.KINDS:
                    value = (row.get(k) or "").strip()
                    scores[k].append(float(value) if value else math.nan)
                norm = [(row.get(f"norm_diff{j}") or "").strip() for j in (1, 2, 3)]
                normalized.append([float(v) for v in norm] if all(norm) else None)
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from None
    present = {k: np.array(v) for k, v in scores.items() if not np.all(np.isnan(v))}
    supplied = np.array(normalized) if normalized and all(n is not None for n in normalized) else None
    return SummaryTable(np.array(rois), present, supplied)
