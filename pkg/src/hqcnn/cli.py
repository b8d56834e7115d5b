"""Command-line entry point: ``hqcnn <command> ...``.

Global flags (``--seed``, ``--workers``, ``--out-dir``, ``--config``) go before
the command. Values from the ``--config`` INI file are overridden by explicit
flags. Every command writes ``manifest-<command>.json`` next to its outputs.
Exit codes: 0 success, 1 data or numerical error (including a sweep with
failed cells, whose results are still written), 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

from . import data, model, sbfc, stats, train
from .errors import ConfigError, HqcnnError

log = logging.getLogger("hqcnn")

TTEST_PAIRS = (
    ("baseline", "hybrid1"), ("baseline", "hybrid2"), ("baseline", "hybrid4"),
    ("hybrid1", "hybrid2"), ("hybrid1", "hybrid4"), ("hybrid2", "hybrid4"),
)
TTEST_HEADER = ["a", "b", "t", "df", "p_one_tail", "p_two_tail", "mean_a", "mean_b",
                "var_a", "var_b", "pearson_r"]


# ---------------------------------------------------------------- plumbing

def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json_atomic(path, payload) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_manifest(out_dir, command, config, seed, artifacts, started) -> Path:
    payload = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifacts": {Path(p).name: sha256_file(p) for p in artifacts},
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    return write_json_atomic(Path(out_dir) / f"manifest-{command}.json", payload)


def parse_rois(text: str) -> list[int]:
    """'all', '5', '1,84,18' or ranges such as '1-10,84'."""
    text = text.strip()
    if text == "all":
        return list(range(1, data.N_ROIS + 1))
    rois = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = (int(v) for v in part.split("-", 1))
            rois.extend(range(lo, hi + 1))
        elif part:
            rois.append(int(part))
    for roi in rois:
        if not 1 <= roi <= data.N_ROIS:
            raise argparse.ArgumentTypeError(f"roi {roi} outside 1..{data.N_ROIS}")
    return rois


def _roi_list(text):
    try:
        return parse_rois(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _spec_list(text):
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    bad = [k for k in kinds if k not in model.KINDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown spec(s) {bad}; choose from {', '.join(model.KINDS)}")
    return kinds


def _read_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is not None and not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    return parser


def _train_config(args, cfg: configparser.ConfigParser) -> train.TrainConfig:
    values = {}
    section = cfg["train"] if cfg.has_section("train") else {}
    known = {f.name: f for f in fields(train.TrainConfig)}
    for key, raw in section.items():
        key = key.replace("-", "_")
        if key not in known or key == "kind":
            raise ConfigError(f"unknown [train] key {key!r}")
        values[key] = data._coerce(known[key].default, raw)
    for key in ("epochs", "lr", "folds"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    values["seed"] = args.seed
    return train.TrainConfig(**values)


def _load_records(path):
    return data.standardize_records(data.load_dataset(path))


def _progress(n, total, roi, kind, fold, score):
    print(f"[{n}/{total}] roi={roi} spec={kind} fold={fold} ba={score:.4f}", file=sys.stderr, flush=True)


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, cfg):
    section = cfg["synthetic"] if cfg.has_section("synthetic") else {}
    config = data.SyntheticConfig.from_mapping(section)
    overrides = {k: getattr(args, k) for k in ("n_healthy", "n_emci", "separation")
                 if getattr(args, k) is not None}
    overrides["seed"] = args.seed
    config = data.SyntheticConfig(**{**config.to_dict(), **overrides})
    out = Path(args.out) if args.out else args.out_dir / "dataset.csv"
    data.save_dataset(data.generate_synthetic(config), out)
    print(out)
    return [out], config.to_dict()


def cmd_train(args, cfg):
    config = _train_config(args, cfg)
    records = _load_records(args.dataset)
    xs, ys = train.roi_arrays(data.roi_slice(records, args.roi))
    if not 0 <= args.fold < config.folds:
        raise ConfigError(f"fold {args.fold} outside 0..{config.folds - 1}")
    result = train.train_cell(xs, ys, args.roi, args.spec, args.fold, config)
    stem = args.out_dir / f"train-roi{args.roi}-{args.spec}-fold{args.fold}"
    metrics = stem.with_suffix(".json")
    tp, fn, tn, fp = result.confusion
    write_json_atomic(metrics, {
        "roi": args.roi, "spec": args.spec, "fold": args.fold,
        "balanced_accuracy": result.balanced_accuracy,
        "confusion": {"tp": tp, "fn": fn, "tn": tn, "fp": fp},
        "loss_history": result.loss_history,
    })
    ckpt, sidecar = model.save_checkpoint(stem.with_suffix(".ckpt"), model.build_spec(args.spec), result.params)
    print(f"roi={args.roi} spec={args.spec} fold={args.fold} balanced_accuracy={result.balanced_accuracy!r}")
    return [metrics, ckpt, sidecar], {**asdict(config), "kind": args.spec, "roi": args.roi, "fold": args.fold}


def cmd_sweep(args, cfg):
    config = _train_config(args, cfg)
    records = _load_records(args.dataset)
    results_path = Path(args.results) if args.results else args.out_dir / "results.csv"
    results = train.run_sweep(records, args.rois, args.specs, config, results_path=results_path,
                              workers=args.workers, progress=_progress)
    summary = train.summary_from_results(results)
    summary_path = args.out_dir / "summary.csv"
    train.write_summary(summary_path, summary)
    failed = sum(len(r.failures) for r in results)
    for r in results:
        line = " ".join(f"{k}={r.mean(k):.4f}" for k in args.specs)
        print(f"roi={r.roi} {line}")
    if failed:
        log.warning("%d cell(s) failed; rerun the same command to retry them", failed)
        args.exit_status = 1
    return [results_path, summary_path], {**asdict(config), "rois": args.rois, "specs": args.specs}


def cmd_rank(args, cfg):
    table = train.read_summary(args.summary)
    ranking = train.rank_summary(table, use_supplied=not args.recompute)
    out = args.out_dir / "ranking.csv"
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "roi", "average_normalized_difference"])
        for i, (roi, avg) in enumerate(ranking.top(len(ranking.rois)), 1):
            writer.writerow([i, roi, repr(avg)])
    for roi, avg in ranking.top(args.top):
        print(f"ROI {roi}, {avg:.3f}")
    return [out], {"summary": str(args.summary), "top": args.top, "recompute": args.recompute}


def cmd_ttest(args, cfg):
    table = train.read_summary(args.summary)
    out = args.out_dir / "ttest.csv"
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TTEST_HEADER)
        for a, b in TTEST_PAIRS:
            if a not in table.scores or b not in table.scores:
                continue
            res = stats.paired_ttest(table.scores[a], table.scores[b])
            writer.writerow([a, b, *(repr(float(v)) for v in (
                res.t, res.df, res.p_one_tail, res.p_two_tail,
                res.mean_a, res.mean_b, res.var_a, res.var_b, res.pearson_r))])
            print(f"{a}/{b} t={res.t:.3f} df={res.df:g} p_two_tail={res.p_two_tail:.3e} "
                  f"r={res.pearson_r:.4f}")
    return [out], {"summary": str(args.summary)}


def cmd_sbfc(args, cfg):
    records = _load_records(args.dataset)
    lobe_map = sbfc.load_lobe_map(args.lobe_map)
    diffs = []
    for seed in args.seeds:
        print(f"seed {seed}", file=sys.stderr, flush=True)
        diffs.append(sbfc.group_difference(records, seed))
    summary = sbfc.summarize_lobes(diffs, lobe_map)
    sig_path = args.out_dir / "sbfc_significance.csv"
    edge_path = args.out_dir / "sbfc_edges.csv"
    sbfc.write_significance(sig_path, diffs)
    sbfc.write_edge_list(edge_path, summary)
    for d in diffs:
        print(f"seed {d.seed}: {len(d.significant)} significant targets")
    print(f"total edges {summary.total}")
    return [sig_path, edge_path], {"seeds": args.seeds, "lobe_map": str(args.lobe_map or "bundled"),
                                   "t_threshold": sbfc.T_THRESHOLD, "alpha": sbfc.ALPHA}


def cmd_param_count(args, cfg):
    print(model.count_parameters(model.build_spec(args.spec)))
    return [], {"spec": args.spec}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hqcnn", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--config", type=Path, default=None, help="INI file with [synthetic]/[train] sections")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    p.add_argument("--out", default=None)
    p.add_argument("--n-healthy", type=int)
    p.add_argument("--n-emci", type=int)
    p.add_argument("--separation", type=float)
    p.set_defaults(func=cmd_gen_data)

    def training_flags(p):
        p.add_argument("--dataset", required=True)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--folds", type=int)

    p = sub.add_parser("train", help="train and evaluate one (roi, spec, fold) cell")
    training_flags(p)
    p.add_argument("--roi", type=int, required=True)
    p.add_argument("--spec", choices=model.KINDS, required=True)
    p.add_argument("--fold", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="cross-validated sweep over ROIs and specs (resumable)")
    training_flags(p)
    p.add_argument("--rois", type=_roi_list, default=parse_rois("all"))
    p.add_argument("--specs", type=_spec_list, default=list(model.KINDS))
    p.add_argument("--results", default=None, help="results CSV to resume (default OUT_DIR/results.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rank", help="rank ROIs by averaged normalised accuracy differences")
    p.add_argument("summary")
    p.add_argument("--top", type=int, default=9)
    p.add_argument("--recompute", action="store_true",
                   help="recompute normalised differences from the accuracy columns")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("ttest", help="paired t-tests between every pair of spec columns")
    p.add_argument("summary")
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("sbfc", help="seed-based connectivity group differences and lobe edges")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seeds", type=_roi_list, default=list(data.TOP9_ROIS))
    p.add_argument("--lobe-map", default=None)
    p.set_defaults(func=cmd_sbfc)

    p = sub.add_parser("param-count", help="print the trainable parameter count of a spec")
    p.add_argument("spec", choices=model.KINDS)
    p.set_defaults(func=cmd_param_count)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        parser.error("--workers must be at least 1")
    started = time.time()
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        cfg = _read_config(args.config)
        artifacts, config = args.func(args, cfg)
        write_manifest(args.out_dir, args.command, config, args.seed, artifacts, started)
    except HqcnnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return getattr(args, "exit_status", 0)


if __name__ == "__main__":
    sys.exit(main())
