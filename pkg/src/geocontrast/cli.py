"""Command-line entry point: gen-data, pretrain, embed, downstream, analyze.

Every subcommand writes a run manifest (resolved config, paths, seed, version,
timestamps) before exiting, on success and on failure.  Exit codes: 0 success,
2 usage/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

if "GEOCONTRAST_THREADS" in os.environ:  # must precede numpy's BLAS init
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, os.environ["GEOCONTRAST_THREADS"])

import numpy as np

from . import __version__
from .analysis import export_pca, export_similarity_grid, pca, similarity_map
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataio import (LabeledDataset, SplitSpec, SyntheticWorldSpec, generate_world,
                     read_labels, read_pairs, write_labels, write_pairs)
from .downstream import SearchSpace, evaluate_task, featurize, task_features
from .pretrain import NaNLossError, PretrainConfig, embed, pretrain
from .sphere import GeoCoordinate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _write_manifest(out_prefix: str, subcommand: str, config: dict, paths: dict,
                    seed, started: float, status: str):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "paths": paths,
        "seed": seed,
        "version": __version__,
        "started_unix": started,
        "ended_unix": time.time(),
        "status": status,
    }
    Path(out_prefix + ".manifest.json").write_text(json.dumps(manifest, indent=2))


def _run(subcommand: str, out_prefix: str, config: dict, paths: dict, seed, body):
    """Run a subcommand body with manifest-on-exit and exit-code mapping."""
    started = time.time()
    try:
        body()
    except (UsageError, FileNotFoundError, ValueError, CheckpointError) as exc:
        _write_manifest(out_prefix, subcommand, config, paths, seed, started, f"error: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NaNLossError, FloatingPointError) as exc:
        _write_manifest(out_prefix, subcommand, config, paths, seed, started, f"error: {exc}")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_manifest(out_prefix, subcommand, config, paths, seed, started, "ok")
    return EXIT_OK


# -- subcommands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    paths = {"spec": args.spec, "pairs": args.out + ".pairs.csv",
             "labels": args.out + ".labels.csv"}
    config = {"n": args.n}

    def body():
        spec_path = Path(args.spec)
        if not spec_path.exists():
            raise UsageError(f"world spec not found: {args.spec}")
        spec = SyntheticWorldSpec.from_json(spec_path.read_text())
        config.update(json.loads(spec.to_json()))
        pairs, labels = generate_world(spec, args.n)
        write_pairs(paths["pairs"], pairs)
        write_labels(paths["labels"], labels)
        print(f"wrote {len(pairs)} records to {paths['pairs']} and {paths['labels']}")

    return _run("gen-data", args.out, config, paths, None, body)


def cmd_pretrain(args) -> int:
    cfg = PretrainConfig(
        l_max=args.L, d=args.d, hidden_dim=args.hidden_dim,
        hidden_layers=args.hidden_layers, batch_size=args.batch, epochs=args.epochs,
        lr=args.lr, weight_decay=args.weight_decay, val_fraction=args.val_fraction,
        seed=args.seed, jitter=not args.no_jitter, tau_init=args.tau_init,
        tau_trainable=not args.tau_fixed)
    paths = {"pairs": args.pairs, "checkpoint": args.out,
             "log": args.out + ".log.csv"}
    if args.plot:
        paths["figure"] = args.out + ".curves.png"

    def body():
        if not Path(args.pairs).exists():
            raise UsageError(f"pairs file not found: {args.pairs}")
        pairs = read_pairs(args.pairs)
        result = pretrain(pairs, cfg)
        save_checkpoint(args.out, result.encoder, result.projection,
                        result.temperature, cfg.l_max, metadata=result.metadata())
        result.log.write_csv(paths["log"])
        if args.plot:
            from .plots import plot_training_curves
            plot_training_curves(result.log, paths["figure"])
        final = result.log.val_loss[-1] if result.log.val_loss else float("nan")
        print(f"final val loss {final:.6f}; best val loss "
              f"{result.best_val_loss:.6f} at epoch {result.best_epoch}")

    return _run("pretrain", args.out, asdict(cfg), paths, args.seed, body)


def cmd_embed(args) -> int:
    paths = {"checkpoint": args.ckpt, "coords": args.coords, "out": args.out}

    def body():
        encoder, _, _, l_max, _ = load_checkpoint(args.ckpt)
        coords = _read_coords_csv(args.coords)
        emb = embed(encoder, coords, l_max) if len(coords) else \
            np.empty((0, encoder.config.output_dim))
        d = encoder.config.output_dim
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("lon,lat," + ",".join(f"e{i}" for i in range(d)) + "\n")
            for (lon, lat), row in zip(coords, emb):
                fh.write(",".join([repr(float(lon)), repr(float(lat))]
                                  + [repr(float(v)) for v in row]) + "\n")
        print(f"wrote {len(coords)} embeddings of width {d} to {args.out}")

    return _run("embed", args.out, {}, paths, None, body)


def cmd_downstream(args) -> int:
    split_spec = _parse_split(args.split)
    config = {"featurizer": args.featurizer, "repeats": args.repeats,
              "trials": args.trials, "split": asdict(split_spec)}
    paths = {"labels": args.labels, "report": args.out}
    if args.plot:
        paths["figure"] = args.out + ".png"

    def body():
        if not Path(args.labels).exists():
            raise UsageError(f"labels file not found: {args.labels}")
        labels = read_labels(args.labels)
        if args.featurizer == "identity":
            base = featurize(labels.coords)
        else:
            encoder, _, _, l_max, _ = load_checkpoint(args.featurizer)
            base = featurize(labels.coords, encoder, l_max)
        features = task_features(labels, base)
        space = SearchSpace(seed=args.seed, trial_count=args.trials)
        report = evaluate_task(labels, features, split_spec, space,
                               repeat_count=args.repeats, seed=args.seed,
                               task_name=Path(args.labels).stem)
        Path(args.out).write_text(report.to_json())
        if args.plot:
            from .plots import plot_eval_report
            plot_eval_report(report, paths["figure"])
        print(f"{report.task}: {report.metric} = {report.mean:.4f} ± {report.std:.4f}")

    return _run("downstream", args.out, config, paths, args.seed, body)


def cmd_analyze(args) -> int:
    if args.analysis == "simmap":
        try:
            ref_lon, ref_lat = (float(v) for v in args.ref.split(","))
        except ValueError:
            print(f"error: bad --ref format {args.ref!r}, expected lon,lat",
                  file=sys.stderr)
            return EXIT_USAGE
        config = {"analysis": "simmap", "ref": [ref_lon, ref_lat],
                  "resolution": args.resolution}
        paths = {"checkpoint": args.ckpt, "out": args.out}

        def body():
            if args.ckpt is None:
                raise UsageError("simmap requires --ckpt")
            encoder, _, _, l_max, _ = load_checkpoint(args.ckpt)
            grid = similarity_map(encoder, GeoCoordinate(ref_lon, ref_lat),
                                  l_max, args.resolution)
            export_similarity_grid(grid, args.out)
            print(f"wrote {grid.values.size}-cell similarity grid to {args.out}")

        return _run("analyze-simmap", args.out, config, paths, None, body)

    config = {"analysis": "pca", "k": args.k}
    paths = {"out": args.out}
    if args.plot:
        paths["figure"] = args.out + ".png"

    def body():
        if (args.ckpt is None) == (args.emb is None):
            raise UsageError("pca needs exactly one of --ckpt or --emb")
        if args.emb is not None:
            paths["embeddings"] = args.emb
            coords, emb = _read_embeddings_csv(args.emb)
        else:
            paths["checkpoint"] = args.ckpt
            encoder, _, _, l_max, _ = load_checkpoint(args.ckpt)
            from .analysis import grid_cell_centers
            lons, lats = grid_cell_centers(4.0)
            grid_lon, grid_lat = np.meshgrid(lons, lats)
            coords = np.column_stack([grid_lon.ravel(), grid_lat.ravel()])
            emb = embed(encoder, coords, l_max)
        result = pca(emb, args.k)
        scores_path = args.out.rsplit(".", 1)[0] + ".scores.csv"
        paths["scores"] = scores_path
        export_pca(result, args.out, coords=coords, scores_path=scores_path)
        if args.plot:
            from .plots import plot_explained_variance
            plot_explained_variance(result.explained_variance_ratio, paths["figure"])
        top = result.explained_variance_ratio[:args.k]
        print(f"top-{args.k} explained variance ratios: "
              + ", ".join(f"{r:.4f}" for r in top))

    return _run("analyze-pca", args.out, config, paths, None, body)


# -- input helpers ----------------------------------------------------------------

def _read_coords_csv(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"coords file not found: {path}")
    with open(p, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["lon", "lat"]:
            raise UsageError(f"{path}: header must start with lon,lat")
        rows = [line.strip().split(",")[:2] for line in fh if line.strip()]
    return np.array([[float(a), float(b)] for a, b in rows]) if rows else \
        np.empty((0, 2))


def _read_embeddings_csv(path) -> tuple[np.ndarray, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"embeddings file not found: {path}")
    with open(p, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["lon", "lat"] or len(header) < 3:
            raise UsageError(f"{path}: header must be lon,lat,e0..")
        data = np.array([[float(v) for v in line.strip().split(",")]
                         for line in fh if line.strip()])
    if data.size == 0:
        raise UsageError(f"{path}: no embedding rows")
    return data[:, :2], data[:, 2:]


def _parse_split(text: str) -> SplitSpec:
    if text == "random":
        return SplitSpec(kind="random")
    if text.startswith("holdout:"):
        parts = text[len("holdout:"):].split(",")
        if len(parts) not in (2, 3):
            raise UsageError(f"bad split {text!r}: expected holdout:lo,hi[,fewshot]")
        try:
            lo, hi = float(parts[0]), float(parts[1])
            fewshot = float(parts[2]) if len(parts) == 3 else 0.0
        except ValueError:
            raise UsageError(f"bad split {text!r}: non-numeric bound")
        return SplitSpec(kind="region-holdout", holdout_lon=(lo, hi),
                         fewshot_fraction=fewshot)
    raise UsageError(f"unknown split {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geocontrast",
        description="Contrastive location-image pretraining toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic world")
    p.add_argument("--spec", required=True, help="world spec JSON")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="contrastively pretrain a location encoder")
    p.add_argument("--pairs", required=True)
    p.add_argument("--L", type=int, default=10, help="Legendre polynomial count")
    p.add_argument("--d", type=int, default=256, help="embedding dimension")
    p.add_argument("--hidden-dim", type=int, default=512)
    p.add_argument("--hidden-layers", type=int, default=2)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-jitter", action="store_true")
    p.add_argument("--tau-init", type=float, default=0.07)
    p.add_argument("--tau-fixed", action="store_true")
    p.add_argument("--plot", action="store_true", help="also render loss curves PNG")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("embed", help="export embeddings for a coordinate list")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--coords", required=True, help="CSV with lon,lat header")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("downstream", help="train/evaluate MLP heads on a task")
    p.add_argument("--labels", required=True)
    p.add_argument("--featurizer", required=True,
                   help="checkpoint path, or 'identity' for raw coordinates")
    p.add_argument("--split", default="random",
                   help="'random' or 'holdout:lo,hi[,fewshot]'")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also render per-run metric PNG")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_downstream)

    p = sub.add_parser("analyze", help="embedding diagnostics")
    asub = p.add_subparsers(dest="analysis", required=True)
    ps = asub.add_parser("simmap", help="cosine-similarity grid vs a reference")
    ps.add_argument("--ref", required=True, help="lon,lat")
    ps.add_argument("--ckpt", required=True)
    ps.add_argument("--resolution", type=float, default=1.0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_analyze)
    pp = asub.add_parser("pca", help="principal components of embeddings")
    pp.add_argument("--k", type=int, default=3)
    pp.add_argument("--ckpt")
    pp.add_argument("--emb", help="embeddings CSV (lon,lat,e0..)")
    pp.add_argument("--plot", action="store_true",
                    help="also render explained-variance PNG")
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
