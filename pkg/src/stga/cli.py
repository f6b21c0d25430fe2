"""Command-line entry point: ``stga {ingest,train,eval,predict,plot,graph-dump}``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numeric failure.
Every subcommand accepts ``--config FILE`` holding ``key=value`` lines whose
keys are long option names (``batch-size`` or ``batch_size``); flags given on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data as D
from .checkpoint import CheckpointError, load_checkpoint
from .evaluation import evaluate
from .graph import Mode, build_snapshot
from .model import ModelConfig, SceneBatch, observe, predict
from .nn.tensor import NumericError
from .plot import align_tracks, write_svg
from .predictions import format_predictions, read_predictions
from .synthetic import SCENARIOS, make_synthetic
from .training import LOSS_CSV, TrainConfig, train

log = logging.getLogger("stga")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- arguments

def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with defaults for any long option")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--mode", choices=["hh", "hho"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="human-obstacle connectivity threshold (normalized units)")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_source(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--manifest", help="scene manifest (name, annotations, obstacles, meters_per_unit)")
    g.add_argument("--scenes", help="comma-separated scene names from the manifest")
    g.add_argument("--held-out", help="leave-one-out: train on the other scenes, evaluate on this one")
    g.add_argument("--skip-rate", type=int, default=10)
    g.add_argument("--synthetic", choices=SCENARIOS, help="generate a synthetic scenario instead")
    g.add_argument("--n-peds", type=int, default=1)
    g.add_argument("--n-scenes", type=int, default=100)
    g.add_argument("--data-seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="stga", description="Spatio-temporal graph attention trajectory predictor")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="convert raw annotations to canonical files and a manifest")
    _shared(p)
    p.add_argument("--input", required=True, help="annotation file")
    p.add_argument("--obstacles", help="obstacle file (id x y)")
    p.add_argument("--name", help="scene name (default: input file stem)")
    p.add_argument("--format", choices=["canonical", "obsmat"], default="canonical")
    p.add_argument("--meters-per-unit", type=float, default=1.0)
    p.add_argument("--skip-rate", type=int, default=10)

    p = sub.add_parser("train", help="train a model; writes checkpoints and loss.csv")
    _shared(p)
    _data_source(p)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--embed", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=24)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip", type=float, default=10.0)
    p.add_argument("--alpha-init", type=float, default=0.2)
    p.add_argument("--resume", action="store_true", help="continue from the newest checkpoint in --out-dir")

    p = sub.add_parser("eval", help="ADE/FDE with K sampled rollouts; writes eval.csv and eval.txt")
    _shared(p)
    _data_source(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, default=30)

    p = sub.add_parser("predict", help="roll out predictions; writes predictions.tsv")
    _shared(p)
    _data_source(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", action="store_true", help="sample from the predicted Gaussians instead of using means")
    p.add_argument("--out", help="output file (default: OUT_DIR/predictions.tsv)")

    p = sub.add_parser("plot", help="SVG of observed, true and predicted trajectories")
    _shared(p)
    _data_source(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--scene", help="scene name (default: first scene in the predictions file)")
    p.add_argument("--start-frame", type=int, help="scene instance (default: first in the predictions file)")
    p.add_argument("--out", help="output SVG (default: OUT_DIR/plot.svg)")

    p = sub.add_parser("graph-dump", help="JSON view of one graph snapshot")
    _shared(p)
    p.add_argument("--annotations", help="canonical annotation file; --frame is a frame id")
    p.add_argument("--obstacles")
    p.add_argument("--synthetic", choices=SCENARIOS, help="synthetic scene; --frame is a step index")
    p.add_argument("--n-peds", type=int, default=4)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--instance", type=int, default=0)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", help="output file (default: stdout)")
    return parser


def _read_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(sub: argparse.ArgumentParser, path: str) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in _read_config(path).items():
        dest = "lam" if key == "lambda" else key
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise UsageError(f"{path}: {key} must be true or false")
            defaults[dest] = value.lower() in ("1", "true", "yes")
        else:
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{path}: {key} must be one of {sorted(action.choices)}")
            defaults[dest] = value   # argparse applies the option's type to string defaults
    sub.set_defaults(**defaults)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    if not argv or argv[0].startswith("-"):
        if argv and argv[0] in ("-h", "--help"):
            parser.parse_args(argv)
        raise UsageError("a subcommand is required: " + ", ".join(_COMMANDS))
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    if known.config:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        if argv[0] not in subparsers.choices:
            parser.parse_args(argv)   # reports the bad subcommand
        _apply_config(subparsers.choices[argv[0]], known.config)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- helpers

def _load_datasets(args, role: str) -> list[D.SceneDataset]:
    """Datasets for ``role`` in {'train', 'test'} from a manifest or a synthetic scenario."""
    if args.synthetic:
        if args.manifest:
            raise UsageError("use either --manifest or --synthetic")
        if args.n_peds < 1 or args.n_scenes < 1:
            raise UsageError("--n-peds and --n-scenes must be >= 1")
        return [make_synthetic(args.synthetic, args.n_peds, args.data_seed, n_scenes=args.n_scenes)]
    if not args.manifest:
        raise UsageError("a data source is required: --manifest or --synthetic")
    if args.skip_rate < 1:
        raise UsageError("--skip-rate must be >= 1")
    datasets = D.load_manifest(args.manifest, args.skip_rate)
    if args.held_out:
        train_sets, test_set = D.leave_one_out_split(datasets, args.held_out)
        return train_sets if role == "train" else [test_set]
    if args.scenes:
        names = [s.strip() for s in args.scenes.split(",") if s.strip()]
        missing = [n for n in names if n not in datasets]
        if missing:
            raise KeyError(f"scenes not in manifest: {missing}")
        return [datasets[n] for n in names]
    return list(datasets.values())


def _override(config: ModelConfig, args) -> ModelConfig:
    if args.mode is not None:
        config = replace(config, mode=Mode.parse(args.mode))
    if args.lam is not None:
        if args.lam <= 0:
            raise UsageError("--lambda must be positive")
        config = replace(config, lam=args.lam)
    return config


def _load_model(args):
    ckpt = load_checkpoint(args.checkpoint)
    return ckpt.params, _override(ckpt.config, args)


@contextlib.contextmanager
def _thread_limits(n: int):
    """Cap BLAS/OpenMP pools at ``n`` threads so one-thread runs are reproducible."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:   # optional; numpy falls back to its own defaults
        yield
        return
    with threadpool_limits(limits=n):
        yield


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    src = Path(args.input)
    name = args.name or src.stem
    if "\t" in name or not name:
        raise UsageError("scene name must be non-empty and contain no tabs")
    records = D.convert_raw(src.read_text(encoding="utf-8"), args.format, str(src))
    obstacles = D.read_obstacles(args.obstacles)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ann_path = out / f"{name}.tsv"
    ann_path.write_text(D.format_annotations(records), encoding="utf-8")
    obs_rel = None
    if obstacles:
        obs_path = out / f"{name}.obstacles.tsv"
        obs_path.write_text(D.format_obstacles(obstacles), encoding="utf-8")
        obs_rel = obs_path.name

    if records:
        dataset = D.build_scene(name, records, obstacles, args.skip_rate, args.meters_per_unit)
        n_seq, dropped = dataset.n_sequences, dataset.n_dropped
    else:
        print(f"warning: {src} contains no annotations", file=sys.stderr)
        n_seq, dropped = 0, 0

    manifest = out / "manifest.tsv"
    entries = D.read_manifest(manifest) if manifest.exists() else []
    entries = [e for e in entries if e.name != name]
    entries = [D.ManifestEntry(e.name, _relative(e.annotation_path, out),
                               _relative(e.obstacle_path, out) if e.obstacle_path else None,
                               e.meters_per_unit) for e in entries]
    entries.append(D.ManifestEntry(name, ann_path.name, obs_rel, args.meters_per_unit))
    manifest.write_text(D.format_manifest(entries), encoding="utf-8")
    n_peds = len({r.ped_id for r in records})
    print(f"{name}: {n_peds} pedestrians, {n_seq} sequences, {len(obstacles)} obstacles"
          + (f", {dropped} single-annotation pedestrians dropped" if dropped else ""))
    print(f"manifest: {manifest}")
    return EXIT_OK


def _relative(path: str, base: Path) -> str:
    p = Path(path)
    try:
        return str(p.resolve().relative_to(base.resolve()))
    except ValueError:
        return str(p)


def cmd_train(args) -> int:
    try:
        tc = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, lr=args.lr,
                         skip_rate=args.skip_rate, seed=args.seed, clip=args.clip, threads=args.threads)
        mc = ModelConfig(mode=args.mode or Mode.HHO, hidden=args.hidden, embed=args.embed,
                         lam=0.5 if args.lam is None else args.lam, alpha_init=args.alpha_init)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    datasets = _load_datasets(args, "train")
    out = Path(args.out_dir)

    def report(epoch, loss):
        print(f"epoch {epoch:4d}  mean_nll {loss:.6f}", flush=True)

    result = train(datasets, mc, tc, out_dir=out, resume=args.resume, on_epoch=report)
    if result.clipped_steps:
        print(f"gradient clipping active on {result.clipped_steps} steps")
    print(f"checkpoints and {LOSS_CSV} in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    params, config = _load_model(args)
    datasets = _load_datasets(args, "test")
    report = evaluate(datasets, params, config, k=args.k, seed=args.seed, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(report.to_csv(), encoding="utf-8")
    table = report.format_table("H-H-O" if config.mode is Mode.HHO else "H-H")
    (out / "eval.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    params, config = _load_model(args)
    datasets = _load_datasets(args, "test")
    rows = []
    index = 0
    for ds in datasets:
        for inst in ds.instances:
            state = observe(inst, params, config)
            rng = np.random.default_rng(args.seed + index)
            roll = predict(state, inst, params, config, "sample" if args.sample else "mean", rng)
            order = SceneBatch([inst]).keys
            for j, pid in enumerate(order):
                rows.append((ds.name, inst.start_frame, pid, roll.raw[:, j]))
            index += 1
    path = Path(args.out) if args.out else Path(args.out_dir) / "predictions.tsv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_predictions(rows), encoding="utf-8")
    print(f"{len(rows)} predicted trajectories written to {path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    preds = read_predictions(args.predictions)
    if not preds:
        raise D.AnnotationParseError("no predictions", 0, args.predictions)
    datasets = {ds.name: ds for ds in _load_datasets(args, "test")}
    keys = sorted(preds)
    scene = args.scene or keys[0][0]
    start = args.start_frame if args.start_frame is not None else min(s for n, s in keys if n == scene)
    if (scene, start) not in preds:
        raise KeyError(f"no predictions for scene {scene!r} at start frame {start}")
    if scene not in datasets:
        raise KeyError(f"scene {scene!r} not in the data source")
    ds = datasets[scene]
    inst = next((i for i in ds.instances if i.start_frame == start), None)
    if inst is None:
        raise KeyError(f"scene {scene!r} has no instance starting at frame {start}")
    t_obs = D.T_OBS
    observed = {pid: inst.positions[:t_obs, j] for j, pid in enumerate(inst.ped_ids)}
    future = {pid: inst.positions[t_obs:, j] for j, pid in enumerate(inst.ped_ids)}
    tracks = align_tracks(observed, future, preds[(scene, start)])
    lam = 0.5 if args.lam is None else args.lam
    path = Path(args.out) if args.out else Path(args.out_dir) / "plot.svg"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_svg(path, tracks, inst.obstacles, lam, title=f"{scene} frame {start}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_graph_dump(args) -> int:
    mode = Mode.parse(args.mode or "hho")
    lam = 0.5 if args.lam is None else args.lam
    if lam <= 0:
        raise UsageError("--lambda must be positive")
    if args.synthetic:
        ds = make_synthetic(args.synthetic, args.n_peds, args.data_seed, n_scenes=args.instance + 1)
        inst = ds.instances[args.instance]
        if not 0 <= args.frame < inst.n_steps:
            raise IndexError(f"step {args.frame} outside 0..{inst.n_steps - 1}")
        positions = {pid: inst.positions[args.frame, j] for j, pid in enumerate(inst.ped_ids)}
        obstacles = {oid: p for oid, p in zip(inst.obstacle_ids, inst.obstacles)}
    elif args.annotations:
        records = D.read_annotations(args.annotations)
        obs = D.read_obstacles(args.obstacles)
        if not records:
            raise IndexError(f"frame {args.frame} out of range: {args.annotations} has no annotations")
        lo, hi = min(r.frame_id for r in records), max(r.frame_id for r in records)
        if not lo <= args.frame <= hi:
            raise IndexError(f"frame {args.frame} outside {lo}..{hi}")
        transform = D.fit_normalization(records, obs)
        positions = {r.ped_id: transform.apply(np.array([r.x, r.y])) for r in records if r.frame_id == args.frame}
        obstacles = {o.obstacle_id: transform.apply(np.array([o.x, o.y])) for o in obs}
    else:
        raise UsageError("graph-dump needs --annotations or --synthetic")
    snap = build_snapshot(positions, obstacles, lam=lam, mode=mode, time_step=args.frame)
    payload = snap.to_json()
    payload.update({"mode": mode.value, "lambda": lam})
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "plot": cmd_plot,
    "graph-dump": cmd_graph_dump,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        with _thread_limits(args.threads):
            return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError, D.AnnotationParseError, D.DegenerateExtentError,
            KeyError, IndexError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
