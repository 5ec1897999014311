"""Batch command-line front-end.

Every subcommand works on a single file or on a directory of files named
``<stem>.<ext>``; files are paired across directories by stem
(``scene_00007.json`` / ``scene_00007.cwg`` / ``scene_00007.pred.json``).
The trailing number of a stem is the scene index that selects the per-scene
random stream, so a directory run equals the per-file library calls.
"""
from __future__ import annotations

import argparse
import dataclasses
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, digest, load_config, load_corruption
from .errors import CrosswalkError, IoError
from .evaluation import (
    TABLE2_CORRUPTION,
    collect_hypotheses,
    calibrate_lambda,
    evaluate,
    format_report,
    parallel_map,
    run_ablation,
    scene_corruption,
    table2_suite,
)
from .featuremaps import CHANNELS, FeatureMaps, corrupt, export_pgm, read_grids, render_oracle, write_feature_maps
from .featuremaps import read_feature_maps
from .geometry import GridSpec
from .inference import POLICIES, infer_scene, load_predictions, save_predictions
from .losses import total_loss
from .scene import generate_scene, load_scene, save_scene

SCENE_EXT = ".json"
GRID_EXT = ".cwg"
PRED_EXT = ".pred.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# file layout helpers


def stem(path: Path) -> str:
    return path.name.split(".", 1)[0]


def scene_index(path: Path, default: int = 0) -> int:
    m = re.search(r"(\d+)$", stem(path))
    return int(m.group(1)) if m else default


def inputs(path: Path, ext: str) -> list[Path]:
    """The file itself, or the ``*ext`` files of a directory in name order."""
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.name.endswith(ext) and (ext != SCENE_EXT or not p.name.endswith(PRED_EXT)))
        if not files:
            raise IoError(f"{path}: no *{ext} files")
        return files
    if not path.exists():
        raise IoError(f"{path}: no such file or directory")
    return [path]


def partner(path: Path, ref: Path, ext: str, many: bool) -> Path:
    """The file in ``path`` sharing ``ref``'s stem, or ``path`` itself for single-file runs."""
    if not many and not path.is_dir():
        return path
    p = path / (stem(ref) + ext)
    if not p.exists():
        raise IoError(f"{p}: missing (paired with {ref.name})")
    return p


def output(out: Path, ref: Path, ext: str, many: bool) -> Path:
    if many or out.is_dir() or str(out).endswith(("/", "\\")):
        out.mkdir(parents=True, exist_ok=True)
        return out / (stem(ref) + ext)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def write_text(out: Path | None, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def grid_only_spec(arr: np.ndarray) -> GridSpec:
    """A unit grid matching ``arr``'s size, for grid-only operations that ignore world coordinates."""
    return GridSpec((0.0, 0.0), 1.0, arr.shape[2], arr.shape[1])


# --------------------------------------------------------------------------
# per-file workers (module level so worker processes can import them)


def _gen_one(args):
    cfg, index, path = args
    save_scene(generate_scene(cfg, index), path)


def _render_one(args):
    src, dst = args
    write_feature_maps(dst, render_oracle(load_scene(src)))


def _corrupt_one(args):
    src, dst, cfg, index = args
    arr = read_grids(src)
    maps = FeatureMaps.from_stack(grid_only_spec(arr), arr)
    write_feature_maps(dst, corrupt(maps, scene_corruption(cfg, index)))


def _infer_one(args):
    scene_path, maps_path, dst, cfg, policy = args
    scene = load_scene(scene_path)
    maps = read_feature_maps(maps_path, scene.grid)
    save_predictions(infer_scene(scene, maps, cfg, policy), dst)


def _loss_one(args):
    pred_path, gt_path, cfg = args
    pred, gt = read_grids(pred_path), read_grids(gt_path)
    report = total_loss(
        FeatureMaps.from_stack(grid_only_spec(pred), pred), FeatureMaps.from_stack(grid_only_spec(gt), gt), cfg
    )
    return stem(pred_path), report


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(a, cfg: RunConfig):
    gen = cfg.generator
    count = a.count if a.count is not None else 1
    if count < 1:
        raise UsageError("gen: --count must be >= 1")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(gen, i, out / f"scene_{i:05d}{SCENE_EXT}") for i in range(a.start, a.start + count)]
    parallel_map(_gen_one, jobs, a.jobs)


def cmd_render(a, cfg: RunConfig):
    files = inputs(Path(a.input), SCENE_EXT)
    many = Path(a.input).is_dir()
    parallel_map(_render_one, [(f, output(Path(a.out), f, GRID_EXT, many)) for f in files], a.jobs)


def cmd_corrupt(a, cfg: RunConfig):
    c = cfg.corruption
    files = inputs(Path(a.input), GRID_EXT)
    many = Path(a.input).is_dir()
    work = [(f, output(Path(a.out), f, GRID_EXT, many), c, scene_index(f, k)) for k, f in enumerate(files)]
    parallel_map(_corrupt_one, work, a.jobs)


def cmd_infer(a, cfg: RunConfig):
    scenes = inputs(Path(a.scenes), SCENE_EXT)
    many = Path(a.scenes).is_dir()
    work = [
        (f, partner(Path(a.maps), f, GRID_EXT, many), output(Path(a.out), f, PRED_EXT, many), cfg.energy, a.policy)
        for f in scenes
    ]
    parallel_map(_infer_one, work, a.jobs)


def cmd_loss(a, cfg: RunConfig):
    preds = inputs(Path(a.pred), GRID_EXT)
    many = Path(a.pred).is_dir()
    rows = parallel_map(_loss_one, [(p, partner(Path(a.gt), p, GRID_EXT, many), cfg.loss) for p in preds], a.jobs)
    lines = ["name,seg,dt,align,total"]
    for name, r in rows:
        lines.append(f"{name},{r.seg:.9g},{r.dt:.9g},{r.align:.9g},{r.total:.9g}")
    if len(rows) > 1:
        mean = [np.mean([getattr(r, k) for _, r in rows]) for k in ("seg", "dt", "align", "total")]
        lines.append("mean," + ",".join(f"{v:.9g}" for v in mean))
    write_text(None if a.out is None else Path(a.out), "\n".join(lines) + "\n")


def cmd_eval(a, cfg: RunConfig):
    scene_files = inputs(Path(a.scenes), SCENE_EXT)
    many = Path(a.scenes).is_dir()
    scenes = [load_scene(f) for f in scene_files]
    preds = [load_predictions(partner(Path(a.preds), f, PRED_EXT, many)) for f in scene_files]
    report = evaluate(scenes, preds)
    write_text(None if a.out is None else Path(a.out), format_report([(a.name, report)]))


def cmd_ablate(a, cfg: RunConfig):
    gen, corruption, energy = cfg.generator, cfg.corruption, cfg.energy
    if a.calibrate:
        held_out = dataclasses.replace(gen, seed=a.calibration_seed)
        hyps = collect_hypotheses(held_out, corruption, energy, a.calibrate, a.jobs)
        best, scores = calibrate_lambda(hyps, energy)
        for lam, iou in scores:
            print(f"calibration lambda_i={lam:g} mIoU={iou:.6f}", file=sys.stderr)
        energy = dataclasses.replace(energy, lambda_i=best)
    specs = table2_suite(corruption, energy)
    results = run_ablation(specs, gen, a.count, a.jobs)
    write_text(None if a.out is None else Path(a.out), format_report(results))


def cmd_export_pgm(a, cfg: RunConfig):
    arr = read_grids(Path(a.input))
    if a.channel not in CHANNELS:
        raise UsageError(f"export-pgm: unknown channel {a.channel!r}; choose from {', '.join(CHANNELS)}")
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_pgm(arr[CHANNELS.index(a.channel)], out, a.scale)


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="config file with generator/corruption/energy/loss sections")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (never changes outputs)")

    p = _Parser(prog="crosswalk", description="Crosswalk drawing from bird's-eye-view feature maps.")
    p.add_argument("--version", action="version", version=f"crosswalk {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen", parents=[common], help="generate synthetic scenes")
    s.add_argument("--seed", type=int)
    s.add_argument("--count", "--scenes", dest="count", type=int, help="number of scenes (default 1)")
    s.add_argument("--start", type=int, default=0, help="first scene index")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(run=cmd_gen)

    s = sub.add_parser("render", parents=[common], help="render oracle feature maps from scenes")
    s.add_argument("input", help="scene file or directory")
    s.add_argument("--out", required=True)
    s.set_defaults(run=cmd_render)

    s = sub.add_parser("corrupt", parents=[common], help="degrade feature maps")
    s.add_argument("input", help="grid file or directory")
    s.add_argument("--corruption", help="corruption settings file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(run=cmd_corrupt)

    s = sub.add_parser("infer", parents=[common], help="draw crosswalks from feature maps")
    s.add_argument("scenes", help="scene file or directory (ground truth is ignored)")
    s.add_argument("maps", help="grid file or directory")
    s.add_argument("--out", required=True)
    s.add_argument("--lambda-i", type=float)
    s.add_argument("--policy", choices=POLICIES, default="full")
    s.set_defaults(run=cmd_infer)

    s = sub.add_parser("loss", parents=[common], help="training loss between predicted and target maps")
    s.add_argument("pred", help="predicted grid file or directory")
    s.add_argument("gt", help="target grid file or directory")
    s.add_argument("--lambda-align", type=float)
    s.add_argument("--out", help="CSV output (default stdout)")
    s.set_defaults(run=cmd_loss)

    s = sub.add_parser("eval", parents=[common], help="precision/recall/IoU report")
    s.add_argument("scenes", help="ground-truth scene file or directory")
    s.add_argument("preds", help="prediction file or directory")
    s.add_argument("--name", default="eval", help="row label in the report")
    s.add_argument("--out", help="CSV output (default stdout)")
    s.set_defaults(run=cmd_eval)

    s = sub.add_parser("ablate", parents=[common], help="run an ablation suite")
    s.add_argument("--suite", choices=("table2",), default="table2")
    s.add_argument("--scenes", dest="count", type=int, default=200)
    s.add_argument("--seed", type=int)
    s.add_argument("--corruption", help="corruption settings file")
    s.add_argument("--lambda-i", type=float)
    s.add_argument("--calibrate", type=int, default=0, metavar="N", help="pick lambda_i on N held-out scenes first")
    s.add_argument("--calibration-seed", type=int, default=1001)
    s.add_argument("--out", help="CSV output (default stdout)")
    s.set_defaults(run=cmd_ablate)

    s = sub.add_parser("export-pgm", parents=[common], help="write one channel as a graymap image")
    s.add_argument("input", help="grid file")
    s.add_argument("--channel", default="dt")
    s.add_argument("--scale", type=float, help="value mapped to white (default: 30 for dt, else 1)")
    s.add_argument("--out", required=True)
    s.set_defaults(run=cmd_export_pgm)
    return p


def resolve_config(a) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    base = RunConfig(corruption=TABLE2_CORRUPTION) if a.command == "ablate" else RunConfig()
    cfg = load_config(a.config, base) if a.config else base
    if getattr(a, "corruption", None):
        cfg = dataclasses.replace(cfg, corruption=load_corruption(a.corruption, cfg.corruption))
    try:
        if getattr(a, "seed", None) is not None:
            if a.command in ("gen", "ablate"):
                cfg = dataclasses.replace(cfg, generator=dataclasses.replace(cfg.generator, seed=a.seed))
            if a.command in ("corrupt", "ablate"):
                cfg = dataclasses.replace(cfg, corruption=dataclasses.replace(cfg.corruption, seed=a.seed))
        if getattr(a, "lambda_i", None) is not None:
            cfg = dataclasses.replace(cfg, energy=dataclasses.replace(cfg.energy, lambda_i=a.lambda_i))
        if getattr(a, "lambda_align", None) is not None:
            cfg = dataclasses.replace(cfg, loss=dataclasses.replace(cfg.loss, lambda_align=a.lambda_align))
    except ValueError as exc:
        raise UsageError(f"{a.command}: {exc}") from None
    return cfg


SEEDS = {
    "gen": lambda c: c.generator.seed,
    "corrupt": lambda c: c.corruption.seed,
    "ablate": lambda c: c.generator.seed,
}


def run(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        if a.jobs < 1:
            raise UsageError(f"{a.command}: --jobs must be >= 1")
        if a.command == "export-pgm" and a.scale is None:
            a.scale = 30.0 if a.channel == "dt" else 1.0
        cfg = resolve_config(a)
        seed = SEEDS[a.command](cfg) if a.command in SEEDS else "-"
        print(f"crosswalk {__version__} {a.command} seed={seed} config={digest(cfg)}", file=sys.stderr)
        a.run(a, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (CrosswalkError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
