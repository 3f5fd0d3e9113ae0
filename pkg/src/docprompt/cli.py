"""``docprompt`` command-line interface.

Exit status is 0 when every output was written, 2 for usage or validation
errors (bad flags, unknown config keys, missing input files) and 1 for
runtime failures.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import imgproc, metrics, prompt, synth
from .config import Config
from .core_io import load_image, save_image, write_tensor
from .dataset import flat_path, load_sample, load_target, read_manifest
from .errors import InvalidParam, ShapeMismatch
from .net.model import build_model
from .net.train import load_checkpoint, predict, read_config_text, save_checkpoint, train
from .tasks import TaskKind

LOSS_LOG = "loss_log.txt"
PIPELINE_STAGES = ("dewarp", "deshadow", "appearance")


class UsageError(Exception):
    pass


def _require_file(path: str, what: str = "input"):
    if not os.path.isfile(path):
        raise UsageError(f"{what} file not found: {path}")


def _config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _load_model(checkpoint: str):
    _require_file(os.path.join(checkpoint, "index.txt"), "checkpoint index")
    cfg = Config.parse(read_config_text(checkpoint))
    tc = cfg.train_config()
    return load_checkpoint(checkpoint, tc.widths, tc.patch), cfg


def cmd_prompt(args) -> None:
    _require_file(args.input)
    cfg = _config(args).prompt_config()
    img = load_image(args.input)
    p = prompt.generate(img, args.task, cfg)
    for i, plane in enumerate(p.planes):
        save_image(plane, f"{args.out_prefix}_p{i}.png")
    write_tensor(prompt.fuse(p, img), f"{args.out_prefix}_fused.drt1")


def cmd_synth(args) -> None:
    if args.n_per_task < 1:
        raise UsageError("--n-per-task must be >= 1")
    cfg = _config(args)
    path = synth.make_dataset(cfg.synth_config(), args.n_per_task, args.out_dir)
    print(path)


def cmd_train(args) -> None:
    _require_file(args.manifest, "manifest")
    cfg = _config(args)
    tc = cfg.train_config()
    model = build_model(tc.widths, seed=tc.seed)
    result = train(model, args.manifest, tc, cfg.prompt_config())
    os.makedirs(args.out_dir, exist_ok=True)
    save_checkpoint(model, args.out_dir, cfg.to_text())
    with open(os.path.join(args.out_dir, LOSS_LOG), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.log_text())


def _restore(model, cfg: Config, img, task):
    return predict(model, img, task, cfg.get("prompt_mode"), cfg.prompt_config())


def cmd_restore(args) -> None:
    _require_file(args.input)
    model, cfg = _load_model(args.checkpoint)
    pred = _restore(model, cfg, load_image(args.input), args.task)
    save_image(pred.image, args.out)


def _eval_ground_truth(record, root, sample):
    """Flat page for dewarping (stored beside the map, else rebuilt from it)."""
    if record.task is not TaskKind.DEWARP:
        return sample.target
    fp = flat_path(record, root)
    if fp is not None:
        return load_image(fp)
    return imgproc.remap_bilinear(sample.input, sample.target)


def cmd_eval(args) -> None:
    _require_file(args.manifest, "manifest")
    if (args.checkpoint is None) == (args.predictions is None):
        raise UsageError("give exactly one of --checkpoint or --predictions")
    records, root = read_manifest(args.manifest)
    if args.checkpoint is not None:
        model, cfg = _load_model(args.checkpoint)
    os.makedirs(args.report, exist_ok=True)
    for task in TaskKind:
        recs = [r for r in records if r.task is task]
        if not recs:
            continue
        outs, gts, inps = [], [], []
        for r in recs:
            s = load_sample(r, root)
            if args.checkpoint is not None:
                outs.append(_restore(model, cfg, s.input, task).output)
            else:
                outs.append(load_target(task, os.path.join(args.predictions, r.target)))
            gts.append(_eval_ground_truth(r, root, s))
            inps.append(s.input)
        report = metrics.evaluate(task, outs, gts, inps)
        with open(os.path.join(args.report, f"report_{task.value}.txt"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_text())


def parse_stages(text: str) -> list[TaskKind]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise UsageError("--stages must name at least one of " + ",".join(PIPELINE_STAGES))
    for n in names:
        if n not in PIPELINE_STAGES:
            raise UsageError(f"unknown pipeline stage {n!r}")
    order = [PIPELINE_STAGES.index(n) for n in names]
    if order != sorted(set(order)):
        raise UsageError("stages must be distinct and follow the order dewarp,deshadow,appearance")
    return [TaskKind.parse(n) for n in names]


def cmd_pipeline(args) -> None:
    stages = parse_stages(args.stages)
    _require_file(args.input)
    model, cfg = _load_model(args.checkpoint)
    os.makedirs(args.out_dir, exist_ok=True)
    img = load_image(args.input)
    for i, task in enumerate(stages, 1):
        img = _restore(model, cfg, img, task).image
        save_image(img, os.path.join(args.out_dir, f"stage_{i}_{task.value}.png"))
    save_image(img, os.path.join(args.out_dir, "final.png"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="docprompt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    tasks = [t.value for t in TaskKind]

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.set_defaults(func=func)
        return p

    p = add("prompt", cmd_prompt, "write the three prompt planes and the fused tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--task", required=True, choices=tasks)
    p.add_argument("--out-prefix", required=True)

    p = add("synth", cmd_synth, "generate a synthetic paired dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-per-task", required=True, type=int)

    p = add("train", cmd_train, "train one model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("restore", cmd_restore, "run one task on one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--task", required=True, choices=tasks)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "evaluate a checkpoint (or stored predictions) on a manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--predictions", help="directory mirroring the manifest's target paths")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="output directory for report_<task>.txt")

    p = add("pipeline", cmd_pipeline, "chain dewarp, deshadow and appearance stages")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stages", default=",".join(PIPELINE_STAGES))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (UsageError, InvalidParam, FileNotFoundError) as exc:
        print(f"docprompt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ShapeMismatch, ValueError, OSError) as exc:
        print(f"docprompt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
