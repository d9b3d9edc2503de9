"""Command-line surface: corpus degradation, training, evaluation grids,
and analysis reports.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, model_config_from, parse_config, train_config_from
from .degrade import (
    KINDS,
    apply_pipeline,
    normalize_kind,
    sample_train_pipeline,
    serialize_pipeline,
    test_degradation,
)
from .evaluate import (
    center_crop_multiple,
    degrade_for_eval,
    evaluate_grid,
    format_db,
    psnr,
    write_report_csv,
    write_summary_csv,
)
from .interpret import (
    ablate_channel,
    channel_saliency,
    ddr_report,
    sequential_ablation,
    write_ablation_csv,
    write_ddr_csv,
    write_saliency,
    write_sequential_csv,
)
from .model import infer
from .pngio import read_png, write_png
from .rng import derive_stream
from .train import TrainDiverged, build_model, init_rng_for, load_checkpoint, save_checkpoint, train_loop, write_log_csv


class UsageError(ValueError):
    """Bad arguments or invalid references in them; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_kinds(spec: str) -> list[str]:
    kinds = []
    for token in spec.split(","):
        token = token.strip()
        try:
            kinds.append(normalize_kind(token))
        except ValueError:
            raise UsageError(
                f"unknown degradation kind {token!r}; valid kinds: {', '.join(KINDS)}"
            ) from None
    return kinds


def _load_image_dir(path: Path) -> tuple[list[str], list[np.ndarray]]:
    if not path.is_dir():
        raise UsageError(f"image directory not found: {path}")
    files = sorted(path.glob("*.png"))
    if not files:
        raise UsageError(f"no PNG images in {path}")
    return [f.stem for f in files], [read_png(f) for f in files]


def cmd_degrade(args) -> int:
    names, images = _load_image_dir(Path(args.in_dir))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = _parse_kinds(args.kind)[0] if args.kind else None
    for i, (stem, img) in enumerate(zip(names, images)):
        hr = center_crop_multiple(img, args.scale)
        stream = derive_stream(args.seed, i)
        if args.sample:
            pipe = sample_train_pipeline(args.scale, stream)
            token = "sample"
        else:
            pipe = test_degradation(kind, args.scale)
            token = kind
        lr = apply_pipeline(hr, pipe, stream)
        write_png(out_dir / f"{stem}_{token}.png", lr)
        (out_dir / f"{stem}_{token}.manifest.txt").write_text(serialize_pipeline(pipe))
    print(f"degraded {len(images)} images into {out_dir}")
    return 0


def cmd_train(args) -> int:
    values = parse_config(args.config)
    model_cfg = model_config_from(values)
    train_cfg, corpus_dir = train_config_from(values)
    if corpus_dir is None:
        raise ConfigError("missing required key 'train.corpus'")
    _, corpus = _load_image_dir(Path(corpus_dir))
    net = build_model(model_cfg, init_rng_for(train_cfg))
    net, adam, log = train_loop(net, corpus, train_cfg)
    out = Path(args.out)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, adam, train_cfg.iters, out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    write_log_csv(log, log_path)
    print(f"checkpoint: {out}")
    print(f"log: {log_path}")
    return 0


def cmd_eval(args) -> int:
    net, _, _ = load_checkpoint(args.ckpt)
    kinds = _parse_kinds(args.kinds)
    datasets = {}
    for token in args.datasets:
        name, _, path = token.rpartition("=")
        path = Path(path)
        datasets[name or path.name] = _load_image_dir(path)[1]
    tag = args.tag or Path(args.ckpt).stem
    report = evaluate_grid(
        net, datasets, kinds, s=net.cfg.scale, eval_seed=args.eval_seed, model_tag=tag
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out_dir / "eval_report.csv")
    write_summary_csv(report, out_dir / "eval_summary.csv")
    for row in report.rows:
        print(f"{row.model_tag} {row.dataset} {row.kind}: {format_db(row.mean_psnr)} dB")
    return 0


def _analysis_pair(net, images, args):
    hr = center_crop_multiple(images[0], net.cfg.scale)
    lr = degrade_for_eval(hr, args.kind, net.cfg.scale, args.eval_seed, 0)
    return lr, hr


def cmd_analyze(args) -> int:
    net, _, _ = load_checkpoint(args.ckpt)
    names, images = _load_image_dir(Path(args.in_dir))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.mode == "csm":
        lr, _ = _analysis_pair(net, images, args)
        result = channel_saliency(net, lr)
        write_saliency(result, out_dir)
        print(f"attribution target D = {result.d_value:.6f}")
        print(f"strongest channel: {int(np.argmax(result.channel_scores))}")
    elif args.mode == "ablate":
        lr, hr = _analysis_pair(net, images, args)
        baseline = psnr(infer(net, lr.astype(np.float32)), hr)
        rows = [ablate_channel(net, lr, hr, c) for c in range(net.cfg.n_feats)]
        curve = sequential_ablation(net, lr, hr, order=args.order)
        write_ablation_csv(out_dir / "ablation.csv", rows, baseline)
        write_sequential_csv(out_dir / "psnr_curve.csv", curve, baseline)
        print(f"baseline: {format_db(baseline)} dB")
    else:
        kinds = _parse_kinds(args.kinds)
        if len(kinds) < 2:
            raise UsageError("need at least 2 degradation kinds for ddr")
        report = ddr_report(net, images, kinds, net.cfg.scale, eval_seed=args.eval_seed)
        write_ddr_csv(report, out_dir / "ddr.csv", out_dir / "projection.csv", names)
        print(f"CHI = {report.chi:.6f}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="dropsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("degrade", help="degrade an HR corpus to LR images + manifests")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of HR PNGs")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--kind", help=f"test degradation kind ({', '.join(KINDS)})")
    group.add_argument("--sample", action="store_true", help="sample a random training pipeline")
    p.add_argument("--scale", type=int, default=2, choices=(2, 4))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="log CSV path (default: checkpoint path with .log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR grid over datasets x degradation kinds")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--datasets", nargs="+", required=True, help="dataset dirs, optionally name=dir")
    p.add_argument("--kinds", required=True, help="comma-separated degradation kinds")
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--out", default=".", help="directory for report CSVs")
    p.add_argument("--tag", help="model tag in reports (default: checkpoint stem)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="saliency maps, channel ablation, or ddr clustering")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mode", required=True, choices=("csm", "ablate", "ddr"))
    p.add_argument("--in", dest="in_dir", required=True, help="directory of HR PNGs")
    p.add_argument("--kinds", default="clean,n", help="ddr mode: comma-separated kinds")
    p.add_argument("--kind", default="clean", help="csm/ablate mode: degradation of the input")
    p.add_argument("--order", default="by_index", choices=("by_index", "by_saliency_desc"))
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
