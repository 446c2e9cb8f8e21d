from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import settings
from .exceptions import WinlinError
from .logging_config import setup_logging
from .models import BuildFormer, load_checkpoint, restore_model
from .schemas import RunConfig
from .services import (
    bench_sweep,
    evaluate,
    generate_dataset,
    load_split,
    parse_config,
    predict_directory,
    resolve_seed,
    run_suite,
    train,
    write_bench_csv,
    write_effective_config,
)
from .services.gradcheck_service import format_report

logger = logging.getLogger("winlin.main")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_DOMAIN = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="winlin", description="BuildFormer with windowed linear attention"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None, help="flat key=value file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
        )
        return p

    add("gen-data", "generate the synthetic building dataset")
    p = add("train", "train a model on the train split")
    p.add_argument("--init-checkpoint", type=Path, default=None)
    p = add("eval", "evaluate a checkpoint with and without TTA")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", default="test")
    p = add("predict", "write predicted masks for a directory of images")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--no-tta", action="store_true")
    add("bench", "W-MHSA vs W-LMHSA window sweep")
    p = add("gradcheck", "finite-difference gradient suite")
    p.add_argument("--op", dest="ops", action="append", default=None)
    p.add_argument("--seeds", type=int, default=5)
    return parser


def _cmd_gen_data(args, config: RunConfig, out: Path) -> int:
    root = Path(config.data.root)
    generate_dataset(config.data, resolve_seed(config), root)
    write_effective_config(config, root)
    return EXIT_OK


def _cmd_train(args, config: RunConfig, out: Path) -> int:
    seed = resolve_seed(config)
    samples = load_split(config.data.root, "train")
    val = load_split(config.data.root, "val") if config.data.n_val else None
    model = BuildFormer(config.model, seed=seed)
    result = train(
        model,
        samples,
        config.train,
        out,
        seed=seed,
        pad_multiple=config.data.pad_multiple,
        init_checkpoint=args.init_checkpoint,
        val_samples=val,
    )
    logger.info("train done | checkpoint=%s | log=%s", result.checkpoint_path, result.log_path)
    return EXIT_OK


def _cmd_eval(args, config: RunConfig, out: Path) -> int:
    model = restore_model(load_checkpoint(args.checkpoint), config.model)
    samples = load_split(config.data.root, args.split)
    rows = ["split,iou,precision,recall,f1"]
    for tta in (False, True):
        report = evaluate(model, samples, use_tta=tta, pad_multiple=config.data.pad_multiple)
        rows.append(report.csv_row(f"{args.split}+tta" if tta else args.split))
    (out / "metrics.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_predict(args, config: RunConfig, out: Path) -> int:
    model = restore_model(load_checkpoint(args.checkpoint), config.model)
    predict_directory(
        model,
        args.input,
        out / "masks",
        use_tta=not args.no_tta and config.train.use_tta,
        pad_multiple=config.data.pad_multiple,
    )
    return EXIT_OK


def _cmd_bench(args, config: RunConfig, out: Path) -> int:
    reports = bench_sweep(config.bench, seed=resolve_seed(config))
    write_bench_csv(reports, out / "bench.csv")
    return EXIT_OK


def _cmd_gradcheck(args, config: RunConfig, out: Path) -> int:
    rows = run_suite(seeds=tuple(range(args.seeds)), only=args.ops)
    (out / "gradcheck.csv").write_text(format_report(rows), encoding="utf-8")
    failed = sorted({r.op for r in rows if not r.passed})
    if failed:
        print(
            f"error=GradcheckFailed | message=ops over tolerance: {','.join(failed)}",
            file=sys.stderr,
        )
        return EXIT_DOMAIN
    return EXIT_OK


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "bench": _cmd_bench,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    setup_logging(settings.log_level)
    try:
        config = parse_config(args.config, args.overrides)
        if config.run.log_level:
            setup_logging(config.run.log_level)
        out = Path(args.out or settings.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_effective_config(config, out)
        logger.info("command start | command=%s | out=%s", args.command, out)
        return COMMANDS[args.command](args, config, out)
    except WinlinError as e:
        logger.debug("command failed | command=%s", args.command, exc_info=True)
        print(f"error={type(e).__name__} | message={e}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as e:
        logger.exception("command crashed | command=%s", args.command)
        print(f"error={type(e).__name__} | message={e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
