"""
`pscnet` command line: train, eval, predict, verify and synth.

Failures are reported on stderr as one JSON line {"error": ..., "message": ...}
with exit status 1.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from crowdlib.cli.config import RunConfig, load_run_config
from crowdlib.cli.exceptions import ConfigError, MissingDataError
from crowdlib.data.annotations import ANNOTATIONS_FILE, load_scenes
from crowdlib.data.images import read_pnm, write_pgm
from crowdlib.data.rasters import DensityRaster, write_raster
from crowdlib.data.scene import AnnotatedScene
from crowdlib.data.synthetic import synth_dataset
from crowdlib.data.transforms import limit_shorter_side
from crowdlib.exceptions import CrowdLibException
from crowdlib.models.backbone import load_external_weights
from crowdlib.models.pscnet import Pscnet, predicted_count
from crowdlib.training.checkpoint import read_checkpoint
from crowdlib.training.evaluation import evaluate
from crowdlib.training.trainer import train
from crowdlib.utils import faults
from crowdlib.verification import experiments, registry, suites  # noqa: F401  (registers the suites)

logger = logging.getLogger(__name__)

THREADS_ENV = "PSCNET_THREADS"


def resolve_threads(flag: Optional[int]) -> int:
    """The --threads flag wins over PSCNET_THREADS; the default is 1."""
    if flag is not None:
        value: object = flag
    else:
        value = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(value)  # type: ignore[call-overload]
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={value!r} is not an integer. ")
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}. ")
    return threads


def _annotations(data: str) -> Path:
    path = Path(data) / ANNOTATIONS_FILE
    if not path.is_file():
        raise MissingDataError(f"{data} has no {ANNOTATIONS_FILE}. ")
    return path


def _load_model(config: RunConfig, checkpoint: str) -> Pscnet:
    model = Pscnet(config.to_pscnet())
    model.load_state(read_checkpoint(checkpoint))
    return model.eval()


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    scenes = load_scenes(
        _annotations(args.data), config.data.max_shorter_side, args.threads
    )
    model = Pscnet(config.to_pscnet())
    if args.backbone_weights:
        load_external_weights(args.backbone_weights, model.backbone)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(
        scenes,
        config.to_pscnet(),
        config.to_supervision(),
        config.to_training(args.threads, args.progress),
        log_path=out / "train.log",
        model=model,
    )
    (out / "best.ckpt").write_bytes(result.best_state)
    (out / "last.ckpt").write_bytes(result.last_state)
    print(
        json.dumps(
            {
                "steps": result.state.step,
                "best_mae": result.state.best_mae,
                "best_step": result.state.best_step,
            }
        )
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    annotations = _annotations(args.data)
    model = _load_model(config, args.model)
    scenes = load_scenes(annotations, config.data.max_shorter_side, args.threads)
    report = evaluate(scenes, model, args.threads)
    print(report.table())
    print(report.to_json())
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    model = _load_model(config, args.model)
    image = read_pnm(args.image)
    scene = AnnotatedScene(image=image, points=np.zeros((0, 2)), id=str(args.image))
    scene = limit_shorter_side(scene, config.data.max_shorter_side)
    density = model.predict(scene.image)
    raster = DensityRaster(density.numpy()[0])
    write_raster(args.out, raster)
    if args.vis:
        peak = float(raster.values.max())
        write_pgm(args.vis, raster.values / peak if peak > 0 else raster.values)
    print(json.dumps({"count": predicted_count(density), "raster": str(args.out)}))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    if args.inject_fault:
        with faults.inject(args.inject_fault):
            outcomes = registry.run_suites(args.filter, args.quick)
    else:
        outcomes = registry.run_suites(args.filter, args.quick)
    for outcome in outcomes:
        print(f"{'PASS' if outcome.passed else 'FAIL'} {outcome.name}")
        shown = outcome.results if args.details else outcome.failures()
        for result in shown:
            print(f"  {result.describe()}")
    failed = sum(not outcome.passed for outcome in outcomes)
    print(f"{len(outcomes) - failed}/{len(outcomes)} suites passed")
    return 0 if failed == 0 else 1


def cmd_synth(args: argparse.Namespace) -> int:
    synth_dataset(
        args.out,
        args.n,
        size=args.size,
        seed=args.seed,
        min_points=args.min_points,
        max_points=args.max_points,
        force=args.force,
    )
    print(json.dumps({"scenes": args.n, "out": str(args.out)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pscnet", description="Crowd counting with density map regression."
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"worker threads (default: ${THREADS_ENV} or 1)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train_parser = commands.add_parser("train", help="train a model")
    train_parser.add_argument("--config")
    train_parser.add_argument("--data", required=True)
    train_parser.add_argument("--out", required=True)
    train_parser.add_argument("--backbone-weights")
    train_parser.add_argument("--progress", action="store_true")
    train_parser.set_defaults(handler=cmd_train)

    eval_parser = commands.add_parser("eval", help="report MAE and RMSE")
    eval_parser.add_argument("--config")
    eval_parser.add_argument("--model", required=True)
    eval_parser.add_argument("--data", required=True)
    eval_parser.set_defaults(handler=cmd_eval)

    predict_parser = commands.add_parser("predict", help="write a density raster")
    predict_parser.add_argument("--config")
    predict_parser.add_argument("--model", required=True)
    predict_parser.add_argument("--image", required=True)
    predict_parser.add_argument("--out", required=True)
    predict_parser.add_argument("--vis", help="max-normalized 8-bit PGM rendering")
    predict_parser.set_defaults(handler=cmd_predict)

    verify_parser = commands.add_parser("verify", help="run the verification suites")
    verify_parser.add_argument("--filter", help="run only this suite group")
    verify_parser.add_argument("--inject-fault", choices=faults.KNOWN_FAULTS)
    verify_parser.add_argument(
        "--quick", action="store_true", help="skip the slow training experiments"
    )
    verify_parser.add_argument(
        "--details", action="store_true", help="print every check, not only failures"
    )
    verify_parser.set_defaults(handler=cmd_verify)

    synth_parser = commands.add_parser("synth", help="generate a synthetic dataset")
    synth_parser.add_argument("--n", type=int, required=True)
    synth_parser.add_argument("--size", type=int, default=128)
    synth_parser.add_argument("--out", required=True)
    synth_parser.add_argument("--seed", type=int, default=0)
    synth_parser.add_argument("--min-points", type=int, default=5)
    synth_parser.add_argument("--max-points", type=int, default=20)
    synth_parser.add_argument("--force", action="store_true")
    synth_parser.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.threads = resolve_threads(args.threads)
        return args.handler(args)
    except (CrowdLibException, OSError) as error:
        message = error.message if isinstance(error, CrowdLibException) else str(error)
        print(
            json.dumps({"error": type(error).__name__, "message": message.strip()}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
