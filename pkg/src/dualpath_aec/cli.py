"""Command-line interface for dualpath-aec."""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .config import RunConfig, StftConfig, preset, resolve_config
from .dsp import read_wav, write_wav
from .engine import Enhancer
from .errors import DpcError, MetricError
from .formats import HTMLComplexityReport, PDFComplexityReport
from .log import configure_logging, get_logger
from .metrics import SCENARIOS, evaluate, external_pesq
from .profiler import comparison_table, count
from .simulator import generate_batch
from .weights import init_weights

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_IO = 3


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "-c",
        "--config",
        type=str,
        help="RunConfig JSON file, or a preset name",
    )
    group.add_argument(
        "-p",
        "--preset",
        type=str,
        help="Preset name (e.g. uncompressed, trainmel-2, dualpath-2x4)",
    )


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.preset:
        return preset(args.preset)
    if args.config:
        return resolve_config(args.config)
    return RunConfig()


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2))


def cmd_enhance(args: argparse.Namespace) -> int:
    config = _load_config(args)
    mic = read_wav(args.mic, config.stft)
    ref = read_wav(args.ref, config.stft)
    enhancer = Enhancer(config, args.weights, seed=args.seed)
    logger.info(
        "enhancing %s (%s mode, latency %d samples / %.1f ms)",
        args.mic,
        "streaming" if args.streaming else "offline",
        enhancer.latency_samples,
        1000.0 * enhancer.latency_samples / config.stft.sample_rate,
    )
    out = enhancer.enhance(mic, ref, streaming=args.streaming)
    write_wav(args.out, out, config.stft.sample_rate)
    if args.aec_out:
        write_wav(
            args.aec_out,
            enhancer.aec_output(mic, ref),
            config.stft.sample_rate,
        )
    return EXIT_OK


def cmd_profile(args: argparse.Namespace) -> int:
    config = _load_config(args)
    label = args.preset or args.config or "uncompressed"
    report = count(config, label=label)
    payload = report.to_dict()
    if args.compare:
        baseline = count(resolve_config(args.compare), label=args.compare)
        payload["compare"] = baseline.to_dict()
        payload["ratio"] = report.ratio_to(baseline)
    if args.table:
        payload["table"] = comparison_table().to_dict(orient="records")
    if args.html:
        HTMLComplexityReport(config, label).generate(args.html)
    if args.pdf:
        PDFComplexityReport(config, label).generate(args.pdf)
    _emit(payload)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = generate_batch(
        args.near,
        args.far,
        args.noise,
        args.out,
        count=args.count,
        seed=args.seed,
        rir_dir=args.rir,
        workers=args.workers,
        grid=None if args.grid == "train" else args.grid,
    )
    _emit(
        {
            "clips": int(len(manifest)),
            "out": str(args.out),
            "manifest": str(Path(args.out) / "manifest.csv"),
        }
    )
    return EXIT_OK


def _common_length(
    *signals: Optional[np.ndarray],
) -> List[Optional[np.ndarray]]:
    present = [s.size for s in signals if s is not None]
    length = min(present)
    if len(set(present)) > 1:
        logger.warning(
            "signal lengths differ; scoring the first %d samples", length
        )
    return [s[:length] if s is not None else None for s in signals]


def cmd_metrics(args: argparse.Namespace) -> int:
    stft = StftConfig()
    est = read_wav(args.est, stft)
    ref = read_wav(args.ref, stft) if args.ref else None
    mic = read_wav(args.mic, stft) if args.mic else None
    est, ref, mic = _common_length(est, ref, mic)
    assert est is not None
    results: Dict[str, Any] = evaluate(
        est, ref, mic, scenario=args.scenario, sample_rate=stft.sample_rate
    )
    if args.pesq_bin:
        if not args.ref:
            raise MetricError("--pesq-bin needs --ref")
        results["wb_pesq"] = external_pesq(
            args.ref, args.est, args.pesq_bin, stft.sample_rate
        )
    if args.json:
        _emit(results)
    else:
        for name, value in results.items():
            print(f"{name}: {value:.4f}")
    return EXIT_OK


def cmd_init_weights(args: argparse.Namespace) -> int:
    config = _load_config(args)
    container = init_weights(config, seed=args.seed)
    container.save(args.out)
    _emit(
        {
            "out": str(args.out),
            "tensors": len(container),
            "params": container.num_params,
            "seed": args.seed,
        }
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualpath-aec",
        description=(
            "Streaming echo cancellation and noise suppression with "
            "compressed dual-path networks"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Enhance a recording with random weights (smoke test)
  dualpath-aec enhance --mic mic.wav --ref far.wav --out out.wav

  # Enhance frame by frame with trained weights
  dualpath-aec enhance --mic mic.wav --ref far.wav --preset dualpath-2x4 \\
    --weights dualpath-2x4.bin --out out.wav --streaming

  # Complexity of a preset, relative to the uncompressed model
  dualpath-aec profile --preset dualpath-4x4 --compare uncompressed

  # Complexity report as HTML
  dualpath-aec profile --preset trainmel-2 --table --html complexity.html

  # Mix an evaluation set
  dualpath-aec simulate --near speech/ --far far/ --noise noise/ \\
    --count 20 --grid eval --out mixes/
        """,
    )
    parser.add_argument(
        "-v", "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=None,
        help="Log level (default: $DPC_LOG or WARNING)",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    enhance = sub.add_parser("enhance", help="Enhance a mic/reference pair")
    enhance.add_argument("--mic", required=True, help="Microphone WAV")
    enhance.add_argument("--ref", required=True, help="Far-end reference WAV")
    enhance.add_argument("-o", "--out", required=True, help="Output WAV")
    _add_config_args(enhance)
    enhance.add_argument(
        "-w", "--weights", type=str, help="Weight container (.bin)"
    )
    enhance.add_argument(
        "--streaming",
        action="store_true",
        help="Process frame by frame (same output as offline)",
    )
    enhance.add_argument(
        "--aec-out", type=str, help="Also write the linear AEC output"
    )
    enhance.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Seed for random weights when --weights is absent (default: 0)",
    )
    enhance.set_defaults(func=cmd_enhance)

    profile = sub.add_parser("profile", help="Analytic params and MACs/s")
    _add_config_args(profile)
    profile.add_argument(
        "--compare", type=str, help="Baseline config file or preset name"
    )
    profile.add_argument(
        "--table",
        action="store_true",
        help="Include every preset next to its published complexity",
    )
    profile.add_argument("--html", type=str, help="Write an HTML report")
    profile.add_argument("--pdf", type=str, help="Write a PDF report")
    profile.set_defaults(func=cmd_profile)

    simulate = sub.add_parser("simulate", help="Mix echo/noise scenarios")
    simulate.add_argument("--near", required=True, help="Near-end WAV dir")
    simulate.add_argument("--far", required=True, help="Far-end WAV dir")
    simulate.add_argument("--noise", required=True, help="Noise WAV dir")
    simulate.add_argument("--rir", type=str, help="Room impulse WAV dir")
    simulate.add_argument("--count", type=int, default=1)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("-o", "--out", required=True, help="Output dir")
    simulate.add_argument(
        "--workers", type=int, default=1, help="Parallel clip workers"
    )
    simulate.add_argument(
        "--grid",
        choices=["train", "eval"],
        default="train",
        help="Random training recipe or the evaluation grid",
    )
    simulate.set_defaults(func=cmd_simulate)

    metrics = sub.add_parser("metrics", help="Score an enhanced WAV")
    metrics.add_argument("--est", required=True, help="Enhanced WAV")
    metrics.add_argument("--ref", type=str, help="Clean near-end WAV")
    metrics.add_argument("--mic", type=str, help="Microphone WAV")
    metrics.add_argument("--scenario", choices=list(SCENARIOS))
    metrics.add_argument(
        "--pesq-bin", type=str, help="External WB-PESQ executable"
    )
    metrics.add_argument("--json", action="store_true", help="JSON output")
    metrics.set_defaults(func=cmd_metrics)

    init = sub.add_parser("init-weights", help="Write seeded random weights")
    _add_config_args(init)
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("-o", "--out", required=True, help="Output .bin")
    init.set_defaults(func=cmd_init_weights)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    configure_logging(args.log_level)
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except DpcError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
