"""
Main entry point for layerfit.

Batch command-line surface for the desk-scale layered try-on pipeline:
synthetic data generation, training, inference, evaluation, guidance-scale
sweeps and gradient verification.
"""
import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "src"))

from core_utils import get_version, setup_logging  # noqa: E402
from tryon.commands import COMMANDS, default_log_level  # noqa: E402
from tryon.error_handling import get_error_handler  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerfit", description="Layered virtual try-on at desk scale.")
    parser.add_argument("--version", action="version", version=f"layerfit {get_version()}")
    parser.add_argument("--log-level", default=default_log_level(),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Console log level.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Generate a synthetic layered-garment dataset.")
    p.add_argument("--config", default=None, help="Run configuration JSON.")
    p.add_argument("--out", required=True, help="Dataset directory to create.")
    p.add_argument("--count", type=int, default=None, help="Number of samples (overrides data.count).")
    p.add_argument("--seed", type=int, default=None, help="Generator seed (overrides data.seed).")

    p = sub.add_parser("train", help="Train the occlusion learner and denoiser.")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True, help="Dataset directory written by gen-data.")
    p.add_argument("--out", required=True, help="Run directory for checkpoints and logs.")
    p.add_argument("--ablation", choices=["base", "gol", "gol+locc"], default=None)
    p.add_argument("--stage", choices=["joint", "gol"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", default=None, help="Checkpoint to start from.")

    p = sub.add_parser("infer", help="Generate try-on images from a checkpoint.")
    p.add_argument("--config", default=None, help="Model configuration (default: the checkpoint's sidecar).")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=None, help="Guidance scale s.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sampler", choices=["ancestral", "ddim"], default=None)
    p.add_argument("--split", choices=["train", "test"], default="test")

    p = sub.add_parser("eval", help="Score generated images with LACD and SSIM.")
    p.add_argument("--config", default=None)
    p.add_argument("--gen", required=True, help="Directory of generated <id>.png files.")
    p.add_argument("--gt", required=True, help="Ground-truth directory (<id>.png or a dataset).")
    p.add_argument("--masks", required=True, help="Layer-mask directory (per-sample layer_k.png or a dataset).")
    p.add_argument("--out", required=True)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--band-radius", dest="band_radius", type=int, default=None)
    p.add_argument("--norm", choices=["raw", "per-pixel"], default=None)

    p = sub.add_parser("gradcheck", help="Run the finite-difference gradient suites.")
    p.add_argument("--config", default=None,
                   help="Run config whose model section shapes the network suites (default: a tiny model).")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--max-coords", dest="max_coords", type=int, default=6,
                   help="Coordinates checked per tensor and seed.")
    p.add_argument("--suite", action="append", default=None, help="Run only this suite (repeatable).")
    p.add_argument("--out", default=None, help="Directory for gradcheck.json and gradcheck.csv.")

    p = sub.add_parser("sweep-scale", help="Infer and evaluate across guidance scales.")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scales", default="0.0,2.5,5.0")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split", choices=["train", "test"], default="test")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    setup_logging(None, args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (Exception, KeyboardInterrupt) as e:
        return get_error_handler().handle_error(e, {"command": args.command})


if __name__ == "__main__":
    sys.exit(main())
