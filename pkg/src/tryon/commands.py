"""
Command implementations for the layerfit CLI.

Every command takes the parsed argparse namespace, writes its outputs and
a run record (`config.json`, `run.json`, `layerfit.log`) into its output
directory, and returns an exit code. Failures are raised as LayerfitError
subclasses and turned into exit codes by the entry script.
"""

import copy
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from rich.table import Table
from tqdm import tqdm

from config import CONFIG, load_run_config, thread_cap, validate_run_config
from core_utils import (console, print_header, print_info, print_success, print_warning, setup_logging,
                        sha256_file, write_csv, write_json, write_run_record)
from .dataset.quadruplet import Quadruplet
from .dataset.storage import load, save, write_image
from .dataset.synth import SynthConfig, generate, quantise
from .error_handling import CheckpointError, ConfigurationError, UsageError, VerificationError
from .gmf.pipeline import TryOnModel, sample
from .gmf.trainer import Trainer
from .metrics.evaluate import evaluate_directories
from .verify import all_suites, run_all, suite_config, summarize

logger = logging.getLogger(__name__)

SCALE_FIELDS = ["scale", "count", "lacd", "lacd_raw", "lacd_per_pixel", "ssim"]


def _override(config: Dict[str, Any], section: str, **values) -> Dict[str, Any]:
    """Apply the non-None CLI values onto a config section and re-validate."""
    updated = copy.deepcopy(config)
    for key, value in values.items():
        if value is None:
            continue
        if key not in updated[section]:
            raise ConfigurationError(f"Unknown config key '{section}.{key}'", code="LFT-E201")
        updated[section][key] = value
    validate_run_config(updated)
    return updated


def _start_run(args, out_dir: str, config: Dict[str, Any], seed: int):
    setup_logging(out_dir, args.log_level)
    write_run_record(out_dir, args.command, getattr(args, "argv", []), seed, config)


def _check_separate(out_dir: str, data_dir: str):
    out, data = os.path.realpath(out_dir), os.path.realpath(data_dir)
    if out == data or out.startswith(data + os.sep):
        raise UsageError(
            f"Output directory {out_dir} lies inside the dataset {data_dir}",
            code="LFT-E705",
            suggestions=["Datasets are read-only inputs; choose an output directory outside them"],
        )


def _parse_scales(raw: str) -> List[float]:
    try:
        scales = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Invalid --scales value '{raw}'", code="LFT-E202") from e
    if not scales or any(s < 0.0 for s in scales):
        raise ConfigurationError(f"--scales needs non-negative numbers, got '{raw}'", code="LFT-E203")
    return scales


# --- gen-data ---

def cmd_gen_data(args) -> int:
    config = _override(load_run_config(args.config), "data", count=args.count, seed=args.seed)
    data = config["data"]
    _start_run(args, args.out, config, data["seed"])
    print_header(f"Generating {data['count']} samples ({data['image_size']}x{data['image_size']})")

    samples = generate(SynthConfig.from_run_config(config), data["count"])
    save(samples, args.out, config=config, seed=data["seed"])
    occlusion = [s.meta["occlusion"] for s in samples]
    print_success(f"Wrote {len(samples)} samples to {args.out} "
                  f"(occlusion {min(occlusion):.2f}..{max(occlusion):.2f})")
    return 0


# --- train ---

def cmd_train(args) -> int:
    config = load_run_config(args.config)
    config = _override(config, "train", ablation=args.ablation, stage=args.stage, steps=args.steps, seed=args.seed)
    _check_separate(args.out, args.data)
    _start_run(args, args.out, config, config["train"]["seed"])
    print_header(f"Training stage '{config['train']['stage']}' with ablation '{config['train']['ablation']}'")

    train_samples = load(args.data, split="train")
    test_samples = load(args.data, split="test")
    model = TryOnModel(config)
    if args.init:
        model.load(args.init)
        print_info(f"Initialised from {args.init}")
    elif config["train"]["trainable"] == "gol+attention":
        print_warning("Training only the occlusion learner and attention blocks from scratch; "
                      "the zero-initialised output layer will stay at zero")

    summary = Trainer(model, config, args.out).train(train_samples, test_samples)
    print_success(f"Loss {summary.initial_loss:.4f} -> {summary.final_loss:.4f}; checkpoint {summary.checkpoint}")
    return 0


# --- infer ---

def load_model(checkpoint: str, config_path: Optional[str] = None) -> TryOnModel:
    """
    Rebuild a model from a checkpoint and its `config.json` sidecar.

    Raises:
        CheckpointError: no sidecar config and none given
    """
    if not os.path.isfile(checkpoint):
        raise CheckpointError(f"Checkpoint not found: {checkpoint}", code="LFT-E601")
    sidecar = os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "config.json")
    path = config_path or sidecar
    if not os.path.isfile(path):
        raise CheckpointError(
            f"No model configuration next to {checkpoint}",
            code="LFT-E605",
            suggestions=["Pass --config with the configuration the checkpoint was trained with"],
        )
    model = TryOnModel(load_run_config(path))
    model.load(checkpoint)
    return model


def _generate_one(model: TryOnModel, item: Quadruplet, index: int, sample_config: Dict[str, Any]) -> np.ndarray:
    rng = np.random.default_rng([sample_config["seed"], index])
    image = sample(model, item.agnostic, item.outer, item.inner, item.upper_mask, sample_config["scale"], rng,
                   sampler=sample_config["sampler"], ddim_steps=sample_config["ddim_steps"],
                   paste_unmasked=sample_config["paste_unmasked"])
    return quantise(np.clip(image, 0.0, 1.0))


def run_inference(model: TryOnModel, samples: Sequence[Quadruplet], out_dir: str, sample_config: Dict[str, Any],
                  checkpoint: str, threads: Optional[int] = None) -> Dict[str, Any]:
    """
    Sample every item into `<out_dir>/gen/<id>.png` and write `manifest.json`.

    Sample k draws from `default_rng([seed, k])`, so results do not depend on
    the worker count.
    """
    gen_dir = os.path.join(out_dir, "gen")
    os.makedirs(gen_dir, exist_ok=True)
    workers = threads or thread_cap()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_generate_one, model, item, k, sample_config) for k, item in enumerate(samples)]
        for item, future in tqdm(zip(samples, futures), total=len(samples), desc="infer", unit="sample"):
            write_image(os.path.join(gen_dir, f"{item.id}.png"), future.result())

    manifest = {
        "ids": [item.id for item in samples],
        "seed": sample_config["seed"],
        "scale": sample_config["scale"],
        "sampler": sample_config["sampler"],
        "ddim_steps": sample_config["ddim_steps"],
        "timesteps": model.bundle.schedule.T,
        "ablation": model.ablation,
        "checkpoint": os.path.abspath(checkpoint),
        "checkpoint_sha256": sha256_file(checkpoint),
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def cmd_infer(args) -> int:
    model = load_model(args.checkpoint, args.config)
    config = _override(model.config, "sample", scale=args.scale, seed=args.seed, sampler=args.sampler)
    _check_separate(args.out, args.data)
    _start_run(args, args.out, config, config["sample"]["seed"])

    samples = load(args.data, split=args.split)
    if not samples:
        print_warning(f"No '{args.split}' samples in {args.data}")
        return 0
    print_header(f"Sampling {len(samples)} images at s={config['sample']['scale']} ({config['sample']['sampler']})")
    run_inference(model, samples, args.out, config["sample"], args.checkpoint)
    print_success(f"Wrote {len(samples)} images to {os.path.join(args.out, 'gen')}")
    return 0


# --- eval ---

def cmd_eval(args) -> int:
    config = load_run_config(args.config)
    config = _override(config, "eval", lambda1=args.lambda1, band_radius=args.band_radius, norm=args.norm)
    ev = config["eval"]
    for source in (args.gt, args.masks):
        _check_separate(args.out, source)
    _start_run(args, args.out, config, 0)
    report = evaluate_directories(args.gen, args.gt, args.masks, args.out, lambda1=ev["lambda1"],
                                  band_radius=ev["band_radius"], norm=ev["norm"])
    corpus = report["corpus"]
    print_success(f"{corpus['count']} samples: LACD {corpus['lacd']:.4f} ({ev['norm']}), SSIM {corpus['ssim']:.4f}")
    return 0


# --- gradcheck ---

def cmd_gradcheck(args) -> int:
    config = suite_config(load_run_config(args.config) if args.config else None)
    if args.out:
        _start_run(args, args.out, config, 0)
    available = all_suites(config)
    suites = args.suite or list(available)
    unknown = sorted(set(suites) - set(available))
    if unknown:
        raise UsageError(f"Unknown gradcheck suite(s): {', '.join(unknown)}",
                         suggestions=[f"Available: {', '.join(available)}"])

    print_header(f"Gradient check: {len(suites)} suites x {args.seeds} seeds")
    with tqdm(total=len(suites), desc="gradcheck", unit="suite") as bar:
        results = run_all(range(args.seeds), max_coords=args.max_coords, only=suites,
                          progress=lambda name: bar.update(1), config=config)
    summary = summarize(results)

    table = Table(title="Finite-difference gradient check")
    table.add_column("Suite", style="cyan")
    table.add_column("Seeds", justify="right")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Status")
    for name, entry in summary.items():
        status = "[green]pass[/]" if entry["passed"] else "[red]FAIL[/]"
        table.add_row(name, str(entry["seeds"]), f"{entry['max_rel_error']:.2e}", status)
    console.print(table)

    if args.out:
        write_json(os.path.join(args.out, "gradcheck.json"),
                   {"model": config["model"], "image_size": config["data"]["image_size"], "summary": summary,
                    "results": [r.to_dict() for r in results]})
        write_csv(os.path.join(args.out, "gradcheck.csv"), ["suite", "seed", "max_rel_error", "worst", "checked", "passed"],
                  [r.to_dict() for r in results])

    failed = [name for name, entry in summary.items() if not entry["passed"]]
    if failed:
        worst = max((r for r in results if not r.passed), key=lambda r: r.max_rel_error)
        raise VerificationError(
            f"{len(failed)} gradient suite(s) exceeded tolerance: {', '.join(failed)}",
            code="LFT-E1001",
            details=f"worst: {worst.suite} seed {worst.seed} at {worst.worst} (rel. error {worst.max_rel_error:.3e})",
            context={"failed": failed},
        )
    print_success(f"All {len(summary)} suites passed")
    return 0


# --- sweep-scale ---

def cmd_sweep_scale(args) -> int:
    scales = _parse_scales(args.scales)
    model = load_model(args.checkpoint, args.config)
    config = _override(model.config, "sample", seed=args.seed)
    _check_separate(args.out, args.data)
    _start_run(args, args.out, config, config["sample"]["seed"])
    samples = load(args.data, split=args.split)
    if not samples:
        print_warning(f"No '{args.split}' samples in {args.data}")
        return 0

    ev = config["eval"]
    rows = []
    for scale in scales:
        scale_dir = os.path.join(args.out, f"s{scale:g}")
        print_info(f"Guidance scale {scale:g}")
        run_inference(model, samples, scale_dir, {**config["sample"], "scale": scale}, args.checkpoint)
        corpus = evaluate_directories(os.path.join(scale_dir, "gen"), args.data, args.data, scale_dir,
                                      lambda1=ev["lambda1"], band_radius=ev["band_radius"], norm=ev["norm"])["corpus"]
        rows.append({"scale": scale, **{k: corpus[k] for k in SCALE_FIELDS[1:]}})

    write_json(os.path.join(args.out, "summary.json"), {"norm": ev["norm"], "scales": rows})
    write_csv(os.path.join(args.out, "summary.csv"), SCALE_FIELDS, rows)

    table = Table(title="Guidance scale sweep")
    for column in ("Scale", "LACD", "SSIM"):
        table.add_column(column, justify="right")
    best = min(rows, key=lambda r: r["lacd"])
    for row in rows:
        style = "bold green" if row is best else None
        table.add_row(f"{row['scale']:g}", f"{row['lacd']:.4f}", f"{row['ssim']:.4f}", style=style)
    console.print(table)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "sweep-scale": cmd_sweep_scale,
}


def default_log_level() -> str:
    return CONFIG["LOG_LEVEL"]
