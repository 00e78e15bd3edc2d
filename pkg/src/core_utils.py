"""
Core utility functions for layerfit.

This module provides the console helpers used by every command, logging
setup for run directories, version discovery, and small file helpers for
writing machine-readable results.
"""
import csv
import hashlib
import json
import logging
import os
import subprocess
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel

__version__ = "0.1.0"

# Progress and messages go to stderr; results only ever go to files.
console = Console(stderr=True)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# --- Text and Styling ---

def print_header(text):
    """Prints a styled header to the console."""
    console.print(Panel(f"[bold cyan]{text}[/]", expand=False, border_style="blue"))

def print_info(text):
    """Prints an informational message to the console."""
    console.print(f"[cyan]ℹ️  {text}[/]")

def print_success(text):
    """Prints a success message to the console."""
    console.print(f"[green]✅ {text}[/]")

def print_warning(text):
    """Prints a warning message to the console."""
    console.print(f"[yellow]⚠️  {text}[/]")

def print_error(text):
    """Prints an error message to the console without markup parsing."""
    console.print(f"❌ {text}", style="bold red", markup=False, highlight=False)


# --- Logging ---

def setup_logging(run_dir: Optional[str] = None, level: str = "INFO") -> logging.Logger:
    """
    Configure the `tryon` logger hierarchy.

    A RichHandler writes to stderr; when a run directory is given, a
    FileHandler additionally records everything to `<run_dir>/layerfit.log`.
    Calling this again replaces the previously installed handlers.
    """
    logger = logging.getLogger("tryon")
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    stream_handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
    stream_handler.setLevel(logger.level)
    logger.addHandler(stream_handler)

    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(run_dir, "layerfit.log"), encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


# --- Versioning ---

def get_version() -> str:
    """
    Returns a git-describe style version string.

    Falls back to the package version when git or the repository metadata
    is not available.
    """
    repo_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=repo_dir, capture_output=True, text=True, check=True, encoding="utf-8",
        )
        described = result.stdout.strip()
        if described:
            return described
    except (subprocess.CalledProcessError, FileNotFoundError, OSError):
        pass
    return f"v{__version__}"


# --- File Helpers ---

def sha256_file(path: str) -> str:
    """Returns the hex SHA-256 digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: str, data: Any):
    """Writes `data` as indented, key-sorted JSON."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: str, fieldnames: List[str], rows: Iterable[Dict[str, Any]]):
    """Writes dictionaries as CSV rows in the given column order."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_run_record(run_dir: str, command: str, argv: List[str], seed: int,
                     effective_config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Echo the effective config and the reproducibility record into a run directory.

    Returns:
        Dict[str, Any]: the run record written to `run.json`
    """
    os.makedirs(run_dir, exist_ok=True)
    write_json(os.path.join(run_dir, "config.json"), effective_config)
    record = {
        "command": command,
        "argv": list(argv),
        "seed": int(seed),
        "version": get_version(),
        "timestamp": datetime.now().isoformat(timespec="seconds"),
    }
    write_json(os.path.join(run_dir, "run.json"), record)
    return record
