"""
Utility functions for the fractional Ornstein-Uhlenbeck toolkit.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np


def setup_logging(log_settings: dict[str, Any]) -> None:
    """
    Send run logs to stdout and, when `logging.file` is set, to the run log.

    Replaces the handlers of any earlier run in the same process. Numerical
    warnings from numpy and scipy are routed into the same handlers.
    """
    level_name = str(log_settings.get('level') or 'INFO').upper()
    log_file = log_settings.get('file')

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_path, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, level_name),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )
    logging.captureWarnings(True)


def fit_line(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """
    Least-squares line through (x, y).

    Returns:
        (slope, intercept, residual) where residual is the rms deviation
        relative to the spanned range of y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return float('nan'), float('nan'), float('nan')
    slope, intercept = np.polyfit(x, y, 1)
    deviation = y - (slope * x + intercept)
    span = float(np.max(y) - np.min(y))
    rms = float(np.sqrt(np.mean(deviation ** 2)))
    residual = rms / span if span > 0 else 0.0
    return float(slope), float(intercept), residual


def print_dry_run_info(command: str, config: dict[str, Any]) -> None:
    """Log what a command would compute in dry-run mode."""
    model = config.get('model', {})
    grid = config.get('grid', {})
    logging.info(f"Would run command: {command}")
    logging.info(f"  Model: {', '.join(format_model_display(model))}")
    if grid:
        logging.info(f"  Grid: L={grid.get('L')}, N={grid.get('N')}")
    block = config.get(command)
    if isinstance(block, dict):
        for key, value in sorted(block.items()):
            logging.info(f"  - {key}: {value}")
    logging.info(f"  Output directory: {config.get('output', {}).get('directory', './runs')}")


def format_model_display(model: dict[str, Any]) -> list[str]:
    """Format model settings for display in dry-run mode."""
    parts = []
    if model.get('preset'):
        parts.append(f"preset={model['preset']}")
    if model.get('n') is not None:
        parts.append(f"n={model['n']}")
    if model.get('B') is not None:
        parts.append(f"B={model['B']}")
    if model.get('Q') is not None:
        parts.append(f"Q={model['Q']}")
    parts.append(f"s={model.get('s')}")
    return parts
