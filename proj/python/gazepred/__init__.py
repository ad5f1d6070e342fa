"""Gaze prediction toolkit: synthetic cohorts, predictors and event-conditioned evaluation."""

from __future__ import annotations

import json
from typing import Any, Iterable, Optional

import numpy as np

from . import _gazepred
from ._gazepred import (
    ConfigError,
    DataError,
    GazepredError,
    InsufficientDataError,
    NumericalError,
    gaze_error,
    kendall_w,
    quantile,
    spearman,
)

__all__ = [
    "ConfigError",
    "DataError",
    "GazepredError",
    "InsufficientDataError",
    "NumericalError",
    "classify",
    "default_config",
    "gaze_error",
    "generate_subject",
    "kendall_w",
    "predict",
    "quantile",
    "run_pipeline",
    "simulate_saccade",
    "spearman",
    "velocity",
]


def _dump(obj: Optional[dict]) -> str:
    return "" if obj is None else json.dumps(obj)


def default_config() -> dict:
    """Default run configuration as a dict (same content as `gazepred config init`)."""
    return json.loads(_gazepred.default_config_json())


def run_pipeline(config: dict, stages: Iterable[str] = ()) -> list[tuple[str, bool, list[str]]]:
    """Runs the given stages (all when empty); returns (stage, cached, outputs) per stage."""
    return _gazepred.run_pipeline(json.dumps(config), list(stages))


def generate_subject(synth: Optional[dict] = None, index: int = 0) -> dict[str, Any]:
    """One synthetic subject: gaze arrays, targets, truth segments and generator metadata."""
    d = _gazepred.generate_subject(_dump(synth), index)
    d["truth"] = json.loads(d.pop("truth_json"))
    d["params"] = json.loads(d.pop("params_json"))
    return d


def simulate_saccade(start_dva: float, target_dva: float, params: Optional[dict] = None, dt_ms: float = 1.0) -> np.ndarray:
    """Plant trajectory as rows of (theta, omega, f_ag, f_ant)."""
    return _gazepred.simulate_saccade(start_dva, target_dva, _dump(params), dt_ms)


def velocity(x, y, valid=None, window: int = 7, order: int = 2, causal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Savitzky-Golay velocity (dva/s) of a 1000 Hz trace; NaN where undefined."""
    return _gazepred.velocity(x, y, valid, window, order, causal)


def classify(x, y, valid=None) -> list[dict]:
    """Event segments of a 1000 Hz trace from the velocity classifier."""
    return json.loads(_gazepred.classify(x, y, valid))


def predict(predictor: str, x, y, valid=None, pi_ms: int = 40, segments: Optional[list] = None,
            opkf: Optional[dict] = None) -> dict[str, np.ndarray]:
    """Causal predictions for time i + pi_ms at every sample i (NaN where masked)."""
    seg = "" if segments is None else json.dumps(segments)
    return _gazepred.predict(predictor, x, y, valid, pi_ms, seg, _dump(opkf))
