"""Result containers for the pipelines and their JSON/CSV serialization.

Files are byte-deterministic: JSON keys are sorted, floats are written with
``repr`` (shortest round-trip form) and CSV lines end in ``\\n``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA_VERSION = 1

SUSCEPTIBILITY_COLUMNS = ("a", "chi_var", "chi_exact", "energy_var", "energy_exact", "converged")
ENTANGLEMENT_COLUMNS = ("step", "loss", "measure", "inner_converged")


@dataclass
class SusceptibilityResult:
    a_grid: np.ndarray
    chi_variational: np.ndarray
    chi_exact: np.ndarray
    energy_variational: np.ndarray
    energy_exact: np.ndarray
    converged: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.a_grid)
        for name in ("chi_variational", "chi_exact", "energy_variational", "energy_exact", "converged"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, grid has {n}")

    def max_deviation(self) -> float:
        """``max |chi_var - chi_exact|`` over the grid (nan if any value is missing)."""
        if len(self.a_grid) == 0:
            return 0.0
        return float(np.max(np.abs(np.asarray(self.chi_variational) - np.asarray(self.chi_exact))))

    def records(self) -> list[dict[str, Any]]:
        return [
            {
                "a": float(a),
                "chi_var": float(cv),
                "chi_exact": float(ce),
                "energy_var": float(ev),
                "energy_exact": float(ee),
                "converged": bool(ok),
            }
            for a, cv, ce, ev, ee, ok in zip(
                self.a_grid,
                self.chi_variational,
                self.chi_exact,
                self.energy_variational,
                self.energy_exact,
                self.converged,
            )
        ]


@dataclass
class HyperoptStep:
    validation_loss: float
    hyperparams: np.ndarray
    train_loss: float


@dataclass
class HyperoptResult:
    """``outer_steps[t]`` holds the losses and hyperparameters before update ``t``
    (the last entry is the final state). ``grid_probabilities`` is the trained
    classifier's ``p(class 0)`` on ``grid_points``."""

    outer_steps: list[HyperoptStep]
    grid_points: np.ndarray
    grid_probabilities: np.ndarray
    final_weights: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def validation_losses(self) -> np.ndarray:
        return np.array([s.validation_loss for s in self.outer_steps])

    @property
    def final_hyperparams(self) -> np.ndarray:
        return np.asarray(self.outer_steps[-1].hyperparams)

    def records(self) -> list[dict[str, Any]]:
        return [
            {
                "step": t,
                "validation_loss": float(s.validation_loss),
                "train_loss": float(s.train_loss),
                "hyperparams": [float(v) for v in s.hyperparams],
            }
            for t, s in enumerate(self.outer_steps)
        ]


@dataclass
class EntanglementStep:
    loss: float
    measure: float
    inner_converged: bool = True


@dataclass
class EntanglementResult:
    """Loss ``-log E`` and measure ``E`` per outer step, plus the final state and the
    squared overlap with its nearest product state."""

    outer_steps: list[EntanglementStep]
    final_state: np.ndarray
    final_params: np.ndarray
    nearest_separable_overlap: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for s in self.outer_steps:
            if not 0.0 <= s.measure <= 1.0:
                raise ValueError(f"entanglement measure {s.measure} outside [0, 1]")

    @property
    def measures(self) -> np.ndarray:
        return np.array([s.measure for s in self.outer_steps])

    @property
    def losses(self) -> np.ndarray:
        return np.array([s.loss for s in self.outer_steps])

    def records(self) -> list[dict[str, Any]]:
        return [
            {"step": t, "loss": float(s.loss), "measure": float(s.measure), "inner_converged": bool(s.inner_converged)}
            for t, s in enumerate(self.outer_steps)
        ]


# --- serialization ---------------------------------------------------------------


def _plain(value):
    """Convert numpy containers and scalars to JSON-ready Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"real": _plain(value.real), "imag": _plain(value.imag)}
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def _payload(result) -> dict[str, Any]:
    if isinstance(result, SusceptibilityResult):
        kind, extra = "susceptibility", {}
    elif isinstance(result, HyperoptResult):
        kind = "hyperopt"
        extra = {
            "grid_points": result.grid_points,
            "grid_probabilities": result.grid_probabilities,
            "final_weights": result.final_weights,
        }
    elif isinstance(result, EntanglementResult):
        kind = "entanglement"
        extra = {
            "final_state": result.final_state,
            "final_params": result.final_params,
            "nearest_separable_overlap": result.nearest_separable_overlap,
        }
    else:
        raise TypeError(f"cannot emit {type(result).__name__}")
    return _plain({"schema": kind, "schema_version": SCHEMA_VERSION, "metadata": result.metadata,
                   "records": result.records(), **extra})


def _csv_text(result) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(result, SusceptibilityResult):
        writer.writerow(SUSCEPTIBILITY_COLUMNS)
        for r in result.records():
            writer.writerow([repr(r["a"]), repr(r["chi_var"]), repr(r["chi_exact"]),
                             repr(r["energy_var"]), repr(r["energy_exact"]), int(r["converged"])])
    elif isinstance(result, HyperoptResult):
        k = len(result.final_hyperparams) if result.outer_steps else 0
        writer.writerow(["step", "validation_loss", "train_loss"] + [f"a_{i}" for i in range(k)])
        for r in result.records():
            writer.writerow([r["step"], repr(r["validation_loss"]), repr(r["train_loss"])]
                            + [repr(v) for v in r["hyperparams"]])
    elif isinstance(result, EntanglementResult):
        writer.writerow(ENTANGLEMENT_COLUMNS)
        for r in result.records():
            writer.writerow([r["step"], repr(r["loss"]), repr(r["measure"]), int(r["inner_converged"])])
    else:
        raise TypeError(f"cannot emit {type(result).__name__}")
    return buf.getvalue()


def render(result, format: str = "json") -> str:
    """The exact text :func:`emit_results` writes."""
    format = format.lower()
    if format == "json":
        return json.dumps(_payload(result), sort_keys=True, indent=2) + "\n"
    if format == "csv":
        return _csv_text(result)
    raise ValueError(f"format must be 'json' or 'csv', got {format!r}")


def emit_results(result, path, format: str = "json") -> Path:
    """Write a result as schema-versioned JSON or flat CSV.

    CSV columns: susceptibility ``a,chi_var,chi_exact,energy_var,energy_exact,converged``;
    hyperopt ``step,validation_loss,train_loss,a_0..a_k``; entanglement
    ``step,loss,measure,inner_converged``. Metadata appears only in JSON.

    Raises:
        OSError: the file cannot be written.
    """
    path = Path(path)
    text = render(result, format)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
