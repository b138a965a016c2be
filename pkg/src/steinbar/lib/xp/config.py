"""
Experiment documents: one JSON object with sections model, run, checks and
output. Every section forbids unknown keys and spells out its defaults, so
``xp <command> --print-config`` shows exactly what a run will use.
"""

import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from steinbar.models import BoundMode, DriftMode, ModelSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())


class RunConfig(_Section):
    seed: int = 0
    events: PositiveInt = 1_000_000
    burn_in: int | None = None  # None: adaptive burn-in
    batches: PositiveInt | None = None
    replications: PositiveInt = 1
    jobs: PositiveInt | None = None
    samples: PositiveInt = 100_000  # stationary samples for W1
    spacing_events: PositiveInt = 100
    event_log: bool = False


class BarChecks(_Section):
    full: bool = True
    compensated: bool = True
    zero_mean: bool = True
    extraction: bool = True
    lorden: bool = True
    functions: list[str] | None = None  # f_id selection; None keeps the whole library


class SteinChecks(_Section):
    random_h: PositiveInt = 10
    pieces: PositiveInt = 4
    span: PositiveFloat = 10.0
    seed: int = 0
    rhos: list[float] | None = None  # None: the model as configured
    grid_points: PositiveInt | None = None
    monte_carlo: int = 0  # draws for the E h(Y) cross-check, 0 disables it


class BoundChecks(_Section):
    mode: BoundMode = BoundMode.SIMULATED
    conditional_residual: float | None = None  # None: estimate it by simulation


class W1Checks(_Section):
    resamples: PositiveInt | None = None
    block_size: PositiveInt | None = None


class SweepChecks(_Section):
    rhos: list[float] = Field(default_factory=lambda: [0.8, 0.9, 0.95])
    slope_range: tuple[float, float] = (0.7, 1.3)
    oracle_slope_range: tuple[float, float] = (0.9, 1.1)


class RbmChecks(_Section):
    drift_mode: DriftMode = DriftMode.GENERATOR_CONSISTENT
    dt: PositiveFloat | None = None
    horizon: PositiveFloat = 1000.0
    burn_in: float = 100.0
    samples: PositiveInt = 1000
    spacing: PositiveFloat = 1.0
    dt_halving: bool = True
    path_every: PositiveInt = 100


class ChecksConfig(_Section):
    se_multiple: PositiveFloat | None = None
    allow_ties: bool = False
    m_values: list[int] = Field(default_factory=lambda: [2, 3])
    palm: bool = True
    palm_functions: list[str] = Field(default_factory=lambda: ["one", "x", "x2", "min_x_5"])
    bar: BarChecks = Field(default_factory=BarChecks)
    stein: SteinChecks = Field(default_factory=SteinChecks)
    bound: BoundChecks = Field(default_factory=BoundChecks)
    w1: W1Checks = Field(default_factory=W1Checks)
    sweep: SweepChecks = Field(default_factory=SweepChecks)
    rbm: RbmChecks = Field(default_factory=RbmChecks)


class OutputConfig(_Section):
    out_dir: str | None = None  # None: $STEINBAR_OUT_DIR, then config.toml
    plots: bool = True


class ExperimentConfig(_Section):
    config_id: str = "experiment"
    model: ModelSpec
    run: RunConfig = Field(default_factory=RunConfig)
    checks: ChecksConfig = Field(default_factory=ChecksConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


def _set_path(doc: dict, dotted: str, value: Any):
    *parents, leaf = dotted.split(".")
    node = doc
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def load_experiment(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read a JSON experiment document, apply dotted-path overrides and validate.
    Raises:
        pydantic.ValidationError: unknown keys or malformed values.
    """
    with open(path, "r") as f:
        doc = json.load(f)
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_path(doc, dotted, value)
    return ExperimentConfig.model_validate(doc)


def dump_experiment(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True)
