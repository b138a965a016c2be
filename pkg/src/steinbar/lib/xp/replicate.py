from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from loguru import logger

from steinbar.lib.bounds import ssc_probes
from steinbar.lib.checks.bar import (
    compensated_library,
    compensated_probes,
    extraction_probes,
    full_bar_probes,
    zero_mean_jump_probes,
)
from steinbar.lib.checks.identities import identity_probes
from steinbar.lib.checks.smooth_functions import state_library
from steinbar.lib.clocks import replication_seeds
from steinbar.lib.sim.engine import simulate
from steinbar.lib.sim.palm import merge_all, palm_inversion_probes
from steinbar.lib.xp.config import ChecksConfig, ExperimentConfig
from steinbar.models import GG1Model, JSQModel, ModelSpec, PalmAccumulators
from steinbar.repos.event_log import open_event_log
from steinbar.utils.process_helper import map_in_order

PROBE_SETS = ("identities", "palm", "bar", "cbar", "zero_mean", "extraction", "ssc")


def select_functions(fns: Sequence, f_ids: Sequence[str] | None) -> list:
    """Library members named in ``f_ids`` (all of them for None)."""
    if f_ids is None:
        return list(fns)
    return [fn for fn in fns if fn.f_id in f_ids]


def check_selection(model: ModelSpec, f_ids: Sequence[str] | None):
    """Every selected f_id must exist in the full or the compensated library."""
    if f_ids is None:
        return
    known = {fn.f_id for fn in (*state_library(model), *compensated_library(model))}
    missing = [f for f in f_ids if f not in known]
    if missing:
        raise ValueError(f"unknown test functions {missing}; libraries have {sorted(known)}")


def bar_functions(model: ModelSpec, checks: ChecksConfig) -> list:
    return select_functions(state_library(model), checks.bar.functions)


def compensated_functions(model: ModelSpec, checks: ChecksConfig) -> list:
    return select_functions(compensated_library(model), checks.bar.functions)


def build_probes(model: ModelSpec, probe_sets: Sequence[str], checks: ChecksConfig) -> list:
    """Probes for the named sets."""
    probes: list = []
    for name in probe_sets:
        match name:
            case "identities":
                probes += identity_probes(model, checks.m_values)
            case "palm":
                probes += palm_inversion_probes(model, checks.palm_functions)
            case "bar":
                probes += full_bar_probes(model, bar_functions(model, checks))
            case "cbar":
                probes += compensated_probes(model, compensated_functions(model, checks))
            case "zero_mean":
                probes += zero_mean_jump_probes(model)
            case "extraction":
                probes += extraction_probes(model, compensated_functions(model, checks))
            case "ssc":
                probes += ssc_probes(model)
            case _:
                raise ValueError(f"unknown probe set {name!r}; expected one of {PROBE_SETS}")
    return probes


def default_probe_sets(model: ModelSpec, checks: ChecksConfig) -> tuple[str, ...]:
    """Every set the enabled checks read for this model."""
    sets = ["identities"]
    if checks.palm:
        sets.append("palm")
    bar = checks.bar
    if bar.full:
        sets.append("bar")
    if bar.compensated:
        sets.append("cbar")
    if bar.zero_mean:
        sets.append("zero_mean")
    if isinstance(model, (GG1Model, JSQModel)) and (bar.extraction or bar.lorden):
        sets.append("extraction")
    if isinstance(model, JSQModel):
        sets.append("ssc")
    return tuple(sets)


@dataclass(frozen=True)
class ReplicationTask:
    model: ModelSpec
    probe_sets: tuple[str, ...]
    checks: ChecksConfig
    events: int
    burn_in: int | None
    batches: int | None
    seed: np.random.SeedSequence
    event_log: Path | None = None


def run_replication(task: ReplicationTask) -> PalmAccumulators:
    """One replication; probes are rebuilt here so tasks stay picklable."""
    probes = build_probes(task.model, task.probe_sets, task.checks)
    kwargs = dict(
        model=task.model,
        total_events=task.events,
        burn_in_events=task.burn_in,
        probes=probes,
        seed=task.seed,
        batches=task.batches,
    )
    if task.event_log is None:
        return simulate(**kwargs)
    with open_event_log(task.event_log, task.model) as log:
        return simulate(**kwargs, on_event=log)


def seed_label(seed: np.random.SeedSequence) -> int:
    """A stable integer naming a replication substream."""
    return int(seed.generate_state(1, dtype=np.uint32)[0])


@dataclass
class Replications:
    runs: list[tuple[int, PalmAccumulators]]
    merged: PalmAccumulators


def run_replications(
    config: ExperimentConfig,
    probe_sets: Sequence[str] | None = None,
    model: ModelSpec | None = None,
    out_dir: Path | None = None,
) -> Replications:
    """All replications of ``config.run``, merged in replication order."""
    model = model or config.model
    run = config.run
    probe_sets = tuple(probe_sets or default_probe_sets(model, config.checks))
    seeds = replication_seeds(run.seed, run.replications)
    tasks = [
        ReplicationTask(
            model=model,
            probe_sets=probe_sets,
            checks=config.checks,
            events=run.events,
            burn_in=run.burn_in,
            batches=run.batches,
            seed=seed,
            event_log=out_dir / "event_log.csv" if run.event_log and out_dir and k == 0 else None,
        )
        for k, seed in enumerate(seeds)
    ]
    logger.info(
        f"{model.model_id}: {run.replications} replication(s) of {run.events} events, "
        f"seed {run.seed}, probe sets {', '.join(probe_sets)}"
    )
    results = map_in_order(run_replication, tasks, run.jobs)
    runs = [(seed_label(t.seed), acc) for t, acc in zip(tasks, results)]
    return Replications(runs=runs, merged=merge_all(results))
