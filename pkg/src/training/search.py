"""
Model Selection

Exhaustive grid search over cloud-net architectures and seeded random
search over solar-net hyperparameters. Trials are independent and may run
on worker threads; results are always ranked deterministically:

    lowest validation loss, then fewer parameters, then spec order.
"""

import json
import logging
import math
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from pydantic import BaseModel

from src.core.exceptions import ConfigurationError
from src.core.models import CellKind, CloudNetSpec, SolarNetSpec, SolarSearchSpace
from src.core.runtime import run_jobs


logger = logging.getLogger(__name__)

S = TypeVar("S", bound=BaseModel)

# Cloud hyperparameter grid: layers 1-6, hidden states {32, 64}, batch {16, 32}
CLOUD_GRID_LAYERS = (1, 2, 3, 4, 5, 6)
CLOUD_GRID_HIDDEN = (32, 64)
CLOUD_GRID_BATCH = (16, 32)

Objective = Callable[[S], Tuple[float, int]]


class TrialResult(BaseModel):
    """One evaluated candidate: its spec, validation loss, size and final rank"""
    trial: int
    spec: dict
    val_loss: float
    num_parameters: int
    rank: int = 0


def spec_order(spec: BaseModel) -> tuple:
    sort_key = getattr(spec, "sort_key", None)
    if callable(sort_key):
        return sort_key()
    return (json.dumps(spec.model_dump(mode="json"), sort_keys=True),)


def cloud_grid(
    cell: CellKind = "convlstm",
    base: Optional[CloudNetSpec] = None,
    layers: Iterable[int] = CLOUD_GRID_LAYERS,
    hidden: Iterable[int] = CLOUD_GRID_HIDDEN,
    batch: Iterable[int] = CLOUD_GRID_BATCH,
) -> List[CloudNetSpec]:
    """
    Every (layers, hidden, batch) combination for one cell type

    Example:
        >>> len(cloud_grid("cbam"))
        24
    """
    base = base or CloudNetSpec()
    return [
        base.model_copy(update={"cell": cell, "num_layers": n, "hidden_channels": h, "batch_size": b})
        for n in layers for h in hidden for b in batch
    ]


def rank_trials(specs: Sequence[S], outcomes: Sequence[Tuple[float, int]]) -> List[TrialResult]:
    """Rank evaluated specs; non-finite losses sort last"""
    keyed = []
    for index, (spec, (val_loss, n_params)) in enumerate(zip(specs, outcomes)):
        loss = val_loss if math.isfinite(val_loss) else math.inf
        keyed.append(((loss, n_params, spec_order(spec), index), index, spec, val_loss, n_params))
    keyed.sort(key=lambda item: item[0])
    return [
        TrialResult(trial=index, spec=spec.model_dump(mode="json"), val_loss=val_loss,
                    num_parameters=n_params, rank=rank)
        for rank, (_, index, spec, val_loss, n_params) in enumerate(keyed, start=1)
    ]


def grid_search(specs: Sequence[S], objective: Objective, jobs: int = 1) -> Tuple[S, List[TrialResult]]:
    """
    Evaluate every spec and return the best with the ranked results

    Args:
        specs: Candidates (nonempty)
        objective: spec -> (validation loss, parameter count)
        jobs: Worker threads
    """
    if not specs:
        raise ConfigurationError("Search grid is empty")
    outcomes = run_jobs(objective, list(specs), jobs)
    results = rank_trials(specs, outcomes)
    best = specs[results[0].trial]
    logger.info(f"✅ Best of {len(specs)} candidates: trial {results[0].trial}, val loss {results[0].val_loss:.6f}")
    return best, results


def grid_search_cloud(
    objective: Objective,
    cell: CellKind = "convlstm",
    base: Optional[CloudNetSpec] = None,
    jobs: int = 1,
    specs: Optional[Sequence[CloudNetSpec]] = None,
) -> Tuple[CloudNetSpec, List[TrialResult]]:
    """Grid search over the full cloud grid (or an explicit spec list)"""
    return grid_search(list(specs) if specs is not None else cloud_grid(cell, base), objective, jobs)


# ============================================================================
# RANDOM SEARCH
# ============================================================================

def _int_between(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(lo) if lo == hi else int(rng.integers(lo, hi + 1))


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return float(lo)
    return float(np.clip(np.exp(rng.uniform(np.log(lo), np.log(hi))), lo, hi))


def sample_solar_spec(space: SolarSearchSpace, rng: np.random.Generator,
                      with_clouds: bool = True, seed: int = 0) -> SolarNetSpec:
    """
    Draw one spec: uniform for integers/dropout/choices, log-uniform for learning rate

    A degenerate range (min == max) yields that value.
    """
    lo, hi = space.dropout
    return SolarNetSpec(
        kind=space.kind,
        num_layers=_int_between(rng, *space.layers),
        units=int(space.units[int(rng.integers(len(space.units)))]),
        kernel_size=int(space.kernel_sizes[int(rng.integers(len(space.kernel_sizes)))]),
        dropout=float(lo if lo == hi else rng.uniform(lo, hi)),
        epochs=_int_between(rng, *space.epochs),
        batch_size=_int_between(rng, *space.batch_size),
        learning_rate=_log_uniform(rng, *space.learning_rate),
        with_clouds=with_clouds,
        seed=seed,
    )


def random_search_solar(
    space: SolarSearchSpace,
    n_trials: int,
    seed: int,
    objective: Objective,
    with_clouds: bool = True,
    jobs: int = 1,
) -> Tuple[SolarNetSpec, List[TrialResult]]:
    """
    Seeded random search standing in for Bayesian optimisation

    All specs are drawn up front from one generator so the candidate list
    does not depend on `jobs`.
    """
    if n_trials < 1:
        raise ConfigurationError(f"n_trials must be >= 1, got {n_trials}")
    rng = np.random.default_rng(seed)
    specs = [sample_solar_spec(space, rng, with_clouds, seed) for _ in range(n_trials)]
    return grid_search(specs, objective, jobs)


def write_search_results(results: Sequence[TrialResult], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [r.model_dump() for r in results]
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
