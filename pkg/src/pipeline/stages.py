"""
Training Stages

Cloud stage: one cloud model per fleet, trained on 12-frame windows with
the 1 - SSIM loss on teacher-forced one-step predictions. Its validation
loss averages the teacher-forced loss and the loss of the 6-step
autoregressive rollout with equal weight.

Solar stage: one net per site, kind and lineage (with or without clouds),
trained with MSE on ground-truth horizon clouds; hyperparameters come
from a seeded random search per site.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.cloud.model import CloudForecaster, rollout, teacher_forced
from src.core.exceptions import TrainingError
from src.core.models import CloudNetSpec, ExperimentConfig, SolarNetSpec, SolarSearchSpace, TrainConfig
from src.core.runtime import StageTimer, run_jobs
from src.data.samples import HISTORY, ForecastSample, cloud_windows
from src.data.synth import Fleet
from src.metrics.ssim import ssim_loss
from src.solar.nets import SolarNet, build_solar_net, cloud_feature, solar_checkpoint_path
from src.tensor.autodiff import Tensor, no_grad
from src.training.loop import TrainResult, train_loop
from src.training.search import TrialResult, grid_search, random_search_solar, write_search_results


logger = logging.getLogger(__name__)


# ============================================================================
# CLOUD MODEL
# ============================================================================

def cloud_checkpoint_path(directory: Path, model_id: str) -> Path:
    return Path(directory) / f"cloud_{model_id}.ckpt"


def cloud_batch_loss(model: CloudForecaster, windows: np.ndarray) -> Tensor:
    """Mean 1 - SSIM of teacher-forced predictions for frames 7..12 of each window"""
    preds = teacher_forced(model, windows, n_inputs=HISTORY)
    losses = [ssim_loss(pred, windows[:, HISTORY + k, None]) for k, pred in enumerate(preds)]
    total = losses[0]
    for loss in losses[1:]:
        total = total + loss
    return total / float(len(losses))


def cloud_val_loss(model: CloudForecaster, windows: np.ndarray, batch_size: int = 32) -> float:
    """0.5 * teacher-forced loss + 0.5 * rollout loss, averaged over windows"""
    if len(windows) == 0:
        raise TrainingError("Cloud validation split is empty")
    total = 0.0
    with no_grad():
        for start in range(0, len(windows), batch_size):
            chunk = windows[start:start + batch_size]
            forced = cloud_batch_loss(model, chunk).item()
            predicted = rollout(model, chunk[:, :HISTORY], horizon=chunk.shape[1] - HISTORY)
            rolled = np.mean([
                ssim_loss(predicted[:, k, None], chunk[:, HISTORY + k, None]).item()
                for k in range(predicted.shape[1])
            ])
            total += (0.5 * forced + 0.5 * rolled) * len(chunk)
    return total / len(windows)


@dataclass
class CloudTrainOutcome:
    spec: CloudNetSpec
    result: TrainResult
    num_parameters: int
    model: CloudForecaster


def train_cloud_model(
    fleet: Fleet,
    train_anchors: Sequence[int],
    val_anchors: Sequence[int],
    spec: CloudNetSpec,
    cfg: TrainConfig,
    checkpoint_path: Optional[Path] = None,
) -> CloudTrainOutcome:
    """
    Fit one cloud forecaster; CloudNetSpec.batch_size overrides the config's

    Raises:
        TrainingError: On empty splits or non-finite losses
    """
    if not train_anchors or not val_anchors:
        raise TrainingError("Cloud training needs non-empty train and validation anchors")
    val_windows = cloud_windows(fleet, val_anchors)
    model = CloudForecaster(spec)
    run_cfg = cfg.model_copy(update={"batch_size": spec.batch_size})

    def loss_fn(m, batch, rng):
        return cloud_batch_loss(m, cloud_windows(fleet, batch))

    result = train_loop(
        model, list(train_anchors), loss_fn, lambda m: cloud_val_loss(m, val_windows),
        run_cfg, checkpoint_path=checkpoint_path, name=f"cloud[{spec.cell}]",
    )
    return CloudTrainOutcome(spec, result, model.num_parameters(), model)


def search_cloud_specs(
    fleet: Fleet,
    train_anchors: Sequence[int],
    val_anchors: Sequence[int],
    specs: Sequence[CloudNetSpec],
    cfg: TrainConfig,
    jobs: int = 1,
) -> Tuple[CloudTrainOutcome, List[TrialResult]]:
    """Train every candidate and return the selected one with the ranked trials"""
    outcomes: Dict[int, CloudTrainOutcome] = {}
    index_of = {id(spec): i for i, spec in enumerate(specs)}

    def objective(spec: CloudNetSpec) -> Tuple[float, int]:
        outcome = train_cloud_model(fleet, train_anchors, val_anchors, spec, cfg)
        outcomes[index_of[id(spec)]] = outcome
        return outcome.result.best_val_loss, outcome.num_parameters

    with StageTimer(f"Cloud grid search ({len(specs)} candidates)"):
        _, results = grid_search(list(specs), objective, jobs)
    return outcomes[results[0].trial], results


# ============================================================================
# SOLAR NETS
# ============================================================================

def solar_arrays(samples: Sequence[ForecastSample], with_clouds: bool):
    """Normalised (power [N, 6], clouds [N, 6] or None, targets [N, 6])"""
    capacity = np.array([s.capacity_kw for s in samples])[:, None]
    power = np.stack([s.input_power for s in samples]) / capacity
    targets = np.stack([s.target_power for s in samples]) / capacity
    clouds = cloud_feature(np.stack([s.horizon_pixels for s in samples])) if with_clouds else None
    return power, clouds, targets


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred - Tensor(target)
    return (diff * diff).mean()


def train_solar_net(
    spec: SolarNetSpec,
    train_samples: Sequence[ForecastSample],
    val_samples: Sequence[ForecastSample],
    patience: int,
    base: TrainConfig,
    checkpoint_path: Optional[Path] = None,
) -> Tuple[SolarNet, TrainResult]:
    """Fit one site net with MSE; spec epochs/batch/learning rate drive the loop"""
    if not train_samples or not val_samples:
        raise TrainingError("Solar training needs non-empty train and validation samples")
    power, clouds, targets = solar_arrays(train_samples, spec.with_clouds)
    val_power, val_clouds, val_targets = solar_arrays(val_samples, spec.with_clouds)
    net = build_solar_net(spec)
    cfg = base.model_copy(update={
        "max_epochs": spec.epochs,
        "early_stop_patience": patience,
        "lr_init": spec.learning_rate,
        "batch_size": spec.batch_size,
        "seed": spec.seed,
    })

    def loss_fn(model, batch, rng):
        idx = np.asarray(batch)
        pred = model(power[idx], None if clouds is None else clouds[idx], train=True, rng=rng)
        return mse_loss(pred, targets[idx])

    def val_fn(model):
        return mse_loss(model(val_power, val_clouds, train=False), val_targets).item()

    result = train_loop(net, list(range(len(train_samples))), loss_fn, val_fn, cfg,
                        checkpoint_path=checkpoint_path, name=f"{spec.kind}")
    return net, result


@dataclass
class SiteTrainOutcome:
    site_id: str
    spec: SolarNetSpec
    best_val_loss: float
    checkpoint: Path
    trials: List[TrialResult]


def train_site(
    site_id: str,
    train_samples: Sequence[ForecastSample],
    val_samples: Sequence[ForecastSample],
    kind: str,
    with_clouds: bool,
    experiment: ExperimentConfig,
    out_dir: Path,
    seed: int,
) -> SiteTrainOutcome:
    """
    Random-search one site's net and save the selected weights

    Raises:
        TrainingError: Naming the site when any trial fails
    """
    space = experiment.solar_search.get(kind) or SolarSearchSpace(kind=kind)
    trained: Dict[str, Tuple[SolarNet, TrainResult]] = {}

    def objective(spec: SolarNetSpec) -> Tuple[float, int]:
        net, result = train_solar_net(spec, train_samples, val_samples, experiment.solar_patience, experiment.train)
        trained[spec.model_dump_json()] = (net, result)
        return result.best_val_loss, net.num_parameters()

    try:
        best, trials = random_search_solar(space, experiment.solar_trials, seed, objective, with_clouds)
    except TrainingError as e:
        raise TrainingError(f"{site_id}: {e}") from e

    lineage = "with_clouds" if with_clouds else "no_clouds"
    net, result = trained[best.model_dump_json()]
    path = net.save(solar_checkpoint_path(out_dir, site_id, kind, with_clouds),
                    meta={"site_id": site_id, "best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss})
    result.write_history(Path(out_dir) / f"history_{site_id}_{kind}_{lineage}.csv")
    write_search_results(trials, Path(out_dir) / f"search_{site_id}_{kind}_{lineage}.json")
    logger.info(f"✅ {site_id}: {kind} net saved to {path.name} (val loss {result.best_val_loss:.6f})")
    return SiteTrainOutcome(site_id, best, result.best_val_loss, path, trials)


def train_fleet(
    samples: Dict[str, Dict[str, List[ForecastSample]]],
    kind: str,
    with_clouds: bool,
    experiment: ExperimentConfig,
    out_dir: Path,
    seed: int,
    jobs: int = 1,
) -> List[SiteTrainOutcome]:
    """
    Train one independent net per site

    Site i searches with seed + i, so results do not depend on --jobs.

    Args:
        samples: split name ("train", "val") -> site id -> samples
    """
    site_ids = sorted(samples["train"])

    def job(item: Tuple[int, str]) -> SiteTrainOutcome:
        index, site_id = item
        return train_site(site_id, samples["train"][site_id], samples["val"][site_id],
                          kind, with_clouds, experiment, out_dir, seed + index)

    with StageTimer(f"Train {kind} nets for {len(site_ids)} sites"):
        return run_jobs(job, list(enumerate(site_ids)), jobs)
