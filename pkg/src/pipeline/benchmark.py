"""
Two-stage Benchmark

Stage one turns observed frames into horizon cloud pixels per scenario:

    ground_truth_clouds        true pixels above the site at t+1..t+6
    persistence_clouds         pixel at t, repeated 6 times
    forecasted_clouds[model]   autoregressive rollout, pixel read from each
                               predicted frame (quantised back to 0-255)
    no_clouds                  no cloud input

Stage two runs each site's solar net on those pixels and scores RMSE/MAE
against persistence power. Every sample is stratified by the sky
condition of its ground-truth horizon pixels.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.cloud.model import rollout
from src.core.exceptions import MissingArtifactError, OutOfFootprintError, ScenarioMismatchError
from src.core.models import Scenario
from src.core.runtime import run_jobs
from src.data.samples import HISTORY, HORIZON, ForecastSample
from src.data.synth import CloudFrame, Fleet, SiteSeries
from src.metrics.report import (
    REFERENCE_CLOUD_MODEL,
    SkillReport,
    aggregate_report,
    attention_gain,
    attention_gain_by_step,
    condition_shares,
    horizon_errors,
)
from src.metrics.skill import classify_sample, mae, rmse, skill_score
from src.metrics.ssim import ssim
from src.solar.nets import SolarNet, cloud_feature, persistence_power
from src.tensor.autodiff import no_grad


logger = logging.getLogger(__name__)

PERSISTENCE_NET = "persistence"

# (site id, net kind, trained with clouds) -> net
NetTable = Mapping[Tuple[str, str, bool], SolarNet]
ForecastFrames = Dict[str, Dict[int, np.ndarray]]


def extract_site_pixel(frame: Union[CloudFrame, np.ndarray], site: SiteSeries) -> int:
    """
    Raw-scale value of the pixel above a site

    Raises:
        OutOfFootprintError: If the site's pixel lies outside the frame
    """
    grid = frame.grid if isinstance(frame, CloudFrame) else np.asarray(frame)
    h, w = grid.shape[-2:]
    if not (0 <= site.row < h and 0 <= site.col < w):
        raise OutOfFootprintError(f"{site.site_id} pixel ({site.row}, {site.col}) outside {h}x{w} frame")
    return int(grid[site.row, site.col])


def quantize(frames: np.ndarray) -> np.ndarray:
    """[0, 1] frames to raw 0-255 uint8"""
    return np.rint(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def forecast_frames(model, fleet: Fleet, anchors: Sequence[int], batch_size: int = 32) -> Dict[int, np.ndarray]:
    """
    Rolled-out horizon frames per anchor, raw 0-255 [6, H, W]

    One rollout per anchor serves every site of the fleet.
    """
    out: Dict[int, np.ndarray] = {}
    anchors = list(anchors)
    for start in range(0, len(anchors), batch_size):
        chunk = anchors[start:start + batch_size]
        index = np.asarray(chunk)[:, None] + np.arange(-HISTORY + 1, 1)[None, :]
        inputs = fleet.frames.normalized(index)  # [B, 6, H, W]
        predicted = quantize(rollout(model, inputs, horizon=HORIZON))
        for anchor, frames in zip(chunk, predicted):
            out[anchor] = frames
    return out


def make_cloud_input(
    scenario: Scenario,
    sample: ForecastSample,
    site: Optional[SiteSeries] = None,
    forecasts: Optional[ForecastFrames] = None,
) -> Optional[np.ndarray]:
    """
    Raw 0-255 horizon pixels a scenario feeds to the solar net (None for no_clouds)

    Raises:
        MissingArtifactError: If forecasted frames for the scenario's model are absent
    """
    if scenario.tag == "ground_truth_clouds":
        return np.asarray(sample.horizon_pixels, dtype=np.float64)
    if scenario.tag == "persistence_clouds":
        return np.full(HORIZON, float(sample.last_pixel))
    if scenario.tag == "no_clouds":
        return None

    frames = (forecasts or {}).get(scenario.model_id)
    if frames is None or sample.anchor not in frames:
        raise MissingArtifactError(f"No forecasted frames from cloud model {scenario.model_id!r} for anchor {sample.anchor}")
    if site is None:
        raise ValueError("forecasted_clouds needs the site to read pixels from")
    return np.array([extract_site_pixel(frame, site) for frame in frames[sample.anchor]], dtype=np.float64)


def resolve_net(nets: NetTable, site_id: str, kind: str, scenario: Scenario) -> Optional[SolarNet]:
    """Net of the lineage matching the scenario; None for the persistence method"""
    if kind == PERSISTENCE_NET:
        return None
    key = (site_id, kind, scenario.uses_clouds)
    net = nets.get(key)
    if net is None:
        raise MissingArtifactError(f"No {kind} net for {site_id} ({'with' if key[2] else 'no'} clouds)")
    if net.spec.with_clouds != scenario.uses_clouds:
        raise ScenarioMismatchError(
            f"{scenario.name} input fed to a {kind} net of {site_id} trained "
            f"{'with' if net.spec.with_clouds else 'without'} clouds"
        )
    return net


def _predict(net: Optional[SolarNet], samples: List[ForecastSample], clouds: Optional[np.ndarray]) -> np.ndarray:
    """kW predictions [N, 6]"""
    capacity = np.array([s.capacity_kw for s in samples])[:, None]
    power = np.stack([s.input_power for s in samples])
    if net is None:
        return np.stack([persistence_power(p) for p in power])
    features = cloud_feature(clouds) if clouds is not None else None
    with no_grad():
        out = net(power / capacity, features, train=False).data
    return out * capacity


def score_site(
    fleet: Fleet,
    site: SiteSeries,
    samples: List[ForecastSample],
    scenarios: Sequence[Scenario],
    kinds: Sequence[str],
    nets: NetTable,
    forecasts: Optional[ForecastFrames] = None,
) -> pd.DataFrame:
    """Per-sample errors and skills of one site for every (net, scenario)"""
    rows = []
    actual = np.stack([s.target_power for s in samples])
    reference = np.stack([persistence_power(s.input_power) for s in samples])
    skies = [classify_sample(s.horizon_pixels) for s in samples]
    for kind in kinds:
        for scenario in scenarios:
            net = resolve_net(nets, site.site_id, kind, scenario)
            cloud_rows = [make_cloud_input(scenario, s, site, forecasts) for s in samples]
            clouds = None if scenario.tag == "no_clouds" else np.stack(cloud_rows)
            predicted = _predict(net, samples, clouds)
            for i, sample in enumerate(samples):
                err = {
                    "rmse_method": rmse(predicted[i], actual[i]),
                    "rmse_persistence": rmse(reference[i], actual[i]),
                    "mae_method": mae(predicted[i], actual[i]),
                    "mae_persistence": mae(reference[i], actual[i]),
                }
                rmse_skill = skill_score(err["rmse_method"], err["rmse_persistence"])
                mae_skill = skill_score(err["mae_method"], err["mae_persistence"])
                row = {
                    "site": site.site_id, "net": kind, "scenario": scenario.name,
                    "anchor": sample.anchor, "timestamp": sample.timestamp.isoformat(), "sky": skies[i],
                    **err,
                    "rmse_skill": np.nan if rmse_skill is None else rmse_skill,
                    "mae_skill": np.nan if mae_skill is None else mae_skill,
                }
                for step in range(HORIZON):
                    row[f"abs_err_h{step + 1}"] = abs(predicted[i, step] - actual[i, step])
                    row[f"abs_err_persistence_h{step + 1}"] = abs(reference[i, step] - actual[i, step])
                rows.append(row)
    return pd.DataFrame(rows)


def run_benchmark(
    fleet: Fleet,
    samples: Mapping[str, List[ForecastSample]],
    scenarios: Sequence[Scenario],
    kinds: Sequence[str],
    nets: NetTable,
    cloud_models: Optional[Mapping[str, object]] = None,
    jobs: int = 1,
) -> Tuple[SkillReport, pd.DataFrame]:
    """
    Score every (site, net, scenario) on the given samples

    Args:
        fleet: Dataset the samples come from
        samples: Test samples per site id
        scenarios: Cloud-input scenarios
        kinds: Net kinds ("mlp", "cnn1d", "lstm" or "persistence")
        nets: Trained nets keyed by (site id, kind, trained with clouds)
        cloud_models: Cloud models by id, needed by forecasted_clouds scenarios

    Returns:
        (SkillReport, per-sample DataFrame)

    Raises:
        MissingArtifactError: If a required net or cloud model is absent
        ScenarioMismatchError: If a net's lineage does not match its scenario
    """
    cloud_models = cloud_models or {}
    anchors = sorted({s.anchor for site_samples in samples.values() for s in site_samples})
    forecasts: ForecastFrames = {}
    for scenario in scenarios:
        if scenario.tag == "forecasted_clouds" and scenario.model_id not in forecasts:
            if scenario.model_id not in cloud_models:
                raise MissingArtifactError(f"Cloud model {scenario.model_id!r} was not provided")
            forecasts[scenario.model_id] = forecast_frames(cloud_models[scenario.model_id], fleet, anchors)

    site_ids = [s.site_id for s in fleet.sites if samples.get(s.site_id)]
    tables = run_jobs(
        lambda site_id: score_site(fleet, fleet.site(site_id), samples[site_id], scenarios, kinds, nets, forecasts),
        site_ids,
        jobs,
    )
    per_sample = pd.concat(tables, ignore_index=True)
    report = aggregate_report(per_sample, [s.name for s in scenarios], list(kinds))
    logger.info(f"✅ Benchmark scored {len(per_sample)} (sample, net, scenario) rows over {len(site_ids)} sites")
    return report, per_sample


# ============================================================================
# CLOUD MODEL EVALUATION
# ============================================================================

def evaluate_cloud_model(model, fleet: Fleet, anchors: Sequence[int], batch_size: int = 32) -> pd.DataFrame:
    """
    Mean SSIM per horizon step of a model's rollout and of frame persistence

    Returns:
        DataFrame with columns step, minutes_ahead, ssim_model, ssim_persistence
    """
    anchors = list(anchors)
    model_scores = np.zeros(HORIZON)
    persistence_scores = np.zeros(HORIZON)
    for start in range(0, len(anchors), batch_size):
        chunk = np.asarray(anchors[start:start + batch_size])
        inputs = fleet.frames.normalized(chunk[:, None] + np.arange(-HISTORY + 1, 1)[None, :])
        targets = fleet.frames.normalized(chunk[:, None] + np.arange(1, HORIZON + 1)[None, :])
        predicted = rollout(model, inputs, horizon=HORIZON)
        last = inputs[:, -1]
        for step in range(HORIZON):
            with no_grad():
                model_scores[step] += ssim(predicted[:, step, None], targets[:, step, None]).item() * len(chunk)
                persistence_scores[step] += ssim(last[:, None], targets[:, step, None]).item() * len(chunk)
    n = max(len(anchors), 1)
    return pd.DataFrame({
        "step": np.arange(1, HORIZON + 1),
        "minutes_ahead": 10 * np.arange(1, HORIZON + 1),
        "ssim_model": model_scores / n,
        "ssim_persistence": persistence_scores / n,
    })


def write_outputs(report: SkillReport, per_sample: pd.DataFrame, out_dir: Path) -> Dict[str, Path]:
    """Report CSV, text tables, per-sample dump, horizon errors, condition shares and gain tables"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": report.to_csv(out_dir / "skill_report.csv"),
        "samples": out_dir / "per_sample.csv",
        "horizon": out_dir / "horizon_errors.csv",
        "shares": out_dir / "condition_shares.csv",
        "gain": out_dir / "attention_gain.csv",
        "gain_by_step": out_dir / "attention_gain_by_step.csv",
        "tables": out_dir / "skill_tables.txt",
    }
    per_sample.to_csv(paths["samples"], index=False, lineterminator="\n")
    horizon_errors(per_sample).to_csv(paths["horizon"], index=False, lineterminator="\n")
    condition_shares(per_sample).to_csv(paths["shares"], index=False, lineterminator="\n")

    gain = attention_gain(report)
    gain.to_csv(paths["gain"], index=False, lineterminator="\n")
    attention_gain_by_step(per_sample).to_csv(paths["gain_by_step"], index=False, lineterminator="\n")
    text = report.to_text()
    if gain.empty:
        logger.info(f"No {REFERENCE_CLOUD_MODEL} forecasts in this run; gain tables are empty")
    else:
        title = f"Skill score gain over {REFERENCE_CLOUD_MODEL} cloud forecasts"
        body = gain.to_string(index=False, float_format=lambda v: f"{v:8.2f}")
        text = f"{text}\n{title}\n{'=' * len(title)}\n{body}\n"
    paths["tables"].write_text(text, encoding="utf-8")
    return paths
