"""
Skill Report Aggregation

Per-sample errors -> per-sample skill -> mean skill per site -> mean
across sites, for every (net, scenario, condition) cell. Difference
columns compare each scenario with the ground-truth-clouds scenario of the
same net, site and condition (positive = worse than ground truth). Gain
tables compare forecasted-cloud scenarios with the ConvLSTM forecasts
(positive = better than ConvLSTM).
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from src.metrics.skill import CONDITIONS, conditions_of


logger = logging.getLogger(__name__)

REFERENCE_SCENARIO = "ground_truth_clouds"
REFERENCE_CLOUD_MODEL = "convlstm"
FORECAST_PREFIX = "forecasted_clouds["
FLEET = "fleet"
HORIZON = 6

SAMPLE_COLUMNS = [
    "site", "net", "scenario", "anchor", "sky",
    "rmse_method", "rmse_persistence", "mae_method", "mae_persistence",
    "rmse_skill", "mae_skill",
]
REPORT_COLUMNS = [
    "site", "net", "scenario", "condition", "rmse_skill", "mae_skill",
    "sample_count", "rmse_excluded_count", "mae_excluded_count", "rmse_skill_diff", "mae_skill_diff",
]
GAIN_COLUMNS = ["net", "model_id", "condition", "rmse_skill_gain", "mae_skill_gain"]
STEP_GAIN_COLUMNS = [
    "net", "model_id", "condition", "step", "minutes_ahead",
    "mae_skill", "reference_mae_skill", "mae_skill_gain",
]


def _expand_conditions(samples: pd.DataFrame) -> pd.DataFrame:
    """One row per (sample, report condition) it belongs to"""
    rows = samples.copy()
    rows["condition"] = rows["sky"].map(conditions_of)
    rows = rows.explode("condition", ignore_index=True)
    rows["condition"] = pd.Categorical(rows["condition"], categories=list(CONDITIONS), ordered=True)
    return rows


class SkillReport:
    """
    Per-site and fleet skill scores

    Attributes:
        rows: DataFrame with REPORT_COLUMNS; fleet aggregates use site="fleet".
              Cells without samples are absent rather than zero.
    """

    def __init__(self, rows: pd.DataFrame, scenario_order: List[str], net_order: List[str]):
        self.rows = rows
        self.scenario_order = scenario_order
        self.net_order = net_order

    # ------------------------------------------------------------------
    # Lookup
    # ------------------------------------------------------------------

    def fleet(self) -> pd.DataFrame:
        return self.rows[self.rows["site"] == FLEET].reset_index(drop=True)

    def value(self, net: str, scenario: str, condition: str, metric: str = "rmse_skill",
              site: str = FLEET) -> Optional[float]:
        match = self.rows[
            (self.rows["site"] == site) & (self.rows["net"] == net)
            & (self.rows["scenario"] == scenario) & (self.rows["condition"] == condition)
        ]
        if match.empty:
            return None
        value = match.iloc[0][metric]
        return None if pd.isna(value) else float(value)

    # ------------------------------------------------------------------
    # Output
    # ------------------------------------------------------------------

    def to_csv(self, path: Path) -> Path:
        self.rows.to_csv(path, index=False, lineterminator="\n")
        return path

    def to_text(self) -> str:
        """Tables with scenario rows and (skill, difference) columns per net"""
        fleet = self.fleet()
        blocks = []
        for metric, label in (("rmse", "RMSE"), ("mae", "MAE")):
            for condition in CONDITIONS:
                cell = fleet[fleet["condition"] == condition]
                if cell.empty:
                    continue
                table = pd.DataFrame(index=[s for s in self.scenario_order if s in set(cell["scenario"])])
                for net in self.net_order:
                    sub = cell[cell["net"] == net].set_index("scenario")
                    if sub.empty:
                        continue
                    table[f"{net} skill %"] = sub[f"{metric}_skill"]
                    table[f"{net} diff"] = sub[f"{metric}_skill_diff"]
                title = f"Average {label} skill score across sites - condition: {condition}"
                body = table.to_string(float_format=lambda v: f"{v:8.2f}", na_rep="     -")
                blocks.append(f"{title}\n{'=' * len(title)}\n{body}\n")
        return "\n".join(blocks)


def aggregate_report(
    samples: pd.DataFrame,
    scenario_order: Optional[Iterable[str]] = None,
    net_order: Optional[Iterable[str]] = None,
) -> SkillReport:
    """
    Build a SkillReport from per-sample scores

    Args:
        samples: DataFrame with SAMPLE_COLUMNS; rmse_skill/mae_skill are NaN for
                 samples excluded by the zero-persistence-error rule

    Example:
        Two sites with 10% and 30% skill in a cell average to 20% at fleet level.
    """
    scenario_order = list(scenario_order or dict.fromkeys(samples["scenario"]))
    net_order = list(net_order or dict.fromkeys(samples["net"]))
    rows = _expand_conditions(samples)
    keys = ["net", "scenario", "condition", "site"]

    per_site = rows.groupby(keys, observed=True, sort=False).agg(
        rmse_skill=("rmse_skill", "mean"),
        mae_skill=("mae_skill", "mean"),
        sample_count=("anchor", "size"),
        rmse_excluded_count=("rmse_skill", lambda s: int(s.isna().sum())),
        mae_excluded_count=("mae_skill", lambda s: int(s.isna().sum())),
    ).reset_index()

    # sites whose every sample was excluded still count toward fleet exclusions
    fleet = per_site.groupby(keys[:-1], observed=True, sort=False).agg(
        rmse_skill=("rmse_skill", "mean"),
        mae_skill=("mae_skill", "mean"),
        sample_count=("sample_count", "sum"),
        rmse_excluded_count=("rmse_excluded_count", "sum"),
        mae_excluded_count=("mae_excluded_count", "sum"),
    ).reset_index()
    fleet["site"] = FLEET

    table = pd.concat([per_site, fleet], ignore_index=True)
    table = table[table[["rmse_skill", "mae_skill"]].notna().any(axis=1)]
    reference = table[table["scenario"] == REFERENCE_SCENARIO][
        ["net", "condition", "site", "rmse_skill", "mae_skill"]
    ].rename(columns={"rmse_skill": "ref_rmse", "mae_skill": "ref_mae"})
    table = table.merge(reference, on=["net", "condition", "site"], how="left")
    table["rmse_skill_diff"] = table["ref_rmse"] - table["rmse_skill"]
    table["mae_skill_diff"] = table["ref_mae"] - table["mae_skill"]

    table["condition"] = pd.Categorical(table["condition"].astype(str), categories=list(CONDITIONS), ordered=True)
    table["_scenario"] = table["scenario"].map({s: i for i, s in enumerate(scenario_order)})
    table["_net"] = table["net"].map({n: i for i, n in enumerate(net_order)})
    table["_fleet"] = (table["site"] == FLEET).astype(int)
    table = table.sort_values(["_fleet", "site", "_net", "_scenario", "condition"], kind="mergesort")
    table["condition"] = table["condition"].astype(str)
    table = table[REPORT_COLUMNS].reset_index(drop=True)
    table["sample_count"] = table["sample_count"].astype(int)
    table["rmse_excluded_count"] = table["rmse_excluded_count"].astype(int)
    table["mae_excluded_count"] = table["mae_excluded_count"].astype(int)

    logger.info(f"Aggregated {len(samples)} sample scores into {len(table)} report rows")
    return SkillReport(table, scenario_order, net_order)


def condition_shares(samples: pd.DataFrame) -> pd.DataFrame:
    """
    Percentage of test samples per sky condition, per site and fleet average

    clear + cloudy_all = 100% and cloudy_all = high_cloud + low_cloud.
    """
    first = samples[["net", "scenario"]].iloc[0]
    subset = samples[(samples["net"] == first["net"]) & (samples["scenario"] == first["scenario"])]
    counts = pd.crosstab(subset["site"], subset["sky"]).reindex(
        columns=["clear", "high_cloud", "low_cloud"], fill_value=0
    )
    shares = counts.div(counts.sum(axis=1), axis=0) * 100.0
    shares["cloudy_all"] = shares["high_cloud"] + shares["low_cloud"]
    shares.loc[FLEET] = shares.mean(axis=0)
    shares.index.name = "site"
    return shares.reset_index()


def horizon_errors(samples: pd.DataFrame) -> pd.DataFrame:
    """Mean absolute error per horizon step for method and persistence (plot data)"""
    rows = _expand_conditions(samples)
    method_cols = [f"abs_err_h{i}" for i in range(1, HORIZON + 1)]
    persistence_cols = [f"abs_err_persistence_h{i}" for i in range(1, HORIZON + 1)]
    grouped = rows.groupby(["net", "scenario", "condition"], observed=True, sort=False)[
        method_cols + persistence_cols
    ].mean().reset_index()
    long = []
    for step in range(1, HORIZON + 1):
        part = grouped[["net", "scenario", "condition"]].copy()
        part["step"] = step
        part["minutes_ahead"] = 10 * step
        part["mae_method"] = grouped[f"abs_err_h{step}"]
        part["mae_persistence"] = grouped[f"abs_err_persistence_h{step}"]
        long.append(part)
    out = pd.concat(long, ignore_index=True)
    out["condition"] = out["condition"].astype(str)
    return out.sort_values(["net", "scenario", "condition", "step"], kind="mergesort").reset_index(drop=True)


# ============================================================================
# GAIN OVER THE REFERENCE CLOUD MODEL
# ============================================================================

def forecast_model_of(scenario: str) -> Optional[str]:
    """'forecasted_clouds[cbam]' -> 'cbam'; None for scenarios without a cloud model"""
    if scenario.startswith(FORECAST_PREFIX) and scenario.endswith("]"):
        return scenario[len(FORECAST_PREFIX):-1]
    return None


def _split_reference(table: pd.DataFrame, reference_model: str, keys: List[str], metrics: List[str]):
    table = table.assign(model_id=table["scenario"].map(forecast_model_of))
    table = table[table["model_id"].notna()]
    reference = table[table["model_id"] == reference_model][keys + metrics].rename(
        columns={m: f"reference_{m}" for m in metrics}
    )
    others = table[table["model_id"] != reference_model]
    return others.merge(reference, on=keys, how="inner")


def attention_gain(report: SkillReport, reference_model: str = REFERENCE_CLOUD_MODEL) -> pd.DataFrame:
    """
    Fleet skill-score points each cloud model's forecasts gain over the reference model's

    One row per (net, model_id, condition); empty when the reference model
    was not evaluated.
    """
    merged = _split_reference(report.fleet(), reference_model, ["net", "condition"], ["rmse_skill", "mae_skill"])
    merged["rmse_skill_gain"] = merged["rmse_skill"] - merged["reference_rmse_skill"]
    merged["mae_skill_gain"] = merged["mae_skill"] - merged["reference_mae_skill"]
    return merged[GAIN_COLUMNS].reset_index(drop=True)


def attention_gain_by_step(samples: pd.DataFrame, reference_model: str = REFERENCE_CLOUD_MODEL) -> pd.DataFrame:
    """
    Per horizon step MAE skill of each cloud model's forecasts and its gain over the reference model

    Step skill compares the mean absolute errors of method and persistence
    at that step; it is NaN where persistence is exact.
    """
    horizon = horizon_errors(samples)
    persistence = horizon["mae_persistence"].where(horizon["mae_persistence"] > 0)
    horizon["mae_skill"] = (1.0 - horizon["mae_method"] / persistence) * 100.0
    merged = _split_reference(horizon, reference_model, ["net", "condition", "step"], ["mae_skill"])
    merged["mae_skill_gain"] = merged["mae_skill"] - merged["reference_mae_skill"]
    return merged[STEP_GAIN_COLUMNS].reset_index(drop=True)


def recompute_fleet_skill(samples: pd.DataFrame, net: str, scenario: str, condition: str,
                          metric: str = "rmse") -> float:
    """
    Straight-line recomputation of one fleet cell from raw per-sample errors

    Used to audit aggregate_report: skill per sample, mean per site, mean over sites.
    """
    site_means = []
    for site in dict.fromkeys(samples["site"]):
        scores = []
        for _, row in samples[(samples["site"] == site) & (samples["net"] == net)
                              & (samples["scenario"] == scenario)].iterrows():
            if condition not in conditions_of(row["sky"]):
                continue
            method, ref = row[f"{metric}_method"], row[f"{metric}_persistence"]
            if ref == 0.0:
                if method == 0.0:
                    scores.append(0.0)
                continue
            scores.append((1.0 - method / ref) * 100.0)
        if scores:
            site_means.append(float(np.mean(scores)))
    return float(np.mean(site_means)) if site_means else float("nan")
