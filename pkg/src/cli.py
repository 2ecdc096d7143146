"""
Command-line Interface

Subcommands:
    generate      synthetic fleet -> dataset directory
    train-cloud   one cloud forecaster (or the full 24-point grid)
    train-solar   one net per site for a kind and cloud lineage
    evaluate      two-stage benchmark -> skill report files
    gradcheck     finite-difference suite over every differentiable piece

Exit codes:
    0 ok, 1 unexpected failure or failed gradcheck, 2 configuration error,
    3 training error, 4 missing or unreadable artifact
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Type, TypeVar

import pandas as pd
from pydantic import BaseModel, ValidationError

from src.cloud.model import load_cloud_model
from src.core.config import settings
from src.core.exceptions import (
    ConfigurationError,
    DataFormatError,
    MissingArtifactError,
    PipelineError,
    ScenarioMismatchError,
    TrainingError,
)
from src.core.models import CloudNetSpec, ExperimentConfig, RunManifest, Scenario, SynthConfig, parse_config
from src.core.runtime import StageTimer, hash_tree, package_versions
from src.data.fleet_io import load_fleet, save_fleet
from src.data.samples import Split, build_samples, daylight_anchors, split_chronological, strided
from src.data.synth import Fleet, generate_fleet
from src.pipeline.benchmark import PERSISTENCE_NET, evaluate_cloud_model, run_benchmark, write_outputs
from src.pipeline.diagnostics import results_table, run_gradcheck_suite
from src.pipeline.stages import cloud_checkpoint_path, search_cloud_specs, train_cloud_model, train_fleet
from src.solar.nets import NETS, load_solar_net, solar_checkpoint_path
from src.training.search import cloud_grid, write_search_results


logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_ARTIFACT = 4

DEFAULT_SCENARIOS = "ground_truth_clouds,persistence_clouds,no_clouds"
DEFAULT_NETS = "mlp,cnn1d,lstm"
RUN_MANIFEST = "run_manifest.json"
RUN_LOG = "run.log"


# ============================================================================
# HELPERS
# ============================================================================

def load_config(path: Optional[str], model: Type[M]) -> M:
    """
    Parse a JSON config file into a model; no path means defaults

    Raises:
        ConfigurationError: If the file is missing, not JSON, or invalid
    """
    if path is None:
        return model()
    file = Path(path)
    if not file.exists():
        raise ConfigurationError(f"Config file not found: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{file}: malformed JSON at offset {e.pos}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{file}: expected a JSON object")
    try:
        return parse_config(model, data)
    except ConfigurationError as e:
        raise ConfigurationError(f"{file}: {e}") from e


def parse_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def output_dir(args: argparse.Namespace, default: str) -> Path:
    out = Path(args.out) if args.out else settings.output_root / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def attach_run_log(out: Path) -> logging.Handler:
    handler = logging.FileHandler(out / RUN_LOG, encoding="utf-8")
    handler.setFormatter(logging.Formatter(settings.log_format))
    logging.getLogger().addHandler(handler)
    return handler


def write_run_manifest(
    out: Path,
    command: str,
    config: dict,
    seed: int,
    inputs: Sequence[Path] = (),
    outputs: Sequence[Path] = (),
) -> Path:
    """Write run_manifest.json; inputs are keyed relative to their parent directory"""
    hashed_inputs = {}
    for path in inputs:
        hashed_inputs.update(hash_tree([path], path.parent))
    manifest = RunManifest(
        command=command,
        config=config,
        seed=seed,
        inputs=hashed_inputs,
        outputs=hash_tree(list(outputs), out),
        versions=package_versions(),
    )
    path = out / RUN_MANIFEST
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def dataset_files(root: Path) -> List[Path]:
    return [root / "manifest.json", root / "power.csv", root / "frames"]


def load_split(data: str, jobs: int) -> tuple:
    """(fleet, chronological split of its daylight anchors)"""
    root = Path(data)
    if not root.exists():
        raise MissingArtifactError(f"Dataset directory not found: {root}")
    fleet = load_fleet(root, jobs=jobs)
    ratios = tuple(fleet.meta.get("split_ratios", (0.72, 0.18, 0.10)))
    return fleet, split_chronological(daylight_anchors(fleet), ratios)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_generate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, SynthConfig)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = output_dir(args, "dataset")
    handler = attach_run_log(out)
    try:
        fleet = generate_fleet(cfg)
        save_fleet(fleet, out)
        write_run_manifest(out, "generate", cfg.model_dump(mode="json"), cfg.seed, outputs=dataset_files(out))
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    print(f"✅ Dataset written to {out} ({len(fleet.frames)} frames, {len(fleet.sites)} sites)")
    return EXIT_OK


def _cloud_anchors(split: Split, stride: int) -> tuple:
    return strided(split.train, stride), strided(split.val, stride)


def cmd_train_cloud(args: argparse.Namespace) -> int:
    experiment = load_config(args.config, ExperimentConfig)
    base = load_config(args.spec, CloudNetSpec) if args.spec else experiment.cloud_spec
    train_cfg = experiment.train
    if args.cell:
        base = base.model_copy(update={"cell": args.cell})
    if args.seed is not None:
        base = base.model_copy(update={"seed": args.seed})
        train_cfg = train_cfg.model_copy(update={"seed": args.seed})
    model_id = args.model_id or base.cell

    out = output_dir(args, "checkpoints")
    handler = attach_run_log(out)
    try:
        fleet, split = load_split(args.data, args.jobs)
        train_anchors, val_anchors = _cloud_anchors(split, experiment.cloud_stride)
        path = cloud_checkpoint_path(out, model_id)
        outputs = [path, path.with_suffix(".json"), out / f"history_cloud_{model_id}.csv"]

        if args.grid:
            specs = cloud_grid(base.cell, base)
            outcome, results = search_cloud_specs(fleet, train_anchors, val_anchors, specs, train_cfg, args.jobs)
            outcome.model.save(path, meta={"model_id": model_id, "best_epoch": outcome.result.best_epoch})
            outputs.append(write_search_results(results, out / f"search_cloud_{model_id}.json"))
        else:
            with StageTimer(f"Train cloud model {model_id}"):
                outcome = train_cloud_model(fleet, train_anchors, val_anchors, base, train_cfg, checkpoint_path=path)
        outcome.result.write_history(out / f"history_cloud_{model_id}.csv")

        config = {"experiment": experiment.model_dump(mode="json"), "spec": outcome.spec.model_dump(mode="json"),
                  "grid": args.grid, "model_id": model_id}
        write_run_manifest(out, "train-cloud", config, train_cfg.seed,
                           inputs=dataset_files(Path(args.data)), outputs=outputs)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    print(f"✅ Cloud model {model_id} saved (best val loss {outcome.result.best_val_loss:.6f})")
    return EXIT_OK


def cmd_train_solar(args: argparse.Namespace) -> int:
    experiment = load_config(args.config, ExperimentConfig)
    if args.trials is not None:
        experiment = experiment.model_copy(update={"solar_trials": args.trials})
    seed = args.seed if args.seed is not None else experiment.train.seed
    with_clouds = args.lineage == "with_clouds"

    out = output_dir(args, "checkpoints")
    handler = attach_run_log(out)
    try:
        fleet, split = load_split(args.data, args.jobs)
        samples = {"train": build_samples(fleet, split.train), "val": build_samples(fleet, split.val)}
        outcomes = train_fleet(samples, args.net, with_clouds, experiment, out, seed, args.jobs)
        outputs = []
        for o in outcomes:
            outputs += [o.checkpoint, o.checkpoint.with_suffix(".json")]
        config = {"experiment": experiment.model_dump(mode="json"), "net": args.net, "lineage": args.lineage}
        write_run_manifest(out, "train-solar", config, seed,
                           inputs=dataset_files(Path(args.data)), outputs=outputs)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    print(f"✅ Trained {len(outcomes)} {args.net} nets ({args.lineage})")
    return EXIT_OK


def _load_nets(fleet: Fleet, kinds: Sequence[str], scenarios: Sequence[Scenario], checkpoints: Path) -> Dict:
    lineages = sorted({s.uses_clouds for s in scenarios})
    nets = {}
    for site in fleet.sites:
        for kind in kinds:
            if kind == PERSISTENCE_NET:
                continue
            for with_clouds in lineages:
                path = solar_checkpoint_path(checkpoints, site.site_id, kind, with_clouds)
                if not path.exists():
                    raise MissingArtifactError(f"Solar net checkpoint not found: {path}")
                nets[(site.site_id, kind, with_clouds)] = load_solar_net(path)
    return nets


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        scenarios = [Scenario.parse(s) for s in parse_list(args.scenarios)]
    except ValidationError as e:
        raise ConfigurationError(f"Invalid scenario list {args.scenarios!r}: {e}") from e
    kinds = parse_list(args.nets)
    unknown = [k for k in kinds if k not in NETS and k != PERSISTENCE_NET]
    if unknown or not kinds or not scenarios:
        raise ConfigurationError(f"Unknown nets {unknown} or empty scenario/net list")
    checkpoints = Path(args.checkpoints)

    out = output_dir(args, "report")
    handler = attach_run_log(out)
    try:
        fleet, split = load_split(args.data, args.jobs)
        nets = _load_nets(fleet, kinds, scenarios, checkpoints)
        model_ids = sorted({s.model_id for s in scenarios if s.tag == "forecasted_clouds"})
        cloud_models = {m: load_cloud_model(m, checkpoints) for m in model_ids}

        samples = build_samples(fleet, split.test)
        with StageTimer("Benchmark"):
            report, per_sample = run_benchmark(fleet, samples, scenarios, kinds, nets, cloud_models, args.jobs)
        paths = write_outputs(report, per_sample, out)

        if cloud_models:
            evals = [evaluate_cloud_model(model, fleet, split.test).assign(model_id=m)
                     for m, model in cloud_models.items()]
            paths["cloud_eval"] = out / "cloud_eval.csv"
            pd.concat(evals, ignore_index=True).to_csv(paths["cloud_eval"], index=False, lineterminator="\n")

        config = {"scenarios": [s.name for s in scenarios], "nets": kinds, "checkpoints": str(checkpoints)}
        write_run_manifest(out, "evaluate", config, int(fleet.meta.get("seed", 0)),
                           inputs=dataset_files(Path(args.data)) + [checkpoints],
                           outputs=list(paths.values()))
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    print(report.to_text())
    print(f"✅ Report written to {out}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradcheck_suite(seed=args.seed if args.seed is not None else 0)
    table = results_table(results)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2e}"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / "gradcheck.csv", index=False, lineterminator="\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"❌ gradcheck failed: {', '.join(failed)}")
        return EXIT_FAILED
    print(f"✅ All {len(results)} gradient checks passed")
    return EXIT_OK


# ============================================================================
# CLI ENTRY POINT
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument('--seed', type=int, default=None, help='Override the config seed')
    shared.add_argument('--out', default=None, help=f'Output directory (default: under {settings.output_root})')
    shared.add_argument('--jobs', type=int, default=1, help='Worker threads for per-site/per-trial work (default: 1)')

    parser = argparse.ArgumentParser(
        description="Cloud forecasting and two-stage solar power forecasting experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py generate --config synth.json --out data/fleet
  python main.py train-cloud --data data/fleet --cell cbam --out ckpt
  python main.py train-solar --data data/fleet --net lstm --lineage with_clouds --out ckpt
  python main.py evaluate --data data/fleet --checkpoints ckpt \\
      --scenarios "ground_truth_clouds,forecasted_clouds[cbam],persistence_clouds,no_clouds"
  python main.py gradcheck
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[shared], help="Generate a synthetic fleet")
    p.add_argument('--config', default=None, help='SynthConfig JSON (default: built-in defaults)')
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-cloud", parents=[shared], help="Train a cloud forecaster")
    p.add_argument('--data', required=True, help='Dataset directory')
    p.add_argument('--cell', choices=["convlstm", "cbam", "sa"], default=None, help='Cell type')
    mode = p.add_mutually_exclusive_group()
    mode.add_argument('--grid', action='store_true', help='Search the 24-point architecture grid')
    mode.add_argument('--spec', default=None, help='CloudNetSpec JSON')
    p.add_argument('--config', default=None, help='ExperimentConfig JSON')
    p.add_argument('--model-id', default=None, help='Checkpoint id (default: the cell type)')
    p.set_defaults(func=cmd_train_cloud)

    p = sub.add_parser("train-solar", parents=[shared], help="Train per-site solar nets")
    p.add_argument('--data', required=True, help='Dataset directory')
    p.add_argument('--net', choices=sorted(NETS), required=True, help='Net kind')
    p.add_argument('--lineage', choices=["with_clouds", "no_clouds"], default="with_clouds")
    p.add_argument('--trials', type=int, default=None, help='Random-search trials per site')
    p.add_argument('--config', default=None, help='ExperimentConfig JSON')
    p.set_defaults(func=cmd_train_solar)

    p = sub.add_parser("evaluate", parents=[shared], help="Run the two-stage benchmark")
    p.add_argument('--data', required=True, help='Dataset directory')
    p.add_argument('--checkpoints', required=True, help='Directory holding cloud and solar checkpoints')
    p.add_argument('--scenarios', default=DEFAULT_SCENARIOS, help=f'Comma list (default: {DEFAULT_SCENARIOS})')
    p.add_argument('--nets', default=DEFAULT_NETS, help=f'Comma list, may include persistence (default: {DEFAULT_NETS})')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", parents=[shared], help="Run the finite-difference gradient suite")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def setup_logging() -> None:
    logging.basicConfig(level=settings.log_level.upper(), format=settings.console_format)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()

    try:
        return args.func(args)
    except (ConfigurationError, ScenarioMismatchError, ValidationError) as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except TrainingError as e:
        logger.error(f"❌ Training failed: {e}")
        return EXIT_TRAINING
    except (MissingArtifactError, DataFormatError) as e:
        logger.error(f"❌ Artifact error: {e}")
        return EXIT_ARTIFACT
    except PipelineError as e:
        logger.error(f"❌ Pipeline failed: {e}")
        return EXIT_FAILED
    except KeyboardInterrupt:
        logger.warning("⚠️  Cancelled by user")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
