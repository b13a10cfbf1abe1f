"""Command-line pipeline driver for h2s."""

import argparse
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import statsmodels
import yaml

from . import __version__
from .artifacts import (
    DIAGRAMS,
    EMBEDDING,
    INFERENCE,
    MANIFEST,
    MODEL,
    SCENE_JSON,
    SCENE_SVG,
    StagedWrites,
    dumps,
    is_current,
    read_artifact,
    write_artifact,
)
from .config import Config, get_log_path, load_config
from .embedding import Embedding, ObjectiveWeights, mds_only_embedding, optimize
from .errors import ConvergenceError, H2SError, StageError, ValidationError
from .estimators import Estimator, EstimatorChoice, fit_ensemble
from .geometry import DistanceDataset, LabeledDataset, SummaryStats
from .inference import InferenceReport, ResamplingConfig, TestKind, full_inference
from .ingest import ingest, write_labeled_csv
from .render import DiagramKind, RenderOptions, render_scene, render_significance_diagram, render_values_diagram
from .synthetic import (
    MEAN_D2C,
    Distribution,
    ScenarioKind,
    ScenarioSpec,
    calibration_fpr,
    d2c_convergence,
    derive_tables,
    estimator_benchmark,
    generate_scenario,
    write_rows_csv,
    write_rows_json,
)
from .tables import CalibrationTables, load_tables, save_tables

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3

PIPELINE_STAGES = ("fit", "embed", "infer", "render")


def _setup_logging(debug: bool, out_dir: Path):
    """Set up logging configuration."""
    log_path = get_log_path(out_dir)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    level = logging.DEBUG if debug else logging.INFO

    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_path),
            logging.StreamHandler(),
        ],
        force=True,
    )


def _estimator_choice(config: Config) -> EstimatorChoice:
    return EstimatorChoice(config.estimator_variant, config.mcmc_samples, config.seed)


def _tables(config: Config) -> CalibrationTables:
    return load_tables(config.tables_path)


def _resampling(config: Config) -> ResamplingConfig:
    return ResamplingConfig(config.n_resamples, config.alpha_level, config.seed, config.n_splits)


def _render_options(config: Config) -> RenderOptions:
    palette = config.palette
    kwargs = {"palette": tuple(palette)} if palette else {}
    return RenderOptions(
        config.render_width, config.render_height, config.render_margin, config_hash=config.config_hash("render"), **kwargs
    )


def load_dataset(config: Config) -> LabeledDataset | DistanceDataset:
    """The configured input file, or the configured synthetic scenario."""
    if config.scenario is not None:
        spec = ScenarioSpec.from_dict(config.scenario)
        return generate_scenario(spec)[0]
    return ingest(config.input_path, config.input_format, config.labels_path, config.input_dimension)


def stage_fit(config: Config, out: Path, force: bool = False) -> int:
    path = out / MODEL
    config_hash = config.config_hash("fit")
    if not force and is_current(path, config_hash):
        logger.info(f"{path} is current; skipping fit")
        return EXIT_OK

    dataset = load_dataset(config)
    choice = _estimator_choice(config)
    ensemble, stats = fit_ensemble(dataset, choice, _tables(config))
    dimension = dataset.dimension
    with StagedWrites() as staged:
        staged.add(
            write_artifact(
                path,
                "fit",
                config_hash,
                {
                    "estimator": choice.variant.value,
                    "dimension": dimension,
                    "ensemble": None if ensemble is None else ensemble.to_dict(),
                    "stats": stats.to_dict(),
                },
            )
        )
    return EXIT_OK


def stage_embed(config: Config, out: Path, force: bool = False) -> int:
    path = out / EMBEDDING
    config_hash = config.config_hash("embed")
    if not force and is_current(path, config_hash):
        logger.info(f"{path} is current; skipping embed")
        return EXIT_OK

    model = read_artifact(out / MODEL)
    target = SummaryStats.from_dict(model["stats"])
    weights = ObjectiveWeights(config.alpha, config.beta)
    if config.mds_only:
        embedding = mds_only_embedding(target, config.embedding_dim, weights)
    else:
        embedding = optimize(target, config.embedding_dim, weights, config.seed, config.starts)

    with StagedWrites() as staged:
        staged.add(write_artifact(path, "embed", config_hash, {"embedding": embedding.to_dict()}))
    if not embedding.converged:
        logger.warning("Embedding did not converge; artifact written and flagged")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def stage_infer(config: Config, out: Path, force: bool = False) -> int:
    if not config.inference_enabled:
        logger.info("Inference disabled; skipping resampling")
        return EXIT_OK
    path = out / INFERENCE
    config_hash = config.config_hash("infer")
    if not force and is_current(path, config_hash):
        logger.info(f"{path} is current; skipping infer")
        return EXIT_OK

    dataset = load_dataset(config)
    if isinstance(dataset, DistanceDataset):
        logger.warning("Inference needs point data; distance input only supports fit, embed and render")
        return EXIT_OK
    report = full_inference(dataset, _estimator_choice(config), _resampling(config), _tables(config))
    with StagedWrites() as staged:
        staged.add(write_artifact(path, "infer", config_hash, {"report": report.to_dict()}))
    if report.errors:
        logger.warning(f"{len(report.errors)} test(s) failed; their cells are empty")
    return EXIT_OK


def stage_render(config: Config, out: Path, force: bool = False) -> int:
    config_hash = config.config_hash("render")
    if not force and is_current(out / SCENE_JSON, config_hash):
        logger.info(f"{out / SCENE_JSON} is current; skipping render")
        return EXIT_OK

    embedding = Embedding.from_dict(read_artifact(out / EMBEDDING)["embedding"])
    report = None
    if config.inference_enabled and is_current(out / INFERENCE, config.config_hash("infer")):
        report = InferenceReport.from_dict(read_artifact(out / INFERENCE)["report"])

    options = _render_options(config)
    svg, scene = render_scene(embedding, options, report)
    with StagedWrites() as staged:
        staged.write_text(out / SCENE_SVG, svg)
        staged.write_text(
            out / DIAGRAMS / "values.svg", render_values_diagram(embedding.target, embedding.achieved, options)
        )
        if report is not None:
            staged.write_text(
                out / DIAGRAMS / "significance.svg", render_significance_diagram(report, DiagramKind.SIGNIFICANCE, options)
            )
            staged.write_text(
                out / DIAGRAMS / "pairwise.svg", render_significance_diagram(report, DiagramKind.PAIRWISE, options)
            )
        staged.add(write_artifact(out / SCENE_JSON, "render", config_hash, {"scene": scene}))
    return EXIT_OK


STAGES = {
    "fit": stage_fit,
    "embed": stage_embed,
    "infer": stage_infer,
    "render": stage_render,
}


def run_stage(name: str, config: Config, out: Path, force: bool = False) -> int:
    """Run one stage, tagging any failure with the stage name."""
    try:
        return STAGES[name](config, out, force)
    except Exception as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, e) from e


def versions() -> dict:
    return {
        "h2s": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "statsmodels": statsmodels.__version__,
        "pyyaml": yaml.__version__,
        "python": platform.python_version(),
    }


def run_pipeline(config: Config, force: bool = False) -> int:
    """Fit, embed, infer and render, then write the run manifest.

    Returns the worst exit status across stages (3 when the embedding did not
    converge, 0 otherwise).
    """
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for name in PIPELINE_STAGES:
        logger.info(f"Stage {name}")
        status = max(status, run_stage(name, config, out, force))

    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "stages": [s for s in PIPELINE_STAGES if s != "infer" or config.inference_enabled],
        "versions": versions(),
    }
    (out / MANIFEST).write_text(dumps(manifest))
    logger.info(f"Pipeline finished; artifacts in {out}")
    return status


def _set_dotted(data: dict, key: str, value):
    *parents, leaf = key.split(".")
    for k in parents:
        data = data.setdefault(k, {})
    data[leaf] = value


def _overrides(args: argparse.Namespace) -> dict:
    """Map CLI flags onto config keys."""
    mapping = {
        "input": "input.path",
        "format": "input.format",
        "labels": "input.labels_path",
        "dimension": "input.dimension",
        "estimator": "estimator.variant",
        "tables": "estimator.tables",
        "dim": "embedding.dim",
        "alpha": "embedding.alpha",
        "beta": "embedding.beta",
        "resamples": "inference.n_resamples",
        "alpha_level": "inference.alpha_level",
        "seed": "seed",
        "out": "output.dir",
    }
    overrides: dict = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            if key == "estimator.variant":
                value = value.upper()
            _set_dotted(overrides, key, value)
    if getattr(args, "mds_only", False):
        _set_dotted(overrides, "embedding.mds_only", True)
    if getattr(args, "no_inference", False):
        _set_dotted(overrides, "inference.enabled", False)
    if getattr(args, "debug", False):
        overrides["debug"] = True
    return overrides


def _add_pipeline_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--input", help="input data file")
    parser.add_argument("--format", choices=("csv", "json", "distance"), help="input format")
    parser.add_argument("--labels", help="per-point label file for distance input")
    parser.add_argument("--dimension", type=int, help="ambient dimension N for distance input")
    parser.add_argument("--estimator", help=f"radius estimator ({', '.join(e.value for e in Estimator)})")
    parser.add_argument("--tables", help="calibration tables JSON")
    parser.add_argument("--dim", type=int, help="embedding dimension (2 or 3)")
    parser.add_argument("--alpha", type=float, help="margin weight")
    parser.add_argument("--beta", type=float, help="radius weight")
    parser.add_argument("--mds-only", action="store_true", help="use MDS centers and copied radii")
    parser.add_argument("--resamples", type=int, help="permutation/bootstrap resamples")
    parser.add_argument("--alpha-level", type=float, help="significance level and FDR rate")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--force", action="store_true", help="rerun even if artifacts are current")
    parser.add_argument("--debug", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2s", description="Hypersphere summaries of labeled data")
    parser.add_argument("--version", action="version", version=f"h2s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("fit", "fit one hypersphere per class"),
        ("embed", "embed the fitted spheres in 2D or 3D"),
        ("infer", "run significance tests"),
        ("render", "render the scene and diagrams"),
        ("run", "run the whole pipeline"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_pipeline_flags(p)
        if name == "run":
            p.add_argument("--no-inference", action="store_true", help="skip resampling tests")

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--kind", default="TOUCHING", choices=[k.value for k in ScenarioKind if k is not ScenarioKind.CUSTOM])
    p.add_argument("--dimension", type=int, default=200)
    p.add_argument("--samples", type=int, default=100, help="points per class")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--distribution", default="BALL", choices=[d.value for d in Distribution])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="h2s-out")
    p.add_argument("--debug", action="store_true")

    p = sub.add_parser("bench", help="estimator benchmark, test calibration or D2C convergence")
    p.add_argument("--mode", default="estimators", choices=("estimators", "calibration", "convergence"))
    p.add_argument("--estimators", default=f"{Estimator.ADAPTIVE.value},{MEAN_D2C}", help="comma-separated")
    p.add_argument("--distributions", default=",".join(d.value for d in Distribution), help="comma-separated")
    p.add_argument("--dims", default="16,200,1024", help="comma-separated N grid")
    p.add_argument("--sizes", default="200", help="comma-separated P grid")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--test", default=TestKind.SEPARATION.value, choices=[k.value for k in TestKind])
    p.add_argument("--simulations", type=int, default=400)
    p.add_argument("--resamples", type=int, default=1_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="h2s-out")
    p.add_argument("--debug", action="store_true")

    p = sub.add_parser("derive-tables", help="re-derive the xi and zeta calibration tables")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="h2s-out")
    p.add_argument("--debug", action="store_true")
    return parser


def _csv_list(text: str, cast=str) -> list:
    try:
        return [cast(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ValidationError(f"bad list {text!r}: {e}") from e


def cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    spec = ScenarioSpec.for_kind(args.kind, args.dimension, args.samples, args.radius, args.distribution, args.seed)
    dataset, truth = generate_scenario(spec)
    with StagedWrites() as staged:
        path = out / "data.csv"
        write_labeled_csv(dataset, path)
        staged.add(path)
        staged.write_text(out / "truth.json", dumps({"scenario": spec.to_dict(), "ensemble": truth.to_dict()}))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    out = Path(args.out)
    distributions = _csv_list(args.distributions, lambda name: Distribution(name.upper()))
    dims = _csv_list(args.dims, int)
    sizes = _csv_list(args.sizes, int)
    if args.mode == "estimators":
        rows = estimator_benchmark(
            _csv_list(args.estimators, str.upper), distributions, dims, sizes, args.repetitions, args.seed
        )
        stem = "bench"
    elif args.mode == "calibration":
        config = ResamplingConfig(n_resamples=args.resamples, seed=args.seed)
        rows = [
            calibration_fpr(args.test, args.simulations, config, n, p, d, seed=args.seed).to_row()
            for d in distributions
            for n in dims
            for p in sizes
        ]
        stem = "calibration"
    else:
        rows = d2c_convergence(distributions, dims, args.repetitions, sizes[0], args.seed)
        stem = "convergence"
    write_rows_csv(rows, out / f"{stem}.csv")
    write_rows_json(rows, out / f"{stem}.json")
    logger.info(f"Wrote {len(rows)} rows to {out / stem}.csv")
    return EXIT_OK


def cmd_derive_tables(args: argparse.Namespace) -> int:
    tables = derive_tables(repetitions=args.repetitions, seed=args.seed)
    save_tables(tables, Path(args.out) / "tables.json")
    return EXIT_OK


def exit_code(error: BaseException) -> int:
    cause = error.cause if isinstance(error, StageError) else error
    if isinstance(cause, ValidationError):
        return EXIT_VALIDATION
    if isinstance(cause, ConvergenceError):
        return EXIT_NOT_CONVERGED
    return EXIT_ERROR


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("simulate", "bench", "derive-tables"):
            _setup_logging(args.debug, Path(args.out))
            handler = {"simulate": cmd_simulate, "bench": cmd_bench, "derive-tables": cmd_derive_tables}[args.command]
            return handler(args)

        config = load_config(args.config, _overrides(args))
        _setup_logging(config.debug, config.output_dir)
        logger.info(f"h2s {__version__} {args.command} (config {config.config_hash()[:12]})")
        if args.command == "run":
            return run_pipeline(config, args.force)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        return run_stage(args.command, config, config.output_dir, args.force)
    except H2SError as e:
        logger.error(str(e))
        print(f"h2s: {e}", file=sys.stderr)
        return exit_code(e)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(f"h2s: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
