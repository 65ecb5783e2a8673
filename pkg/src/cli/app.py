"""Command-line entry point: ``dprp <subcommand> [options]``.

Results go to stdout as CSV; files written under ``--out`` are paired with a
``manifest.json``. Logging goes to stderr at the level of ``DPRP_LOG``.
"""

import argparse
import inspect
import itertools
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from .. import __version__
from ..analysis import analytic
from ..analysis.estimators import angle_from_rr_signs, angle_from_signs, cosine_normalized, inner_product
from ..config import (
    DELTA_GRID, EPSILON_GRID, SENSITIVITY_GRID, SIGN_MAGIC, SYNTHETIC_DEFAULTS, TOOL_NAME, settings
)
from ..core.dataset import load_dataset, max_normalize
from ..core.processing_engine import PrivatizationEngine
from ..core.randomness import RngStream
from ..evaluation.audit import MUTATIONS, audit_privacy, default_audit_matrix
from ..evaluation.oracle import ORACLE_TARGETS, monte_carlo_oracle
from ..evaluation.retrieval import run_classification, run_retrieval
from ..evaluation.synthetic import clustered_dataset, random_centers, retrieval_task
from ..exceptions import CalibrationError, DataValidationError, DPRPError, PreconditionError
from ..mechanisms import calibration
from ..models import MechanismFamily, RetrievalTask, RunConfig, Sketch, SketchProvenance
from ..utils.report_generator import ReportGenerator
from ..utils.serialization import (
    read_matrix, read_sidecar, read_sign_matrix, write_matrix, write_sidecar, write_sign_matrix
)

logger = logging.getLogger(__name__)

# Functions the analytic subcommand can evaluate
ANALYTIC_FUNCTIONS: Dict[str, Callable] = {
    "chi_square_tail": analytic.chi_square_tail,
    "half_normal_tail": analytic.half_normal_tail,
    "binomial_tail": analytic.binomial_tail,
    "abs_exceed_prob": analytic.abs_exceed_prob,
    "conditional_abs_expectation": analytic.conditional_abs_expectation,
    "conditional_tail_bound": analytic.conditional_tail_bound,
    "p_plus_gaussian": analytic.p_plus_gaussian,
    "p_plus_rademacher": analytic.p_plus_rademacher,
    "n_plus_bound": analytic.n_plus_bound,
    "signrp_angle_variance": analytic.signrp_angle_variance,
    "rr_angle_variance": analytic.rr_angle_variance,
    "rr_collision_probability": analytic.rr_collision_probability,
    "variance_ratio": analytic.variance_ratio,
    "optimal_k_star": analytic.optimal_k_star,
    "sensitivity_l2_bound": calibration.sensitivity_l2_bound,
    "sensitivity_l1_bound": calibration.sensitivity_l1_bound,
    "analytic_dp_rp_g_sigma": calibration.analytic_dp_rp_g_sigma,
}

ESTIMATORS = ("auto", "inner_product", "cosine", "angle", "angle_rr")


class CliParser(argparse.ArgumentParser):
    """Argument errors exit with status 1 (2 is reserved for calibration failures)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: usage: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Top-level 64-bit seed")
    common.add_argument("--jobs", type=int, default=None, help="Worker processes for cell-level parallelism")
    common.add_argument("--config", type=str, default=None, help="JSON run configuration")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--progress", action="store_true", help="Show progress bars on stderr")
    return common


def _mechanism_options() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False)
    family = options.add_mutually_exclusive_group()
    family.add_argument("--sign", action="store_true", help="Sign random projection mechanisms")
    family.add_argument("--idp", action="store_true", help="Individual-DP sign mechanisms")
    family.add_argument("--baseline", action="store_true", help="Non-private baselines")
    options.add_argument("--variant", type=str, default=None,
                         help="Variant, e.g. rp_g_opt, rr-smooth, oporp-rr, g")
    options.add_argument("--eps", type=float, default=None)
    options.add_argument("--delta", type=float, default=None)
    options.add_argument("--beta", type=float, default=None)
    options.add_argument("--k", type=int, default=None, help="Sketch length")
    options.add_argument("--t", type=int, default=None, dest="repetitions", help="OPORP repetitions")
    options.add_argument("--m", type=float, default=None, dest="norm_lower_bound",
                         help="Norm lower bound for sign rr")
    options.add_argument("--kind", type=str, default=None, choices=["gaussian", "uniform", "very_sparse"])
    options.add_argument("--sparsity", type=float, default=None)
    options.add_argument("--sensitivity-mode", type=str, default=None, choices=["exact", "analytic"])
    options.add_argument("--allow-gaussian", action="store_true", default=None,
                         help="Permit Gaussian projections for iDP")
    return options


def create_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog=TOOL_NAME, description="Differentially private random projections and sign sketches")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    common = _common_options()
    mechanism = _mechanism_options()
    commands = parser.add_subparsers(dest="command", required=True)

    calibrate = commands.add_parser("calibrate", parents=[common], help="Noise scales over (eps, delta, Delta) grids")
    calibrate.add_argument("--eps", type=float, nargs="+", default=None)
    calibrate.add_argument("--delta", type=float, nargs="+", default=None)
    calibrate.add_argument("--delta2", type=float, nargs="+", default=None, help="l2 sensitivities")
    calibrate.add_argument("--delta1", type=float, nargs="+", default=None, help="l1 sensitivities (Laplace)")

    analytic_parser = commands.add_parser("analytic", parents=[common], help="Evaluate closed-form quantities")
    analytic_parser.add_argument("function", choices=sorted(ANALYTIC_FUNCTIONS))
    analytic_parser.add_argument("--grid", action="append", default=[], metavar="NAME=V1,V2",
                                 help="Parameter values; the output is the product grid")

    privatize = commands.add_parser("privatize", parents=[common, mechanism], help="Privatize a dataset")
    privatize.add_argument("--input", type=str, required=True, help="CSV or binary matrix")
    privatize.add_argument("--bound", type=float, default=1.0, help="Entry bound C of the input")
    privatize.add_argument("--normalize", action="store_true", help="Max-normalize columns first (C becomes 1)")
    privatize.add_argument("--output", type=str, default=None, help="Sketch file (default <out>/sketches.bin)")
    privatize.add_argument("--single-precision", action="store_true", help="Lossy 32-bit real sketches")

    estimate = commands.add_parser("estimate", parents=[common], help="Pairwise estimates between sketch files")
    estimate.add_argument("first", type=str)
    estimate.add_argument("second", type=str)
    estimate.add_argument("--estimator", choices=ESTIMATORS, default="auto")

    bench = commands.add_parser("bench", parents=[common, mechanism], help="Retrieval or k-NN benchmarks")
    bench.add_argument("task", choices=["retrieval", "knn"])
    bench.add_argument("--n-seeds", type=int, default=None)
    bench.add_argument("--bound", type=float, default=1.0)
    bench.add_argument("--per-seed", action="store_true", help="Report every seed instead of the mean")

    audit = commands.add_parser("audit", parents=[common], help="Exact privacy audits on small instances")
    audit.add_argument("--mechanism", action="append", default=None, metavar="FAMILY:VARIANT",
                       help="Restrict the default matrix to these mechanisms")
    audit.add_argument("--eps", type=float, default=1.0)
    audit.add_argument("--grid", type=int, default=None, help="Perturbations per coordinate")
    audit.add_argument("--mutation", choices=MUTATIONS, default=None)

    oracle = commands.add_parser("oracle", parents=[common], help="Monte Carlo oracle estimates")
    oracle.add_argument("--target", required=True, choices=sorted(ORACLE_TARGETS))
    oracle.add_argument("--n", type=int, default=100_000)
    oracle.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
    oracle.add_argument("--batch-size", type=int, default=None)
    return parser


def config_load(path: str) -> RunConfig:
    """Read and validate a JSON run configuration; defaults are filled in."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"config not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DataValidationError(f"{path.name} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise DataValidationError(f"{path.name} must hold a JSON object")
    return RunConfig(**data)


def _parse_value(name: str, text: str, annotation: Any) -> Any:
    """Cast a command-line value to the annotated parameter type."""
    if annotation is bool:
        return text.lower() in ("1", "true", "yes")
    if annotation is inspect.Parameter.empty:
        annotation = float
    try:
        return annotation(text)
    except ValueError as e:
        raise PreconditionError(f"parameter {name}: cannot parse '{text}'") from e


def _parse_assignment(text: str) -> tuple:
    if "=" not in text:
        raise PreconditionError(f"expected NAME=VALUE, got '{text}'")
    name, value = text.split("=", 1)
    return name.strip(), value.strip()


def _run_config(args) -> RunConfig:
    """RunConfig from --config overlaid with explicit command-line options."""
    data: Dict[str, Any] = {}
    if args.config:
        data = config_load(args.config).model_dump(exclude_unset=True)

    if getattr(args, "sign", False):
        data["family"] = MechanismFamily.SIGN.value
    elif getattr(args, "idp", False):
        data["family"] = MechanismFamily.IDP.value
    elif getattr(args, "baseline", False):
        data["family"] = MechanismFamily.BASELINE.value
    if getattr(args, "variant", None):
        data["variant"] = args.variant.replace("-", "_")
    overrides = {
        "epsilon": getattr(args, "eps", None), "delta": getattr(args, "delta", None),
        "beta": getattr(args, "beta", None), "k": getattr(args, "k", None),
        "repetitions": getattr(args, "repetitions", None),
        "norm_lower_bound": getattr(args, "norm_lower_bound", None),
        "kind": getattr(args, "kind", None), "sparsity": getattr(args, "sparsity", None),
        "sensitivity_mode": getattr(args, "sensitivity_mode", None),
        "allow_gaussian": getattr(args, "allow_gaussian", None),
        "seed": args.seed, "n_seeds": getattr(args, "n_seeds", None),
    }
    data.update({key: value for key, value in overrides.items() if value is not None})

    if "variant" not in data:
        raise PreconditionError("--variant is required when no --config is given")
    if "epsilon" not in data:
        raise PreconditionError("--eps is required when no --config is given")
    return RunConfig(**data)


def _seed(args, config: Optional[RunConfig] = None) -> int:
    if args.seed is not None:
        return args.seed
    return config.seed if config is not None else settings.default_seed


def _emit(frame: pd.DataFrame) -> None:
    sys.stdout.write(frame.to_csv(index=False, float_format="%.10g"))


def _report(args, subcommand: str, tables: Dict[str, pd.DataFrame], config: Dict, seeds: Sequence[int],
            inputs: Sequence[str], start_time: float, always: bool = False) -> None:
    if args.out is None and not always:
        return
    generator = ReportGenerator(args.out or settings.output_dir)
    generator.generate_run_report(subcommand, tables, config=config, seeds=list(seeds),
                                  inputs=inputs, start_time=start_time)


def _cmd_calibrate(args) -> None:
    start_time = time.time()
    epsilons = args.eps or EPSILON_GRID
    deltas = args.delta or DELTA_GRID
    sensitivities = args.delta2 or SENSITIVITY_GRID

    rows = []
    for eps, delta, delta2 in itertools.product(epsilons, deltas, sensitivities):
        classic = calibration.classic_gaussian_sigma(delta2, eps, delta) if delta < 0.5 else float("nan")
        row = {"epsilon": eps, "delta": delta, "delta2": delta2,
               "sigma_optimal": calibration.optimal_gaussian_sigma(delta2, eps, delta),
               "sigma_classic": classic}
        rows.append(row)
    frame = pd.DataFrame(rows)

    if args.delta1:
        laplace = pd.DataFrame([{"epsilon": eps, "delta1": delta1, "laplace_lambda": calibration.laplace_lambda(delta1, eps)}
                                for eps, delta1 in itertools.product(epsilons, args.delta1)])
        frame = frame.merge(laplace, on="epsilon", how="left")

    logger.info(f"Calibrated {len(rows)} (eps, delta, Delta_2) cells")
    _emit(frame)
    config = {"epsilons": list(epsilons), "deltas": list(deltas), "delta2": list(sensitivities),
              "delta1": list(args.delta1 or [])}
    _report(args, "calibrate", {"calibration": frame}, config, [], [], start_time)


def _cmd_analytic(args) -> None:
    start_time = time.time()
    function = ANALYTIC_FUNCTIONS[args.function]
    accepted = inspect.signature(function).parameters
    grid: Dict[str, List[Any]] = {}
    for item in args.grid:
        name, values = _parse_assignment(item)
        if name not in accepted:
            raise PreconditionError(f"{args.function} takes no parameter '{name}'; "
                                    f"accepted: {', '.join(accepted)}")
        annotation = accepted[name].annotation
        grid[name] = [_parse_value(name, value, annotation) for value in values.split(",") if value]

    names = list(grid)
    rows = []
    for values in itertools.product(*(grid[name] for name in names)):
        params = dict(zip(names, values))
        result = function(**params)
        if hasattr(result, "model_dump"):
            row = {**params, **result.model_dump(mode="json")}
        else:
            row = {**params, "value": result}
        rows.append(row)
    frame = pd.DataFrame(rows)
    _emit(frame)
    _report(args, "analytic", {args.function: frame}, {"function": args.function, "grid": grid}, [], [], start_time)


def _cmd_privatize(args) -> None:
    start_time = time.time()
    config = _run_config(args)
    seed = _seed(args, config)
    dataset = load_dataset(args.input, bound=args.bound)
    if args.normalize:
        dataset = max_normalize(dataset)

    engine = PrivatizationEngine(config, seed=seed, jobs=args.jobs)
    result = engine.privatize_dataset(dataset, progress=args.progress)
    if not result.success:
        raise DataValidationError(result.error_message or "privatization failed")

    out_dir = Path(args.out or settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    output = Path(args.output) if args.output else out_dir / "sketches.bin"
    payload = result.payload_matrix()
    if config.is_sign:
        write_sign_matrix(payload, output)
    else:
        write_matrix(payload, output, single_precision=args.single_precision)

    spec = engine.projection_spec(dataset.p)
    mechanism_config = config.model_dump(mode="json", exclude={"compare"})
    sidecar = write_sidecar(output, {
        "tool_version": __version__,
        "config": mechanism_config,
        "seed": seed,
        "spec": spec.model_dump(mode="json") if spec is not None else None,
        "is_sign": config.is_sign,
        "rows": [sketch.provenance.model_dump(mode="json") for sketch in result.sketches],
    })
    logger.info(f"Wrote {payload.shape[0]} sketches of length {payload.shape[1]} to {output}")

    generator = ReportGenerator(str(out_dir))
    generator.write_manifest("privatize", mechanism_config, [seed], inputs=[args.input],
                             outputs=[str(output), sidecar], start_time=start_time)
    first = result.sketches[0].provenance
    _emit(pd.DataFrame([{"mechanism": first.mechanism, "rows": payload.shape[0], "k": payload.shape[1],
                         "epsilon": first.epsilon, "delta": first.delta, "noise_scale": first.noise_scale,
                         "n_plus": first.n_plus, "output": str(output)}]))


def read_sketches(path: str) -> List[Sketch]:
    """Sketches from a sketch file and its provenance sidecar."""
    with open(path, "rb") as f:
        magic = f.read(8)
    is_sign = magic == SIGN_MAGIC
    payload = read_sign_matrix(path) if is_sign else read_matrix(path)
    rows = read_sidecar(path).get("rows", [])
    if len(rows) != payload.shape[0]:
        raise DataValidationError(f"{path}: sidecar describes {len(rows)} rows, file holds {payload.shape[0]}")
    return [Sketch(payload=values, is_sign=is_sign, provenance=SketchProvenance(**row))
            for values, row in zip(payload, rows)]


def _estimate_pair(estimator: str, x: Sketch, y: Sketch):
    if estimator == "auto":
        if not x.is_sign:
            estimator = "inner_product"
        elif x.provenance.mechanism == "sign:rr":
            estimator = "angle_rr"
        else:
            estimator = "angle"
    function = {"inner_product": inner_product, "cosine": cosine_normalized,
                "angle": angle_from_signs, "angle_rr": angle_from_rr_signs}[estimator]
    return function(x, y)


def _cmd_estimate(args) -> None:
    start_time = time.time()
    first, second = read_sketches(args.first), read_sketches(args.second)
    rows = []
    for (i, x), (j, y) in itertools.product(enumerate(first), enumerate(second)):
        report = _estimate_pair(args.estimator, x, y)
        rows.append({"first": x.provenance.row_id or i, "second": y.provenance.row_id or j,
                     "estimator": report.estimator_id, "estimate": report.estimate,
                     "theoretical_variance": report.theoretical_variance, "flags": ";".join(report.flags)})
    frame = pd.DataFrame(rows)
    _emit(frame)
    _report(args, "estimate", {"estimates": frame}, {"estimator": args.estimator}, [],
            [args.first, args.second], start_time)


def _bench_seeds(config: RunConfig) -> List[int]:
    root = RngStream(seed=config.seed)
    return [root.child_seed("bench", i) for i in range(config.n_seeds)]


def _retrieval_task(config: RunConfig, args) -> RetrievalTask:
    if config.database is None:
        task = retrieval_task(config.n_database, config.n_queries, config.p, config.norms,
                              rng=RngStream(seed=config.seed).derive("data"), gold_size=config.gold_size)
        return task.model_copy(update={"r_grid": config.r_grid})
    if config.queries is None:
        raise PreconditionError("a database file needs a matching queries file")
    database = load_dataset(config.database, bound=args.bound)
    queries = load_dataset(config.queries, bound=args.bound)
    return RetrievalTask(database=database, queries=queries, r_grid=config.r_grid,
                         gold_size=min(config.gold_size, database.n))


def _cmd_bench(args) -> None:
    start_time = time.time()
    config = _run_config(args)
    seeds = _bench_seeds(config)
    jobs = args.jobs or settings.jobs
    inputs = [path for path in (config.database, config.queries) if path]

    if args.task == "retrieval":
        task = _retrieval_task(config, args)
        frame = run_retrieval(task, config.mechanisms(), seeds, epsilons=config.epsilons, ks=config.ks,
                              jobs=jobs, progress=args.progress, per_seed=args.per_seed)
    else:
        data_stream = RngStream(seed=config.seed).derive("data")
        generator = data_stream.generator()
        n_classes = SYNTHETIC_DEFAULTS["n_classes"]
        centers = random_centers(n_classes, config.p, generator)
        norms = [float(norm) for norm in config.norms]
        train, train_labels = clustered_dataset(config.n_database, config.p, n_classes, norms, generator,
                                                centers=centers, prefix="train")
        test, test_labels = clustered_dataset(config.n_queries, config.p, n_classes, norms, generator,
                                              centers=centers, prefix="test")
        logger.info(f"k-NN task: {config.n_database} train and {config.n_queries} test rows, norms={norms}")
        frame = run_classification(train, train_labels, test, test_labels, config.mechanisms(), seeds,
                                   epsilons=config.epsilons, ks=config.ks, neighbors=config.knn_neighbors,
                                   jobs=jobs, progress=args.progress)

    _emit(frame)
    _report(args, f"bench {args.task}", {args.task: frame}, config.model_dump(mode="json"), seeds, inputs,
            start_time, always=True)


def _cmd_audit(args) -> None:
    start_time = time.time()
    seed = _seed(args)
    cases = default_audit_matrix(seed=seed, epsilon=args.eps, mutation=args.mutation)
    if args.mechanism:
        wanted = {name.replace("-", "_") for name in args.mechanism}
        cases = [case for case in cases if case.mechanism.name in wanted]
        if not cases:
            raise PreconditionError(f"no audit cases for {', '.join(sorted(wanted))}")
    if args.grid is not None:
        for case in cases:
            case.grid_points = args.grid

    reports = [audit_privacy(case) for case in cases]
    failed = [report for report in reports if not report.passed]
    if failed and args.mutation is None:
        logger.warning(f"{len(failed)} of {len(reports)} audit case(s) failed")
    logger.info(f"Audited {len(reports)} case(s): {len(reports) - len(failed)} passed")

    frame = ReportGenerator.audit_table(reports)
    _emit(frame)
    config = {"epsilon": args.eps, "mutation": args.mutation, "mechanisms": args.mechanism, "grid": args.grid}
    _report(args, "audit", {"audit": frame}, config, [seed], [], start_time)


def _cmd_oracle(args) -> None:
    start_time = time.time()
    seed = _seed(args)
    defaults = ORACLE_TARGETS[args.target]
    params: Dict[str, Any] = {}
    for item in args.param:
        name, value = _parse_assignment(item)
        if name not in defaults:
            raise PreconditionError(f"oracle target {args.target} takes no parameter '{name}'; "
                                    f"accepted: {', '.join(sorted(defaults))}")
        try:
            params[name] = type(defaults[name])(value)
        except ValueError as e:
            raise PreconditionError(f"parameter {name}: cannot parse '{value}'") from e
    result = monte_carlo_oracle(args.target, args.n, params=params, seed=seed,
                                batch_size=args.batch_size, progress=args.progress)
    frame = pd.DataFrame([{"target": result.target, "estimate": result.estimate,
                           "standard_error": result.standard_error, "n": result.n,
                           "params": json.dumps(result.params, sort_keys=True, default=str)}])
    _emit(frame)
    _report(args, "oracle", {"oracle": frame}, {"target": args.target, "n": args.n, "params": result.params},
            [seed], [], start_time)


COMMANDS = {
    "calibrate": _cmd_calibrate,
    "analytic": _cmd_analytic,
    "privatize": _cmd_privatize,
    "estimate": _cmd_estimate,
    "bench": _cmd_bench,
    "audit": _cmd_audit,
    "oracle": _cmd_oracle,
}


def _error(kind: str, message: str) -> None:
    sys.stderr.write(f"error: {kind}: {message}\n")


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        COMMANDS[args.command](args)
        return 0
    except CalibrationError as e:
        _error(type(e).__name__, str(e))
        return 2
    except ValidationError as e:
        _error("ValidationError", str(e))
        return 1
    except DPRPError as e:
        _error(type(e).__name__, str(e))
        return 1
    except ValueError as e:
        logger.error(f"{args.command} failed: {e}")
        _error("ValueError", str(e))
        return 1


def main() -> None:
    logging.basicConfig(level=getattr(logging, settings.log.upper(), logging.INFO),
                        format="%(asctime)s - %(levelname)s - %(message)s", stream=sys.stderr)
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
