"""
One function per subcommand. Each reads its inputs, runs the model and
publishes its reports through the services' report store.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from io import StringIO
from pathlib import Path

from loguru import logger
import pandas as pd
from pydantic import BaseModel, ValidationError

from lakeflow.contracts.control_models import (
    AnnealConfig,
    ControllerKind,
    GradeReport,
    InputFile,
    MpcRunRecord,
    ObjectiveMode,
    RunConfig,
    RunManifest,
    Scenario,
    ScenarioDocument,
    StakeholderConstraints,
)
from lakeflow.contracts.errors import (
    MpcRunError,
    PreconditionError,
    ReportValidationError,
)
from lakeflow.contracts.models import ControlPlan, RiverId
from lakeflow.contracts.repos import ConfigRepository, ReportRepository
from lakeflow.contracts.reports import (
    FitReport,
    GradeSummaryReport,
    MpcReport,
    OptimizeReport,
    SensitivityDocument,
)
from lakeflow.infrastructure.csv_store import (
    history_frame,
    mpc_frame,
    plan_frame,
    read_history,
)
from lakeflow.infrastructure.json_file import JsonDocuments, default_topology
from lakeflow.logic.grading import grade_network
from lakeflow.logic.hydronet import (
    loop_gains,
    river_level_index_report,
    simulate,
)
from lakeflow.logic.indicators import fit_network, monthly_baseline
from lakeflow.logic.scenario import PreparedScenario, prepare_scenario
from lakeflow.logic.sensitivity import run_sensitivity
from lakeflow.logic.synthetic import (
    CONSTRAINTS_FILE,
    HISTORY_FILE,
    RUN_FILE,
    SCENARIO_FILE,
    TOPOLOGY_FILE,
    generate_synthetic,
)
from lakeflow.logic.wlpcm import mpc_run, optimize_plan
from lakeflow.services import Services
from lakeflow.util import file_sha256

TOOL_NAME = "lakeflow"

COEFFICIENTS_REPORT = "coefficients.json"
INDEX_TABLE = "water_level_index.csv"
PLAN_TABLE = "plan.csv"
GRADE_REPORT = "grade.json"
MPC_REPORT = "mpc_record.json"
MPC_TABLE = "mpc_record.csv"
GRADE_SUMMARY = "grade_summary.json"
SENSITIVITY_REPORT = "sensitivity.json"
MANIFEST = "manifest.json"


def tool_version() -> str:
    try:
        return version(TOOL_NAME)
    except PackageNotFoundError:
        return "0.0.0+local"


@dataclass(frozen=True)
class CommandArgs:
    config: Path | None
    data: Path | None
    out: Path
    seed: int | None = None


def _manifest(
    subcommand: str, args: CommandArgs, seed: int | None, inputs: Sequence[Path]
) -> RunManifest:
    return RunManifest(
        subcommand=subcommand,
        tool_version=tool_version(),
        seed=seed,
        config=str(args.config) if args.config is not None else None,
        out_dir=str(args.out),
        inputs=tuple(InputFile(path=str(p), sha256=file_sha256(p)) for p in inputs),
    )


def publish(reports: ReportRepository, name: str, model: BaseModel) -> None:
    """
    Write a report and read it back; a report that does not survive the trip
    is an error, not a result.
    """
    reports.write_model(name, model)
    try:
        reloaded = reports.read_model(name, type(model))
    except (KeyError, ValidationError) as e:
        raise ReportValidationError(f"{name} in {reports.location} did not validate: {e}") from e
    if reloaded != model:
        raise ReportValidationError(f"{name} in {reports.location} does not read back as written")


def publish_table(reports: ReportRepository, name: str, frame: pd.DataFrame) -> None:
    reports.write_table(name, frame)
    try:
        reloaded = pd.read_csv(StringIO(reports[name]))
    except (KeyError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ReportValidationError(f"{name} in {reports.location} did not parse: {e}") from e
    if list(reloaded.columns) != list(frame.columns) or len(reloaded) != len(frame):
        raise ReportValidationError(f"{name} in {reports.location} does not read back as written")


@dataclass(frozen=True)
class LoadedRun:
    config: RunConfig
    constraints: StakeholderConstraints
    prepared: PreparedScenario
    seed: int
    anneal: AnnealConfig
    inputs: tuple[Path, ...]

    @property
    def scenario(self) -> Scenario:
        return self.prepared.scenario


def load_run(args: CommandArgs, env: ConfigRepository) -> LoadedRun:
    """
    Read a run config and everything it points at. `--data` replaces the
    scenario's history file; `--seed` replaces the configured seed.
    """
    if args.config is None:
        raise PreconditionError("This command needs --config <run config>")
    docs = JsonDocuments(args.config.parent)
    config = docs.load(args.config.name, RunConfig)
    constraints = docs.load(config.constraints, StakeholderConstraints)
    document = docs.load(config.scenario, ScenarioDocument)

    scenario_docs = JsonDocuments(docs.path(config.scenario).parent)
    history_path = args.data if args.data is not None else scenario_docs.path(document.history)
    history = read_history(history_path)
    topology = scenario_docs.topology(document.topology)
    inputs = [
        args.config,
        docs.path(config.constraints),
        docs.path(config.scenario),
        history_path,
    ]
    if document.topology is not None:
        inputs.append(scenario_docs.path(document.topology))
    coefficients = None
    if document.coefficients is not None:
        coefficients = scenario_docs.load(document.coefficients, FitReport).coefficients
        inputs.append(scenario_docs.path(document.coefficients))

    seed = args.seed if args.seed is not None else config.seed
    anneal = config.anneal.model_copy(
        update={
            "seed": seed,
            "workers": env.anneal_workers(config.anneal.workers),
        }
    )
    return LoadedRun(
        config=config,
        constraints=constraints,
        prepared=prepare_scenario(document, history, topology, coefficients),
        seed=seed,
        anneal=anneal,
        inputs=tuple(inputs),
    )


def cmd_fit(services: Services, args: CommandArgs) -> FitReport:
    """
    Fit the rating relations of the record in --data, on the topology in
    --config (or the packaged one).
    """
    if args.data is None:
        raise PreconditionError("fit needs --data <history.csv>")
    inputs = [args.data]
    if args.config is not None:
        topology = JsonDocuments(args.config.parent).topology(args.config.name)
        inputs.append(args.config)
    else:
        topology = default_topology()

    history = read_history(args.data)
    coefficients = fit_network(history, topology)
    report = FitReport(
        manifest=_manifest("fit", args, None, inputs),
        coefficients=coefficients,
        loop_gains=loop_gains(topology, coefficients),
    )
    publish(services.reports, COEFFICIENTS_REPORT, report)

    baselines: dict[RiverId, tuple[float, ...]] = {}
    for river, series in history.flows.items():
        baseline = monthly_baseline(series)
        if min(baseline) > 0:
            baselines[river] = baseline
        else:
            logger.info("River '{}' has a dry calendar month; no water-level index", river)
    publish_table(
        services.reports, INDEX_TABLE, river_level_index_report(history.flows, baselines)
    )
    return report


def _grade_plan(
    run: LoadedRun, plan: ControlPlan, mode: ObjectiveMode
) -> GradeReport:
    scenario = run.scenario
    trajectory = simulate(
        scenario.initial,
        plan,
        scenario.indicators,
        run.prepared.network,
        start=scenario.start,
        exogenous=scenario.exogenous,
    )
    return grade_network(trajectory, run.constraints, scenario.baselines, mode)


def cmd_optimize(services: Services, args: CommandArgs) -> OptimizeReport:
    """
    Anneal the releases of the whole scenario year with its indicators known.
    """
    run = load_run(args, services.config)
    mode = run.config.mpc.objective
    recent = run.prepared.recent_for(run.constraints)
    plan, result = optimize_plan(run.scenario, run.constraints, recent, run.anneal, mode)
    report = OptimizeReport(
        manifest=_manifest("optimize", args, run.seed, run.inputs),
        scenario=run.scenario.name,
        plan=plan,
        optimized=_grade_plan(run, plan, mode),
        passthrough=_grade_plan(run, run.scenario.plan, mode),
        evaluations=result.trace.evaluations,
    )
    logger.info(
        "Optimized total {:.4f} against passthrough {:.4f}",
        report.optimized.total,
        report.passthrough.total,
    )
    publish_table(services.reports, PLAN_TABLE, plan_frame(plan, run.scenario.start))
    publish(services.reports, GRADE_REPORT, report)
    return report


def _run_controller(run: LoadedRun, kind: ControllerKind) -> MpcRunRecord:
    return mpc_run(
        run.scenario.initial,
        run.scenario.start,
        run.prepared.truth(),
        run.prepared.mpc_setup(run.constraints),
        run.config.mpc,
        run.anneal,
        run.scenario.horizon,
        controller=kind,
    )


def cmd_mpc(services: Services, args: CommandArgs) -> MpcReport:
    """
    Closed-loop run over the scenario year, with the passthrough controller
    alongside unless the run config turns it off.
    """
    run = load_run(args, services.config)
    manifest = _manifest("mpc", args, run.seed, run.inputs)
    try:
        wlpcm = _run_controller(run, ControllerKind.WLPCM)
    except MpcRunError as e:
        publish(
            services.reports,
            MPC_REPORT,
            MpcReport(manifest=manifest, scenario=run.scenario.name, wlpcm=e.partial),
        )
        raise
    passthrough = (
        _run_controller(run, ControllerKind.PASSTHROUGH)
        if run.config.compare_passthrough
        else None
    )

    report = MpcReport(
        manifest=manifest, scenario=run.scenario.name, wlpcm=wlpcm, passthrough=passthrough
    )
    publish(services.reports, MPC_REPORT, report)
    records = [wlpcm] if passthrough is None else [wlpcm, passthrough]
    publish_table(services.reports, MPC_TABLE, mpc_frame(records))

    if wlpcm.summary is None or (passthrough is not None and passthrough.summary is None):
        raise ReportValidationError("A controller finished without a single month to summarize")
    summary = GradeSummaryReport(
        manifest=manifest,
        scenario=run.scenario.name,
        wlpcm=wlpcm.summary,
        passthrough=passthrough.summary if passthrough is not None else None,
    )
    publish(services.reports, GRADE_SUMMARY, summary)
    if wlpcm.halted:
        logger.warning("Run halted early: {}", wlpcm.halt_reason)
    return report


def cmd_sensitivity(services: Services, args: CommandArgs) -> SensitivityDocument:
    run = load_run(args, services.config)
    report = run_sensitivity(
        run.scenario, run.constraints, run.config.sensitivity, run.config.dispersion
    )
    document = SensitivityDocument(
        manifest=_manifest("sensitivity", args, run.seed, run.inputs),
        scenario=run.scenario.name,
        report=report,
    )
    publish(services.reports, SENSITIVITY_REPORT, document)
    return document


def cmd_generate_synthetic(services: Services, args: CommandArgs) -> RunManifest:
    """
    Write a seeded record, topology, planning year, constraints and run
    config into --out, ready for the other subcommands.
    """
    seed = args.seed if args.seed is not None else 0
    inputs: list[Path] = []
    if args.config is not None:
        base = JsonDocuments(args.config.parent).topology(args.config.name)
        inputs.append(args.config)
    else:
        base = default_topology()

    bundle = generate_synthetic(seed, base)
    reports = services.reports
    publish_table(reports, HISTORY_FILE, history_frame(bundle.history))
    publish(reports, TOPOLOGY_FILE, bundle.topology)
    publish(reports, SCENARIO_FILE, bundle.scenario)
    publish(reports, CONSTRAINTS_FILE, bundle.constraints)
    publish(reports, RUN_FILE, bundle.run_config)

    manifest = _manifest("generate-synthetic", args, seed, inputs)
    publish(reports, MANIFEST, manifest)
    return manifest
