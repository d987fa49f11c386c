from lakeflow.contracts.control_models import (
    GradeReport,
    GradeSummary,
    MpcRunRecord,
    RunManifest,
    SensitivityReport,
)
from lakeflow.contracts.models import (
    ControlPlan,
    FlowCoefficients,
    FrozenModel,
    RiverId,
)


class FitReport(FrozenModel):
    manifest: RunManifest
    coefficients: FlowCoefficients
    loop_gains: dict[RiverId, float]


class OptimizeReport(FrozenModel):
    manifest: RunManifest
    scenario: str
    plan: ControlPlan
    optimized: GradeReport
    passthrough: GradeReport
    evaluations: int


class MpcReport(FrozenModel):
    manifest: RunManifest
    scenario: str
    wlpcm: MpcRunRecord
    passthrough: MpcRunRecord | None = None


class GradeSummaryReport(FrozenModel):
    manifest: RunManifest
    scenario: str
    wlpcm: GradeSummary
    passthrough: GradeSummary | None = None


class SensitivityDocument(FrozenModel):
    manifest: RunManifest
    scenario: str
    report: SensitivityReport
