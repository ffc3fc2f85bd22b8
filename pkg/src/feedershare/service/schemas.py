"""Pydantic request/response models for the HTTP service.

Requests mirror the config-file schema (unknown keys rejected) and add a
data source: inline CSV text, a server-local CSV path, or a synthetic
scenario spec.  Responses carry full-precision numbers; formatting to
table precision is a client concern.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .. import __version__
from ..ingestion import SyntheticSpec, generate_synthetic, load_timeseries
from ..model import (
    CommunityConfig,
    Method,
    Participant,
    Role,
    Scheme,
    Strategy,
    Tariff,
    parse_scheme,
)
from ..reporting import (
    METHOD_ORDER,
    SCHEME_ORDER,
    STRATEGY_ORDER,
    CheckResult,
    CombinationReport,
)


class TariffModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    feed_in_price: float = Field(0.08, ge=0)
    grid_energy_price: float = Field(0.1137, ge=0)
    grid_network_price: float = Field(0.1092, ge=0)
    grid_other_price: float = Field(0.0333, ge=0)
    community_energy_price: float = Field(0.1137, ge=0)
    same_feeder_network_discount: float = Field(0.40, ge=0, le=1)
    other_feeder_network_discount: float = Field(0.20, ge=0, le=1)

    def to_tariff(self) -> Tariff:
        return Tariff(**self.model_dump())


class ParticipantModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    feeder: str
    role: Literal["prosumer", "consumer"]


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    participants: list[ParticipantModel]
    strategy: Literal["feeder-aware", "feeder-agnostic"] = "feeder-aware"
    scheme: Literal["equal", "proportional", "rank", "rank-based"] = "equal"
    method: Literal["static", "dynamic"] = "dynamic"
    interval_minutes: int = Field(1, ge=1)
    tariff: TariffModel = Field(default_factory=TariffModel)

    def to_config(self) -> CommunityConfig:
        return CommunityConfig(
            participants=tuple(
                Participant(p.id, p.feeder, Role(p.role)) for p in self.participants
            ),
            strategy=Strategy(self.strategy),
            scheme=parse_scheme(self.scheme),
            method=Method(self.method),
            interval_minutes=self.interval_minutes,
            tariff=self.tariff.to_tariff(),
        )

    @classmethod
    def from_config(cls, config: CommunityConfig) -> "ConfigModel":
        return cls(
            participants=[
                ParticipantModel(id=p.id, feeder=p.feeder, role=p.role.value)
                for p in config.participants
            ],
            strategy=config.strategy.value,
            scheme=config.scheme.value,
            method=config.method.value,
            interval_minutes=config.interval_minutes,
            tariff=TariffModel(
                feed_in_price=config.tariff.feed_in_price,
                grid_energy_price=config.tariff.grid_energy_price,
                grid_network_price=config.tariff.grid_network_price,
                grid_other_price=config.tariff.grid_other_price,
                community_energy_price=config.tariff.community_energy_price,
                same_feeder_network_discount=config.tariff.same_feeder_network_discount,
                other_feeder_network_discount=config.tariff.other_feeder_network_discount,
            ),
        )


class SyntheticSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    participants: int = Field(15, ge=1)
    feeders: int = Field(4, ge=1)
    days: int = Field(30, ge=1)
    seed: int = 42
    interval_minutes: int = Field(1, ge=1)
    consumers_only: bool = False
    tariff: Optional[TariffModel] = None

    def to_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            participants=self.participants,
            feeders=self.feeders,
            days=self.days,
            seed=self.seed,
            interval_minutes=self.interval_minutes,
            consumers_only=self.consumers_only,
        )


class DataSource(BaseModel):
    """Exactly one of: inline CSV, server-local CSV path, synthetic spec."""

    model_config = ConfigDict(extra="forbid")

    csv_text: Optional[str] = None
    csv_path: Optional[str] = None
    synthetic: Optional[SyntheticSpecModel] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [f for f in ("csv_text", "csv_path", "synthetic") if getattr(self, f) is not None]
        if len(given) != 1:
            raise ValueError(f"data source needs exactly one of csv_text/csv_path/synthetic, got {given}")
        return self


class SelectionMixin(BaseModel):
    strategies: Optional[list[Literal["feeder-aware", "feeder-agnostic"]]] = None
    schemes: Optional[list[Literal["equal", "proportional", "rank", "rank-based"]]] = None
    methods: Optional[list[Literal["static", "dynamic"]]] = None

    def combos(self, config: CommunityConfig):
        strategies = (
            tuple(s for s in STRATEGY_ORDER if s.value in set(self.strategies))
            if self.strategies
            else (config.strategy,)
        )
        schemes = (
            tuple(s for s in SCHEME_ORDER if s in {parse_scheme(x) for x in self.schemes})
            if self.schemes
            else (config.scheme,)
        )
        methods = (
            tuple(m for m in METHOD_ORDER if m.value in set(self.methods))
            if self.methods
            else (config.method,)
        )
        return [(st, sc, me) for st in strategies for sc in schemes for me in methods]


class SimulateRequest(SelectionMixin):
    model_config = ConfigDict(extra="forbid")

    config: Optional[ConfigModel] = None
    data: DataSource

    @model_validator(mode="after")
    def _config_matches_source(self):
        if self.data.synthetic is None and self.config is None:
            raise ValueError("config is required when data is loaded from CSV")
        if self.data.synthetic is not None and self.config is not None:
            raise ValueError(
                "config must be omitted for synthetic data (set tariff inside the synthetic spec)"
            )
        return self

    def resolve(self):
        """Materialize (profiles, base config) from the data source."""
        if self.data.synthetic is not None:
            spec = self.data.synthetic
            tariff = spec.tariff.to_tariff() if spec.tariff is not None else None
            return generate_synthetic(spec.to_spec(), tariff=tariff)
        config = self.config.to_config()
        if self.data.csv_text is not None:
            import io

            profiles = load_timeseries(io.StringIO(self.data.csv_text), config)
        else:
            profiles = load_timeseries(self.data.csv_path, config)
        return profiles, config


class OutcomePatchModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    interval: int = Field(ge=0)
    participant: str
    field: Literal[
        "allocated_same", "allocated_other", "grid_import", "sold_community", "grid_export"
    ]
    delta_kwh: float


class VerifyRequest(SimulateRequest):
    model_config = ConfigDict(extra="forbid")

    corrupt: Optional[OutcomePatchModel] = None


class ReportRowModel(BaseModel):
    imported_kwh: float
    shared_kwh: float
    exported_kwh: float
    revenue_increase_eur: float
    cost_reduction_eur: float
    total_benefit_eur: float


class CombinationModel(BaseModel):
    strategy: str
    scheme: str
    method: str
    community: ReportRowModel
    feeders: dict[str, ReportRowModel]
    participants: dict[str, ReportRowModel]
    community_cost_eur: float
    community_cost_other_discounted_eur: float
    timing_seconds: float

    @classmethod
    def from_report(cls, report: CombinationReport) -> "CombinationModel":
        def row(r):
            return ReportRowModel(
                imported_kwh=r.imported_kwh,
                shared_kwh=r.shared_kwh,
                exported_kwh=r.exported_kwh,
                revenue_increase_eur=r.revenue_increase_eur,
                cost_reduction_eur=r.cost_reduction_eur,
                total_benefit_eur=r.total_benefit_eur,
            )

        return cls(
            strategy=report.strategy.value,
            scheme=report.scheme.value,
            method=report.method.value,
            community=row(report.community),
            feeders={fid: row(r) for fid, r in sorted(report.feeders.items())},
            participants={pid: row(r) for pid, r in sorted(report.participants.items())},
            community_cost_eur=report.community_cost_eur,
            community_cost_other_discounted_eur=report.community_cost_other_discounted_eur,
            timing_seconds=report.elapsed_seconds,
        )


class SimulateResponse(BaseModel):
    version: str = __version__
    intervals: int
    config: ConfigModel
    combinations: list[CombinationModel]


class CheckModel(BaseModel):
    name: str
    passed: bool
    detail: str

    @classmethod
    def from_check(cls, check: CheckResult) -> "CheckModel":
        return cls(name=check.name, passed=check.passed, detail=check.detail)


class VerifyResponse(BaseModel):
    passed: bool
    checks: list[CheckModel]


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel


class ValidateResponse(BaseModel):
    valid: bool
    violations: list[str]


class SyntheticResponse(BaseModel):
    config: ConfigModel
    csv_text: str


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str = __version__
