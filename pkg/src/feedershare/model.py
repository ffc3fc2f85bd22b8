"""Domain types for the energy-community allocation simulator.

Everything downstream (coefficients, allocation, settlement, reporting)
works on the value objects defined here: participants with feeder
assignments, per-interval kWh series, net positions, tariffs, and the
per-interval allocation outcome record.  All objects are immutable after
construction and safe to share between workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from datetime import datetime, timedelta
from enum import Enum

import numpy as np

# Energy comparisons: relative tolerance with an absolute floor in kWh.
# Full-year sums of minute-level values need the relative headroom.
REL_TOL = 1e-9
ABS_TOL = 1e-12

ParticipantId = str
FeederId = str


def energy_close(a: float, b: float) -> bool:
    """True if two kWh (or EUR) quantities agree within tolerance."""
    return abs(a - b) <= max(ABS_TOL, REL_TOL * max(abs(a), abs(b)))


class Role(str, Enum):
    PROSUMER = "prosumer"
    CONSUMER = "consumer"


class Strategy(str, Enum):
    FEEDER_AWARE = "feeder-aware"
    FEEDER_AGNOSTIC = "feeder-agnostic"


class Scheme(str, Enum):
    EQUAL = "equal"
    PROPORTIONAL = "proportional"
    RANK = "rank"


class Method(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


# Accepted spellings in config files / CLI flags -> canonical enum value.
_SCHEME_ALIASES = {"rank-based": "rank"}


def parse_scheme(text: str) -> Scheme:
    return Scheme(_SCHEME_ALIASES.get(text, text))


@dataclass(frozen=True)
class Tariff:
    """Flat tariff: grid retail decomposition, feed-in price, and the
    community energy price with feeder-dependent network discounts.

    Defaults are the Swiss municipality prices used throughout the tests.
    """

    feed_in_price: float = 0.08
    grid_energy_price: float = 0.1137
    grid_network_price: float = 0.1092
    grid_other_price: float = 0.0333
    community_energy_price: float = 0.1137
    same_feeder_network_discount: float = 0.40
    other_feeder_network_discount: float = 0.20

    @property
    def grid_retail_price(self) -> float:
        """Full retail price per kWh bought from the grid."""
        return self.grid_energy_price + self.grid_network_price + self.grid_other_price

    @property
    def community_same_feeder_price(self) -> float:
        """Per-kWh buyer price for energy allocated from the same feeder."""
        return (
            self.community_energy_price
            + self.grid_network_price * (1.0 - self.same_feeder_network_discount)
            + self.grid_other_price
        )

    @property
    def community_other_feeder_price(self) -> float:
        """Per-kWh buyer price for energy allocated from another feeder."""
        return (
            self.community_energy_price
            + self.grid_network_price * (1.0 - self.other_feeder_network_discount)
            + self.grid_other_price
        )

    def violations(self) -> list[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value < 0:
                out.append(f"tariff.{f.name}: must be a finite non-negative number, got {value!r}")
        for name in ("same_feeder_network_discount", "other_feeder_network_discount"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                out.append(f"tariff.{name}: discount must lie in [0, 1], got {value!r}")
        return out


@dataclass(frozen=True)
class Participant:
    id: ParticipantId
    feeder: FeederId
    role: Role


@dataclass(frozen=True)
class CommunityConfig:
    """Roster, feeder map, strategy/scheme/method selection and tariff."""

    participants: tuple[Participant, ...]
    strategy: Strategy = Strategy.FEEDER_AWARE
    scheme: Scheme = Scheme.EQUAL
    method: Method = Method.DYNAMIC
    interval_minutes: int = 1
    tariff: Tariff = field(default_factory=Tariff)

    def participant_ids(self) -> list[ParticipantId]:
        """All participant ids in deterministic (lexicographic) order."""
        return sorted(p.id for p in self.participants)

    def feeder_ids(self) -> list[FeederId]:
        return sorted({p.feeder for p in self.participants})

    def by_id(self) -> dict[ParticipantId, Participant]:
        return {p.id: p for p in self.participants}

    def members_of(self, feeder: FeederId) -> list[ParticipantId]:
        return sorted(p.id for p in self.participants if p.feeder == feeder)


def validate_config(config: CommunityConfig) -> list[str]:
    """Check CommunityConfig invariants; returns violations (empty if valid).

    Violations are data, not exceptions: each entry names the offending
    participant, feeder or field.
    """
    violations: list[str] = []
    if not config.participants:
        violations.append("participants: no participants configured")

    seen: dict[ParticipantId, Participant] = {}
    for p in config.participants:
        if not p.id:
            violations.append("participant with empty id")
        if not p.feeder:
            violations.append(f"participant {p.id}: empty feeder id")
        if p.id in seen:
            other = seen[p.id]
            if other.feeder != p.feeder:
                violations.append(
                    f"participant {p.id}: assigned to two feeders ({other.feeder} and {p.feeder})"
                )
            else:
                violations.append(f"participant {p.id}: duplicated in roster")
        else:
            seen[p.id] = p

    if config.interval_minutes <= 0:
        violations.append(f"interval_minutes: must be positive, got {config.interval_minutes}")

    violations.extend(config.tariff.violations())
    return violations


@dataclass(frozen=True)
class IntervalSeries:
    """Uniformly spaced per-interval energy series in kWh.

    Values are non-negative and finite; the backing array is frozen so
    series can be shared between concurrent workers.
    """

    start: datetime
    step: timedelta
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("IntervalSeries values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("IntervalSeries values must be finite")
        if arr.size and arr.min() < 0:
            raise ValueError("IntervalSeries values must be non-negative")
        if self.step <= timedelta(0):
            raise ValueError("IntervalSeries step must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class ParticipantProfile:
    """Time-aligned generation and consumption series for one participant."""

    participant_id: ParticipantId
    generation: IntervalSeries
    consumption: IntervalSeries

    def __post_init__(self):
        g, c = self.generation, self.consumption
        if (g.start, g.step, len(g)) != (c.start, c.step, len(c)):
            raise ValueError(
                f"profile {self.participant_id}: generation and consumption series are misaligned"
            )

    def __len__(self) -> int:
        return len(self.generation)


@dataclass(frozen=True)
class NetPosition:
    """Per-interval surplus/demand split; at most one side is positive."""

    surplus: float
    demand: float


@dataclass(frozen=True)
class AllocationOutcome:
    """Per-participant, per-interval allocation record (all kWh).

    Identities: allocated_same + allocated_other + grid_import = demand,
    sold_community + grid_export = surplus, and per interval the community
    receives exactly what its prosumers sell.
    """

    allocated_same: float = 0.0
    allocated_other: float = 0.0
    grid_import: float = 0.0
    sold_community: float = 0.0
    grid_export: float = 0.0

    @property
    def allocated(self) -> float:
        return self.allocated_same + self.allocated_other


# ---------------------------------------------------------------------------
# Config file (JSON) parsing
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {"participants", "strategy", "scheme", "method", "interval_minutes", "tariff"}
_PARTICIPANT_KEYS = {"id", "feeder", "role"}
_TARIFF_KEYS = {f.name for f in fields(Tariff)}


class ConfigError(ValueError):
    """Raised for malformed config documents (unknown keys, bad values)."""


def config_from_json(text: str) -> CommunityConfig:
    """Parse a config JSON document; unknown keys are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")

    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "participants" not in doc:
        raise ConfigError("config is missing required key 'participants'")

    participants = []
    raw_participants = doc["participants"]
    if not isinstance(raw_participants, list):
        raise ConfigError("'participants' must be an array")
    for i, entry in enumerate(raw_participants):
        if not isinstance(entry, dict):
            raise ConfigError(f"participants[{i}]: must be an object")
        extra = set(entry) - _PARTICIPANT_KEYS
        if extra:
            raise ConfigError(f"participants[{i}]: unknown keys {sorted(extra)}")
        missing = _PARTICIPANT_KEYS - set(entry)
        if missing:
            raise ConfigError(f"participants[{i}]: missing keys {sorted(missing)}")
        try:
            role = Role(entry["role"])
        except ValueError:
            raise ConfigError(
                f"participants[{i}]: role must be 'prosumer' or 'consumer', got {entry['role']!r}"
            ) from None
        participants.append(Participant(str(entry["id"]), str(entry["feeder"]), role))

    def _enum(key, parser, default):
        if key not in doc:
            return default
        try:
            return parser(doc[key])
        except ValueError:
            raise ConfigError(f"invalid {key}: {doc[key]!r}") from None

    strategy = _enum("strategy", Strategy, Strategy.FEEDER_AWARE)
    scheme = _enum("scheme", parse_scheme, Scheme.EQUAL)
    method = _enum("method", Method, Method.DYNAMIC)

    interval_minutes = doc.get("interval_minutes", 1)
    if not isinstance(interval_minutes, int) or isinstance(interval_minutes, bool):
        raise ConfigError(f"interval_minutes must be an integer, got {interval_minutes!r}")

    tariff_doc = doc.get("tariff", {})
    if not isinstance(tariff_doc, dict):
        raise ConfigError("'tariff' must be an object")
    unknown = set(tariff_doc) - _TARIFF_KEYS
    if unknown:
        raise ConfigError(f"tariff: unknown keys {sorted(unknown)}")
    for key, value in tariff_doc.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"tariff.{key}: must be a number, got {value!r}")
    tariff = Tariff(**{k: float(v) for k, v in tariff_doc.items()})

    return CommunityConfig(
        participants=tuple(participants),
        strategy=strategy,
        scheme=scheme,
        method=method,
        interval_minutes=interval_minutes,
        tariff=tariff,
    )


def config_to_json(config: CommunityConfig, indent: int | None = 2) -> str:
    """Serialize a config back to its JSON document form."""
    doc = {
        "participants": [
            {"id": p.id, "feeder": p.feeder, "role": p.role.value} for p in config.participants
        ],
        "strategy": config.strategy.value,
        "scheme": config.scheme.value,
        "method": config.method.value,
        "interval_minutes": config.interval_minutes,
        "tariff": {f.name: getattr(config.tariff, f.name) for f in fields(Tariff)},
    }
    return json.dumps(doc, indent=indent)
