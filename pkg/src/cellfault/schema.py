"""Domain vocabulary: raw counters, derived KPIs, the per-cell KPI record,
diagnosis classes and cause groups.

Attribute names have three spellings: a canonical snake_case name used in
files, a human label used in reports, and a short code used in rule files.
:func:`canonical_name` resolves any of them.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, fields, replace

from .exceptions import DerivationError, MappingError, ValidationError


@dataclass(frozen=True)
class AttributeInfo:
    name: str
    label: str
    code: str
    aliases: tuple[str, ...] = ()


# Order of the nine-attribute schema (diagnosis last).
CORE_ATTRIBUTES: tuple[AttributeInfo, ...] = (
    AttributeInfo("tch_call_drop_rate", "Traffic Channel Call Drop Rate", "TCHCDR",
                  ("TCHCallDropRate", "TCHCallDropR", "TCH Call Drop Rate")),
    AttributeInfo("handover_success_seizure", "Handover Success Seizure", "HSS"),
    AttributeInfo("sdcch_drops", "SDCCH Drops", "SDCCHD"),
    AttributeInfo("rab", "Radio Access Bearer", "RAB", ("Radio Access Barrier",)),
    AttributeInfo("handover_attempts", "Handover Attempts", "HA"),
    AttributeInfo("handover_failures_rate", "Handover Failures", "HF",
                  ("Handovers Failures Rate", "HandFailures", "Handover Failures Rate")),
    AttributeInfo("handover_success_rate", "Handover Success Rate", "HSR",
                  ("HandoverSuccessRate", "HandoverSussRate")),
    AttributeInfo("tch_drop_sudden_lost_con", "TCH Dropped Suddenly Lost Connection", "TCHSDLC",
                  ("TCHDropSuddenLostCon",)),
)

# Clustering attributes that the nine-attribute schema does not carry.
EXTENDED_ATTRIBUTES: tuple[AttributeInfo, ...] = (
    AttributeInfo("tch_failures", "TCH Failures", "TCHF"),
    AttributeInfo("tch_attempts", "TCH Attempts", "TCHA"),
    AttributeInfo("tch_congestion_rate", "TCH Congestion Rate", "TCHCR"),
)

COUNTER_ATTRIBUTES: tuple[AttributeInfo, ...] = (
    AttributeInfo("call_attempts", "Call Attempts", "CA"),
    AttributeInfo("call_failures", "Call Failures", "CF"),
    AttributeInfo("call_successes", "Call Successes", "CS"),
    AttributeInfo("traffic_in", "Incoming Traffic", "TE"),
    AttributeInfo("traffic_out", "Outgoing Traffic", "OE"),
    AttributeInfo("sdcch_attempts", "SDCCH Seizure Attempts", "SDCCHSA"),
    AttributeInfo("sdcch_successes", "Successful SDCCH Seizures", "SSDCCH"),
)

CORE_NAMES = tuple(a.name for a in CORE_ATTRIBUTES)
EXTENDED_NAMES = tuple(a.name for a in EXTENDED_ATTRIBUTES)
COUNTER_NAMES = tuple(a.name for a in COUNTER_ATTRIBUTES)
NUMERIC_NAMES = CORE_NAMES + EXTENDED_NAMES + COUNTER_NAMES

# Table layout order of the k-means profile.
CLUSTER_FEATURES = (
    "tch_failures",
    "tch_attempts",
    "rab",
    "handover_failures_rate",
    "tch_drop_sudden_lost_con",
    "tch_congestion_rate",
    "handover_success_rate",
)

# Value ranges that cover every rule threshold and every reported cluster
# mean; used for uniform synthetic data and reachability bounds.
DEFAULT_RANGES = {
    "tch_call_drop_rate": (0.0, 10.0),
    "handover_success_seizure": (0.0, 100.0),
    "sdcch_drops": (0.0, 100.0),
    "rab": (0.0, 130.0),
    "handover_attempts": (0.0, 100.0),
    "handover_failures_rate": (0.0, 70.0),
    "handover_success_rate": (0.0, 120.0),
    "tch_drop_sudden_lost_con": (0.0, 140.0),
    "tch_failures": (0.0, 60.0),
    "tch_attempts": (0.0, 8000.0),
    "tch_congestion_rate": (0.0, 100.0),
}

CELL_ID = "cell_id"
DIAGNOSIS = "diagnosis"

ATTRIBUTES = {a.name: a for a in CORE_ATTRIBUTES + EXTENDED_ATTRIBUTES + COUNTER_ATTRIBUTES}


def _norm(text: str) -> str:
    return re.sub(r"[\s_\-]+", "", text).lower()


_ALIASES: dict[str, str] = {}
for _info in ATTRIBUTES.values():
    for _spelling in (_info.name, _info.label, _info.code, *_info.aliases):
        _ALIASES[_norm(_spelling)] = _info.name
_ALIASES[_norm(CELL_ID)] = CELL_ID
_ALIASES[_norm("cell")] = CELL_ID
_ALIASES[_norm(DIAGNOSIS)] = DIAGNOSIS


def canonical_name(text: str) -> str | None:
    """Resolve any known spelling of an attribute, ignoring case, spaces and
    underscores. Returns None for unknown names."""
    return _ALIASES.get(_norm(text))


class DiagnosisClass(str, enum.Enum):
    CLASS_A = "Class A"
    CLASS_B = "Class B"
    CLASS_C = "Class C"
    OPTIMISED = "Optimised"
    UNCLASSIFIED = "Unclassified"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, text: str) -> DiagnosisClass:
        key = _norm(text.strip().strip("'\""))
        for member in cls:
            if key in (_norm(member.value), _norm(member.name)):
                return member
        if key in ("classd", "d", "optimized"):
            return cls.OPTIMISED
        if key in ("a", "b", "c"):
            return cls("Class " + key.upper())
        raise ValidationError(f"unknown diagnosis class {text!r}")


#: Reporting order for confusion matrices and distributions.
CLASS_ORDER = (
    DiagnosisClass.CLASS_A,
    DiagnosisClass.CLASS_B,
    DiagnosisClass.CLASS_C,
    DiagnosisClass.OPTIMISED,
)
CLASS_LABELS = tuple(c.value for c in CLASS_ORDER)


class CauseGroup(enum.Enum):
    GCA = "call setup success and dropped call rate faults"
    GCB = "traffic issues"
    GCC = "faults classified from the symptom pattern"
    GCD = "optimised, no fault cause"

    @property
    def description(self) -> str:
        return self.value


_CLASS_GROUP = {
    DiagnosisClass.CLASS_A: CauseGroup.GCA,
    DiagnosisClass.CLASS_B: CauseGroup.GCB,
    DiagnosisClass.CLASS_C: CauseGroup.GCC,
    DiagnosisClass.OPTIMISED: CauseGroup.GCD,
}


def class_to_group(d: DiagnosisClass | str) -> CauseGroup:
    if not isinstance(d, DiagnosisClass):
        d = DiagnosisClass.parse(d)
    try:
        return _CLASS_GROUP[d]
    except KeyError:
        raise MappingError(f"{d} has no cause group") from None


def _check_value(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value}")
    if value < 0:
        raise ValidationError(f"{name} must be non-negative, got {value}")
    return value


@dataclass(frozen=True)
class CounterRecord:
    """Raw per-cell counters for one measurement period."""

    cell_id: str
    CA: float
    CF: float
    CS: float
    TE: float
    OE: float
    SDCCHSA: float
    SSDCCH: float

    def __post_init__(self):
        for f in fields(self)[1:]:
            object.__setattr__(self, f.name, _check_value(f.name, getattr(self, f.name)))
        if self.CS > self.CA:
            raise ValidationError(f"CS ({self.CS}) exceeds CA ({self.CA})")
        if self.SSDCCH > self.SDCCHSA:
            raise ValidationError(f"SSDCCH ({self.SSDCCH}) exceeds SDCCHSA ({self.SDCCHSA})")


@dataclass(frozen=True)
class DerivedKpis:
    CSR: float
    DCR: float
    TR: float
    SDCCHSR: float


def derive_kpis(c: CounterRecord) -> DerivedKpis:
    """Call success rate, dropped call rate, traffic and SDCCH success rate.

    Rates are percentages. Dropped calls are counted against successful
    (established) calls, not against attempts.
    """
    for name in ("CA", "CS", "SDCCHSA"):
        if getattr(c, name) == 0:
            raise DerivationError(name)
    return DerivedKpis(
        CSR=100.0 * c.CS / c.CA,
        DCR=100.0 * c.CF / c.CS,
        TR=c.TE + c.OE,
        SDCCHSR=100.0 * c.SSDCCH / c.SDCCHSA,
    )


@dataclass(frozen=True)
class KpiRecord:
    """One cell: the eight numeric schema attributes, an optional diagnosis,
    and optional extra clustering attributes and raw counters."""

    tch_call_drop_rate: float
    handover_success_seizure: float
    sdcch_drops: float
    rab: float
    handover_attempts: float
    handover_failures_rate: float
    handover_success_rate: float
    tch_drop_sudden_lost_con: float
    cell_id: str = ""
    diagnosis: DiagnosisClass | None = None
    tch_failures: float | None = None
    tch_attempts: float | None = None
    tch_congestion_rate: float | None = None
    counters: CounterRecord | None = field(default=None, compare=True)

    def __post_init__(self):
        for name in CORE_NAMES:
            object.__setattr__(self, name, _check_value(name, getattr(self, name)))
        for name in EXTENDED_NAMES:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _check_value(name, value))
        if self.diagnosis is not None and not isinstance(self.diagnosis, DiagnosisClass):
            object.__setattr__(self, "diagnosis", DiagnosisClass.parse(self.diagnosis))

    def get(self, name: str) -> float | None:
        """Value of a numeric attribute by any spelling; None when absent."""
        key = canonical_name(name) or name
        if key in CORE_NAMES or key in EXTENDED_NAMES:
            return getattr(self, key)
        if key in COUNTER_NAMES:
            if self.counters is None:
                return None
            return getattr(self.counters, ATTRIBUTES[key].code)
        return None

    def features(self, names=CORE_NAMES) -> list[float | None]:
        return [self.get(n) for n in names]

    def with_diagnosis(self, diagnosis: DiagnosisClass | None) -> KpiRecord:
        return replace(self, diagnosis=diagnosis)

    @classmethod
    def from_mapping(cls, values: dict, cell_id: str = "") -> KpiRecord:
        """Build from a mapping keyed by any attribute spelling. Raw counters
        are attached only when all seven are present."""
        resolved = {}
        for key, value in values.items():
            name = canonical_name(key)
            if name is not None and value is not None:
                resolved[name] = value
        missing = [n for n in CORE_NAMES if n not in resolved]
        if missing:
            raise ValidationError(f"record lacks attribute(s): {', '.join(missing)}")
        kwargs = {n: resolved[n] for n in CORE_NAMES}
        kwargs.update({n: resolved[n] for n in EXTENDED_NAMES if n in resolved})
        if all(n in resolved for n in COUNTER_NAMES):
            kwargs["counters"] = CounterRecord(
                str(resolved.get(CELL_ID, cell_id)),
                *(resolved[n] for n in COUNTER_NAMES),
            )
        diagnosis = resolved.get(DIAGNOSIS)
        if diagnosis is not None and diagnosis != "":
            kwargs["diagnosis"] = DiagnosisClass.parse(str(diagnosis))
        return cls(cell_id=str(resolved.get(CELL_ID, cell_id)), **kwargs)
