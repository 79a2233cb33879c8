"""Ordered first-match threshold rules over KPI attributes.

A rule file holds one rule per line::

    # comment
    VERSION canonical-1
    RULE R1: IF HSR <= 71.23 AND TCHCDR <= 7.42 AND HF < 22.17 THEN Class A

Attribute names may be given in any spelling known to
:func:`cellfault.schema.canonical_name`; files are written with the short codes.
"""

from __future__ import annotations

import math
import operator
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ParseError, RuleError, ValidationError
from .schema import (
    ATTRIBUTES,
    CLASS_LABELS,
    CORE_NAMES,
    DEFAULT_RANGES,
    NUMERIC_NAMES,
    DiagnosisClass,
    KpiRecord,
    canonical_name,
)

_OPS = {
    "<=": operator.le,
    "<": operator.lt,
    ">": operator.gt,
    ">=": operator.ge,
}
_OP_ALIASES = {"≤": "<=", "≥": ">=", "=<": "<=", "=>": ">="}


@dataclass(frozen=True)
class RuleAtom:
    attribute: str
    comparator: str
    threshold: float

    def __post_init__(self):
        name = canonical_name(self.attribute)
        if name not in NUMERIC_NAMES:
            raise ValidationError(f"unknown KPI attribute {self.attribute!r}")
        op = _OP_ALIASES.get(self.comparator, self.comparator)
        if op not in _OPS:
            raise ValidationError(f"unknown comparator {self.comparator!r}")
        threshold = float(self.threshold)
        if not math.isfinite(threshold):
            raise ValidationError("threshold must be finite")
        object.__setattr__(self, "attribute", name)
        object.__setattr__(self, "comparator", op)
        object.__setattr__(self, "threshold", threshold)

    def test(self, value: float) -> bool:
        return _OPS[self.comparator](value, self.threshold)

    def __str__(self):
        return f"{ATTRIBUTES[self.attribute].code} {self.comparator} {_num(self.threshold)}"


@dataclass(frozen=True)
class DiagnosticRule:
    rule_id: str
    guard: tuple[RuleAtom, ...]
    outcome: DiagnosisClass

    def __post_init__(self):
        object.__setattr__(self, "guard", tuple(self.guard))
        if not self.guard:
            raise ValidationError(f"rule {self.rule_id} has an empty guard")
        outcome = self.outcome
        if not isinstance(outcome, DiagnosisClass):
            outcome = DiagnosisClass.parse(str(outcome))
        if outcome is DiagnosisClass.UNCLASSIFIED:
            raise ValidationError(f"rule {self.rule_id} cannot conclude Unclassified")
        object.__setattr__(self, "outcome", outcome)

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(a.attribute for a in self.guard))

    def matches(self, values: Mapping[str, float]) -> bool:
        for atom in self.guard:
            value = values.get(atom.attribute)
            if value is None:
                raise RuleError(self.rule_id, atom.attribute)
            if not atom.test(value):
                return False
        return True

    def __str__(self):
        guard = " AND ".join(str(a) for a in self.guard)
        return f"RULE {self.rule_id}: IF {guard} THEN {self.outcome.value}"


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[DiagnosticRule, ...]
    version: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ValidationError("a rule set needs at least one rule")
        ids = [r.rule_id for r in self.rules]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate rule id(s): {', '.join(dupes)}")

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __getitem__(self, rule_id: str) -> DiagnosticRule:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise KeyError(rule_id)

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(a for r in self.rules for a in r.attributes))

    def first_match(self, X: np.ndarray, feature_names: Sequence[str]) -> np.ndarray:
        """Index of the first matching rule for every row of ``X`` (-1 if none)."""
        X = np.asarray(X, dtype=float)
        columns = {canonical_name(n) or n: i for i, n in enumerate(feature_names)}
        result = np.full(len(X), -1, dtype=int)
        open_rows = np.ones(len(X), dtype=bool)
        for k, rule in enumerate(self.rules):
            mask = open_rows.copy()
            for atom in rule.guard:
                if atom.attribute not in columns:
                    raise RuleError(rule.rule_id, atom.attribute)
                mask &= _OPS[atom.comparator](X[:, columns[atom.attribute]], atom.threshold)
            result[mask] = k
            open_rows &= ~mask
        return result

    def classify_matrix(self, X: np.ndarray, feature_names: Sequence[str]) -> np.ndarray:
        outcomes = np.array([r.outcome.value for r in self.rules] + [DiagnosisClass.UNCLASSIFIED.value],
                            dtype=object)
        return outcomes[self.first_match(X, feature_names)]


def _values_of(r) -> Mapping[str, float]:
    if isinstance(r, KpiRecord):
        return {n: r.get(n) for n in NUMERIC_NAMES}
    return {canonical_name(k) or k: v for k, v in r.items()}


def matched_rule(r: KpiRecord | Mapping[str, float], rs: RuleSet) -> DiagnosticRule | None:
    values = _values_of(r)
    for rule in rs.rules:
        if rule.matches(values):
            return rule
    return None


def classify(r: KpiRecord | Mapping[str, float], rs: RuleSet) -> DiagnosisClass:
    """Outcome of the first rule whose whole guard holds; Unclassified when
    no rule matches."""
    rule = matched_rule(r, rs)
    return DiagnosisClass.UNCLASSIFIED if rule is None else rule.outcome


def _rule(rule_id, atoms, outcome):
    return DiagnosticRule(rule_id, tuple(RuleAtom(*a) for a in atoms), outcome)


def default_ruleset() -> RuleSet:
    """The thirteen diagnostic branches with explicit guards, in the order
    they are evaluated. Complementary comparisons are closed as <= / > so
    each branch pair partitions its attribute."""
    A, B, C, O = (DiagnosisClass.CLASS_A, DiagnosisClass.CLASS_B,
                  DiagnosisClass.CLASS_C, DiagnosisClass.OPTIMISED)
    hsr, cdr, hf, rab, sdlc = ("handover_success_rate", "tch_call_drop_rate",
                               "handover_failures_rate", "rab", "tch_drop_sudden_lost_con")
    rules = [
        _rule("R1", [(hsr, "<=", 71.23), (cdr, "<=", 7.42), (hf, "<", 22.17)], A),
        _rule("R2", [(hsr, "<=", 71.23), (cdr, "<=", 7.42), (hf, ">=", 22.17), (rab, ">", 3)], B),
        _rule("R3", [(hsr, "<=", 71.23), (cdr, "<=", 7.42), (hf, ">=", 22.17), (rab, "<=", 3)], A),
        _rule("R4", [(hsr, ">", 57.99), (cdr, ">", 1.18)], O),
        _rule("R5", [(hsr, ">", 57.99), (cdr, "<=", 1.18)], C),
        _rule("R6", [(hsr, "<=", 57.99), (hf, ">", 3.69)], C),
        _rule("R7", [(hsr, "<=", 57.99), (hf, "<=", 3.69), (hsr, ">", 25.15)], A),
        _rule("R8", [(hsr, "<=", 57.99), (hf, "<=", 3.69), (hsr, "<=", 25.15)], C),
        _rule("R9", [(rab, "<=", 6), (cdr, "<=", 7.65)], C),
        _rule("R10", [(rab, "<=", 6), (cdr, ">", 7.65)], A),
        _rule("R11", [(rab, ">", 6), (sdlc, ">", 26)], B),
        _rule("R12", [(rab, ">", 6), (sdlc, "<=", 26), (hf, "<=", 2.87)], B),
        _rule("R13", [(rab, ">", 6), (sdlc, "<=", 26), (hf, ">", 2.87)], C),
    ]
    return RuleSet(tuple(rules), version="canonical-1")


# ------------------------------------------------------------------ file IO

_RULE_RE = re.compile(r"^RULE\s+([^\s:]+)\s*:\s*IF\s+(.+?)\s+THEN\s+(.+?)\s*$", re.IGNORECASE)
_ATOM_RE = re.compile(r"^(.+?)\s*(<=|>=|=<|=>|≤|≥|<|>)\s*(\S+)$")


def _num(x: float) -> str:
    return repr(float(x))


def save_ruleset(rs: RuleSet) -> str:
    lines = [f"VERSION {rs.version}"]
    lines += [str(rule) for rule in rs.rules]
    return "\n".join(lines) + "\n"


def load_ruleset(source) -> RuleSet:
    """Parse the rule file format. ``source`` is text, bytes, a path or a
    readable stream."""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    version = "custom"
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.upper().startswith("VERSION"):
            version = line[len("VERSION"):].strip() or version
            continue
        m = _RULE_RE.match(line)
        if m is None:
            raise ParseError(f"expected 'RULE <id>: IF ... THEN <class>', got {line!r}", lineno)
        rule_id, guard_text, outcome_text = m.groups()
        atoms = []
        for col, atom_text in enumerate(re.split(r"\s+AND\s+", guard_text, flags=re.IGNORECASE), 1):
            am = _ATOM_RE.match(atom_text.strip())
            if am is None:
                raise ParseError(f"malformed condition {atom_text!r}", lineno, col)
            attr, op, num = am.groups()
            name = canonical_name(attr.strip())
            if name not in NUMERIC_NAMES:
                raise ParseError(f"unknown attribute {attr.strip()!r}", lineno, col)
            try:
                threshold = float(num)
            except ValueError:
                raise ParseError(f"threshold {num!r} is not a number", lineno, col) from None
            if not math.isfinite(threshold):
                raise ParseError(f"threshold {num!r} is not finite", lineno, col)
            atoms.append(RuleAtom(name, op, threshold))
        try:
            outcome = DiagnosisClass.parse(outcome_text)
        except ValidationError:
            raise ParseError(f"unknown class {outcome_text!r}", lineno) from None
        try:
            rules.append(DiagnosticRule(rule_id, tuple(atoms), outcome))
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from None
    return RuleSet(tuple(rules), version)


def resolve_ruleset(spec: str | Path | None) -> RuleSet:
    """``None`` or ``"default"`` gives the built-in rules; anything else is a
    rule file path."""
    if spec is None or str(spec) == "default":
        return default_ruleset()
    return load_ruleset(Path(spec))


# ------------------------------------------------------------- reachability


@dataclass(frozen=True)
class _Interval:
    lo: float
    lo_closed: bool
    hi: float
    hi_closed: bool

    @property
    def empty(self) -> bool:
        return self.lo > self.hi or (self.lo == self.hi and not (self.lo_closed and self.hi_closed))

    def meet(self, other: _Interval) -> _Interval:
        if self.lo > other.lo:
            lo, lo_c = self.lo, self.lo_closed
        elif other.lo > self.lo:
            lo, lo_c = other.lo, other.lo_closed
        else:
            lo, lo_c = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_c = self.hi, self.hi_closed
        elif other.hi < self.hi:
            hi, hi_c = other.hi, other.hi_closed
        else:
            hi, hi_c = self.hi, self.hi_closed and other.hi_closed
        return _Interval(lo, lo_c, hi, hi_c)

    def minus(self, other: _Interval) -> list[_Interval]:
        """Parts of self outside other (at most two)."""
        parts = [
            _Interval(self.lo, self.lo_closed, other.lo, not other.lo_closed),
            _Interval(other.hi, not other.hi_closed, self.hi, self.hi_closed),
        ]
        return [p.meet(self) for p in parts if not p.meet(self).empty]

    def point(self) -> float:
        return self.lo if self.lo == self.hi else (self.lo + self.hi) / 2.0


def _atom_interval(atom: RuleAtom) -> _Interval:
    t = atom.threshold
    return {
        "<=": _Interval(-math.inf, False, t, True),
        "<": _Interval(-math.inf, False, t, False),
        ">": _Interval(t, False, math.inf, False),
        ">=": _Interval(t, True, math.inf, False),
    }[atom.comparator]


def _guard_box(rule: DiagnosticRule, dims: Sequence[str]) -> dict[str, _Interval]:
    box = {d: _Interval(-math.inf, False, math.inf, False) for d in dims}
    for atom in rule.guard:
        box[atom.attribute] = box[atom.attribute].meet(_atom_interval(atom))
    return box


def _box_empty(box) -> bool:
    return any(iv.empty for iv in box.values())


def _box_minus(box, cut) -> list[dict]:
    """Disjoint boxes covering ``box`` minus ``cut``."""
    inter = {d: box[d].meet(cut[d]) for d in box}
    if _box_empty(inter):
        return [box]
    pieces = []
    rest = dict(box)
    for d in box:
        for part in rest[d].minus(cut[d]):
            piece = dict(rest)
            piece[d] = part
            pieces.append(piece)
        rest[d] = inter[d]
    return pieces


@dataclass(frozen=True)
class Reachability:
    rule_id: str
    reachable: bool
    witness: KpiRecord | None


def analyze_reachability(rs: RuleSet, bounds: Mapping[str, tuple[float, float]] | None = None,
                         ) -> list[Reachability]:
    """For each rule, whether some record inside ``bounds`` is decided by it
    under first-match evaluation, with a concrete witness record when so.

    Exact: guards are axis-aligned boxes, so the region left to a rule is its
    box minus the boxes of all earlier rules.
    """
    bounds = {canonical_name(k) or k: v for k, v in (bounds or DEFAULT_RANGES).items()}
    dims = list(rs.attributes)
    missing = [d for d in dims if d not in bounds]
    if missing:
        raise ValidationError(f"bounds missing for attribute(s): {', '.join(missing)}")
    domain = {d: _Interval(float(bounds[d][0]), True, float(bounds[d][1]), True) for d in dims}
    boxes = [_guard_box(r, dims) for r in rs.rules]
    report = []
    for k, rule in enumerate(rs.rules):
        region = [{d: boxes[k][d].meet(domain[d]) for d in dims}]
        region = [b for b in region if not _box_empty(b)]
        for earlier in boxes[:k]:
            region = [p for b in region for p in _box_minus(b, earlier) if not _box_empty(p)]
            if not region:
                break
        if region:
            point = {d: region[0][d].point() for d in dims}
            report.append(Reachability(rule.rule_id, True, _witness(point, bounds)))
        else:
            report.append(Reachability(rule.rule_id, False, None))
    return report


def _witness(point: Mapping[str, float], bounds) -> KpiRecord:
    values = {}
    for name in CORE_NAMES:
        lo, hi = bounds.get(name, DEFAULT_RANGES[name])
        values[name] = (lo + hi) / 2.0
    values.update(point)
    record = KpiRecord.from_mapping({k: v for k, v in values.items()}, cell_id="witness")
    return record


# ---------------------------------------------------------------- estimator


class RuleClassifier(BaseEstimator, ClassifierMixin):
    """Estimator wrapper so a fixed rule set drops into sklearn pipelines.

    ``fit`` learns nothing; it records the feature names the rules are
    matched against.
    """

    def __init__(self, ruleset: RuleSet | None = None, feature_names: Sequence[str] | None = None):
        self.ruleset = ruleset
        self.feature_names = feature_names

    def fit(self, X, y=None):
        names = self.feature_names
        if names is None and hasattr(X, "columns"):
            names = [str(c) for c in X.columns]
        X = check_array(X, dtype=float)
        if names is None:
            names = CORE_NAMES[: X.shape[1]]
        if len(names) != X.shape[1]:
            raise ValidationError(f"{len(names)} feature names for {X.shape[1]} columns")
        self.ruleset_ = self.ruleset if self.ruleset is not None else default_ruleset()
        self.feature_names_in_ = np.array(names, dtype=object)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array(CLASS_LABELS + (DiagnosisClass.UNCLASSIFIED.value,), dtype=object)
        return self

    def predict(self, X):
        check_is_fitted(self, "ruleset_")
        X = check_array(X, dtype=float)
        return self.ruleset_.classify_matrix(X, list(self.feature_names_in_))
