"""Synthetic KPI datasets.

Three sampling modes:

* ``templates``: each record comes from one cluster template, Gaussian per
  attribute around the template mean, truncated at zero.
* ``uniform``: every attribute drawn independently over a range.
* ``boundary``: records placed just inside and just outside every rule
  threshold, plus one first-match witness per reachable rule, for branch
  coverage.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .exceptions import ValidationError
from .rules import RuleSet, analyze_reachability, default_ruleset, resolve_ruleset
from .schema import (
    CLUSTER_FEATURES,
    CORE_NAMES,
    DEFAULT_RANGES,
    EXTENDED_NAMES,
    CounterRecord,
    DiagnosisClass,
    KpiRecord,
    canonical_name,
)

MODES = ("templates", "uniform", "boundary")
MAX_RESAMPLES = 100


@dataclass(frozen=True)
class ClusterTemplate:
    template_id: str
    means: Mapping[str, float]
    std_devs: Mapping[str, float]
    weight: float

    def __post_init__(self):
        if any(s < 0 for s in self.std_devs.values()):
            raise ValidationError(f"template {self.template_id}: negative standard deviation")
        if set(self.means) != set(self.std_devs):
            raise ValidationError(f"template {self.template_id}: mean/std attributes differ")


def read_templates(source) -> list[ClusterTemplate]:
    """Parse a template CSV with columns template_id, attribute, mean, std,
    weight ('#' lines are comments)."""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        text = source
    rows = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(rows)))
    expected = {"template_id", "attribute", "mean", "std", "weight"}
    if reader.fieldnames is None or set(reader.fieldnames) != expected:
        raise ValidationError(f"template file needs columns {sorted(expected)}")
    order: list[str] = []
    means: dict[str, dict] = {}
    stds: dict[str, dict] = {}
    weights: dict[str, float] = {}
    for row in reader:
        tid = row["template_id"].strip()
        name = canonical_name(row["attribute"])
        if name is None:
            raise ValidationError(f"unknown attribute {row['attribute']!r} in template {tid}")
        try:
            mean, std, weight = float(row["mean"]), float(row["std"]), float(row["weight"])
        except ValueError:
            raise ValidationError(f"non-numeric value in template {tid}") from None
        if tid not in means:
            order.append(tid)
            means[tid], stds[tid], weights[tid] = {}, {}, weight
        elif weights[tid] != weight:
            raise ValidationError(f"template {tid} has conflicting weights")
        means[tid][name] = mean
        stds[tid][name] = std
    templates = [ClusterTemplate(t, means[t], stds[t], weights[t]) for t in order]
    _check_weights(templates)
    return templates


def _check_weights(templates: Sequence[ClusterTemplate]):
    if not templates:
        raise ValidationError("no templates given")
    total = sum(t.weight for t in templates)
    if any(t.weight < 0 for t in templates) or abs(total - 1.0) > 1e-6:
        raise ValidationError(f"template weights must be non-negative and sum to 1 (got {total})")


def default_templates() -> list[ClusterTemplate]:
    text = resources.files("cellfault").joinpath("data/cluster_templates.csv").read_text("utf-8")
    return read_templates(text)


@dataclass(frozen=True)
class GenSpec:
    mode: str = "uniform"
    n: int = 1000
    seed: int = 0
    label_with: RuleSet | None = None
    templates: tuple[ClusterTemplate, ...] | None = None
    separation_scale: float = 1.0
    ranges: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    ruleset: RuleSet | None = None  # boundary mode rules; defaults to the built-in set
    epsilon: float = 0.01
    counters: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode != "boundary" and self.n < 1:
            raise ValidationError("n must be at least 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.separation_scale < 0:
            raise ValidationError("separation_scale must be non-negative")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        ranges = {}
        for key, (lo, hi) in self.ranges.items():
            name = canonical_name(key)
            if name is None:
                raise ValidationError(f"unknown attribute {key!r} in ranges")
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or hi <= lo:
                raise ValidationError(f"invalid range for {name}: [{lo}, {hi}]")
            ranges[name] = (float(lo), float(hi))
        object.__setattr__(self, "ranges", {**DEFAULT_RANGES, **ranges})

    @classmethod
    def from_file(cls, path) -> GenSpec:
        """JSON spec: mode, n, seed, label ("default" or a rule file path),
        templates (path), separation_scale, ranges, epsilon, counters."""
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read generator spec {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ValidationError("generator spec must be a JSON object")
        known = {"mode", "n", "seed", "label", "templates", "separation_scale", "ranges",
                 "epsilon", "counters"}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown generator spec keys: {sorted(unknown)}")
        kwargs = {k: raw[k] for k in ("mode", "n", "seed", "separation_scale", "epsilon", "counters")
                  if k in raw}
        if "ranges" in raw:
            kwargs["ranges"] = {k: tuple(v) for k, v in raw["ranges"].items()}
        if raw.get("label"):
            kwargs["label_with"] = resolve_ruleset(raw["label"])
        if raw.get("templates"):
            kwargs["templates"] = tuple(read_templates(Path(raw["templates"])))
        return cls(**kwargs)


def truncated_normal(rng: np.random.Generator, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Gaussian draws, negative values redrawn up to 100 times, then clamped
    to zero."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    out = rng.normal(mean, std)
    for _ in range(MAX_RESAMPLES):
        bad = out < 0
        if not bad.any():
            break
        out[bad] = rng.normal(mean[bad], std[bad])
    return np.maximum(out, 0.0)


def allocate(weights: Sequence[float], n: int) -> np.ndarray:
    """Largest-remainder split of ``n`` records by template weight."""
    w = np.asarray(weights, dtype=float)
    exact = w / w.sum() * n
    counts = np.floor(exact).astype(int)
    remainder = n - counts.sum()
    if remainder:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def sample_templates(templates: Sequence[ClusterTemplate], n: int, rng: np.random.Generator,
                     separation_scale: float = 1.0,
                     features: Sequence[str] = CLUSTER_FEATURES) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix over ``features`` plus the template index of each row.
    Rows are grouped by template in template order."""
    _check_weights(templates)
    counts = allocate([t.weight for t in templates], n)
    which = np.repeat(np.arange(len(templates)), counts)
    mean = np.empty((n, len(features)))
    std = np.empty((n, len(features)))
    for i, t in enumerate(templates):
        missing = [f for f in features if f not in t.means]
        if missing:
            raise ValidationError(f"template {t.template_id} lacks {', '.join(missing)}")
        mean[which == i] = [t.means[f] for f in features]
        std[which == i] = [t.std_devs[f] * separation_scale for f in features]
    return truncated_normal(rng, mean, std), which


def _uniform(rng, names, n, ranges) -> np.ndarray:
    lo = np.array([ranges[k][0] for k in names])
    hi = np.array([ranges[k][1] for k in names])
    return rng.uniform(lo, hi, size=(n, len(names)))


def _counters(rng: np.random.Generator, drop_rates: np.ndarray, ids: Sequence[str]):
    """Raw counters consistent with each record's drop rate."""
    n = len(drop_rates)
    ca = rng.integers(200, 5001, size=n).astype(float)
    cs = np.round(ca * rng.uniform(0.85, 1.0, size=n))
    cf = np.minimum(np.round(cs * drop_rates / 100.0), cs)
    te = np.round(rng.uniform(0.0, 30.0, size=n), 3)
    oe = np.round(rng.uniform(0.0, 30.0, size=n), 3)
    sa = rng.integers(200, 5001, size=n).astype(float)
    ss = np.round(sa * rng.uniform(0.9, 1.0, size=n))
    return [CounterRecord(cid, *vals) for cid, vals in zip(ids, zip(ca, cf, cs, te, oe, sa, ss))]


def boundary_points(rs: RuleSet, epsilon: float = 0.01,
                    base: Mapping[str, float] | None = None) -> list[tuple[str, str, dict]]:
    """For every rule: one point ``epsilon`` inside each of its thresholds
    (tag ``in``) and, per condition, the same point with that attribute moved
    ``epsilon`` past the threshold (tag ``out:<k>``). Attributes the rule
    does not mention sit at ``base`` (range midpoints by default)."""
    base = dict(base or {k: (lo + hi) / 2.0 for k, (lo, hi) in DEFAULT_RANGES.items()})
    points = []
    for rule in rs.rules:
        inside = dict(base)
        for name in rule.attributes:
            atoms = [a for a in rule.guard if a.attribute == name]
            choices = [_inside(a, epsilon) for a in atoms]
            ok = [v for v in choices if all(a.test(v) for a in atoms)]
            if not ok:
                raise ValidationError(f"rule {rule.rule_id}: no value satisfies all {name} conditions")
            inside[name] = ok[0]
        points.append((rule.rule_id, "in", inside))
        for k, atom in enumerate(rule.guard):
            out = dict(inside)
            out[atom.attribute] = _outside(atom, epsilon)
            points.append((rule.rule_id, f"out:{k}", out))
    return points


def witness_points(rs: RuleSet, base: Mapping[str, float] | None = None,
                   ) -> list[tuple[str, str, dict]]:
    """One point per reachable rule that the rule decides under first-match
    order. Threshold-adjacent points of a shadowed branch are claimed by an
    earlier rule, so these guarantee every reachable outcome is present."""
    base = dict(base or {k: (lo + hi) / 2.0 for k, (lo, hi) in DEFAULT_RANGES.items()})
    points = []
    for res in analyze_reachability(rs):
        if res.reachable:
            point = dict(base)
            point.update({n: res.witness.get(n) for n in rs.attributes})
            points.append((res.rule_id, "witness", point))
    return points


def _inside(atom, eps: float) -> float:
    return atom.threshold - eps if atom.comparator in ("<=", "<") else atom.threshold + eps


def _outside(atom, eps: float) -> float:
    return atom.threshold + eps if atom.comparator in ("<=", "<") else atom.threshold - eps


def generate(spec: GenSpec) -> Dataset:
    """Draw a dataset as described by ``spec``. Identical specs give
    identical datasets."""
    rng = np.random.default_rng(spec.seed)
    numeric = CORE_NAMES + EXTENDED_NAMES
    if spec.mode == "uniform":
        values = _uniform(rng, numeric, spec.n, spec.ranges)
        prefix = "u"
    elif spec.mode == "templates":
        templates = spec.templates or tuple(default_templates())
        cluster_values, _ = sample_templates(templates, spec.n, rng, spec.separation_scale)
        others = [n for n in numeric if n not in CLUSTER_FEATURES]
        other_values = _uniform(rng, others, spec.n, spec.ranges)
        columns = {**dict(zip(CLUSTER_FEATURES, cluster_values.T)), **dict(zip(others, other_values.T))}
        values = np.column_stack([columns[n] for n in numeric])
        prefix = "t"
    else:
        rs = spec.ruleset or default_ruleset()
        base = {k: (lo + hi) / 2.0 for k, (lo, hi) in spec.ranges.items()}
        points = boundary_points(rs, spec.epsilon, base) + witness_points(rs, base)
        values = np.array([[max(p[n], 0.0) for n in numeric] for _, _, p in points])
        prefix = "b"
    n = len(values)
    ids = [f"{prefix}{i:05d}" for i in range(n)]
    counters = _counters(rng, values[:, 0], ids) if spec.counters else [None] * n
    records = []
    for cid, row, ctr in zip(ids, values, counters):
        kw = dict(zip(numeric, (float(v) for v in row)))
        records.append(KpiRecord(cell_id=cid, counters=ctr, **kw))
    if spec.label_with is not None:
        labels = spec.label_with.classify_matrix(values, numeric)
        records = [r.with_diagnosis(DiagnosisClass.parse(lab)) for r, lab in zip(records, labels)]
    return Dataset.from_records(records, provenance=f"generated:{spec.mode}:seed={spec.seed}")

