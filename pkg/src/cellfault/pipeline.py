"""End-to-end diagnosis of a cell population.

label -> per-class KPI summary -> cause groups -> cell populations ->
k-means -> per-cluster cross-tabulation and optimised-cell counts.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cluster as cluster_mod
from .dataset import Dataset
from .exceptions import CellFaultError, DerivationError, ValidationError
from .rules import resolve_ruleset
from .schema import (
    CLASS_LABELS,
    CLUSTER_FEATURES,
    CauseGroup,
    DiagnosisClass,
    class_to_group,
    derive_kpis,
)
from .tree import LearnParams, train

LABELINGS = ("rule_file", "trained_tree")
GROUPS = tuple(g.name for g in CauseGroup)
KPI_FAMILIES = ("traffic", "dropped_calls", "handover_success", "call_success_rate")

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
CLUSTERS_CSV = "clusters.csv"
PROFILES_CSV = "profiles.csv"
ASSIGNMENTS_CSV = "assignments.csv"


@contextlib.contextmanager
def stage(name: str):
    """Tag toolkit errors raised inside the block with the stage name."""
    try:
        yield
    except CellFaultError as exc:
        if exc.stage is None:
            exc.stage = name
            exc.args = (f"[{name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


@dataclass(frozen=True)
class PipelineConfig:
    labeling: str = "rule_file"
    rule_file: str | None = None  # None means the built-in rules
    learn_params: LearnParams = field(default_factory=LearnParams)
    cluster_params: cluster_mod.ClusterParams = field(default_factory=cluster_mod.ClusterParams)
    output_dir: str | None = None

    def __post_init__(self):
        if self.labeling not in LABELINGS:
            raise ValidationError(f"labeling must be one of {LABELINGS}, got {self.labeling!r}")
        if self.rule_file is not None and self.rule_file != "default" and not Path(self.rule_file).exists():
            raise ValidationError(f"rule file {self.rule_file} does not exist")


def _kpi_values(data: Dataset) -> dict[str, list[float]]:
    """The four KPI families for every record. Traffic and call success rate
    come from raw counters when the dataset carries them, dropped calls from
    the counters or else the TCH call drop rate."""
    n = len(data)
    dropped = data.column("tch_call_drop_rate")
    handover = data.column("handover_success_rate")
    traffic: list[float | None] = [None] * n
    csr: list[float | None] = [None] * n
    records = data.records()
    if all(r.counters is not None for r in records):
        for i, r in enumerate(records):
            try:
                kpis = derive_kpis(r.counters)
            except DerivationError:
                continue
            traffic[i], csr[i], dropped[i] = kpis.TR, kpis.CSR, kpis.DCR
    elif data.has("tch_attempts"):
        traffic = data.column("tch_attempts")
    return {"traffic": traffic, "dropped_calls": dropped,
            "handover_success": handover, "call_success_rate": csr}


def kpi_group_summary(labeled: Dataset) -> dict:
    """Per diagnosis class: the KPI value lists of its members and their
    mean / sample standard deviation (None when undefined)."""
    labels = labeled.labels()
    values = _kpi_values(labeled)
    classes = list(CLASS_LABELS) + sorted(set(labels) - set(CLASS_LABELS))
    out = {}
    for c in classes:
        members = [i for i, lab in enumerate(labels) if lab == c]
        entry = {}
        for fam in KPI_FAMILIES:
            vals = [values[fam][i] for i in members if values[fam][i] is not None]
            entry[fam] = {
                "values": vals,
                "mean": statistics.fmean(vals) if vals else None,
                "std_dev": statistics.stdev(vals) if len(vals) > 1 else (0.0 if vals else None),
            }
        out[c] = entry
    return out


@dataclass
class ClusterDiagnosisReport:
    n: int
    k: int
    labeling: str
    sizes: list[int]
    class_counts: list[dict[str, int]]
    group_counts: list[dict[str, int]]
    optimised_cell_count: list[int]
    missing_groups: list[list[str]]
    profiles: cluster_mod.ProfileTable
    kpi_summary: dict
    group_population: dict[str, list[str]]
    assignments: list[tuple[str, int, str]]  # (cell_id, cluster, class)
    model: dict

    def to_dict(self) -> dict:
        clusters = []
        for j in range(self.k):
            clusters.append({
                "cluster": j,
                "size": self.sizes[j],
                "class_counts": self.class_counts[j],
                "group_counts": self.group_counts[j],
                "optimised_cell_count": self.optimised_cell_count[j],
                "missing_groups": self.missing_groups[j],
                "warning": bool(self.missing_groups[j]),
            })
        totals = {c: sum(cc[c] for cc in self.class_counts) for c in self.class_counts[0]}
        return {
            "n": self.n,
            "k": self.k,
            "labeling": self.labeling,
            "totals": {"classes": totals,
                       "optimised_cells": sum(self.optimised_cell_count)},
            "clusters": clusters,
            "profiles": self.profiles.to_dict(),
            "kpi_summary": {c: {fam: {k: v for k, v in s.items() if k != "values"}
                                | {"count": len(s["values"])}
                                for fam, s in fams.items()}
                            for c, fams in self.kpi_summary.items()},
            "group_population": {g: len(ids) for g, ids in self.group_population.items()},
            "model": self.model,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def assignments_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_id", "cluster", "diagnosis"])
        w.writerows(self.assignments)
        return buf.getvalue()

    def clusters_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        classes = list(self.class_counts[0])
        w.writerow(["cluster", "size", *classes, *GROUPS, "optimised_cell_count", "warning"])
        for j in range(self.k):
            w.writerow([j, self.sizes[j], *(self.class_counts[j][c] for c in classes),
                        *(self.group_counts[j][g] for g in GROUPS),
                        self.optimised_cell_count[j], int(bool(self.missing_groups[j]))])
        return buf.getvalue()

    def render(self) -> str:
        classes = list(self.class_counts[0])
        width = max(len(c) for c in classes + ["cluster"])
        lines = [f"Cells: {self.n}   clusters: {self.k}   labeling: {self.labeling}", ""]
        head = ["size", *classes, *GROUPS, "optimised"]
        cell = max(len(h) for h in head)
        lines.append(f"{'cluster':<{width}}  " + "  ".join(f"{h:>{cell}}" for h in head))
        for j in range(self.k):
            row = [self.sizes[j], *(self.class_counts[j][c] for c in classes),
                   *(self.group_counts[j][g] for g in GROUPS), self.optimised_cell_count[j]]
            flag = "  ! no " + ",".join(self.missing_groups[j]) if self.missing_groups[j] else ""
            lines.append(f"{j:<{width}}  " + "  ".join(f"{v:>{cell}}" for v in row) + flag)
        lines += ["", self.profiles.render().rstrip("\n"), "", "KPI means per class"]
        for c, fams in self.kpi_summary.items():
            parts = [f"{fam}={_fmt(s['mean'])}" for fam, s in fams.items()]
            lines.append(f"  {c:<{width}}  n={len(fams['handover_success']['values']):<6} " + "  ".join(parts))
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    return "–" if value is None else f"{value:.2f}"


def run_pipeline(data: Dataset, cfg: PipelineConfig | None = None) -> ClusterDiagnosisReport:
    """Label, summarise, group, cluster and cross-tabulate ``data``.

    Errors from any stage are re-raised with ``stage`` set to its name.
    When ``cfg.output_dir`` is set the report files are written there.
    """
    cfg = cfg or PipelineConfig()

    with stage("label"):
        if len(data) == 0:
            raise ValidationError("dataset is empty")
        rs = resolve_ruleset(cfg.rule_file)
        rule_names = list(rs.attributes)
        if cfg.labeling == "rule_file":
            labels = [str(x) for x in rs.classify_matrix(data.matrix(rule_names), rule_names)]
            model_info = {"kind": "rules", "version": rs.version, "rules": len(rs)}
        else:
            train_data = data
            source = "given labels"
            if not data.has_labels:
                boot = rs.classify_matrix(data.matrix(rule_names), rule_names)
                train_data = data.with_labels([str(x) for x in boot])
                source = f"bootstrapped from rules {rs.version}"
            tree = train(train_data, cfg.learn_params)
            labels = [str(x) for x in tree.predict(train_data.matrix(list(tree.feature_names_in_)))]
            agreement = float(np.mean(np.array(labels) == np.array(train_data.labels())))
            model_info = {"kind": "tree", "training_labels": source, "leaves": tree.n_leaves_,
                          "nodes": tree.n_nodes_, "training_agreement": agreement}
        labeled = data.with_labels(labels)

    with stage("summary"):
        summary = kpi_group_summary(labeled)

    with stage("groups"):
        groups = []
        for lab in labels:
            d = DiagnosisClass.parse(lab)
            groups.append(None if d is DiagnosisClass.UNCLASSIFIED else class_to_group(d).name)

    with stage("population"):
        ids = data.cell_ids()
        population = {g: [cid for cid, grp in zip(ids, groups) if grp == g] for g in GROUPS}

    with stage("cluster"):
        model = cluster_mod.fit(data, cfg.cluster_params, CLUSTER_FEATURES)
        assignment = model.labels_
        profiles = cluster_mod.profile_report(model)

    with stage("report"):
        k = cfg.cluster_params.k
        class_names = list(CLASS_LABELS) + sorted(set(labels) - set(CLASS_LABELS))
        class_counts = [dict.fromkeys(class_names, 0) for _ in range(k)]
        group_counts = [dict.fromkeys(GROUPS, 0) for _ in range(k)]
        for j, lab, grp in zip(assignment, labels, groups):
            class_counts[j][lab] += 1
            if grp is not None:
                group_counts[j][grp] += 1
        model_info["cluster_wcss"] = float(model.inertia_)
        model_info["cluster_iterations"] = int(model.n_iter_)
        report = ClusterDiagnosisReport(
            n=len(data), k=k, labeling=cfg.labeling,
            sizes=[int(s) for s in np.bincount(assignment, minlength=k)],
            class_counts=class_counts, group_counts=group_counts,
            optimised_cell_count=[cc[DiagnosisClass.OPTIMISED.value] for cc in class_counts],
            missing_groups=[[g for g in GROUPS if gc[g] == 0] for gc in group_counts],
            profiles=profiles, kpi_summary=summary, group_population=population,
            assignments=[(cid, int(j), lab) for cid, j, lab in zip(ids, assignment, labels)],
            model=model_info,
        )
        if cfg.output_dir is not None:
            write_report(report, cfg.output_dir)
        return report


def write_report(report: ClusterDiagnosisReport, output_dir) -> dict[str, Path]:
    """Write the JSON, text and CSV renderings under fixed file names."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"output directory {out} is not writable: {exc}") from None
    files = {
        REPORT_JSON: report.to_json(),
        REPORT_TEXT: report.render(),
        CLUSTERS_CSV: report.clusters_csv(),
        PROFILES_CSV: report.profiles.to_csv(),
        ASSIGNMENTS_CSV: report.assignments_csv(),
    }
    written = {}
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written[name] = path
    return written


__all__ = [
    "ClusterDiagnosisReport",
    "PipelineConfig",
    "kpi_group_summary",
    "run_pipeline",
    "write_report",
]
