"""Fault diagnosis for cellular radio networks.

Derive KPIs from per-cell counters, classify the malfunction cause with a
fixed rule set or a trainable C4.5 tree, and profile cell populations with
k-means.
"""

from .cluster import ClusterParams, KMeansProfiler, ProfileTable, assign, profile_report
from .cluster import fit as fit_clusters
from .dataset import Dataset, SplitSpec, load, read_arff, read_csv, save, split, write_arff, write_csv
from .evaluation import EvaluationReport, evaluate, evaluate_distributions, evaluate_labels
from .exceptions import (
    AssignError,
    CellFaultError,
    DerivationError,
    MappingError,
    ParseError,
    PredictError,
    RuleError,
    ValidationError,
)
from .pipeline import ClusterDiagnosisReport, PipelineConfig, kpi_group_summary, run_pipeline
from .rules import (
    DiagnosticRule,
    RuleAtom,
    RuleClassifier,
    RuleSet,
    analyze_reachability,
    classify,
    default_ruleset,
    load_ruleset,
    save_ruleset,
)
from .schema import (
    CauseGroup,
    CounterRecord,
    DerivedKpis,
    DiagnosisClass,
    KpiRecord,
    class_to_group,
    derive_kpis,
)
from .synth import ClusterTemplate, GenSpec, default_templates, generate
from .tree import C45Classifier, LearnParams, export_rules, predict, train

__version__ = "0.1.0"

__all__ = [
    "AssignError",
    "C45Classifier",
    "CauseGroup",
    "CellFaultError",
    "ClusterDiagnosisReport",
    "ClusterParams",
    "ClusterTemplate",
    "CounterRecord",
    "Dataset",
    "DerivationError",
    "DerivedKpis",
    "DiagnosisClass",
    "DiagnosticRule",
    "EvaluationReport",
    "GenSpec",
    "KMeansProfiler",
    "KpiRecord",
    "LearnParams",
    "MappingError",
    "ParseError",
    "PipelineConfig",
    "PredictError",
    "ProfileTable",
    "RuleAtom",
    "RuleClassifier",
    "RuleError",
    "RuleSet",
    "SplitSpec",
    "ValidationError",
    "analyze_reachability",
    "assign",
    "class_to_group",
    "classify",
    "default_ruleset",
    "default_templates",
    "derive_kpis",
    "evaluate",
    "evaluate_distributions",
    "evaluate_labels",
    "export_rules",
    "fit_clusters",
    "generate",
    "kpi_group_summary",
    "load",
    "load_ruleset",
    "predict",
    "profile_report",
    "read_arff",
    "read_csv",
    "run_pipeline",
    "save",
    "save_ruleset",
    "split",
    "train",
    "write_arff",
    "write_csv",
]
