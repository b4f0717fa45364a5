from .cv import (
    DEFAULT_ROSTER,
    ENSEMBLES,
    MODEL_LABELS,
    NETWORKS,
    ROSTERS,
    CVReport,
    CVSettings,
    FoldResult,
    ProvenanceLog,
    resolve_roster,
    run_cv,
    run_holdout,
)
from .metrics import MetricPair, metric_pair, r2, rmse
from .saliency import SaliencyReport, input_gradients, saliency
from .wilcoxon import WilcoxonResult, wilcoxon_one_sided

__all__ = [
    "CVReport", "CVSettings", "DEFAULT_ROSTER", "ENSEMBLES", "FoldResult", "MODEL_LABELS",
    "MetricPair", "NETWORKS", "ProvenanceLog", "ROSTERS", "SaliencyReport", "WilcoxonResult",
    "input_gradients", "metric_pair", "r2", "resolve_roster", "rmse", "run_cv", "run_holdout",
    "saliency", "wilcoxon_one_sided",
]
