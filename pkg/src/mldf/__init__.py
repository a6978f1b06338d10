"""Multi-label deep forest: cascades of multi-label tree ensembles whose
representation screening and depth are driven by a chosen performance measure."""

from .cascade import (CascadeConfig, CascadeModel, determine_threshold, feature_reuse,
                      fit_cascade, predict_cascade, probe_label_correlation)
from .confidence import confidence
from .dataset import (DatasetBundle, load_dataset, parse_arff, parse_csv, parse_mulan_labels,
                      split_train_test)
from .forest import fit_folded, fit_forest, predict_folded, predict_forest
from .metrics import MeasureKind, binarize, evaluate, evaluate_all, rank_of
from .persistence import load_model, save_model
from .trees import SplitCriterion, SplitPointMode, TreeParams, fit_tree, predict_tree, split_gain

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig", "CascadeModel", "DatasetBundle", "MeasureKind", "SplitCriterion",
    "SplitPointMode", "TreeParams", "binarize", "confidence", "determine_threshold",
    "evaluate", "evaluate_all", "feature_reuse", "fit_cascade", "fit_folded", "fit_forest",
    "fit_tree", "load_dataset", "load_model", "parse_arff", "parse_csv", "parse_mulan_labels",
    "predict_cascade", "predict_folded", "predict_forest", "predict_tree",
    "probe_label_correlation", "rank_of", "save_model", "split_gain", "split_train_test",
]
