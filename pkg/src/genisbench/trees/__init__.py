"""Native tree ensembles: Gini random forest and second-order boosted trees."""

from .base import Tree, TreeEnsembleModel, TreeError, impurity_importance, predict_proba
from .binning import Binner
from .forest import ForestConfig, best_gini_split, fit_random_forest, gini
from .gbdt import GbdtConfig, base_scores, best_gain_split, fit_gbdt, goss_amplification, goss_sample, split_gain

__all__ = [
    "Binner",
    "ForestConfig",
    "GbdtConfig",
    "Tree",
    "TreeEnsembleModel",
    "TreeError",
    "base_scores",
    "best_gain_split",
    "best_gini_split",
    "fit_gbdt",
    "fit_random_forest",
    "gini",
    "goss_amplification",
    "goss_sample",
    "impurity_importance",
    "predict_proba",
    "split_gain",
]
