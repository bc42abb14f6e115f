"""Learning algorithms implemented on numpy arrays."""
from radfit.learners.boosting import BoostingModel, train_gradient_boosting
from radfit.learners.decomposition import Dendrogram, PcaModel, fit_pca, hierarchical_clustering
from radfit.learners.linear import LogisticModel, logistic_objective, train_logistic
from radfit.learners.model_selection import FoldPlan, accuracy_score, make_device_folds
from radfit.learners.multiclass import OneVsRestModel, train_one_vs_rest
from radfit.learners.sampling import BalanceResult, balance_classes
from radfit.learners.tree import ForestModel, TreeModel, presort, train_cart, train_random_forest
from radfit.learners.registry import (
    DEFAULT_HYPERPARAMETERS,
    MODEL_KINDS,
    canonical_kind,
    fit_classifier,
    hyperparameters,
    model_from_dict,
    model_to_dict,
)
