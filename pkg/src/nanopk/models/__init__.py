from .multiview import (
    N_OUTPUTS,
    RANGES,
    SECONDARY_DIM,
    VIEWS,
    MLPNet,
    MultiviewConfig,
    MultiviewNet,
    build_mlp,
    build_multiview,
    build_net,
    predict_multiview,
)
from .ridge import fit_ridge, predict_ridge
from .training import Arrays, SearchResult, TrainResult, hyperparameter_search, train_dnn, val_rmse
from .trees import (
    Booster,
    Forest,
    ForestConfig,
    GbtConfig,
    Tree,
    fit_forest,
    fit_gbt,
    fit_tree,
    load_trees,
    predict_forest,
    predict_gbt,
    save_trees,
)

__all__ = [
    "Arrays", "Booster", "Forest", "ForestConfig", "GbtConfig", "MLPNet", "MultiviewConfig",
    "MultiviewNet", "N_OUTPUTS", "RANGES", "SECONDARY_DIM", "SearchResult", "TrainResult", "Tree",
    "VIEWS", "build_mlp", "build_multiview", "build_net", "fit_forest", "fit_gbt", "fit_ridge",
    "fit_tree", "hyperparameter_search", "load_trees", "predict_forest", "predict_gbt",
    "predict_multiview", "predict_ridge", "save_trees", "train_dnn", "val_rmse",
]
