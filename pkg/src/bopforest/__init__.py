"""Random-forest prediction intervals."""
from .data import Dataset, encode_categoricals, from_arrays, load_csv, split_train_test
from .forest import Forest, ForestConfig, fit_forest, predict_point
from .interval import (METHODS, HdrRegion, Interval, chdr_interval, hdr_region, lm_interval, quantile_interval,
                       shortest_interval)
from .pipeline import (Bop, PibfModel, RfpiModel, build_bop, build_oob_bop_training, calibrate_cv, calibrate_oob,
                       fit_pibf, fit_rfpi, pibf_predict, pibf_predict_interval, rfpi_predict,
                       rfpi_predict_intervals)

__all__ = [
    "Bop", "Dataset", "Forest", "ForestConfig", "HdrRegion", "Interval", "METHODS", "PibfModel", "RfpiModel",
    "build_bop", "build_oob_bop_training", "calibrate_cv", "calibrate_oob", "chdr_interval", "encode_categoricals",
    "fit_forest", "fit_pibf", "fit_rfpi", "from_arrays", "hdr_region", "lm_interval", "load_csv", "pibf_predict",
    "pibf_predict_interval", "predict_point", "quantile_interval", "rfpi_predict", "rfpi_predict_intervals",
    "shortest_interval", "split_train_test",
]
