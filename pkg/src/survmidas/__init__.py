"""Censored binary-outcome MIDAS regression.

Predicts ``P(T <= t | T > s, Z)`` from lagged mixed-frequency covariates with
IPCW-weighted logistic loss, a sparse-group LASSO penalty over MIDAS
dictionary groups and nearest-neighbour time-dependent ROC evaluation.
"""
from .censoring import StepSurvival, estimate_weights, fit_censoring_km, ipcw_weights
from .data import Dataset, HorizonConfig, SurvivalRecord, event_indicator, load_dataset, save_dataset
from .dataprep import RawPanel, SubdatasetChoice, extract_subdataset, load_raw_panel
from .evaluation import (RocCurve, ScoredSample, bootstrap_auc, likelihood_score,
                         pairwise_auc_test, roc_curve, time_auc)
from .midas import MidasDictionary, aggregate, expand_weights, make_dictionary, parse_dictionary
from .model import FittedModel, load_model, save_model
from .selection import (METHODS, CvPlan, cross_validate, fit_method, oversample,
                        repeated_split_protocol, stratified_folds, stratified_split)
from .simulation import ScenarioSpec, StudyConfig, run_study, simulate_dataset
from .solver import (FitResult, PenaltySpec, SolverOptions, empirical_risk, fit, fit_path,
                     lambda_max, lambda_path, predict_prob, prox_sg)

__version__ = "0.1.0"
