"""Behavioural analysis of trained cohorts."""
from .bms import ModelComparison, group_model_comparison
from .classify import (AlignedSeries, InsightClassification, classify_cohort, corrected_steepness,
                       observed_steepness, slope_at_inflection, switch_align, switch_bin)
from .fits import (FAMILIES, LINEAR, SIGMOID, SIGMOID_MAX_SLOPE, STEP, CurveFit, UndefinedBICError,
                   bic, fit_all, fit_linear, fit_sigmoid, fit_step)
from .series import AccuracySeries, InsufficientDataError, bin_correct, bin_series, binned_cohort
from .stats import change_point, ks_uniform_delays, likelihood_gain
