"""Differentially private chi-squared and likelihood-ratio tests for contingency tables."""

__version__ = "0.1.0"

from .errors import DphtError
from .evalharness import (
    ReliabilityConfig,
    agreement_experiment,
    builtin_fixture,
    ks_uniform,
    reliability_experiment,
)
from .noise import NoiseSpec, laplace_scale, perturb_table, release_exact, sample_noise_vector
from .nullsim import NullSamplerConfig, TestKind, sample_multinomial_gaussian
from .pvalue import TestRequest, TestResult, monte_carlo_pvalue, naive_js_pvalue, run_test
from .stats import (
    StatisticKind,
    chi2_gof,
    chi2_independence,
    chi2_proportions,
    classical_pvalue_chi2,
    lr_gof,
    lr_independence,
    lr_modified,
    lr_proportions,
)
from .tables import CountTable, NoisyTable, parse_table, read_table
from .testbed import Margins, brute_force_sensitivity, sensitivity, testbed_pvalue

__all__ = [
    "CountTable",
    "DphtError",
    "Margins",
    "NoiseSpec",
    "NoisyTable",
    "NullSamplerConfig",
    "ReliabilityConfig",
    "StatisticKind",
    "TestKind",
    "TestRequest",
    "TestResult",
    "agreement_experiment",
    "brute_force_sensitivity",
    "builtin_fixture",
    "chi2_gof",
    "chi2_independence",
    "chi2_proportions",
    "classical_pvalue_chi2",
    "ks_uniform",
    "laplace_scale",
    "lr_gof",
    "lr_independence",
    "lr_modified",
    "lr_proportions",
    "monte_carlo_pvalue",
    "naive_js_pvalue",
    "parse_table",
    "perturb_table",
    "read_table",
    "release_exact",
    "reliability_experiment",
    "run_test",
    "sample_multinomial_gaussian",
    "sample_noise_vector",
    "sensitivity",
    "testbed_pvalue",
]
