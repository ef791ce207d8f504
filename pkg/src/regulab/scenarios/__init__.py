"""Bundled executable scenarios."""

from regulab.scenarios.base import Scenario
from regulab.scenarios.frac import frac_l1, frac_l2, frac_scenarios
from regulab.scenarios.matching import (
    MarketSpec,
    MatchingMarket,
    MatchOutcome,
    blocking_pairs,
    deferred_acceptance,
    matching_factorization,
    matching_label_factorization,
    matching_regularity_probe,
    matching_scenario,
    random_market,
)
from regulab.scenarios.shifted import coupled_noise, shifted_noise, white_noise

__all__ = [
    "MarketSpec",
    "MatchOutcome",
    "MatchingMarket",
    "Scenario",
    "blocking_pairs",
    "coupled_noise",
    "deferred_acceptance",
    "frac_l1",
    "frac_l2",
    "frac_scenarios",
    "matching_factorization",
    "matching_label_factorization",
    "matching_regularity_probe",
    "matching_scenario",
    "random_market",
    "shifted_noise",
    "white_noise",
]
