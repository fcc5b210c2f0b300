"""Acceptance suite: one test per criterion, each printing its PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines.  The
scaling criteria (7 to 10, 13) take several minutes each.
"""
import pytest

from aggrevated.verification import run_check

# wall-clock budget in seconds for each criterion
BUDGETS = {1: 10, 2: 60, 3: 300, 4: 10, 5: 30, 6: 60, 7: 600, 8: 900, 9: 1800,
           10: 300, 11: 60, 12: 60, 13: 600, 14: None}


def _check(number):
    res = run_check(number)
    res.name = f"[{number}] {res.name}"
    print(res.line())
    assert res.passed, res.line()
    budget = BUDGETS[number]
    if budget is not None:
        assert res.seconds < budget, f"took {res.seconds:.0f}s, budget {budget}s"


class TestAcceptance:
    def test_01_performance_difference(self):
        """Cost gap equals summed expert advantages on random tabular MDPs."""
        _check(1)

    def test_02_gradients(self):
        """Analytic gradients against central differences."""
        _check(2)

    def test_03_unbiased_estimators(self):
        _check(3)

    def test_04_eg_closed_form(self):
        _check(4)

    def test_05_eg_regret_bound(self):
        _check(5)

    def test_06_ftl_tree(self):
        """Exact-oracle follow-the-leader finds the best leaf within depth - 1 episodes."""
        _check(6)

    def test_07_weighted_majority_scaling(self):
        _check(7)

    def test_08_imitation_vs_bandit_gap(self):
        """UCB over leaves against tree EG, ratio increasing with depth."""
        _check(8)

    def test_09_tabular_scaling(self):
        _check(9)

    def test_10_bandit_rows_scaling(self):
        _check(10)

    def test_11_natural_gradient(self):
        _check(11)

    def test_12_super_expert(self):
        _check(12)

    def test_13_parsing(self):
        _check(13)

    def test_14_determinism(self):
        _check(14)
