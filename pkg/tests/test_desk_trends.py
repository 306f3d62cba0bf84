"""Desk-scale trends beyond the numbered acceptance criteria (slow)."""

import pytest

from conftest import DESK, SEEDS
from ppde import coefficients as cf


@pytest.mark.slow
def test_t1_low_dimension_never_overfits(runner):
    config = DESK.with_family(cf.trig_poly(2, 0.0, 1.0))
    flags = [runner(config, seed)[1]["overfit"] for seed in SEEDS]
    assert not any(flags), flags


@pytest.mark.slow
def test_t3v_small_mu_is_harder(runner):
    hard = DESK.with_family(cf.cookies_variable(2, 1e-4))
    easy = DESK.with_family(cf.cookies_variable(2, 1e-1))
    votes = sum(
        runner(hard, seed)[0].mean_rel_test >= runner(easy, seed)[0].mean_rel_test
        for seed in SEEDS
    )
    assert votes >= 2, votes
