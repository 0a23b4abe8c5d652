import pytest

from harqeh.config_loader import SolverSettings, load_settings
from harqeh.types import LinkConfig
from harqeh.verify import (
    SUITES,
    bmax_suite,
    deviation_suite,
    lemma1_suite,
    monotone_suite,
    oracle_configs,
    oracle_suite,
    run_suite,
    suite_configs,
    ties_suite,
)

from .conftest import table1_config, table2_config

SOLVER = SolverSettings()


def test_lemma1_suite():
    configs = [
        LinkConfig(lambda_=lam, r1=2, r2=1, e=e, e_d=e_d)
        for lam in (0.2, 0.9) for e in (1, 3) for e_d in (1, 4)
    ]
    report = lemma1_suite(configs, 1e-10, SOLVER)
    assert report.passed
    assert len(report.results) == len(configs)


def test_monotone_suite(fig1, kconfig):
    report = monotone_suite([fig1, kconfig, table2_config(0.3)], 1e-9, SOLVER)
    assert report.passed


def test_ties_suite(fig1, kconfig):
    report = ties_suite([fig1, kconfig], SOLVER)
    assert report.passed
    assert all(r.margin > 0 for r in report.results)


def test_bmax_suite():
    report = bmax_suite([table1_config(1), table2_config(0.2)], 1, SOLVER)
    assert report.passed


def test_deviation_suite_unit_harvest():
    cfg = LinkConfig(lambda_=0.3, r1=4, r2=2, e=1, e_d=2)
    seen = []
    report = deviation_suite([cfg], [0.3, 0.7], 4096, seed=1, sigmas=3.0, solver=SOLVER, on_config=seen.append)
    assert report.passed
    assert [r.config.endswith("[bound]") for r in report.results] == [False, True]
    assert seen == [cfg.label()]


@pytest.mark.slow
def test_deviation_suite_flags_larger_harvest(fig1):
    report = run_suite("deviation", load_settings(), [fig1], n_rollouts=4096)
    assert not report.passed
    assert report.worst.margin < -0.5


def test_oracle_configs_are_reproducible():
    assert oracle_configs(5, seed=7) == oracle_configs(5, seed=7)
    assert oracle_configs(5, seed=7) != oracle_configs(5, seed=8)


def test_oracle_suite():
    configs = oracle_configs(2, seed=7)
    report = oracle_suite(configs, 8192, seed=3, analytic_tolerance=1e-8, sigmas=4.0, solver=SOLVER)
    assert len(report.results) == 4
    assert report.passed


def test_suite_configs():
    settings = load_settings()
    assert len(suite_configs("lemma1", settings)) == 162
    assert len(suite_configs("bmax", settings)) == 10
    assert len(suite_configs("oracle", settings)) == settings.verify.oracle.n_configs
    assert set(SUITES) == {"lemma1", "monotone", "deviation", "bmax", "ties", "oracle"}


def test_unknown_suite():
    settings = load_settings()
    with pytest.raises(ValueError):
        suite_configs("convexity", settings)
    with pytest.raises(ValueError):
        run_suite("convexity", settings, configs=[])
