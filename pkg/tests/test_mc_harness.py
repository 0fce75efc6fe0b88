import dataclasses
import math

import numpy as np
import pytest

from calmreg.config import ExperimentKind, NoiseKind
from calmreg.exceptions import ValidationError
from calmreg.experiments import mc_harness
from calmreg.experiments.mc_harness import MonteCarloHarness, stream
from calmreg.experiments.reporting import ExperimentConfig


def test_streams_are_reproducible():
    assert np.array_equal(stream(1, 2, 3).random(5), stream(1, 2, 3).random(5))
    assert not np.array_equal(stream(1, 2, 3).random(5), stream(1, 2, 4).random(5))


@pytest.mark.asyncio
async def test_upper_tail_within_bound():
    cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_UPPER, seed=5, dim=5, x_grid=[0.0, 1.0, 2.0],
                           replications=20_000)
    report = await MonteCarloHarness().run(cfg)
    assert report.passed
    assert [row.x for row in report.rows] == [0.0, 1.0, 2.0]
    assert report.rows[0].theoretical == 1.0
    assert report.metadata.config_hash == cfg.config_hash()


@pytest.mark.asyncio
async def test_exceedance_matches_exact_tail():
    # for dim 2 the squared norm is exponential with mean 2, so the threshold
    # 2 + 2sqrt(2x) + 2x is exceeded with probability exp(-1 - sqrt(2x) - x)
    cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_UPPER, seed=21, dim=2, x_grid=[0.5, 1.0, 2.0],
                           replications=40_000)
    report = await MonteCarloHarness().run(cfg)
    for row in report.rows:
        exact = math.exp(-1.0 - math.sqrt(2.0 * row.x) - row.x)
        assert abs(row.empirical - exact) <= 4.0 * math.sqrt(exact * (1.0 - exact) / cfg.replications)


@pytest.mark.asyncio
async def test_std_error_halves_with_four_times_replications():
    harness = MonteCarloHarness()
    errors = []
    for replications in (4_000, 16_000):
        cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_UPPER, seed=13, dim=5, x_grid=[0.5],
                               replications=replications)
        errors.append((await harness.run(cfg)).rows[0].std_error)
    assert 1.7 <= errors[0] / errors[1] <= 2.3


@pytest.mark.asyncio
async def test_report_does_not_depend_on_thread_count():
    cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_UPPER, seed=11, dim=8, x_grid=[1.0],
                           replications=10_000)
    single = MonteCarloHarness()
    single.threads = 1
    pooled = MonteCarloHarness()
    pooled.threads = 4
    pooled.block_size = single.block_size
    assert (await single.run(cfg)).to_csv() == (await pooled.run(cfg)).to_csv()


@pytest.mark.asyncio
async def test_lower_tail():
    cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_LOWER, seed=2, dim=16, x_grid=[1.0],
                           replications=20_000)
    report = await MonteCarloHarness().run(cfg)
    assert report.passed
    assert report.rows[0].empirical < 0.1


@pytest.mark.asyncio
async def test_exponential_regime_reports_crossover():
    cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_EXP_REGIME, seed=3, dim=20, g=6.0,
                           noise=NoiseKind.RADEMACHER_SCALED, x_grid=[1.0, 2.0], replications=5_000)
    report = await MonteCarloHarness().run(cfg)
    assert report.passed
    assert report.rows[-1].statistic == "x_c" and report.rows[-1].informational
    assert report.metadata.notes["x_c"] > 0


@pytest.mark.asyncio
async def test_tail_runner_rejects_other_experiments():
    cfg = ExperimentConfig(experiment=ExperimentKind.RISK, replications=100)
    with pytest.raises(ValidationError):
        await MonteCarloHarness().run_tail_experiment(cfg)


@pytest.mark.asyncio
async def test_moment_domination():
    report = await MonteCarloHarness().run_moment_domination(seed=1, instances=10)
    assert report.passed
    assert len(report.rows) == 9


@pytest.mark.asyncio
async def test_linear_estimation_is_exact(fast_checks):
    cfg = ExperimentConfig(experiment=ExperimentKind.ESTIMATION, seed=4, fixture="linear", p=2, n=50,
                           penalty=0.5, replications=100)
    report = await MonteCarloHarness().run(cfg)
    rows = {row.statistic: row for row in report.rows}
    assert rows["fisher_residual_max"].empirical < 1e-9
    assert rows["wilks_residual_max"].empirical < 1e-8
    assert rows["omega_GG"].empirical == 0.0
    assert rows["nonconvergence_rate"].empirical == 0.0
    assert report.metadata.notes["bounded"]
    assert not rows["fisher_within_bound"].informational
    assert report.passed


@pytest.mark.asyncio
async def test_infinite_bounds_do_not_count_as_passes(monkeypatch, fast_checks):
    real_constants = mc_harness.calming_constants

    def out_of_range(*args, **kwargs):
        return dataclasses.replace(real_constants(*args, **kwargs), varrho=0.75)

    monkeypatch.setattr(mc_harness, "calming_constants", out_of_range)
    cfg = ExperimentConfig(experiment=ExperimentKind.ESTIMATION, seed=4, fixture="linear", p=2, n=50,
                           penalty=0.5, replications=100)
    report = await MonteCarloHarness().run(cfg)
    rows = {row.statistic: row for row in report.rows}
    assert not report.metadata.notes["bounded"]
    assert not report.metadata.notes["conditions_met"]
    for name in ("fisher_within_bound", "wilks_within_bound", "fisher_ratio_p95", "wilks_ratio_p95"):
        assert rows[name].informational
    assert rows["fisher_ratio_p95"].theoretical == math.inf
    assert not rows["fisher_ratio_median"].informational
    assert report.passed


@pytest.mark.asyncio
async def test_sine_estimation(fast_checks):
    cfg = ExperimentConfig(experiment=ExperimentKind.ESTIMATION, seed=6, fixture="sine", p=2, n=100,
                           sigma=0.05, replications=100)
    report = await MonteCarloHarness().run(cfg)
    rows = {row.statistic: row for row in report.rows}
    omega, varrho = rows["omega_GG"].empirical, rows["varrho"].empirical
    bounded = report.metadata.notes["bounded"]
    assert bounded == (omega < 1.0 and varrho < 0.5)
    assert rows["fisher_within_bound"].informational == (not bounded)
    assert rows["wilks_within_bound"].informational == (not bounded)
    assert rows["fisher_ratio_median"].passed
    assert rows["nonconvergence_rate"].empirical <= 0.01
    assert rows["fisher_residual_max"].empirical > 0.0


@pytest.mark.asyncio
async def test_unpenalized_risk_matches_dimension(fast_checks):
    cfg = ExperimentConfig(experiment=ExperimentKind.RISK, seed=9, fixture="linear", p=5, n=50,
                           penalty=0.0, replications=400, risk_tolerance=0.15)
    report = await MonteCarloHarness().run(cfg)
    rows = {row.statistic: row for row in report.rows}
    assert rows["risk_trimmed_mean"].theoretical == pytest.approx(5.0)
    assert rows["bias_sq"].theoretical == 0.0
    assert report.passed


@pytest.mark.slow
@pytest.mark.asyncio
async def test_quick_acceptance_suite():
    result = await MonteCarloHarness().run_acceptance_suite(seed=0, quick=True)
    assert len(result.summary.rows) == 13
    assert result.passed, result.summary.failures
    assert "tail_upper" in result.details
