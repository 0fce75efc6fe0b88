#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Seeded Monte Carlo experiments and the acceptance suite.

Work is split into independent blocks evaluated with ``asyncio.to_thread``
under a semaphore of ``CALMREG_THREADS`` workers. Every block draws from its
own counter-based stream ``Philox(SeedSequence([seed, tag, index]))`` and
results are reduced in block order, so reports do not depend on scheduling.
"""

import asyncio
import math
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from calmreg.calming import (CalmedProblem, ExtendedPoint, bias_and_risk_bounds,
                             calming_constants, effective_dimension, effective_score, extended_loglik,
                             fisher_wilks_report, fit_joint, fit_profile, info_pack, population_target)
from calmreg.config import CalmregConfig, ExperimentKind, NoiseKind, get_config
from calmreg.exceptions import CalmregError, NumericalError, ValidationError
from calmreg.experiments.reporting import (ExperimentConfig, Report, ReportMetadata, ReportRow,
                                           canonical_hash, library_versions)
from calmreg.linalg import op_norm, psd_sqrt, random_psd
from calmreg.logging_utils import get_logger
from calmreg.model import LocalSet, Smoother, build_fixture
from calmreg.penalty import PenaltyPath, effective_dim_w, select_w_balance, select_w_risk
from calmreg.qform_bounds import (SpectrumStats, crossover_sides, exp_moment_bound, gaussian_det_moment,
                                  lower_tail_threshold, solve_xc, spectrum_stats, z_quantile,
                                  zc_quantile)
from calmreg.quad_oracle import QuadObjective, linear_perturb_shift, maximize, quad_penalty_bias
from calmreg.semiparam import (BlockHessian, orthogonalize, partial_quad_shift, sandwich_check,
                               semiorthogonality_argmax_check, separability_rho,
                               transformed_mixed_derivative)
from calmreg.tilted_moments import ScalarLaw, iid_tau_scaling, sample_law, tau34, tilted_cumulants

STREAM_TAGS = {
    ExperimentKind.TAIL_UPPER: 1,
    ExperimentKind.TAIL_LOWER: 2,
    ExperimentKind.TAIL_EXP_REGIME: 3,
    ExperimentKind.ESTIMATION: 4,
    ExperimentKind.RISK: 5,
}
MOMENT_TAG = 6
SETUP_TAG = 7
ACCEPTANCE_TAG = 8
REPLICATION_CHUNK = 25
DEFAULT_EXP_REGIME_G = 6.0
MAX_NONCONVERGENCE = 0.01
# absolute slack on residual ratios; exact fits leave rounding noise only
RATIO_SLACK = 1e-9


def stream(seed: int, tag: int, index: int) -> np.random.Generator:
    """Counter-based generator for block ``index`` of the stream ``tag``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag, index])))


def noise_law(kind: NoiseKind) -> ScalarLaw:
    if kind is NoiseKind.GAUSSIAN:
        return ScalarLaw.gaussian()
    if kind is NoiseKind.RADEMACHER_SCALED:
        return ScalarLaw.rademacher()
    return ScalarLaw.centered_uniform()


def _mc_std_error(p_hat: float, count: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / count)


def _exceedance_row(name: str, x: float, bound: float, hits: int, count: int, constant: str,
                    slack: float = 1.0) -> ReportRow:
    p_hat = hits / count
    margin = 3.0 * math.sqrt(min(bound, 1.0) / count)
    return ReportRow(statistic=name, x=x, theoretical=bound, empirical=p_hat,
                     std_error=_mc_std_error(p_hat, count), passed=p_hat <= slack * bound + margin,
                     constant=constant)


@dataclass
class RegressionSetup:
    """Shared read-only inputs of the estimation and risk experiments."""
    prob0: CalmedProblem
    theta_star: np.ndarray
    m_star: np.ndarray
    law: ScalarLaw
    V_sq: np.ndarray


@dataclass
class AcceptanceResult:
    summary: Report
    details: Dict[str, Report]

    @property
    def passed(self) -> bool:
        return self.summary.passed


class MonteCarloHarness:
    """Runs seeded experiments and assembles reports."""

    def __init__(self, config: Optional[CalmregConfig] = None):
        self.config = config or get_config()
        self.threads = self.config.monte_carlo.threads
        self.block_size = self.config.monte_carlo.block_size
        self.logger = get_logger(__name__)

    async def _fan_out(self, fn: Callable[[Any], Any], items: Sequence[Any]) -> List[Any]:
        """Evaluate ``fn`` on every item in worker threads; results keep item order."""
        semaphore = asyncio.Semaphore(self.threads)

        async def run(item):
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        return list(await asyncio.gather(*(run(item) for item in items)))

    def _blocks(self, total: int) -> List[tuple]:
        count, rest = divmod(total, self.block_size)
        sizes = [self.block_size] * count + ([rest] if rest else [])
        return list(enumerate(sizes))

    def _metadata(self, cfg: ExperimentConfig, started: float, **notes) -> ReportMetadata:
        return ReportMetadata(experiment=cfg.experiment.value, seed=cfg.seed, config_hash=cfg.config_hash(),
                              wall_time_s=time.perf_counter() - started, versions=library_versions(),
                              notes=notes)

    async def run(self, cfg: ExperimentConfig) -> Report:
        if cfg.experiment in (ExperimentKind.TAIL_UPPER, ExperimentKind.TAIL_LOWER,
                              ExperimentKind.TAIL_EXP_REGIME):
            return await self.run_tail_experiment(cfg)
        if cfg.experiment is ExperimentKind.ESTIMATION:
            return await self.run_estimation_experiment(cfg)
        return await self.run_risk_experiment(cfg)

    async def run_tail_experiment(self, cfg: ExperimentConfig) -> Report:
        """Empirical exceedance of the deviation thresholds for ``B = I_dim``.

        Upper and lower tails compare with ``e⁻ˣ``; the exponential regime
        compares the piecewise ``z_c(x)`` threshold with ``3e⁻ˣ``.
        """
        started = time.perf_counter()
        kind = cfg.experiment
        stats = SpectrumStats.identity(cfg.dim)
        law = noise_law(cfg.noise)
        notes: Dict[str, Any] = {}

        if kind is ExperimentKind.TAIL_UPPER:
            thresholds = [z_quantile(stats, x).z_sq for x in cfg.x_grid]
            bounds = [math.exp(-x) for x in cfg.x_grid]
            constant = "1e^-x"
        elif kind is ExperimentKind.TAIL_LOWER:
            thresholds = [stats.dim_a if x == 0 else lower_tail_threshold(stats, x).threshold for x in cfg.x_grid]
            bounds = [math.exp(-x) for x in cfg.x_grid]
            constant = "1e^-x"
        elif kind is ExperimentKind.TAIL_EXP_REGIME:
            sol = solve_xc(cfg.g or DEFAULT_EXP_REGIME_G, stats)
            thresholds = [stats.dim_a if x == 0 else zc_quantile(sol, stats, x) ** 2 for x in cfg.x_grid]
            bounds = [3.0 * math.exp(-x) for x in cfg.x_grid]
            constant = "3e^-x"
            notes["x_c"] = sol.x_c
        else:
            raise ValidationError(f"{kind.value} is not a tail experiment", check="experiment")
        limits = np.asarray(thresholds)
        lower = kind is ExperimentKind.TAIL_LOWER

        def block(item) -> np.ndarray:
            index, size = item
            xi = sample_law(law, stream(cfg.seed, STREAM_TAGS[kind], index), (size, cfg.dim))
            sq = np.einsum("ij,ij->i", xi, xi)
            events = sq[:, None] < limits[None, :] if lower else sq[:, None] > limits[None, :]
            return events.sum(axis=0)

        counts = await self._fan_out(block, self._blocks(cfg.replications))
        hits = np.sum(counts, axis=0)
        rows = [_exceedance_row(f"{kind.value}_exceedance", x, bound, int(h), cfg.replications, constant)
                for x, bound, h in zip(cfg.x_grid, bounds, hits)]
        if "x_c" in notes:
            rows.append(ReportRow(statistic="x_c", theoretical=notes["x_c"], empirical=notes["x_c"],
                                  passed=True, informational=True))
        self.logger.info("tail_experiment_done", experiment=kind.value, replications=cfg.replications,
                         passed=all(r.passed for r in rows))
        return Report(rows=rows, metadata=self._metadata(cfg, started, **notes))

    def _regression_setup(self, cfg: ExperimentConfig) -> RegressionSetup:
        model, theta_star = build_fixture(cfg.fixture, n=cfg.n, p=cfg.p, seed=cfg.seed)
        if cfg.q is None or cfg.q == model.n:
            smoother = Smoother.identity(model.n)
        else:
            smoother = Smoother.random_projection(cfg.q, model.n, stream(cfg.seed, SETUP_TAG, 0))
        m_star = model.value(theta_star)
        G_sq = cfg.penalty * np.eye(model.p)
        local = LocalSet.around(model, smoother, theta_star, 1.0, self.config.conditions.c_ring)
        prob0 = CalmedProblem(model, smoother, G_sq, smoother.matrix @ m_star, local)
        V_sq = cfg.sigma ** 2 * smoother.matrix @ smoother.matrix.T
        return RegressionSetup(prob0, theta_star, m_star, noise_law(cfg.noise), V_sq)

    def _draw_data(self, setup: RegressionSetup, cfg: ExperimentConfig, rep: int):
        rng = stream(cfg.seed, STREAM_TAGS[cfg.experiment], rep)
        eps = cfg.sigma * sample_law(setup.law, rng, setup.m_star.size)
        phi = setup.prob0.smoother.matrix
        return setup.prob0.with_data(phi @ (setup.m_star + eps)), phi @ eps

    def _replication_chunks(self, replications: int) -> List[range]:
        return [range(start, min(start + REPLICATION_CHUNK, replications))
                for start in range(0, replications, REPLICATION_CHUNK)]

    async def run_estimation_experiment(self, cfg: ExperimentConfig) -> Report:
        """Fisher and Wilks residuals per replication, warm-started at ``θ*_G``."""
        started = time.perf_counter()
        setup = self._regression_setup(cfg)
        prob0 = setup.prob0
        target = population_target(prob0, setup.m_star, setup.theta_star)
        theta_G = target.theta
        info = info_pack(prob0, theta_G)
        dims = effective_dimension(prob0, theta_G, setup.V_sq, cfg.x_level, info)
        consts = calming_constants(prob0, theta_G, setup.V_sq, cfg.x_level,
                                   rng=stream(cfg.seed, SETUP_TAG, 1))
        D_GG = psd_sqrt(info.D_GG_sq)

        def chunk(reps: range) -> List[tuple]:
            out = []
            for rep in reps:
                prob, eps_smoothed = self._draw_data(setup, cfg, rep)
                fit = fit_profile(prob, theta_G)
                score = effective_score(prob, theta_G, eps_smoothed, info)
                score.r_GG = dims.r_GG
                report = fisher_wilks_report(prob, fit.theta, theta_G, score, consts, info)
                spread = float(np.linalg.norm(D_GG @ (fit.theta - theta_G)))
                out.append((fit.converged, report, spread))
            return out

        results = [r for part in await self._fan_out(chunk, self._replication_chunks(cfg.replications))
                   for r in part]
        failures = sum(1 for converged, _, _ in results if not converged)
        if failures > MAX_NONCONVERGENCE * cfg.replications:
            raise NumericalError(f"solver failed to converge in {failures} of {cfg.replications} replications")

        reports = [r for _, r, _ in results]
        fisher_ratio = np.array([r.fisher_ratio for r in reports])
        wilks_ratio = np.array([r.wilks_ratio for r in reports])
        fisher_in = float(np.mean([r.fisher_ok for r in reports]))
        wilks_in = float(np.mean([r.wilks_ok for r in reports]))
        omega = reports[0].omega_GG
        # an infinite bound holds trivially, so its rows only describe the run
        bounded = all(math.isfinite(r.fisher_bound) and math.isfinite(r.wilks_bound) for r in reports)
        radius = (1.0 + omega) * dims.r_GG if math.isfinite(omega) else math.inf
        exceed = sum(1 for _, _, spread in results if spread > radius)
        R = cfg.replications
        conc_bound = 3.0 * math.exp(-cfg.x_level)
        rows = [
            ReportRow(statistic="fisher_ratio_p95", theoretical=reports[0].fisher_factor,
                      empirical=float(np.percentile(fisher_ratio, 95)),
                      passed=float(np.percentile(fisher_ratio, 95)) <= reports[0].fisher_factor + RATIO_SLACK,
                      constant="3e^-x", informational=not bounded),
            ReportRow(statistic="wilks_ratio_p95", theoretical=reports[0].wilks_factor,
                      empirical=float(np.percentile(wilks_ratio, 95)),
                      passed=float(np.percentile(wilks_ratio, 95)) <= reports[0].wilks_factor + RATIO_SLACK,
                      constant="3e^-x", informational=not bounded),
            ReportRow(statistic="fisher_within_bound", theoretical=0.95, empirical=fisher_in,
                      std_error=_mc_std_error(fisher_in, R), passed=fisher_in >= 0.95, constant="3e^-x",
                      informational=not bounded),
            ReportRow(statistic="wilks_within_bound", theoretical=0.95, empirical=wilks_in,
                      std_error=_mc_std_error(wilks_in, R), passed=wilks_in >= 0.95, constant="3e^-x",
                      informational=not bounded),
            ReportRow(statistic="fisher_ratio_median", theoretical=0.2,
                      empirical=float(np.median(fisher_ratio)), passed=float(np.median(fisher_ratio)) <= 0.2),
            _exceedance_row("concentration_exceedance", cfg.x_level, conc_bound, exceed, R, "3e^-x"),
            ReportRow(statistic="fisher_residual_max", theoretical=0.0,
                      empirical=max(r.fisher_residual for r in reports), passed=True, informational=True),
            ReportRow(statistic="wilks_residual_max", theoretical=0.0,
                      empirical=max(r.wilks_residual for r in reports), passed=True, informational=True),
            ReportRow(statistic="omega_GG", theoretical=1.0 / 3.0, empirical=omega,
                      passed=omega <= 1.0 / 3.0, informational=True),
            ReportRow(statistic="varrho", theoretical=0.5, empirical=consts.varrho,
                      passed=consts.varrho < 0.5, informational=True),
            ReportRow(statistic="nonconvergence_rate", theoretical=MAX_NONCONVERGENCE,
                      empirical=failures / R, passed=True, informational=True),
        ]
        self.logger.info("estimation_experiment_done", fixture=cfg.fixture, replications=R,
                         conditions_met=reports[0].conditions_met, fisher_within=fisher_in)
        return Report(rows=rows, metadata=self._metadata(cfg, started, p_GG=dims.p_GG, r_GG=dims.r_GG,
                                                         tau=consts.tau, c3=consts.c3, bounded=bounded,
                                                         conditions_met=reports[0].conditions_met))

    async def run_risk_experiment(self, cfg: ExperimentConfig) -> Report:
        """Trimmed empirical risk ``‖𝔻_𝔾(θ̃ − θ*)‖²`` against the bias-variance prediction.

        Replications outside ``Ω(x) = {‖Φε‖ ≤ z(𝔙², x)}`` are dropped and the
        mean is taken over the remaining ones.
        """
        started = time.perf_counter()
        setup = self._regression_setup(cfg)
        prob0 = setup.prob0
        theta_star = setup.theta_star
        info = info_pack(prob0, theta_star)
        dims = effective_dimension(prob0, theta_star, setup.V_sq, cfg.x_level, info)
        consts = calming_constants(prob0, theta_star, setup.V_sq, cfg.x_level,
                                   rng=stream(cfg.seed, SETUP_TAG, 2))
        prediction = bias_and_risk_bounds(prob0, theta_star, consts, dims, info)
        trim_level = z_quantile(spectrum_stats(setup.V_sq), cfg.x_level).z
        D_GG = psd_sqrt(info.D_GG_sq)

        def chunk(reps: range) -> List[tuple]:
            out = []
            for rep in reps:
                prob, eps_smoothed = self._draw_data(setup, cfg, rep)
                fit = fit_profile(prob, theta_star)
                loss = float(np.sum((D_GG @ (fit.theta - theta_star)) ** 2))
                out.append((fit.converged, loss, float(np.linalg.norm(eps_smoothed)) <= trim_level))
            return out

        results = [r for part in await self._fan_out(chunk, self._replication_chunks(cfg.replications))
                   for r in part]
        failures = sum(1 for converged, _, _ in results if not converged)
        if failures > MAX_NONCONVERGENCE * cfg.replications:
            raise NumericalError(f"solver failed to converge in {failures} of {cfg.replications} replications")
        kept = np.array([loss for _, loss, inside in results if inside])
        if kept.size < 2:
            raise NumericalError("too few replications inside the trimming event")
        mean = float(kept.mean())
        std_error = float(kept.std(ddof=1) / math.sqrt(kept.size))
        predicted = prediction.risk_prediction
        rel_error = abs(mean - predicted) / predicted if predicted > 0 else abs(mean)
        rows = [
            ReportRow(statistic="risk_trimmed_mean", x=cfg.x_level, theoretical=predicted, empirical=mean,
                      std_error=std_error, passed=rel_error <= cfg.risk_tolerance, constant="1e^-x"),
            ReportRow(statistic="risk_relative_error", theoretical=cfg.risk_tolerance, empirical=rel_error,
                      passed=rel_error <= cfg.risk_tolerance),
            ReportRow(statistic="trimmed_fraction", x=cfg.x_level, theoretical=math.exp(-cfg.x_level),
                      empirical=1.0 - kept.size / cfg.replications, passed=True, informational=True),
            ReportRow(statistic="p_GG", theoretical=dims.p_GG, empirical=dims.p_GG, passed=True,
                      informational=True),
            ReportRow(statistic="bias_sq", theoretical=prediction.b_GG ** 2, empirical=prediction.b_GG ** 2,
                      passed=True, informational=True),
        ]
        self.logger.info("risk_experiment_done", fixture=cfg.fixture, predicted=predicted, empirical=mean)
        return Report(rows=rows, metadata=self._metadata(cfg, started, delta_star=prediction.delta_star))

    async def run_moment_domination(self, seed: int = 0, instances: int = 100, max_dim: int = 20,
                                    mu_grid: Sequence[float] = tuple(np.round(np.arange(0.1, 1.0, 0.1), 1))
                                    ) -> Report:
        """Sub-gaussian moment bound against the exact Gaussian moment on random ``‖B‖ = 1``."""
        started = time.perf_counter()

        def instance(index: int) -> np.ndarray:
            rng = stream(seed, MOMENT_TAG, index)
            dim = int(rng.integers(1, max_dim + 1))
            B = random_psd(rng, dim, int(rng.integers(1, dim + 1)))
            B /= op_norm(B)
            stats = spectrum_stats(B)
            return np.array([exp_moment_bound(stats, mu) / gaussian_det_moment(B, mu) for mu in mu_grid])

        ratios = np.vstack(await self._fan_out(instance, list(range(instances))))
        worst = ratios.min(axis=0)
        rows = [ReportRow(statistic="moment_domination_min_ratio", x=float(mu), theoretical=1.0,
                          empirical=float(w), passed=bool(w >= 1.0 - 1e-12))
                for mu, w in zip(mu_grid, worst)]
        config_hash = canonical_hash({"experiment": "moment_domination", "seed": seed, "instances": instances,
                                      "max_dim": max_dim, "mu_grid": [float(mu) for mu in mu_grid]})
        return Report(rows=rows, metadata=ReportMetadata(
            experiment="moment_domination", seed=seed, config_hash=config_hash,
            wall_time_s=time.perf_counter() - started, versions=library_versions()))

    async def run_acceptance_suite(self, seed: int = 0, quick: bool = False) -> AcceptanceResult:
        """Evaluate every acceptance criterion; one summary row per criterion."""
        started = time.perf_counter()
        suite = AcceptanceSuite(self, seed, quick)
        rows: List[ReportRow] = []
        for name, check in suite.criteria():
            try:
                row = await check()
            except CalmregError as exc:
                self.logger.error("criterion_error", criterion=name, error=str(exc))
                row = ReportRow(statistic=name, theoretical=0.0, empirical=math.nan, passed=False)
            row = row.model_copy(update={"statistic": name})
            self.logger.info("criterion_done", criterion=name, passed=row.passed)
            rows.append(row)
        digest = canonical_hash({"experiment": "acceptance", "seed": seed, "quick": quick})
        summary = Report(rows=rows, metadata=ReportMetadata(
            experiment="acceptance", seed=seed, config_hash=digest, wall_time_s=time.perf_counter() - started,
            versions=library_versions(), notes={"quick": quick}))
        return AcceptanceResult(summary, suite.details)


class AcceptanceSuite:
    """The acceptance criteria as individual coroutine checks."""

    def __init__(self, harness: MonteCarloHarness, seed: int, quick: bool):
        self.harness = harness
        self.seed = seed
        self.quick = quick
        self.details: Dict[str, Report] = {}

    def _size(self, full: int, quick: int) -> int:
        return quick if self.quick else full

    def criteria(self):
        return [
            ("criterion_01_gaussian_upper_tail", self.gaussian_upper_tail),
            ("criterion_02_lower_tail", self.lower_tail),
            ("criterion_03_exp_regime_tail", self.exp_regime_tail),
            ("criterion_04_moment_domination", self.moment_domination),
            ("criterion_05_crossover_solver", self.crossover_solver),
            ("criterion_06_joint_profile", self.joint_profile),
            ("criterion_07_quadratic_oracles", self.quadratic_oracles),
            ("criterion_08_fisher_wilks", self.fisher_wilks),
            ("criterion_09_risk_decomposition", self.risk_decomposition),
            ("criterion_10_penalty_selection", self.penalty_selection),
            ("criterion_11_orthogonalization", self.orthogonalization),
            ("criterion_12_tilted_moments", self.tilted_moments),
            ("criterion_13_determinism", self.determinism),
        ]

    def _rng(self, index: int) -> np.random.Generator:
        return stream(self.seed, ACCEPTANCE_TAG, index)

    async def _experiment(self, key: str, **fields) -> Report:
        report = await self.harness.run(ExperimentConfig(seed=self.seed, **fields))
        self.details[key] = report
        return report

    @staticmethod
    def _from_report(report: Report, metric: str = "empirical") -> ReportRow:
        checked = [r for r in report.rows if not r.informational]
        worst = max(checked, key=lambda r: getattr(r, metric) - r.theoretical)
        return ReportRow(statistic="", x=worst.x, theoretical=worst.theoretical, empirical=worst.empirical,
                         std_error=worst.std_error, passed=report.passed, constant=worst.constant)

    async def gaussian_upper_tail(self) -> ReportRow:
        report = await self._experiment("tail_upper", experiment=ExperimentKind.TAIL_UPPER, dim=20,
                                        x_grid=[0.5, 1.0, 2.0, 3.0],
                                        replications=self._size(200_000, 20_000))
        return self._from_report(report)

    async def lower_tail(self) -> ReportRow:
        report = await self._experiment("tail_lower", experiment=ExperimentKind.TAIL_LOWER, dim=16,
                                        x_grid=[1.0], replications=self._size(200_000, 20_000))
        row = report.rows[0]
        margin = 3.0 * math.sqrt(row.theoretical / self._size(200_000, 20_000))
        return row.model_copy(update={"passed": row.empirical <= 1.1 * row.theoretical + margin})

    async def exp_regime_tail(self) -> ReportRow:
        report = await self._experiment("tail_exp_regime", experiment=ExperimentKind.TAIL_EXP_REGIME,
                                        noise=NoiseKind.RADEMACHER_SCALED, dim=20, g=DEFAULT_EXP_REGIME_G,
                                        x_grid=[1.0, 2.0, 3.0], replications=self._size(200_000, 20_000))
        row = self._from_report(report)
        beyond = report.metadata.notes["x_c"] < 3.0
        return row.model_copy(update={"passed": row.passed and beyond})

    async def moment_domination(self) -> ReportRow:
        report = await self.harness.run_moment_domination(self.seed)
        self.details["moment_domination"] = report
        worst = min(report.rows, key=lambda r: r.empirical)
        return worst.model_copy(update={"passed": report.passed})

    async def crossover_solver(self) -> ReportRow:
        stats = SpectrumStats(4.0, 4.0, 1.0)
        sol = solve_xc(20.0, stats)
        lhs, rhs = crossover_sides(20.0, stats, sol.x_c)
        grid = np.linspace(100.0, 200.0, 100_001)
        residual = np.array([np.subtract(*crossover_sides(20.0, stats, x)) for x in grid])
        k = int(np.argmax(residual < 0))
        oracle = 0.5 * (grid[k - 1] + grid[k])
        spacing = grid[1] - grid[0]
        passed = abs(lhs - rhs) <= 1e-8 and 135.0 < sol.x_c < 140.0 and abs(sol.x_c - oracle) <= spacing
        return ReportRow(statistic="", theoretical=oracle, empirical=sol.x_c, std_error=spacing, passed=passed)

    async def joint_profile(self) -> ReportRow:
        seeds = self._size(50, 10)
        cases = [(name, s) for name in ("linear", "exp_decay", "sine") for s in range(seeds)]

        def gap(case) -> float:
            name, s = case
            model, theta_star = build_fixture(name, n=50, p=2, seed=s)
            smoother = Smoother.identity(model.n)
            rng = stream(self.seed, ACCEPTANCE_TAG, 1000 + s)
            Y = model.value(theta_star) + 0.05 * rng.standard_normal(model.n)
            prob = CalmedProblem.from_observations(model, smoother, 0.01 * np.eye(model.p), Y)
            profile = fit_profile(prob, theta_star)
            joint = fit_joint(prob, ExtendedPoint(theta_star, prob.Z))
            return float(np.linalg.norm(joint.theta - profile.theta))

        worst = max(await self.harness._fan_out(gap, cases))
        return ReportRow(statistic="", theoretical=1e-8, empirical=worst, passed=worst <= 1e-8)

    async def quadratic_oracles(self) -> ReportRow:
        count = self._size(100, 20)

        def instance(index: int) -> float:
            rng = self._rng(2000 + index)
            p = int(rng.integers(1, 21))
            W = rng.standard_normal((p, p))
            F = W @ W.T + p * np.eye(p)
            center = rng.standard_normal(p)
            q = QuadObjective(F, center)
            A = rng.standard_normal(p)
            shift, _ = linear_perturb_shift(q, A)
            numeric = maximize(lambda u: q(u) + A @ u, np.zeros(p), lambda u: q.gradient(u) + A, lambda u: -F)
            err = np.linalg.norm(numeric - center - shift) / (1.0 + np.linalg.norm(center + shift))

            G_sq = random_psd(rng, p)
            bias, _ = quad_penalty_bias(q, G_sq)
            numeric = maximize(lambda u: q(u) - 0.5 * u @ G_sq @ u, np.zeros(p),
                               lambda u: q.gradient(u) - G_sq @ u, lambda u: -(F + G_sq))
            err = max(err, np.linalg.norm(numeric - center - bias) / (1.0 + np.linalg.norm(center + bias)))

            qn = int(rng.integers(1, 21))
            M = rng.standard_normal((p + qn, p + qn))
            blocks = BlockHessian.from_full(M @ M.T + (p + qn) * np.eye(p + qn), p)
            dev = rng.standard_normal(qn)
            numeric = maximize(lambda t: -0.5 * t @ blocks.Dtt @ t - t @ blocks.A @ dev, np.zeros(p),
                               lambda t: -blocks.Dtt @ t - blocks.A @ dev, lambda t: -blocks.Dtt)
            shift = partial_quad_shift(blocks, dev)
            return max(err, np.linalg.norm(numeric - shift) / (1.0 + np.linalg.norm(shift)))

        worst = max(await self.harness._fan_out(instance, list(range(count))))
        return ReportRow(statistic="", theoretical=1e-10, empirical=worst, passed=worst <= 1e-10)

    async def fisher_wilks(self) -> ReportRow:
        linear = await self._experiment("estimation_linear", experiment=ExperimentKind.ESTIMATION,
                                        fixture="linear", p=2, n=100, sigma=1.0, penalty=0.5, replications=100)
        worst_linear = max(r.empirical for r in linear.rows
                           if r.statistic in ("fisher_residual_max", "wilks_residual_max"))
        sine = await self._experiment("estimation_sine", experiment=ExperimentKind.ESTIMATION,
                                      fixture="sine", p=2, n=100, sigma=0.05,
                                      replications=self._size(300, 100))
        by_name = {r.statistic: r for r in sine.rows}
        if not sine.metadata.notes["bounded"]:
            self.harness.logger.info("sine_outside_calming_conditions", omega=by_name["omega_GG"].empirical,
                             varrho=by_name["varrho"].empirical)
        bound_rows = [by_name["fisher_within_bound"], by_name["wilks_within_bound"]]
        passed = (worst_linear <= 1e-10 and by_name["fisher_ratio_median"].passed
                  and all(r.passed for r in bound_rows if not r.informational))
        median = by_name["fisher_ratio_median"]
        return ReportRow(statistic="", theoretical=median.theoretical, empirical=median.empirical, passed=passed)

    async def risk_decomposition(self) -> ReportRow:
        linear = await self._experiment("risk_linear", experiment=ExperimentKind.RISK, fixture="linear",
                                        p=20, n=100, sigma=1.0, penalty=1.0, replications=1000,
                                        risk_tolerance=0.03)
        sine = await self._experiment("risk_sine", experiment=ExperimentKind.RISK, fixture="sine", p=2,
                                      n=100, sigma=0.05, penalty=0.01, replications=self._size(1000, 300),
                                      risk_tolerance=0.15)
        row = linear.rows[1]
        return ReportRow(statistic="", theoretical=row.theoretical, empirical=row.empirical,
                         passed=linear.passed and sine.passed)

    async def penalty_selection(self) -> ReportRow:
        path = PenaltyPath.from_gram(np.eye(4), np.eye(4), 1.0)
        w_risk = select_w_risk(path).w_star
        grid = np.linspace(0.5, 2.0, 150_001)
        oracle = grid[int(np.argmin([effective_dim_w(path, w) + w for w in grid]))]
        w_balance = select_w_balance(path, 1.0)
        balance_ok = abs(w_balance - (math.sqrt(17.0) - 1.0) / 2.0) <= 1e-6
        decreasing = True
        for index in range(50):
            rng = self._rng(3000 + index)
            p = int(rng.integers(1, 11))
            A = rng.standard_normal((int(rng.integers(p, 3 * p + 1)), p))
            G0 = random_psd(rng, p) + 0.1 * np.eye(p)
            decreasing &= PenaltyPath(A, G0, 1.0, np.logspace(-3, 3, 64)).is_strictly_decreasing()
        passed = abs(w_risk - 1.0) <= 1e-4 and abs(w_risk - oracle) <= 1e-4 and balance_ok and decreasing
        return ReportRow(statistic="", theoretical=1.0, empirical=w_risk, passed=passed)

    async def orthogonalization(self) -> ReportRow:
        model, theta_star = build_fixture("sine", n=50)
        smoother = Smoother.identity(model.n)
        prob = CalmedProblem(model, smoother, np.zeros((2, 2)), model.value(theta_star))
        target = population_target(prob, model.value(theta_star), theta_star)
        transform = orthogonalize(info_pack(prob, target.theta).full_blocks, target.theta)

        def f(theta, eta):
            return extended_loglik(prob, ExtendedPoint(theta, eta))

        mixed = transformed_mixed_derivative(f, transform, (target.theta, target.eta))
        rng = self._rng(4000)
        taus = target.eta + 0.05 * rng.standard_normal((20, prob.q))
        deviation = semiorthogonality_argmax_check(f, transform, target.theta, taus)

        sandwich = True
        for index in range(100):
            rng = self._rng(4100 + index)
            p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            M = rng.standard_normal((p + q, p + q))
            F = M @ M.T + 0.1 * np.eye(p + q)
            blocks = BlockHessian.from_full(F, p)
            sandwich &= sandwich_check(F, blocks, separability_rho(blocks))
        worst = max(float(np.max(np.abs(mixed))), deviation)
        return ReportRow(statistic="", theoretical=1e-6, empirical=worst, passed=worst <= 1e-6 and sandwich)

    async def tilted_moments(self) -> ReportRow:
        gauss = tau34(ScalarLaw.gaussian(), 1.0)
        rad = tau34(ScalarLaw.rademacher(), 1.0)
        endpoint = abs(tilted_cumulants(ScalarLaw.rademacher(), 0.0).d4)
        t3_n, _ = iid_tau_scaling(rad.tau3, rad.tau4, 25)
        t3_4n, _ = iid_tau_scaling(rad.tau3, rad.tau4, 100)
        passed = (gauss.tau3 == 0.0 and gauss.tau4 == 0.0 and abs(endpoint - 2.0) <= 1e-6
                  and abs(rad.tau4 - 2.0) <= 1e-6 and math.isclose(t3_4n, 0.5 * t3_n, rel_tol=1e-12))
        return ReportRow(statistic="", theoretical=2.0, empirical=rad.tau4, passed=passed)

    async def determinism(self) -> ReportRow:
        cfg = ExperimentConfig(experiment=ExperimentKind.TAIL_UPPER, seed=self.seed, dim=20,
                               x_grid=[1.0, 2.0], replications=self._size(50_000, 10_000))
        first = (await self.harness.run(cfg)).to_csv()
        second = (await self.harness.run(cfg)).to_csv()
        return ReportRow(statistic="", theoretical=1.0, empirical=float(first == second), passed=first == second)


def run_tail_experiment(cfg: ExperimentConfig) -> Report:
    return asyncio.run(MonteCarloHarness().run_tail_experiment(cfg))


def run_estimation_experiment(cfg: ExperimentConfig) -> Report:
    return asyncio.run(MonteCarloHarness().run_estimation_experiment(cfg))


def run_risk_experiment(cfg: ExperimentConfig) -> Report:
    return asyncio.run(MonteCarloHarness().run_risk_experiment(cfg))


def run_moment_domination(seed: int = 0, instances: int = 100) -> Report:
    return asyncio.run(MonteCarloHarness().run_moment_domination(seed, instances))


def run_acceptance_suite(seed: int = 0, quick: bool = False) -> AcceptanceResult:
    return asyncio.run(MonteCarloHarness().run_acceptance_suite(seed, quick))


__all__ = [
    "STREAM_TAGS",
    "stream",
    "noise_law",
    "RegressionSetup",
    "AcceptanceResult",
    "MonteCarloHarness",
    "AcceptanceSuite",
    "run_tail_experiment",
    "run_estimation_experiment",
    "run_risk_experiment",
    "run_moment_domination",
    "run_acceptance_suite",
]
