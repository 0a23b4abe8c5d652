"""
Invariant suites over built-in config matrices.

Each suite returns a SuiteReport with one row per config (the deviation
suite adds a row for the on-lattice bound). A row's margin is positive
when the check passes and says by how much.
"""

import logging
from typing import Callable, Optional

import numpy as np

from .absorption import (
    deviation_lower_bound,
    deviation_states,
    deviation_sweep,
    lemma1_closed_form,
    mean_absorption_times,
)
from .config_loader import AppSettings, SolverSettings
from .montecarlo import estimate
from .policies import if_policy
from .solver import ValueTable, check_bmax_invariance, extract_policy, value_iteration_ssp
from .types import CheckResult, LatticeState, LinkConfig, SuiteReport

logger = logging.getLogger(__name__)

SUITES = ("lemma1", "monotone", "deviation", "bmax", "ties", "oracle")

Progress = Optional[Callable[[str], None]]


def _solve(cfg: LinkConfig, solver: SolverSettings) -> ValueTable:
    return value_iteration_ssp(
        cfg, tol=solver.tol, max_iter=solver.max_iter,
        tie_tol=solver.tie_tol, sweep=solver.sweep,
    )


def _row(cfg: LinkConfig, margin: float, detail: str = "", suffix: str = "") -> CheckResult:
    label = cfg.label() + (f" [{suffix}]" if suffix else "")
    return CheckResult(config=label, margin=float(margin), passed=bool(margin >= 0.0), detail=detail)


def lemma1_suite(
    configs: list[LinkConfig],
    tolerance: float,
    solver: SolverSettings,
    on_config: Progress = None,
) -> SuiteReport:
    """Complete-information column of the optimal policy against i/lambda."""
    report = SuiteReport(suite="lemma1")
    for cfg in configs:
        table = mean_absorption_times(extract_policy(_solve(cfg, solver)), cfg)
        errors = [
            abs(table.value(LatticeState(b, cfg.cap_index)) - lemma1_closed_form(b, cfg))
            for b in range(cfg.e_d)
        ]
        worst_b = int(np.argmax(errors))
        report.results.append(
            _row(cfg, tolerance - errors[worst_b], f"max error {errors[worst_b]:.2e} at b={worst_b}")
        )
        if on_config:
            on_config(cfg.label())
    return report


def monotone_suite(
    configs: list[LinkConfig],
    tolerance: float,
    solver: SolverSettings,
    on_config: Progress = None,
) -> SuiteReport:
    """k must not increase with battery or with information."""
    report = SuiteReport(suite="monotone")
    for cfg in configs:
        k = _solve(cfg, solver).k
        rise_b = np.diff(k, axis=0)
        rise_m = np.diff(k, axis=1)
        worst = max(float(rise_b.max()), float(rise_m.max()))
        axis = "b" if rise_b.max() >= rise_m.max() else "m"
        report.results.append(_row(cfg, tolerance - worst, f"largest rise {worst:.2e} along {axis}"))
        if on_config:
            on_config(cfg.label())
    return report


def _tie_margin(vt: ValueTable) -> tuple[float, str]:
    cfg = vt.cfg
    b = np.arange(cfg.b_max + 1)[:, None]
    i = np.arange(cfg.n_info_levels)[None, :]
    open_info = i < cfg.cap_index
    tie_zone = (b >= 1) & (b <= cfg.e_d) & open_info
    id_zone = (b >= cfg.e_d + 1) & open_info
    forced = ~tie_zone & ~id_zone & ~((b >= cfg.e_d) & ~open_info)

    if not np.all(np.isnan(vt.q_id[forced])):
        return -1.0, "decoding offered where harvesting is forced"
    gap = vt.q_eh - vt.q_id
    tie_margin = vt.tie_tol - float(np.max(np.abs(gap[tie_zone])))
    id_margin = float(np.min(gap[id_zone])) - vt.tie_tol
    if np.any(vt.ties != tie_zone):
        extra = int(np.sum(vt.ties & ~tie_zone))
        missing = int(np.sum(tie_zone & ~vt.ties))
        return min(tie_margin, id_margin, -vt.tie_tol), f"{missing} tie(s) missing, {extra} unexpected"
    return min(tie_margin, id_margin), f"tie margin {tie_margin:.2e}, ID margin {id_margin:.3g}"


def ties_suite(
    configs: list[LinkConfig],
    solver: SolverSettings,
    on_config: Progress = None,
) -> SuiteReport:
    """EH and ID tie exactly on 1 <= b <= e_d with open information; ID wins above."""
    report = SuiteReport(suite="ties")
    for cfg in configs:
        margin, detail = _tie_margin(_solve(cfg, solver))
        report.results.append(_row(cfg, margin, detail))
        if on_config:
            on_config(cfg.label())
    return report


def deviation_suite(
    configs: list[LinkConfig],
    rhos: list[float],
    n_rollouts: int,
    seed: int,
    sigmas: float,
    solver: SolverSettings,
    lanes: int = 1,
    on_config: Progress = None,
) -> SuiteReport:
    """
    One slot of power splitting never beats one slot of decoding.

    Simulated with Information First as the continuation. The on-lattice
    bound is checked on every cell where the split battery stays in the
    decode arm's harvesting band.
    """
    report = SuiteReport(suite="deviation")
    for cfg in configs:
        gaps = deviation_sweep(
            cfg, if_policy(cfg), rhos, n_rollouts, seed,
            states=deviation_states(cfg), lanes=lanes,
        )
        margins = [g.gap + sigmas * g.stderr for g in gaps]
        worst = gaps[int(np.argmin(margins))]
        report.results.append(_row(
            cfg, min(margins),
            f"min gap {worst.gap:.4f} +- {worst.stderr:.4f} at (b={worst.b:g}, m={worst.m:g}), rho={worst.rho:g}",
        ))

        vt = _solve(cfg, solver)
        bound_margins = []
        skipped = 0
        for state in deviation_states(cfg):
            for rho in rhos:
                bound = deviation_lower_bound(state, rho, vt, cfg)
                if not bound.same_band:
                    skipped += 1
                    continue
                bound_margins.append(bound.bound - bound.decode_value + solver.tie_tol)
        if bound_margins:
            report.results.append(_row(
                cfg, min(bound_margins),
                f"{len(bound_margins)} cell(s) checked, {skipped} outside the band",
                suffix="bound",
            ))
        if on_config:
            on_config(cfg.label())
    return report


def bmax_suite(
    configs: list[LinkConfig],
    margin: int,
    solver: SolverSettings,
    on_config: Progress = None,
) -> SuiteReport:
    """k(0,0) at b_max = e_d + 2e against b_max grown by margin * e."""
    report = SuiteReport(suite="bmax")
    for cfg in configs:
        base = cfg.with_b_max(cfg.e_d + 2 * cfg.e)
        result = check_bmax_invariance(base, margin=margin, tol=solver.tol)
        report.results.append(_row(
            base, result.tolerance - result.difference,
            f"k={result.k_base:.10f} vs {result.k_extended:.10f} at b_max={result.b_max_extended}",
        ))
        if on_config:
            on_config(base.label())
    return report


def oracle_configs(n_configs: int, seed: int) -> list[LinkConfig]:
    """Reproducible random link configs of modest size."""
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(n_configs):
        r2 = int(rng.integers(1, 4))
        configs.append(LinkConfig(
            lambda_=round(float(rng.uniform(0.2, 0.9)), 2),
            r1=float(rng.integers(r2, 3 * r2 + 1)),
            r2=float(r2),
            e=int(rng.integers(1, 4)),
            e_d=int(rng.integers(1, 7)),
        ))
    return configs


def oracle_suite(
    configs: list[LinkConfig],
    n_episodes: int,
    seed: int,
    analytic_tolerance: float,
    sigmas: float,
    solver: SolverSettings,
    lanes: int = 1,
    on_config: Progress = None,
) -> SuiteReport:
    """Value iteration, the absorbing-chain solve and Monte Carlo must agree."""
    report = SuiteReport(suite="oracle")
    for cfg in configs:
        vt = _solve(cfg, solver)
        policy = extract_policy(vt)
        table = mean_absorption_times(policy, cfg)
        analytic = float(np.max(np.abs(vt.k - table.k)))
        report.results.append(_row(
            cfg, analytic_tolerance - analytic, f"max |VIA - LU| {analytic:.2e}", suffix="analytic",
        ))

        exact = table.value(LatticeState(0, 0))
        result = estimate(policy, cfg, n_episodes, seed, lanes=lanes)
        miss = abs(result.mean - exact)
        report.results.append(_row(
            cfg, sigmas * result.stderr - miss,
            f"MC {result.mean:.4f} +- {result.stderr:.4f} vs exact {exact:.4f}",
            suffix="monte carlo",
        ))
        if on_config:
            on_config(cfg.label())
    return report


def suite_configs(name: str, settings: AppSettings) -> list[LinkConfig]:
    """Config matrix a suite runs over."""
    verify = settings.verify
    if name == "lemma1":
        return verify.lemma1.configs()
    if name == "oracle":
        return oracle_configs(verify.oracle.n_configs, verify.oracle.seed)
    if name in ("monotone", "ties", "deviation", "bmax"):
        return getattr(verify, name).configs
    raise ValueError(f"Unknown suite '{name}'; choose from {', '.join(SUITES)}")


def run_suite(
    name: str,
    settings: AppSettings,
    configs: Optional[list[LinkConfig]] = None,
    n_rollouts: Optional[int] = None,
    lanes: int = 1,
    on_config: Progress = None,
) -> SuiteReport:
    """
    Run one named suite, over its built-in matrix unless configs are given.

    Raises:
        ValueError: If the suite name is unknown
    """
    configs = configs if configs is not None else suite_configs(name, settings)
    verify = settings.verify
    solver = settings.solver
    mc = settings.montecarlo
    logger.info("Running %s suite over %d config(s)", name, len(configs))

    if name == "lemma1":
        report = lemma1_suite(configs, verify.lemma1.tolerance, solver, on_config)
    elif name == "monotone":
        report = monotone_suite(configs, verify.monotone.tolerance, solver, on_config)
    elif name == "ties":
        report = ties_suite(configs, solver, on_config)
    elif name == "deviation":
        report = deviation_suite(
            configs, verify.deviation.rhos, n_rollouts or mc.rollouts, mc.seed,
            verify.deviation.sigmas, solver, lanes, on_config,
        )
    elif name == "bmax":
        report = bmax_suite(configs, verify.bmax.margin, solver, on_config)
    elif name == "oracle":
        report = oracle_suite(
            configs, verify.oracle.episodes, mc.seed, verify.oracle.analytic_tolerance,
            verify.oracle.sigmas, solver, lanes, on_config,
        )
    else:
        raise ValueError(f"Unknown suite '{name}'; choose from {', '.join(SUITES)}")

    if not report.passed:
        worst = report.worst
        logger.warning("%s suite failed; worst %s (margin %.3g)", name, worst.config, worst.margin)
    return report
