"""Seeded Monte Carlo studies of the estimator's limit behavior.

Replicates are independent work units; the sub-seed of replicate r at
horizon n derives from (master_seed, n, r) alone, so reports are pure
functions of the configuration regardless of worker count or scheduling.
Aggregation runs single-threaded over results ordered by (n, r).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import kurtosis, skew

from perifou.asymptotics import limit_summary
from perifou.errors import DegenerateDesign
from perifou.estimator import MODES, estimate
from perifou.fgn import FgnSpec, generate_fgn_circulant, substream_seed
from perifou.model import FouModel, coupling_gap, path_from_increments, simulate_path

# Default PASS thresholds for the normality study.
CLT_FROBENIUS_TOL = 0.25
CLT_SKEWNESS_TOL = 0.3
CLT_KURTOSIS_TOL = 0.5

# Relative slack allowed between the fitted log-gap slope and -alpha.
COUPLING_SLOPE_TOL = 0.10

_GAP_FLOOR = 1e-9


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo study configuration."""

    model: FouModel
    n_list: tuple
    replicates: int
    step: float
    mode: str
    master_seed: int
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if self.replicates < 2:
            raise ValueError(f"replicates must be >= 2, got {self.replicates}")
        if not self.n_list:
            raise ValueError("n_list must be nonempty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError(f"n_list must be strictly increasing, got {self.n_list}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class ReplicateResult:
    n: int
    replicate: int
    seed: int
    theta_hat: tuple | None
    degenerate: bool
    noise_vector: tuple | None = None


@dataclass
class ExperimentReport:
    """Per-replicate estimates plus deterministic aggregates.

    ``wall_clock`` is informational only and is never serialized, so
    artifacts are byte-identical across repeated runs.
    """

    kind: str
    theta: tuple
    hurst: float
    n_list: tuple
    replicates: int
    step: float
    mode: str
    master_seed: int
    rows: list
    aggregates: dict
    passed: bool
    wall_clock: float = 0.0
    scaled_cov: np.ndarray | None = None
    reference_cov: np.ndarray | None = None
    mu_block_rel_frobenius: float | None = None
    full_rel_frobenius: float | None = None
    skewness: list | None = None
    excess_kurtosis: list | None = None
    ecdf_distance: list | None = None
    noise_scaled_var: list | None = None
    degenerate_limit: bool | None = None


def _run_replicate(model: FouModel, step: float, mode: str, master_seed: int, job):
    n, r = job
    seed = substream_seed(master_seed, n, r)
    path = simulate_path(model, n, step, seed, stationary_start=True)
    alpha_ref = model.alpha if mode == "oracle_divergence" else None
    try:
        result = estimate(path, mode=mode, sigma=model.sigma, alpha_for_correction=alpha_ref)
    except DegenerateDesign:
        return ReplicateResult(n, r, seed, None, True, None)
    noise = None
    if result.noise_vector is not None:
        noise = tuple(float(v) for v in result.noise_vector)
    return ReplicateResult(n, r, seed, tuple(float(v) for v in result.theta_hat), False, noise)


def _map_jobs(config: McConfig, jobs) -> list:
    job_fn = partial(
        _run_replicate, config.model, config.step, config.mode, config.master_seed
    )
    if config.workers == 1:
        return [job_fn(job) for job in jobs]
    chunk = max(1, len(jobs) // (config.workers * 8))
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(job_fn, jobs, chunksize=chunk))


def aggregate_rows(theta: np.ndarray, rows) -> dict:
    """Per-n summary of the estimation errors.

    Pure function of the replicate table, so aggregates recomputed from the
    emitted CSV reproduce the report bit for bit.
    """
    theta = np.asarray(theta, dtype=float)
    per_n: dict = {}
    for n in sorted({row.n for row in rows}):
        block = sorted(
            (row for row in rows if row.n == n), key=lambda row: row.replicate
        )
        kept = [row.theta_hat for row in block if not row.degenerate]
        excluded = sum(1 for row in block if row.degenerate)
        if not kept:
            per_n[n] = {
                "included": 0,
                "excluded": excluded,
                "mean": None,
                "bias": None,
                "rmse": None,
                "se": None,
            }
            continue
        estimates = np.array(kept)
        errors = estimates - theta
        count = errors.shape[0]
        mean = errors.mean(axis=0) + theta
        bias = errors.mean(axis=0)
        rmse = np.sqrt((errors**2).mean(axis=0))
        se = errors.std(axis=0, ddof=1) / math.sqrt(count)
        per_n[n] = {
            "included": count,
            "excluded": excluded,
            "mean": [float(v) for v in mean],
            "bias": [float(v) for v in bias],
            "rmse": [float(v) for v in rmse],
            "se": [float(v) for v in se],
        }
    return per_n


def _consistency_passed(aggregates: dict, n_list) -> bool:
    """RMSE nonincreasing up to one inversion, and halved from the smallest
    to the largest horizon, componentwise."""
    if any(aggregates[n]["rmse"] is None for n in n_list):
        return False
    rmse = {n: np.asarray(aggregates[n]["rmse"]) for n in n_list}
    for comp in range(rmse[n_list[0]].size):
        series = [rmse[n][comp] for n in n_list]
        inversions = sum(1 for a, b in zip(series, series[1:]) if b > a)
        if inversions > 1:
            return False
        if series[-1] > 0.5 * series[0]:
            return False
    return True


def run_consistency(config: McConfig) -> ExperimentReport:
    """Estimate on independent stationary-start paths for each n in
    n_list and summarize bias and RMSE per component."""
    start = time.perf_counter()
    jobs = [(n, r) for n in config.n_list for r in range(config.replicates)]
    rows = _map_jobs(config, jobs)
    rows.sort(key=lambda row: (row.n, row.replicate))
    theta = config.model.theta
    aggregates = aggregate_rows(theta, rows)
    passed = _consistency_passed(aggregates, config.n_list)
    return ExperimentReport(
        kind="consistency",
        theta=tuple(float(v) for v in theta),
        hurst=config.model.hurst,
        n_list=config.n_list,
        replicates=config.replicates,
        step=config.step,
        mode=config.mode,
        master_seed=config.master_seed,
        rows=rows,
        aggregates=aggregates,
        passed=passed,
        wall_clock=time.perf_counter() - start,
    )


def _ecdf_distance(z: np.ndarray) -> float:
    """Sup distance between the empirical CDF of z and the standard normal."""
    z = np.sort(z)
    n = z.size
    cdf = ndtr(z)
    upper = np.max(np.arange(1, n + 1) / n - cdf)
    lower = np.max(cdf - np.arange(0, n) / n)
    return float(max(upper, lower))


def run_clt(config: McConfig) -> ExperimentReport:
    """Scaled-error study at a single horizon n.

    Computes e_r = n^{1-H} (theta_hat_r - theta), compares its empirical
    covariance with sigma^2 C Sigma_0 C, reports moment and ECDF
    diagnostics per component, and records the empirical variance of the
    scaled noise vector n^{-H} R_n (bounded in L^2).
    """
    if len(config.n_list) != 1:
        raise ValueError("run_clt expects a single horizon in n_list")
    start = time.perf_counter()
    n = config.n_list[0]
    jobs = [(n, r) for r in range(config.replicates)]
    rows = _map_jobs(config, jobs)
    rows.sort(key=lambda row: (row.n, row.replicate))
    theta = config.model.theta
    aggregates = aggregate_rows(theta, rows)

    kept = [row for row in rows if not row.degenerate]
    estimates = np.array([row.theta_hat for row in kept])
    hurst = config.model.hurst
    scaled = n ** (1.0 - hurst) * (estimates - theta)
    scaled_cov = np.cov(scaled, rowvar=False, ddof=1)

    summary = limit_summary(config.model)
    reference = summary.asym_cov
    p = config.model.p
    mu_block = scaled_cov[:p, :p]
    mu_ref = reference[:p, :p]
    mu_frob = float(np.linalg.norm(mu_block - mu_ref) / np.linalg.norm(mu_ref))
    full_frob = None
    if not summary.degenerate_limit:
        full_frob = float(np.linalg.norm(scaled_cov - reference) / np.linalg.norm(reference))

    skewness = [float(v) for v in skew(scaled, axis=0)]
    excess = [float(v) for v in kurtosis(scaled, axis=0)]
    sds = scaled.std(axis=0, ddof=1)
    means = scaled.mean(axis=0)
    ecdf = [
        _ecdf_distance((scaled[:, c] - means[c]) / sds[c]) for c in range(scaled.shape[1])
    ]

    noise_var = None
    if all(row.noise_vector is not None for row in kept):
        noise = np.array([row.noise_vector for row in kept])
        noise_var = [float(v) for v in (n ** (-hurst) * noise).var(axis=0, ddof=1)]

    passed = (
        mu_frob <= CLT_FROBENIUS_TOL
        and max(abs(v) for v in skewness) <= CLT_SKEWNESS_TOL
        and max(abs(v) for v in excess) <= CLT_KURTOSIS_TOL
    )
    return ExperimentReport(
        kind="clt",
        theta=tuple(float(v) for v in theta),
        hurst=hurst,
        n_list=config.n_list,
        replicates=config.replicates,
        step=config.step,
        mode=config.mode,
        master_seed=config.master_seed,
        rows=rows,
        aggregates=aggregates,
        passed=passed,
        wall_clock=time.perf_counter() - start,
        scaled_cov=scaled_cov,
        reference_cov=reference,
        mu_block_rel_frobenius=mu_frob,
        full_rel_frobenius=full_frob,
        skewness=skewness,
        excess_kurtosis=excess,
        ecdf_distance=ecdf,
        noise_scaled_var=noise_var,
        degenerate_limit=summary.degenerate_limit,
    )


@dataclass
class CouplingReport:
    """Shared-noise gap between two starts of the same recursion."""

    alpha: float
    gap0: float
    times: np.ndarray
    gaps: np.ndarray
    slope: float | None
    exact_match: bool
    passed: bool
    wall_clock: float = 0.0


def run_coupling(config: McConfig, gap0: float = 1.0) -> CouplingReport:
    """Decay of |X_t - X~_t| when both recursions share one noise path.

    Simulates a stationary-start path, replays the recursion from a start
    offset by ``gap0`` with the same increments, and fits the slope of
    log gap against time at whole periods.  PASS when the fitted slope is
    within COUPLING_SLOPE_TOL of -alpha (relatively).
    """
    start = time.perf_counter()
    horizon = config.n_list[-1]
    model = config.model
    seed = substream_seed(config.master_seed, horizon, 0)
    stationary = simulate_path(model, horizon, config.step, seed, stationary_start=True)
    shifted = path_from_increments(
        model, stationary.driver_increments, float(stationary.x[0]) + gap0, config.step
    )
    gaps_full = coupling_gap(model, shifted, stationary)
    m = round(1.0 / config.step)
    times = np.arange(1, horizon + 1, dtype=float)
    gaps = gaps_full[(np.arange(1, horizon + 1) * m)]

    if gap0 == 0.0:
        return CouplingReport(
            alpha=model.alpha,
            gap0=gap0,
            times=times,
            gaps=gaps,
            slope=None,
            exact_match=True,
            passed=True,
            wall_clock=time.perf_counter() - start,
        )
    usable = gaps > _GAP_FLOOR
    slope = None
    passed = False
    if usable.sum() >= 3:
        slope = float(np.polyfit(times[usable], np.log(gaps[usable]), 1)[0])
        passed = abs(slope + model.alpha) <= COUPLING_SLOPE_TOL * model.alpha
    return CouplingReport(
        alpha=model.alpha,
        gap0=gap0,
        times=times,
        gaps=gaps,
        slope=slope,
        exact_match=False,
        passed=passed,
        wall_clock=time.perf_counter() - start,
    )


def wiener_variance_study(
    basis, hurst: float, n_list, replicates: int, step: float, master_seed: int
) -> dict:
    """Empirical variance of n^{-H} * sum_k phi_i(t_k) dB_k per component.

    The isometry estimate bounds each variance by the squared uniform bound
    of the basis; the study also checks that the variance shows no
    significant upward trend in n.
    """
    m = round(1.0 / step)
    bound = basis.bound**2
    per_n = {}
    for n in n_list:
        t_left = np.arange(n * m) * step
        phi = basis.evaluate(t_left)
        draws = np.empty((replicates, basis.p))
        for r in range(replicates):
            seed = substream_seed(master_seed, n, r)
            db = generate_fgn_circulant(FgnSpec(hurst, step, n * m, seed))
            draws[r] = phi @ db
        scaled = n ** (-hurst) * draws
        variance = scaled.var(axis=0, ddof=1)
        se = variance * math.sqrt(2.0 / (replicates - 1))
        per_n[int(n)] = {
            "variance": [float(v) for v in variance],
            "se": [float(v) for v in se],
        }
    ns = sorted(per_n)
    trend_ok = True
    for a, b in zip(ns, ns[1:]):
        va = np.asarray(per_n[a]["variance"])
        vb = np.asarray(per_n[b]["variance"])
        sa = np.asarray(per_n[a]["se"])
        sb = np.asarray(per_n[b]["se"])
        if np.any(vb - va > 2.0 * np.sqrt(sa**2 + sb**2)):
            trend_ok = False
    within_bound = all(
        v <= bound for n in ns for v in per_n[n]["variance"]
    )
    return {
        "bound": float(bound),
        "per_n": per_n,
        "trend_ok": trend_ok,
        "passed": bool(within_bound and trend_ok),
    }


def write_replicates_csv(report: ExperimentReport, filename) -> None:
    """Per-replicate table: n,replicate,seed,mu_hat_1..mu_hat_p,alpha_hat,degenerate."""
    p = len(report.theta) - 1
    mu_cols = ",".join(f"mu_hat_{i + 1}" for i in range(p))
    with open(filename, "w", encoding="utf-8") as handle:
        handle.write(f"n,replicate,seed,{mu_cols},alpha_hat,degenerate\n")
        for row in report.rows:
            if row.degenerate:
                fields = [""] * (p + 1)
                flag = "1"
            else:
                fields = [f"{v:.17g}" for v in row.theta_hat]
                flag = "0"
            handle.write(
                f"{row.n},{row.replicate},{row.seed}," + ",".join(fields) + f",{flag}\n"
            )


def read_replicates_csv(filename) -> list:
    """Parse a per-replicate table back into ReplicateResult rows."""
    rows = []
    with open(filename, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
        p = sum(1 for name in header if name.startswith("mu_hat_"))
        for line in handle:
            parts = line.strip().split(",")
            if len(parts) < p + 5:
                continue
            degenerate = parts[-1] == "1"
            theta = None
            if not degenerate:
                theta = tuple(float(v) for v in parts[3 : 3 + p + 1])
            rows.append(
                ReplicateResult(
                    n=int(parts[0]),
                    replicate=int(parts[1]),
                    seed=int(parts[2]),
                    theta_hat=theta,
                    degenerate=degenerate,
                )
            )
    return rows


def report_to_dict(report: ExperimentReport) -> dict:
    """JSON-ready aggregate report; volatile fields (wall clock) excluded."""
    out = {
        "kind": report.kind,
        "theta": list(report.theta),
        "hurst": report.hurst,
        "n_list": list(report.n_list),
        "replicates": report.replicates,
        "step": report.step,
        "mode": report.mode,
        "master_seed": report.master_seed,
        "aggregates": {str(n): agg for n, agg in report.aggregates.items()},
        "passed": bool(report.passed),
    }
    if report.kind == "clt":
        out["scaled_error_covariance"] = report.scaled_cov.tolist()
        out["reference_covariance"] = report.reference_cov.tolist()
        out["mu_block_rel_frobenius"] = report.mu_block_rel_frobenius
        out["full_rel_frobenius"] = report.full_rel_frobenius
        out["skewness"] = report.skewness
        out["excess_kurtosis"] = report.excess_kurtosis
        out["ecdf_distance"] = report.ecdf_distance
        out["noise_scaled_variance"] = report.noise_scaled_var
        out["degenerate_limit"] = report.degenerate_limit
    return out


def write_qq_csv(report: ExperimentReport, filename) -> None:
    """QQ data for external plotting: component,quantile,empirical,theoretical.

    Theoretical quantiles come from the zero-mean normal with the reference
    asymptotic standard deviation of each component.
    """
    if report.kind != "clt":
        raise ValueError("QQ data is produced by the clt study")
    theta = np.asarray(report.theta)
    n = report.n_list[0]
    kept = [row for row in report.rows if not row.degenerate]
    estimates = np.array([row.theta_hat for row in kept])
    scaled = n ** (1.0 - report.hurst) * (estimates - theta)
    sds = np.sqrt(np.diag(report.reference_cov))
    count = scaled.shape[0]
    quantiles = (np.arange(1, count + 1) - 0.5) / count
    normal_q = ndtri(quantiles)
    with open(filename, "w", encoding="utf-8") as handle:
        handle.write("component,quantile,empirical,theoretical\n")
        for comp in range(scaled.shape[1]):
            empirical = np.sort(scaled[:, comp])
            theoretical = sds[comp] * normal_q
            for q, e, t in zip(quantiles, empirical, theoretical):
                handle.write(f"{comp + 1},{q:.17g},{e:.17g},{t:.17g}\n")


def write_coupling_csv(reports, filename) -> None:
    """Decay table for one or more coupling runs: alpha,t,gap."""
    with open(filename, "w", encoding="utf-8") as handle:
        handle.write("alpha,t,gap\n")
        for rep in reports:
            for t, gap in zip(rep.times, rep.gaps):
                handle.write(f"{rep.alpha:.17g},{t:.17g},{gap:.17g}\n")
