"""Least-squares drift estimation from a sample path.

The estimator solves the normal equations Q theta_hat = P assembled from
left-endpoint Riemann(-Stieltjes) sums on the simulation grid.  Q has a
closed-form inverse because the basis block is n * I_p up to discretization
error.  Two integral conventions are supported for the quadratic term
integral X dX:

* ``naive_pathwise``  - forward sums of observed increments only; for
  long-memory noise this estimator of alpha is biased low because the
  pathwise integral of X against the driver has positive mean.
* ``oracle_divergence`` - subtracts the analytic Skorokhod trace term
  sigma^2 * correction from the pathwise integral X dX (equivalently adds
  it to the last component of P, which carries -integral X dX), recovering
  the zero-mean divergence-integral convention under which the estimator
  is consistent.  Exact in simulation where sigma is known; with an
  unknown mean-reversion rate a two-pass plug-in uses the naive alpha_hat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from perifou.errors import DegenerateDesign, LengthMismatch, MissingDriver, PartialPeriod
from perifou.fgn import fgn_autocovariance
from perifou.model import SamplePath

MODES = ("naive_pathwise", "oracle_divergence")

# Below this residual variance the data carry no information about alpha.
DEGENERACY_THRESHOLD = 1e-12

# Floor for the plug-in mean-reversion rate in the two-pass correction;
# the naive alpha_hat can dip below zero when the trace term dominates.
_PLUG_IN_FLOOR = 1e-6


@dataclass(frozen=True)
class DesignStats:
    """Path functionals entering the normal equations.

    gram      (p, p)  integral phi_i phi_j dt over [0, n]
    cross     (p,)    integral phi_i X dt
    energy    float   integral X^2 dt
    loadings  (p,)    cross / n
    precision float   1 / (energy/n - |loadings|^2), the reciprocal
                      residual variance of X after projecting on the basis
    n_periods int
    """

    gram: np.ndarray
    cross: np.ndarray
    energy: float
    loadings: np.ndarray
    precision: float
    n_periods: int


@dataclass(frozen=True)
class EstimateResult:
    theta_hat: np.ndarray
    response: np.ndarray
    design: DesignStats
    mode: str
    noise_vector: np.ndarray | None
    correction: float

    @property
    def mu_hat(self) -> np.ndarray:
        return self.theta_hat[:-1]

    @property
    def alpha_hat(self) -> float:
        return float(self.theta_hat[-1])

    def to_report(self) -> dict:
        return {
            "mode": self.mode,
            "theta_hat": [float(v) for v in self.theta_hat],
            "mu_hat": [float(v) for v in self.mu_hat],
            "alpha_hat": self.alpha_hat,
            "lambda_n": [float(v) for v in self.design.loadings],
            "gamma_n": float(self.design.precision),
            "degenerate": False,
            "n_periods": self.design.n_periods,
            "correction": float(self.correction),
        }


def forward_stieltjes(f_values: np.ndarray, increments: np.ndarray) -> float:
    """Left-endpoint Riemann-Stieltjes sum: sum_k f(t_k) (X_{k+1} - X_k).

    ``f_values`` may carry one trailing entry (the right endpoint), which
    is unused.
    """
    f_values = np.asarray(f_values, dtype=float)
    increments = np.asarray(increments, dtype=float)
    if f_values.size == increments.size + 1:
        f_values = f_values[:-1]
    elif f_values.size != increments.size:
        raise LengthMismatch(
            f"{f_values.size} integrand values for {increments.size} increments"
        )
    return float(np.dot(f_values, increments))


def _grid_periods(path: SamplePath) -> int:
    horizon = float(path.grid[-1])
    n = round(horizon)
    if n < 1 or abs(horizon - n) > 1e-9:
        raise PartialPeriod(f"path spans {horizon} periods, expected a whole number")
    return n


def build_design(path: SamplePath, require_identifiable: bool = True) -> DesignStats:
    """Left-endpoint Riemann sums of the basis/path functionals.

    The basis Gram block is computed from the samples rather than assumed
    to be n * I_p, so its deviation from the identity is a genuine
    discretization diagnostic.  A path whose residual variance after
    projection on the basis is numerically zero (e.g. a constant path
    against the constant basis) raises DegenerateDesign; pass
    ``require_identifiable=False`` to inspect such designs, in which case
    ``precision`` is infinite.
    """
    n = _grid_periods(path)
    step = path.step
    t_left = path.grid[:-1]
    x_left = path.x[:-1]
    phi = path.model.basis.evaluate(t_left)
    gram = (phi * step) @ phi.T
    cross = step * (phi @ x_left)
    energy = step * float(np.dot(x_left, x_left))
    loadings = cross / n
    residual = energy / n - float(np.dot(loadings, loadings))
    if residual <= DEGENERACY_THRESHOLD:
        if require_identifiable:
            raise DegenerateDesign(
                f"residual variance {residual:.3e} <= {DEGENERACY_THRESHOLD:.0e}; "
                "mean reversion is unidentifiable"
            )
        precision = math.inf
    else:
        precision = 1.0 / residual
    return DesignStats(
        gram=gram,
        cross=cross,
        energy=energy,
        loadings=loadings,
        precision=precision,
        n_periods=n,
    )


def normal_matrix(design: DesignStats) -> np.ndarray:
    """Assemble Q = [[G, -a], [-a^t, b]]."""
    p = design.cross.size
    q = np.empty((p + 1, p + 1))
    q[:p, :p] = design.gram
    q[:p, p] = -design.cross
    q[p, :p] = -design.cross
    q[p, p] = design.energy
    return q


def normal_matrix_inverse(design: DesignStats) -> np.ndarray:
    """Closed-form inverse of the normal matrix.

    Q^{-1} = (1/n) [[I_p + g L L^t, g L], [g L^t, g]] with loadings L and
    precision g, by block (Schur) inversion of [[I, -L], [-L^t, b/n]];
    valid because the basis Gram block equals n * I_p up to discretization
    error.  Note the positive off-diagonal blocks: the two minus signs of
    Q cancel there.
    """
    residual = design.energy / design.n_periods - float(
        np.dot(design.loadings, design.loadings)
    )
    if residual <= DEGENERACY_THRESHOLD:
        raise DegenerateDesign(
            f"residual variance {residual:.3e} <= {DEGENERACY_THRESHOLD:.0e}"
        )
    p = design.loadings.size
    g = design.precision
    lam = design.loadings
    inv = np.empty((p + 1, p + 1))
    inv[:p, :p] = np.eye(p) + g * np.outer(lam, lam)
    inv[:p, p] = g * lam
    inv[p, :p] = g * lam
    inv[p, p] = g
    return inv / design.n_periods


def discrete_trace_correction(
    alpha: float, hurst: float, step: float, n_steps: int, stationary: bool = True
) -> float:
    """Exact mean of the forward sum of X against its driver, per unit sigma.

    For the Euler chain with decay factor a = 1 - alpha*step,
    E[sum_k X_k dB_k] = sigma * sum_k sum_{m>=1} a^{m-1} rho_H(m) step^{2H}
    with the inner sum running over the available history of row k: the
    whole past for stationary starts, lags m <= k for fixed starts.
    Subtracting this makes the discretized quadratic response mean-zero,
    matching the divergence-integral convention on the grid exactly; the
    continuous-time :func:`skorokhod_correction` overshoots it by the
    same-cell kernel mass T*step^{2H-1}/2, which vanishes only slowly.
    """
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (1/2, 1), got {hurst}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    a = 1.0 - alpha * step
    if not 0.0 < a < 1.0:
        raise ValueError(f"alpha*step must lie in (0, 1), got {alpha * step}")
    weight = step ** (2.0 * hurst)
    if stationary:
        cutoff = int(math.ceil(math.log(1e18) / -math.log(a))) + 1
        capped = min(cutoff, 1 << 21)
        lags = np.arange(1, capped + 1)
        terms = a ** (lags - 1.0) * fgn_autocovariance(hurst, lags) * weight
        total = float(terms.sum())
        if capped < cutoff:
            # analytic tail: kernel density approximation of the remaining lags
            b = 2.0 * hurst - 1.0
            alpha_h = hurst * b
            tail = (
                alpha_h
                * math.exp(alpha * step)
                * alpha**-b
                * math.gamma(b)
                * (1.0 - gammainc(b, alpha * step * capped))
            )
            total += tail
        return n_steps * total
    lags = np.arange(1, n_steps)
    if lags.size == 0:
        return 0.0
    terms = a ** (lags - 1.0) * fgn_autocovariance(hurst, lags) * weight
    return float(np.dot(n_steps - lags, terms))


def skorokhod_correction(alpha: float, hurst: float, horizon: float) -> float:
    """Trace term converting the pathwise integral of X against the driver
    into the zero-mean divergence integral.

    Equals H(2H-1) * int_0^T int_0^t e^{-alpha u} u^{2H-2} du dt.  The inner
    integral is alpha^{1-2H} * gamma_lower(2H-1, alpha t); integrating by
    parts gives the closed form below.  The caller multiplies by sigma (for
    the noise vector) or sigma^2 (for the response vector).
    """
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (1/2, 1), got {hurst}")
    if horizon < 0.0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    if horizon == 0.0:
        return 0.0
    a = 2.0 * hurst - 1.0
    z = alpha * horizon
    lower_a = math.gamma(a) * gammainc(a, z)
    lower_a1 = math.gamma(a + 1.0) * gammainc(a + 1.0, z)
    alpha_h = hurst * a
    return alpha_h * alpha ** (-a) * (horizon * lower_a - lower_a1 / alpha)


def _response_vector(path: SamplePath, phi: np.ndarray) -> np.ndarray:
    dx = np.diff(path.x)
    x_left = path.x[:-1]
    p = phi.shape[0]
    response = np.empty(p + 1)
    for i in range(p):
        response[i] = forward_stieltjes(phi[i], dx)
    response[p] = -forward_stieltjes(x_left, dx)
    return response


def estimate(
    path: SamplePath,
    mode: str = "naive_pathwise",
    sigma: float | None = None,
    alpha_for_correction: float | None = None,
) -> EstimateResult:
    """Least-squares estimate theta_hat = Q^{-1} P from one sample path.

    In ``oracle_divergence`` mode the quadratic response entry is shifted
    by sigma^2 times the Skorokhod trace term, evaluated at
    ``alpha_for_correction`` when given (verification runs with known
    truth) and otherwise at the naive alpha_hat from a first pass.  The
    noise vector R with P = Q theta + sigma R is returned whenever driver
    increments are available, assembled under the same integral convention
    as the mode, which makes theta_hat - theta = sigma Q^{-1} R an exact
    identity of the discretized system.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    model = path.model
    design = build_design(path)
    t_left = path.grid[:-1]
    phi = model.basis.evaluate(t_left)
    response = _response_vector(path, phi)
    inverse = normal_matrix_inverse(design)

    correction = 0.0
    if mode == "oracle_divergence":
        if path.driver_increments is None:
            raise MissingDriver("oracle_divergence mode needs driver increments")
        if sigma is None:
            sigma = model.sigma
        if alpha_for_correction is None:
            naive_alpha = float((inverse @ response)[-1])
            alpha_for_correction = max(naive_alpha, _PLUG_IN_FLOOR)
        correction = discrete_trace_correction(
            alpha_for_correction,
            model.hurst,
            path.step,
            path.x.size - 1,
            stationary=path.stationary_start,
        )
        response = response.copy()
        response[-1] += sigma**2 * correction

    theta_hat = inverse @ response

    noise_vector = None
    if path.driver_increments is not None:
        db = path.driver_increments
        x_left = path.x[:-1]
        noise_vector = np.empty(model.p + 1)
        noise_vector[:-1] = phi @ db
        noise_vector[-1] = -float(np.dot(x_left, db))
        if mode == "oracle_divergence":
            noise_vector[-1] += (sigma if sigma is not None else model.sigma) * correction

    return EstimateResult(
        theta_hat=theta_hat,
        response=response,
        design=design,
        mode=mode,
        noise_vector=noise_vector,
        correction=correction,
    )
