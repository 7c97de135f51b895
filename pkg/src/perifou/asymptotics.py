"""Limit objects of the scaled estimation error.

As the number of observed periods grows, n * Q_n^{-1} converges to a
matrix C built from the loadings of the steady periodic mean on the basis
and the stationary variance of the noise part, while the scaled noise
vector n^{-H} R_n is asymptotically Gaussian with covariance Sigma_0, a
Gram matrix under the long-memory inner product

    <f, g>_H = H(2H-1) int_0^1 int_0^1 f(s) g(t) |t-s|^{2H-2} ds dt.

The scaled error n^{1-H}(theta_hat - theta) is then asymptotically
N(0, sigma^2 C Sigma_0 C) for 1/2 < H < 3/4.  Everything here is
deterministic quadrature; the weak |t-s|^{2H-2} singularity is absorbed
exactly with Gauss-Jacobi weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import roots_jacobi

from perifou.model import FouModel, steady_mean

# H below 3/4 is where the slow central limit theorem applies; the
# matrices remain computable for H up to 1.
CLT_HURST_UPPER = 0.75

DEGENERATE_LIMIT_THRESHOLD = 1e-12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_UNIT_NODES = 0.5 * (_GL_NODES + 1.0)
_UNIT_WEIGHTS = 0.5 * _GL_WEIGHTS

_GL_NODES_FINE, _GL_WEIGHTS_FINE = np.polynomial.legendre.leggauss(128)
_UNIT_NODES_FINE = 0.5 * (_GL_NODES_FINE + 1.0)
_UNIT_WEIGHTS_FINE = 0.5 * _GL_WEIGHTS_FINE


@dataclass(frozen=True)
class LimitSummary:
    """C, Sigma_0 and the asymptotic covariance with their ingredients."""

    loadings: np.ndarray
    precision: float
    stationary_var: float
    c_matrix: np.ndarray
    noise_cov: np.ndarray
    asym_cov: np.ndarray
    alpha_h: float
    clt_valid: bool
    degenerate_limit: bool

    def to_report(self) -> dict:
        c_inv = np.linalg.inv(self.c_matrix)
        return {
            "lambda": [float(v) for v in self.loadings],
            "gamma": float(self.precision),
            "stationary_variance": float(self.stationary_var),
            "alpha_h": float(self.alpha_h),
            "C": self.c_matrix.tolist(),
            "Sigma0": self.noise_cov.tolist(),
            "asymptotic_covariance": self.asym_cov.tolist(),
            "flags": {
                "clt_valid": bool(self.clt_valid),
                "degenerate_limit": bool(self.degenerate_limit),
            },
            "sigma0_minus_c_inverse_frobenius": float(
                np.linalg.norm(self.noise_cov - c_inv)
            ),
        }


def singular_pair_integral(f, g, hurst: float, n_jacobi: int = 48, n_inner: int = 64) -> float:
    """H(2H-1) * int_0^1 int_0^1 f(s) g(t) |t-s|^{2H-2} ds dt.

    Splitting the square along the diagonal and substituting u = t - s
    reduces the double integral to int_0^1 u^{2H-2} F(u) du with the smooth
    symmetrized correlation

        F(u) = int_0^{1-u} ( f(s) g(s+u) + g(s) f(s+u) ) ds.

    The u integral is Gauss-Jacobi with weight exponent 2H-2 (exact for the
    singular factor); F is evaluated by Gauss-Legendre on the shrinking
    interval.  Both callables must be vectorized and bounded on [0, 1].
    """
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (1/2, 1), got {hurst}")
    a = 2.0 * hurst - 2.0
    xj, wj = roots_jacobi(n_jacobi, 0.0, a)
    u = 0.5 * (xj + 1.0)
    nodes, weights = np.polynomial.legendre.leggauss(n_inner)
    s01 = 0.5 * (nodes + 1.0)
    w01 = 0.5 * weights

    length = (1.0 - u)[:, None]
    s = length * s01[None, :]
    shifted = s + u[:, None]
    corr = f(s) * g(shifted) + g(s) * f(shifted)
    inner = (length * w01[None, :] * corr).sum(axis=1)
    integral = 2.0 ** (-a - 1.0) * float(np.dot(wj, inner))
    return hurst * (2.0 * hurst - 1.0) * integral


def loadings_limit(model: FouModel) -> np.ndarray:
    """Projection of the steady periodic mean on the basis:
    Lambda_i = int_0^1 phi_i(t) h~(t) dt."""
    h_vals = steady_mean(model, _UNIT_NODES_FINE)
    phi = model.basis.evaluate(_UNIT_NODES_FINE)
    return phi @ (_UNIT_WEIGHTS_FINE * h_vals)


def stationary_variance(alpha: float, sigma: float, hurst: float) -> float:
    """Variance of the stationary zero-mean process:
    sigma^2 * alpha^{-2H} * H * Gamma(2H)."""
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if sigma < 0.0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    return sigma**2 * alpha ** (-2.0 * hurst) * hurst * math.gamma(2.0 * hurst)


def precision_limit(model: FouModel) -> float:
    """Limit of the reciprocal residual variance:
    gamma = 1 / (int_0^1 h~^2 dt + stationary variance - |Lambda|^2).

    Finite and positive: the Bessel inequality bounds |Lambda|^2 by the
    h~ energy and the stationary variance is strictly positive for
    sigma > 0.
    """
    h_vals = steady_mean(model, _UNIT_NODES_FINE)
    h_energy = float(np.dot(_UNIT_WEIGHTS_FINE, h_vals**2))
    lam = loadings_limit(model)
    var = stationary_variance(model.alpha, model.sigma, model.hurst)
    return 1.0 / (h_energy + var - float(np.dot(lam, lam)))


def normal_inverse_limit(model: FouModel) -> np.ndarray:
    """Limit C of n Q_n^{-1}: [[I_p + g L L^t, g L], [g L^t, g]].

    The off-diagonal blocks are positive (Schur inversion of the limiting
    [[I, -L], [-L^t, .]] normal matrix cancels the two minus signs), which
    is also what the empirical covariance of scaled estimation errors
    reproduces.
    """
    lam = loadings_limit(model)
    g = precision_limit(model)
    p = lam.size
    c = np.empty((p + 1, p + 1))
    c[:p, :p] = np.eye(p) + g * np.outer(lam, lam)
    c[:p, p] = g * lam
    c[p, :p] = g * lam
    c[p, p] = g
    return c


def noise_covariance_limit(model: FouModel) -> np.ndarray:
    """Asymptotic covariance Sigma_0 of the scaled noise vector n^{-H} R_n.

    Gram matrix of (phi_1, ..., phi_p, -h~) under the long-memory inner
    product, assembled entrywise from :func:`singular_pair_integral`.
    """
    h = partial(steady_mean, model)
    functions = list(model.basis.functions) + [h]
    p = model.p
    full = np.empty((p + 1, p + 1))
    for i in range(p + 1):
        for j in range(i, p + 1):
            full[i, j] = singular_pair_integral(functions[i], functions[j], model.hurst)
            full[j, i] = full[i, j]
    sigma0 = full.copy()
    sigma0[:p, p] *= -1.0
    sigma0[p, :p] *= -1.0
    return sigma0


def asymptotic_covariance(model: FouModel) -> np.ndarray:
    """sigma^2 * C * Sigma_0 * C, the covariance of the limiting normal law
    of n^{1-H} (theta_hat - theta)."""
    c = normal_inverse_limit(model)
    sigma0 = noise_covariance_limit(model)
    return model.sigma**2 * (c @ sigma0 @ c)


def limit_summary(model: FouModel) -> LimitSummary:
    """Assemble all limit objects once, with validity flags."""
    lam = loadings_limit(model)
    g = precision_limit(model)
    var = stationary_variance(model.alpha, model.sigma, model.hurst)
    c = normal_inverse_limit(model)
    sigma0 = noise_covariance_limit(model)
    asym = model.sigma**2 * (c @ sigma0 @ c)
    b_bar = float(sigma0[-1, -1])
    return LimitSummary(
        loadings=lam,
        precision=g,
        stationary_var=var,
        c_matrix=c,
        noise_cov=sigma0,
        asym_cov=asym,
        alpha_h=model.hurst * (2.0 * model.hurst - 1.0),
        clt_valid=model.hurst < CLT_HURST_UPPER,
        degenerate_limit=b_bar <= DEGENERATE_LIMIT_THRESHOLD,
    )
