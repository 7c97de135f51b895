"""Mean-reverting model with a 1-periodic mean and fractional noise.

dX_t = (L(t) - alpha * X_t) dt + sigma dB^H_t,   L(t) = sum_i mu_i phi_i(t)

The basis functions phi_i are 1-periodic, bounded and orthonormal in
L^2[0, 1].  Paths are simulated by explicit Euler on a grid with step 1/m;
the sigma-free driver increments are retained so estimators can be checked
against the exact discrete algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from perifou.errors import GridMismatch, InvalidStep, NonnegativeEmbeddingFailure
from perifou.fgn import FgnSpec, generate_fgn_cholesky, generate_fgn_circulant

_SQRT2 = math.sqrt(2.0)

# Burn-in length for stationary starts: e^{-alpha * periods} < this.
BURN_IN_FORGETTING = 1e-8

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_UNIT_NODES = 0.5 * (_GL_NODES + 1.0)
_UNIT_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class BasisFunction:
    """One element of the periodic basis: 1, sqrt2*sin(2 pi k t) or
    sqrt2*cos(2 pi k t).  Picklable, so models can cross process
    boundaries in parallel Monte Carlo runs."""

    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("const", "sin", "cos"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "const" and self.k != 0:
            raise ValueError("constant basis function takes no frequency")
        if self.kind in ("sin", "cos") and self.k < 1:
            raise ValueError(f"{self.kind} basis function needs k >= 1")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.ones_like(t)
        angle = 2.0 * math.pi * self.k * t
        if self.kind == "sin":
            return _SQRT2 * np.sin(angle)
        return _SQRT2 * np.cos(angle)


@dataclass(frozen=True)
class BasisSet:
    """Finite family of 1-periodic basis functions, orthonormal in L^2[0,1].

    ``functions`` holds vectorized callables; ``bound`` is a uniform bound
    on their absolute values.
    """

    functions: tuple
    bound: float

    @property
    def p(self) -> int:
        return len(self.functions)

    @classmethod
    def from_specs(cls, specs) -> "BasisSet":
        """Build from dicts like {"kind": "sin", "k": 2} or {"kind": "const"}."""
        funcs = tuple(BasisFunction(s["kind"], int(s.get("k", 0))) for s in specs)
        if len(set(funcs)) != len(funcs):
            raise ValueError("duplicate basis functions break orthonormality")
        bound = max((1.0 if f.kind == "const" else _SQRT2) for f in funcs)
        return cls(functions=funcs, bound=bound)

    @classmethod
    def from_callables(cls, functions, bound: float | None = None) -> "BasisSet":
        functions = tuple(functions)
        if bound is None:
            grid = np.arange(4096) / 4096.0
            bound = max(float(np.max(np.abs(f(grid)))) for f in functions)
        return cls(functions=functions, bound=bound)

    def evaluate(self, t) -> np.ndarray:
        """Stack phi_i(t) into an array of shape (p,) + shape(t)."""
        t = np.asarray(t, dtype=float)
        return np.stack([f(t) for f in self.functions])

    def validate(self, tol: float = 1e-8, periodicity_tol: float = 1e-12) -> None:
        """Check 1-periodicity and L^2[0,1] orthonormality by quadrature."""
        probe = np.linspace(0.0, 1.0, 37)
        for f in self.functions:
            gap = np.max(np.abs(f(probe + 1.0) - f(probe)))
            if gap > periodicity_tol:
                raise ValueError(f"basis function {f} is not 1-periodic (gap {gap:.2e})")
        values = self.evaluate(_UNIT_NODES)
        gram = (values * _UNIT_WEIGHTS) @ values.T
        err = np.max(np.abs(gram - np.eye(self.p)))
        if err > tol:
            raise ValueError(f"basis is not orthonormal in L^2[0,1] (error {err:.2e})")
        sup = max(float(np.max(np.abs(f(probe)))) for f in self.functions)
        if sup > self.bound + 1e-12:
            raise ValueError(f"basis bound {self.bound} is exceeded ({sup})")


@dataclass(frozen=True)
class FouModel:
    """Full parameterization of the periodic-mean model.

    theta = (mu_1, ..., mu_p, alpha) is the drift parameter vector; sigma
    and hurst are treated as known.
    """

    hurst: float
    alpha: float
    mu: tuple
    sigma: float
    basis: BasisSet
    xi0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (1/2, 1), got {self.hurst}")
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if len(self.mu) != self.basis.p:
            raise ValueError(
                f"mu has {len(self.mu)} entries for {self.basis.p} basis functions"
            )

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def theta(self) -> np.ndarray:
        return np.append(np.asarray(self.mu, dtype=float), self.alpha)


@dataclass(frozen=True)
class SamplePath:
    """Uniform-grid realization of X over whole periods.

    ``driver_increments`` are the sigma-free fBm increments that drove the
    simulation (None for externally observed data).  ``stationary_start``
    records whether x[0] sits on the (burned-in) stationary orbit, which
    determines how much driver history the quadratic response has seen.
    """

    grid: np.ndarray
    x: np.ndarray
    driver_increments: np.ndarray | None
    model: FouModel
    stationary_start: bool = False

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_periods(self) -> int:
        return int(round(float(self.grid[-1])))


def mean_function(model: FouModel, t):
    """Periodic mean L(t) = sum_i mu_i phi_i(t)."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for coeff, f in zip(model.mu, model.basis.functions):
        if coeff != 0.0:
            total = total + coeff * f(t)
    if t.ndim == 0:
        return float(total)
    return total


def _check_step(step: float) -> int:
    if step <= 0.0:
        raise InvalidStep(f"step must be positive, got {step}")
    m = round(1.0 / step)
    if m < 1 or abs(1.0 / step - m) > 1e-9 * m:
        raise InvalidStep(f"step must equal 1/m for integer m, got {step}")
    return m


def _draw_increments(spec: FgnSpec) -> np.ndarray:
    try:
        return generate_fgn_circulant(spec)
    except NonnegativeEmbeddingFailure:
        return generate_fgn_cholesky(spec)


def _euler(model: FouModel, increments: np.ndarray, x0: float, step: float) -> np.ndarray:
    """Run x_{k+1} = x_k + (L(t_k) - alpha x_k) step + sigma dB_k.

    The grid phase starts at 0 mod 1, which covers burn-in segments as well
    because they span whole periods.  Evaluated as a linear recursion in C.
    """
    m = round(1.0 / step)
    n_steps = increments.size
    period_values = mean_function(model, np.arange(m) * step)
    forcing = np.tile(period_values, n_steps // m + 1)[:n_steps]
    drive = forcing * step + model.sigma * increments
    a = 1.0 - model.alpha * step
    out = lfilter([1.0], [1.0, -a], drive, zi=np.array([a * x0]))[0]
    return np.concatenate(([x0], out))


def simulate_path(
    model: FouModel,
    n_periods: int,
    step: float,
    seed: int,
    stationary_start: bool = False,
) -> SamplePath:
    """Euler path over ``n_periods`` whole periods with grid spacing ``step``.

    With ``stationary_start`` the recursion first runs over enough extra
    periods that the initial transient is forgotten to below
    ``BURN_IN_FORGETTING``; the burn-in segment is discarded and x[0] is its
    terminal value.  The burn-in noise is drawn jointly with the retained
    noise, so the long-range dependence of the driver is preserved.
    """
    if n_periods < 1:
        raise ValueError(f"n_periods must be >= 1, got {n_periods}")
    m = _check_step(step)
    burn_periods = 0
    if stationary_start:
        burn_periods = math.ceil(math.log(1.0 / BURN_IN_FORGETTING) / model.alpha)
    n_keep = n_periods * m
    n_burn = burn_periods * m
    spec = FgnSpec(model.hurst, step, n_keep + n_burn, seed)
    increments = _draw_increments(spec)
    x_full = _euler(model, increments, model.xi0, step)
    grid = np.arange(n_keep + 1) * step
    return SamplePath(
        grid=grid,
        x=x_full[n_burn:],
        driver_increments=increments[n_burn:],
        model=model,
        stationary_start=stationary_start,
    )


def path_from_increments(
    model: FouModel, increments: np.ndarray, x0: float, step: float
) -> SamplePath:
    """Replay the Euler recursion from ``x0`` with given driver increments.

    Used for coupling studies where two starts share one noise realization.
    """
    m = _check_step(step)
    increments = np.asarray(increments, dtype=float)
    if increments.size % m != 0:
        raise InvalidStep("increments must cover whole periods")
    x = _euler(model, increments, x0, step)
    grid = np.arange(increments.size + 1) * step
    return SamplePath(grid=grid, x=x, driver_increments=increments, model=model)


def steady_mean(model: FouModel, t):
    """1-periodic steady solution of h' = L - alpha h.

    Evaluates exp(-alpha t) * integral_{-inf}^t exp(alpha s) L(s) ds by
    reducing the half-infinite integral over periods to a geometric series:
    (1 - e^{-alpha})^{-1} * integral_0^1 e^{-alpha u} L(t - u) du, with the
    unit-interval integral by 64-node Gauss-Legendre quadrature.
    """
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    u = _UNIT_NODES[:, None]
    w = (_UNIT_WEIGHTS * np.exp(-model.alpha * _UNIT_NODES))[:, None]
    values = mean_function(model, flat[None, :] - u)
    integral = (w * values).sum(axis=0) / -np.expm1(-model.alpha)
    integral = integral.reshape(t.shape)
    if t.ndim == 0:
        return float(integral)
    return integral


def zero_start_mean(model: FouModel, t):
    """Deterministic mean response from rest:
    h(t) = exp(-alpha t) * integral_0^t exp(alpha s) L(s) ds for t >= 0.

    Whole periods contribute a geometric series of one fixed unit-interval
    integral; the trailing partial period is quadrature on [0, t - floor(t)].
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("zero_start_mean is defined for t >= 0")
    flat = t.ravel()
    alpha = model.alpha
    whole = np.floor(flat)
    frac = flat - whole

    # A = integral_0^1 e^{-alpha (1 - v)} L(v) dv
    decay = np.exp(-alpha * (1.0 - _UNIT_NODES))
    unit_integral = float(
        np.sum(_UNIT_WEIGHTS * decay * mean_function(model, _UNIT_NODES))
    )
    series = unit_integral * np.exp(-alpha * frac) * -np.expm1(-alpha * whole) / -np.expm1(-alpha)

    # partial period: integral_0^frac e^{-alpha u} L(t - u) du
    u = frac[None, :] * _UNIT_NODES[:, None]
    w = frac[None, :] * _UNIT_WEIGHTS[:, None]
    partial = np.sum(w * np.exp(-alpha * u) * mean_function(model, flat[None, :] - u), axis=0)

    result = (series + partial).reshape(t.shape)
    if t.ndim == 0:
        return float(result)
    return result


def coupling_gap(model: FouModel, path_from_xi0: SamplePath, path_stationary: SamplePath) -> np.ndarray:
    """|X_t - X~_t| per grid point for two recursions sharing the driver."""
    a, b = path_from_xi0, path_stationary
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid, b.grid):
        raise GridMismatch("paths are defined on different grids")
    if a.driver_increments is None or b.driver_increments is None:
        raise GridMismatch("both paths must carry driver increments")
    if not np.array_equal(a.driver_increments, b.driver_increments):
        raise GridMismatch("paths were not driven by the same increments")
    return np.abs(a.x - b.x)


def write_sample_path_csv(path: SamplePath, filename) -> None:
    """Write ``t,x[,db]`` rows at full double precision.

    The ``db`` column holds the driver increment over [t_k, t_{k+1}] on row
    k and is empty on the last row.
    """
    has_driver = path.driver_increments is not None
    with open(filename, "w", encoding="utf-8") as handle:
        handle.write("t,x,db\n" if has_driver else "t,x\n")
        last = path.x.size - 1
        for k, (t, x) in enumerate(zip(path.grid, path.x)):
            if has_driver:
                db = f"{path.driver_increments[k]:.17g}" if k < last else ""
                handle.write(f"{t:.17g},{x:.17g},{db}\n")
            else:
                handle.write(f"{t:.17g},{x:.17g}\n")


def read_sample_path_csv(
    filename, model: FouModel, stationary_start: bool = False
) -> SamplePath:
    """Read a path written by :func:`write_sample_path_csv`.

    Floats round-trip exactly, so estimating from the file reproduces the
    in-memory pipeline bit for bit.  ``stationary_start`` must restate how
    the path was generated; the file format does not carry it.
    """
    with open(filename, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
        if header not in (["t", "x"], ["t", "x", "db"]):
            raise ValueError(f"unexpected path CSV header {header}")
        t_vals, x_vals, db_vals = [], [], []
        for line in handle:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            t_vals.append(float(parts[0]))
            x_vals.append(float(parts[1]))
            if len(header) == 3 and len(parts) == 3 and parts[2] != "":
                db_vals.append(float(parts[2]))
    grid = np.asarray(t_vals)
    x = np.asarray(x_vals)
    driver = None
    if len(header) == 3:
        if len(db_vals) != grid.size - 1:
            raise ValueError(
                f"driver column has {len(db_vals)} entries for {grid.size} grid points"
            )
        driver = np.asarray(db_vals)
    return SamplePath(
        grid=grid,
        x=x,
        driver_increments=driver,
        model=model,
        stationary_start=stationary_start,
    )
