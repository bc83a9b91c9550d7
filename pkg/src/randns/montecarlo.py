"""Ensemble experiments for the probabilistic claims.

Every experiment keys sample i by the draw (base_seed, i), so records are
bit-identical no matter how many workers run the ensemble; aggregation happens
in sample order after all workers return.  Worker count comes from the
RANDNS_THREADS environment variable (default: all CPUs).
"""

from __future__ import annotations

import functools
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from .evolution import picard_solve, residual
from .norms import (
    REGIME_MIXED,
    REGIME_PLAIN,
    ParameterSet,
    event_norm,
    space_time_norm,
    weighted_space_time_norm,
    y_norm,
)
from .randomization import RandomizationDraw, gaussian_stream, randomize
from .spectral import SpectralVectorField, sobolev_norm
from .trajectories import TimeGrid, heat_trajectory, node_lebesgue_norms

Z_95 = 1.959963984540054

#: tail-fit window: only probabilities in this band enter the least squares
FIT_WINDOW = (0.001, 0.5)


def wilson_interval(successes: int, n: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval; valid down to zero counts."""
    if n <= 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("RANDNS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ensemble_map(fn, count: int, workers: int | None = None) -> list:
    """Map fn over sample indices 0..count-1, result order fixed by index."""
    workers = resolve_workers(workers)
    if workers <= 1 or count < 2 * workers:
        return [fn(i) for i in range(count)]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers) as pool:
        return pool.map(fn, range(count),
                        chunksize=max(1, count // (4 * workers)))


# --- Gaussian series moments --------------------------------------------------

def khinchin_moments(coefficients, r_values, samples: int,
                     base_seed: int = 0) -> np.ndarray:
    """Monte Carlo (E|sum_n c_n g_n|^r)^(1/r) for each r, sharing one ensemble.

    Samples are drawn in fixed chunks keyed (base_seed, chunk), so the
    estimate is reproducible and r-consistent.
    """
    c = np.asarray(coefficients, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("coefficients must be a nonempty 1-D sequence")
    r_values = np.asarray(r_values, dtype=np.float64)
    if (r_values < 2).any():
        raise ValueError(f"every r must be >= 2, got {r_values}")
    if samples < 1000:
        raise ValueError(f"samples must be >= 1000, got {samples}")
    chunk = 4096
    sums = np.zeros(len(r_values))
    done = 0
    for j in range((samples + chunk - 1) // chunk):
        take = min(chunk, samples - done)
        g = gaussian_stream(RandomizationDraw(base_seed, j), take * c.size)
        x = np.abs(g.reshape(take, c.size) @ c)
        for i, r in enumerate(r_values):
            sums[i] += (x**r).sum()
        done += take
    return (sums / samples) ** (1.0 / r_values)


def khinchin_check(coefficients, r: float, samples: int,
                   base_seed: int = 0) -> float:
    """Monte Carlo L^r(Omega) norm of the Gaussian series sum_n c_n g_n."""
    return float(khinchin_moments(coefficients, [r], samples, base_seed)[0])


# --- event selectors -----------------------------------------------------------

#: tail/scaling exponent theta per selector; the tail law is exp(-c2 x) with
#: x = lambda^2 ||f||^-2 T^(-2 theta)
SELECTORS = ("E1", "E2", "E3")


def selector_regime(selector: str) -> str:
    if selector == "E1":
        return REGIME_PLAIN
    if selector in ("E2", "E3"):
        return REGIME_MIXED
    raise ValueError(f"unknown selector {selector!r}; expected one of {SELECTORS}")


def check_selector(selector: str, params: ParameterSet) -> None:
    required = selector_regime(selector)
    if params.regime != required:
        raise ValueError(
            f"selector {selector} needs the {required} regime, but the "
            f"parameter set is {params.regime} (s={params.s}, N={params.dim})"
        )


def selector_theta(selector: str, params: ParameterSet) -> float:
    """Theoretical T-exponent of the selector's linear-flow norm."""
    check_selector(selector, params)
    if selector == "E1":
        return (1.0 + params.s) / 4.0
    if selector == "E2":
        return params.s / 2.0 + (4.0 - params.dim) / 8.0
    return params.rho


def selector_min_r(selector: str, params: ParameterSet) -> float:
    check_selector(selector, params)
    if selector == "E1":
        return 2.0 * params.dim / (1.0 + params.s)
    if selector == "E2":
        return 8.0 / (4.0 - params.dim)
    return params.m


def linear_flow_norm(f: SpectralVectorField, draw: RandomizationDraw,
                     params: ParameterSet, selector: str,
                     grid: TimeGrid) -> float:
    """Selected space-time norm of e^{t Delta} f^omega."""
    check_selector(selector, params)
    u_lin = heat_trajectory(randomize(f, draw), grid)
    if selector == "E1":
        return y_norm(u_lin, params)
    l4 = node_lebesgue_norms(u_lin, 4.0)
    if selector == "E2":
        return space_time_norm(u_lin, params.p_time, 4.0, node_norms=l4)
    return weighted_space_time_norm(u_lin, params.m, params.delta, 4.0,
                                    node_norms=l4)


def _linear_norm_worker(i: int, f: SpectralVectorField, params: ParameterSet,
                        selector: str, grid: TimeGrid, base_seed: int) -> float:
    return linear_flow_norm(f, RandomizationDraw(base_seed, i), params,
                            selector, grid)


def linear_flow_norm_set(f: SpectralVectorField, draw: RandomizationDraw,
                         params: ParameterSet, selectors: tuple,
                         grid: TimeGrid) -> tuple:
    """Several selected norms of one draw, sharing the trajectory transform.

    E2 and E3 integrate the same per-node L^4 norms, so evaluating them
    together costs one pass instead of two.
    """
    for sel in selectors:
        check_selector(sel, params)
    u_lin = heat_trajectory(randomize(f, draw), grid)
    l4 = None
    if any(sel in ("E2", "E3") for sel in selectors):
        l4 = node_lebesgue_norms(u_lin, 4.0)
    out = []
    for sel in selectors:
        if sel == "E1":
            out.append(y_norm(u_lin, params))
        elif sel == "E2":
            out.append(space_time_norm(u_lin, params.p_time, 4.0,
                                       node_norms=l4))
        else:
            out.append(weighted_space_time_norm(u_lin, params.m, params.delta,
                                                4.0, node_norms=l4))
    return tuple(out)


def _multi_norm_worker(i: int, f: SpectralVectorField, params: ParameterSet,
                       selectors: tuple, grid: TimeGrid,
                       base_seed: int) -> tuple:
    return linear_flow_norm_set(f, RandomizationDraw(base_seed, i), params,
                                selectors, grid)


# --- tail probabilities ----------------------------------------------------------

@dataclass
class TailEstimate:
    """Empirical exceedance curve with its exponential-in-lambda^2 fit."""

    selector: str
    T: float
    samples: int
    scale: float                  # ||f||^-2 T^(-2 theta)
    lambdas: np.ndarray
    exceed_counts: np.ndarray
    p_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    norms: np.ndarray             # per-sample norm values
    base_seed: int
    fit_ok: bool = False
    c1: float = np.nan
    c2: float = np.nan
    r_squared: float = np.nan

    @property
    def decays(self) -> bool:
        """Fit window adequate and a decaying, well-explained tail found."""
        return self.fit_ok and self.c2 > 0 and self.r_squared >= 0.5


def _fit_window_mask(p_hat: np.ndarray) -> np.ndarray:
    return (p_hat >= FIT_WINDOW[0]) & (p_hat <= FIT_WINDOW[1])


def fit_exponential_tail(est: TailEstimate) -> tuple[float, float, float]:
    """Least squares of ln p_hat against lambda^2 * scale on the fit window.

    Returns (c1, c2, R^2) for p ~ c1 exp(-c2 lambda^2 scale); raises
    ValueError when fewer than 3 curve points fall in the window.
    """
    mask = _fit_window_mask(est.p_hat)
    if mask.sum() < 3:
        raise ValueError(
            f"fit window {FIT_WINDOW} holds {int(mask.sum())} points, need >= 3"
        )
    x = est.lambdas[mask] ** 2 * est.scale
    y = np.log(est.p_hat[mask])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(np.exp(intercept)), float(-slope), r_squared


#: survival-probability targets used to place an automatic lambda grid
_AUTO_TARGETS = np.array([0.6, 0.45, 0.32, 0.22, 0.15, 0.10, 0.065, 0.042,
                          0.027, 0.017, 0.011, 0.007, 0.0045, 0.0028, 0.0018,
                          0.0011, 0.0007])


def _estimate_from_norms(selector: str, T: float, samples: int,
                         base_seed: int, norms: np.ndarray, lambdas,
                         scale: float) -> TailEstimate:
    if lambdas is None:
        lambdas = np.unique(np.quantile(norms, 1.0 - _AUTO_TARGETS))
    lambdas = np.asarray(lambdas, dtype=np.float64)
    counts = (norms[None, :] >= lambdas[:, None]).sum(axis=1)
    p_hat = counts / samples
    ci = np.array([wilson_interval(k, samples) for k in counts])
    est = TailEstimate(
        selector=selector, T=T, samples=samples, scale=scale,
        lambdas=lambdas, exceed_counts=counts, p_hat=p_hat,
        ci_low=ci[:, 0], ci_high=ci[:, 1], norms=norms, base_seed=base_seed,
    )
    try:
        est.c1, est.c2, est.r_squared = fit_exponential_tail(est)
        est.fit_ok = True
    except (ValueError, FloatingPointError):
        est.fit_ok = False
    return est


def _tail_scale(f: SpectralVectorField, params: ParameterSet, selector: str,
                T: float) -> float:
    hs = sobolev_norm(f, params.s)
    theta = selector_theta(selector, params)
    return hs ** (-2.0) * T ** (-2.0 * theta) if hs > 0 else np.nan


def tail_probability(f: SpectralVectorField, params: ParameterSet,
                     selector: str, T: float, samples: int, base_seed: int,
                     lambdas=None, steps: int = 256,
                     workers: int | None = None) -> TailEstimate:
    """Estimate p(selected linear-flow norm >= lambda) over a lambda grid.

    With lambdas=None the grid is placed at ensemble quantiles spanning the
    fit window.  The exponential fit is attempted and recorded; an inadequate
    window leaves fit_ok False rather than failing.
    """
    check_selector(selector, params)
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    grid = TimeGrid(T, steps)
    worker = functools.partial(_linear_norm_worker, f=f, params=params,
                               selector=selector, grid=grid, base_seed=base_seed)
    norms = np.array(ensemble_map(worker, samples, workers))
    return _estimate_from_norms(selector, T, samples, base_seed, norms,
                                lambdas, _tail_scale(f, params, selector, T))


def tail_curve_set(f: SpectralVectorField, params: ParameterSet,
                   selectors: tuple, T: float, samples: int, base_seed: int,
                   steps: int = 256,
                   workers: int | None = None) -> dict[str, TailEstimate]:
    """tail_probability for several same-regime selectors on one ensemble."""
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    grid = TimeGrid(T, steps)
    worker = functools.partial(_multi_norm_worker, f=f, params=params,
                               selectors=tuple(selectors), grid=grid,
                               base_seed=base_seed)
    rows = np.array(ensemble_map(worker, samples, workers))
    return {
        sel: _estimate_from_norms(sel, T, samples, base_seed, rows[:, j],
                                  None, _tail_scale(f, params, sel, T))
        for j, sel in enumerate(selectors)
    }


# --- scaling in T -----------------------------------------------------------------

@dataclass
class ScalingFit:
    """Log-log fit of the L^r_omega moment of a linear-flow norm against T."""

    selector: str
    r: float
    T_grid: np.ndarray
    moments: np.ndarray
    moment_ses: np.ndarray        # jackknife standard errors
    slope: float
    slope_se: float
    theta: float
    norms: np.ndarray             # (len(T_grid), samples)
    base_seed: int


def _jackknife_moment_se(values: np.ndarray, r: float) -> float:
    """Jackknife SE of (mean |x|^r)^(1/r)."""
    n = len(values)
    powered = values**r
    total = powered.sum()
    loo = ((total - powered) / (n - 1)) ** (1.0 / r)
    return float(np.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))


def scaling_in_T(f: SpectralVectorField, params: ParameterSet, selector: str,
                 r: float, T_grid, samples: int, base_seed: int,
                 steps: int = 128, workers: int | None = None) -> ScalingFit:
    """Fit ln E^(1/r)[norm^r] against ln T across a geometric grid.

    The same draws are reused at every T (common random numbers), so the
    fitted slope measures the T-dependence alone.
    """
    check_selector(selector, params)
    T_grid = np.sort(np.asarray(T_grid, dtype=np.float64))
    if len(T_grid) < 4:
        raise ValueError(f"need at least 4 T points, got {len(T_grid)}")
    if T_grid[0] <= 0 or T_grid[-1] > 1:
        raise ValueError("T grid must lie in (0, 1]")
    if r < 2:
        raise ValueError(f"r must be >= 2, got {r}")
    all_norms = []
    for T in T_grid:
        grid = TimeGrid(T, steps)
        worker = functools.partial(_linear_norm_worker, f=f, params=params,
                                   selector=selector, grid=grid,
                                   base_seed=base_seed)
        all_norms.append(np.array(ensemble_map(worker, samples, workers)))
    norms = np.array(all_norms)
    moments = (np.mean(norms**r, axis=1)) ** (1.0 / r)
    ses = np.array([_jackknife_moment_se(row, r) for row in norms])
    logT = np.log(T_grid)
    logm = np.log(moments)
    coeffs, cov = np.polyfit(logT, logm, 1, cov=True)
    return ScalingFit(
        selector=selector, r=r, T_grid=T_grid, moments=moments,
        moment_ses=ses, slope=float(coeffs[0]),
        slope_se=float(np.sqrt(cov[0, 0])),
        theta=selector_theta(selector, params), norms=norms,
        base_seed=base_seed,
    )


# --- fixed-point (theorem-level) experiments ------------------------------------

@dataclass
class SampleSolveRecord:
    sample_index: int
    event_norm: float
    event_member: bool
    converged: bool
    diverged: bool
    iterations: int
    max_ratio: float | None       # max contraction ratio after the first
    final_diff: float | None
    residual: float | None

    @property
    def contracts(self) -> bool:
        """Converged with geometrically decreasing differences."""
        ok_ratio = self.max_ratio is None or self.max_ratio < 1.0
        return self.converged and ok_ratio


@dataclass
class FixedPointPoint:
    """Aggregate of one (T, lambda) ensemble."""

    T: float
    lam: float
    samples: int
    members: int
    member_fraction: float
    ci_low: float
    ci_high: float
    members_converged: int
    members_contracting: int
    max_member_residual: float
    records: list[SampleSolveRecord] = field(default_factory=list)

    @property
    def conditional_convergence(self) -> float:
        return 1.0 if self.members == 0 else self.members_converged / self.members


@dataclass
class FixedPointStudy:
    lam: float
    points: list[FixedPointPoint]

    def all_members_contract(self) -> bool:
        return all(p.members_contracting == p.members for p in self.points)

    def monotone_within_ci(self) -> bool:
        """p_hat nondecreasing as T decreases, up to 95% CI overlap."""
        pts = sorted(self.points, key=lambda p: -p.T)
        return all(pts[i + 1].ci_high >= pts[i].ci_low
                   for i in range(len(pts) - 1))


def _solve_worker(i: int, f: SpectralVectorField, params: ParameterSet,
                  grid: TimeGrid, lam: float, base_seed: int, tol: float,
                  max_iter: int) -> SampleSolveRecord:
    f_omega = randomize(f, RandomizationDraw(base_seed, i))
    out = picard_solve(f_omega, grid, params, lam=lam, tol=tol,
                       max_iter=max_iter)
    diag = out.diagnostics
    res = None
    if diag.converged:
        res = residual(out.u, f_omega)
    later = diag.ratios[1:]
    return SampleSolveRecord(
        sample_index=i,
        event_norm=diag.event_norm_value,
        event_member=out.event_member,
        converged=diag.converged,
        diverged=diag.diverged,
        iterations=diag.iterations,
        max_ratio=max(later) if later else None,
        final_diff=diag.diffs[-1] if diag.diffs else None,
        residual=res,
    )


def theorem_experiment(f: SpectralVectorField, params: ParameterSet, T_grid,
                       lam: float, samples: int, base_seed: int,
                       steps: int = 128, tol: float = 1e-9, max_iter: int = 60,
                       workers: int | None = None) -> FixedPointStudy:
    """Solve the fixed-point problem for an ensemble of draws at every T.

    Per sample: event membership of the linear flow at threshold lam, Picard
    convergence, contraction ratios and residual.  Divergent samples are
    recorded, never fatal.
    """
    T_grid = np.asarray(T_grid, dtype=np.float64)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    points = []
    for T in T_grid:
        grid = TimeGrid(float(T), steps)
        worker = functools.partial(_solve_worker, f=f, params=params,
                                   grid=grid, lam=lam, base_seed=base_seed,
                                   tol=tol, max_iter=max_iter)
        records = ensemble_map(worker, samples, workers)
        members = [rec for rec in records if rec.event_member]
        ci = wilson_interval(len(members), samples)
        residuals = [rec.residual for rec in members if rec.residual is not None]
        points.append(FixedPointPoint(
            T=float(T), lam=lam, samples=samples, members=len(members),
            member_fraction=len(members) / samples,
            ci_low=ci[0], ci_high=ci[1],
            members_converged=sum(rec.converged for rec in members),
            members_contracting=sum(rec.contracts for rec in members),
            max_member_residual=max(residuals) if residuals else 0.0,
            records=records,
        ))
    return FixedPointStudy(lam=lam, points=points)


@dataclass
class CalibrationResult:
    """Empirical contraction threshold: largest lambda with 100% contraction."""

    lambda0: float
    T: float
    samples: int
    event_norms: np.ndarray       # sorted ascending
    contracts: np.ndarray         # aligned with event_norms
    admissible_members: int


def calibrate_contraction_threshold(
        f: SpectralVectorField, params: ParameterSet, T: float, samples: int,
        base_seed: int, steps: int = 128, tol: float = 1e-9,
        max_iter: int = 60, workers: int | None = None) -> CalibrationResult:
    """Largest threshold under which every event member shows contraction.

    The Picard dynamics do not depend on lambda, so one ensemble suffices:
    sort samples by linear-flow norm and find the longest all-contracting
    prefix; lambda0 is the next norm value (members are strict sub-lambda).
    """
    grid = TimeGrid(T, steps)
    worker = functools.partial(_solve_worker, f=f, params=params, grid=grid,
                               lam=np.inf, base_seed=base_seed, tol=tol,
                               max_iter=max_iter)
    records = ensemble_map(worker, samples, workers)
    order = np.argsort([rec.event_norm for rec in records])
    norms = np.array([records[i].event_norm for i in order])
    ok = np.array([records[i].contracts for i in order])
    prefix = 0
    while prefix < samples and ok[prefix]:
        prefix += 1
    if prefix == samples:
        lambda0 = float(norms[-1] * 1.05)
    else:
        lambda0 = float(norms[prefix])
    return CalibrationResult(
        lambda0=lambda0, T=T, samples=samples, event_norms=norms,
        contracts=ok, admissible_members=prefix,
    )
