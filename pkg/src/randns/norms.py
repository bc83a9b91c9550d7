"""Space-time norms of trajectories and admissible parameter arithmetic.

Two parameter regimes cover the rough-data range -1 < s < 0:

* "mixed"  (-1 + N/4 < s < 0): the solution norm is the sum of a sup-in-time
  Sobolev norm, a t^delta-weighted L^m_T L^4_x norm and an L^{8/(4-N)}_T L^4_x
  norm; admissible 8/(4-N) < m <= 16/(4-N) with delta = (4-N)/8 - 1/m.
* "plain"  (-1 < s <= -1 + N/4): a single L^{4/(1-s)}_T L^{2N/(1+s)}_x norm.

Time integrals are composite-trapezoid sums on the trajectory's own grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .trajectories import Trajectory, node_lebesgue_norms, node_sobolev_norms

REGIME_MIXED = "mixed"
REGIME_PLAIN = "plain"

#: largest spatial Lebesgue exponent evaluated by quadrature
Q_CAP = 64.0


class AdmissibilityError(ValueError):
    """Raised when (N, s, m) violates a regime constraint."""


@dataclass(frozen=True)
class ParameterSet:
    """Admissible exponent bundle for one regime.

    p_time / q_space are the Lebesgue exponents of the regime's plain
    space-time norm; rho is the tail/scaling exponent of the weighted event
    norm (mixed regime) or of the plain norm (plain regime).
    """

    dim: int
    s: float
    regime: str
    m: float | None
    delta: float | None
    rho: float
    p_time: float
    q_space: float


def admissible_parameters(dim: int, s: float, m: float | None = None) -> ParameterSet:
    """Validate (N, s, m) and derive the regime's exponents.

    The regime is chosen from s; m is only meaningful in the mixed regime and
    defaults to its largest admissible value 16/(4-N).
    """
    if dim not in (2, 3):
        raise AdmissibilityError(f"dim must be 2 or 3, got {dim}")
    if not -1.0 < s < 0.0:
        raise AdmissibilityError(f"s={s} violates -1 < s < 0")
    threshold = -1.0 + dim / 4.0
    if s > threshold:
        m_lo = 8.0 / (4.0 - dim)
        m_hi = 16.0 / (4.0 - dim)
        if m is None:
            m = m_hi
        if not m_lo < m <= m_hi:
            raise AdmissibilityError(
                f"m={m} violates 8/(4-N) < m <= 16/(4-N), i.e. the interval "
                f"({m_lo:g}, {m_hi:g}] for N={dim}"
            )
        delta = (4.0 - dim) / 8.0 - 1.0 / m
        rho = min(1.0 / m, s / 2.0 + (4.0 - dim) / 8.0)
        return ParameterSet(dim, s, REGIME_MIXED, m, delta, rho,
                            p_time=8.0 / (4.0 - dim), q_space=4.0)
    if m is not None:
        raise AdmissibilityError(
            f"m is only admissible in the mixed regime (s > {threshold:g}), got "
            f"s={s}"
        )
    p_time = 4.0 / (1.0 - s)
    q_space = 2.0 * dim / (1.0 + s)
    return ParameterSet(dim, s, REGIME_PLAIN, None, None, rho=(1.0 + s) / 4.0,
                        p_time=p_time, q_space=q_space)


def _checked_q(traj: Trajectory, q: float) -> float:
    """Apply the large-exponent quadrature policy: G >= 2M for q > 2, cap at 64."""
    if q > 2.0 and traj.spec.grid_points_per_axis < 2 * traj.spec.modes_per_axis:
        raise ValueError(
            f"L^q quadrature with q={q:g} > 2 requires grid_points_per_axis >= "
            f"2 * modes_per_axis, got G={traj.spec.grid_points_per_axis}, "
            f"M={traj.spec.modes_per_axis}"
        )
    if q > Q_CAP:
        warnings.warn(
            f"q={q:g} capped at {Q_CAP:g}; quadrature is unreliable beyond",
            stacklevel=3,
        )
        return Q_CAP
    return q


def weighted_space_time_norm(traj: Trajectory, m: float, delta: float, q: float,
                             node_norms: np.ndarray | None = None) -> float:
    """(integral_0^T (t^delta ||u(t)||_{L^q})^m dt)^(1/m) by trapezoid rule."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if node_norms is None:
        node_norms = node_lebesgue_norms(traj, _checked_q(traj, q))
    t = traj.grid.nodes
    integrand = (t**delta * node_norms) ** m
    return float(np.trapezoid(integrand, t) ** (1.0 / m))


def space_time_norm(traj: Trajectory, p: float, q: float,
                    node_norms: np.ndarray | None = None) -> float:
    """L^p_T L^q_x norm; p = inf takes the max over nodes."""
    if node_norms is None:
        node_norms = node_lebesgue_norms(traj, _checked_q(traj, q))
    if np.isinf(p):
        return float(node_norms.max())
    return weighted_space_time_norm(traj, p, 0.0, q, node_norms=node_norms)


def x_norm(traj: Trajectory, params: ParameterSet) -> float:
    """Mixed-regime solution norm: sup_t H^{(N-2)/2} + weighted L^4 + plain L^4."""
    if params.regime != REGIME_MIXED:
        raise ValueError(f"x_norm needs the mixed regime, got {params.regime}")
    sob = node_sobolev_norms(traj, (params.dim - 2) / 2.0).max()
    l4 = node_lebesgue_norms(traj, _checked_q(traj, 4.0))
    weighted = weighted_space_time_norm(traj, params.m, params.delta, 4.0,
                                        node_norms=l4)
    plain = space_time_norm(traj, params.p_time, 4.0, node_norms=l4)
    return float(sob + weighted + plain)


def y_norm(traj: Trajectory, params: ParameterSet) -> float:
    """Plain-regime solution norm L^{4/(1-s)}_T L^{2N/(1+s)}_x."""
    if params.regime != REGIME_PLAIN:
        raise ValueError(f"y_norm needs the plain regime, got {params.regime}")
    return space_time_norm(traj, params.p_time, params.q_space)


def solution_norm(traj: Trajectory, params: ParameterSet) -> float:
    """The regime's contraction metric (x_norm or y_norm)."""
    if params.regime == REGIME_MIXED:
        return x_norm(traj, params)
    return y_norm(traj, params)


def event_norm(u_lin: Trajectory, params: ParameterSet) -> float:
    """Scalar compared against the threshold to decide event membership.

    Mixed regime: weighted L^m L^4 plus L^{8/(4-N)} L^4 of the linear flow;
    plain regime: its y_norm.
    """
    if params.regime == REGIME_MIXED:
        l4 = node_lebesgue_norms(u_lin, _checked_q(u_lin, 4.0))
        return float(
            weighted_space_time_norm(u_lin, params.m, params.delta, 4.0,
                                     node_norms=l4)
            + space_time_norm(u_lin, params.p_time, 4.0, node_norms=l4)
        )
    return y_norm(u_lin, params)
