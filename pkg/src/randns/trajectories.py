"""Time grids and spectral trajectories on [0, T]."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .spectral import (
    SpectralVectorField,
    TorusSpec,
    _batch_to_physical,
    eigenvalue_grid,
)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_J = T with T in (0, 1]."""

    T: float
    steps: int

    def __post_init__(self):
        if not 0.0 < self.T <= 1.0:
            raise ValueError(f"T must lie in (0, 1], got {self.T}")
        if self.steps < 8:
            raise ValueError(f"steps must be >= 8, got {self.steps}")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)

    @property
    def dt(self) -> float:
        return self.T / self.steps


@dataclass
class Trajectory:
    """A spectral vector field sampled at every node of a TimeGrid.

    coeffs has shape (J + 1, dim, *box_shape).
    """

    grid: TimeGrid
    spec: TorusSpec
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        expected = (self.grid.steps + 1, self.spec.dim) + self.spec.box_shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {expected}")

    def state(self, j: int) -> SpectralVectorField:
        return SpectralVectorField(self.spec, self.coeffs[j].copy(), self.solenoidal)

    def copy(self) -> "Trajectory":
        return Trajectory(self.grid, self.spec, self.coeffs.copy(), self.solenoidal)

    def __add__(self, other: "Trajectory") -> "Trajectory":
        _check_same_grid(self, other)
        return Trajectory(self.grid, self.spec, self.coeffs + other.coeffs,
                          self.solenoidal and other.solenoidal)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        _check_same_grid(self, other)
        return Trajectory(self.grid, self.spec, self.coeffs - other.coeffs,
                          self.solenoidal and other.solenoidal)


def _check_same_grid(a: Trajectory, b: Trajectory) -> None:
    if a.grid != b.grid or a.spec != b.spec:
        raise ValueError("trajectories live on different grids")


def zero_trajectory(spec: TorusSpec, grid: TimeGrid,
                    solenoidal: bool = True) -> Trajectory:
    shape = (grid.steps + 1, spec.dim) + spec.box_shape
    return Trajectory(grid, spec, np.zeros(shape, dtype=np.complex128), solenoidal)


@lru_cache(maxsize=8)
def _heat_decay(spec: TorusSpec, grid: TimeGrid) -> np.ndarray:
    eig = eigenvalue_grid(spec)
    t = grid.nodes.reshape((-1,) + (1,) * spec.dim)
    out = np.exp(-t * eig[None])
    out.setflags(write=False)
    return out


def heat_trajectory(f: SpectralVectorField, grid: TimeGrid) -> Trajectory:
    """Linear flow e^{t Delta} f sampled on the grid (exact per mode)."""
    decay = _heat_decay(f.spec, grid)[:, None]
    return Trajectory(grid, f.spec, decay * f.coeffs[None], f.solenoidal)


def _integer_power(x: np.ndarray, n: int) -> np.ndarray:
    """x**n by squaring; much cheaper than the float pow kernel."""
    result = None
    square = x
    while n:
        if n & 1:
            result = square if result is None else result * square
        n >>= 1
        if n:
            square = square * square
    return result


def node_lebesgue_norms(traj: Trajectory, q: float) -> np.ndarray:
    """L^q(T^N) norm of |u(t_j)| at every node, one batched transform."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    values = _batch_to_physical(traj.coeffs, traj.spec)     # (J+1, dim, G...)
    mag_sq = (values**2).sum(axis=1)
    flat = mag_sq.reshape(mag_sq.shape[0], -1)
    if np.isinf(q):
        return np.sqrt(flat.max(axis=1))
    half_q = q / 2.0
    if half_q == int(half_q) and 1 <= half_q <= 16:
        powered = _integer_power(flat, int(half_q))
    else:
        powered = flat**half_q
    return powered.mean(axis=1) ** (1.0 / q)


def node_sobolev_norms(traj: Trajectory, s: float) -> np.ndarray:
    """H^s norm at every node (spectral, no transform needed)."""
    weight = (1.0 + eigenvalue_grid(traj.spec)) ** s
    energy = (np.abs(traj.coeffs) ** 2).sum(axis=1)
    return np.sqrt((weight * energy).reshape(energy.shape[0], -1).sum(axis=1))
