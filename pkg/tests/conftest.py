import numpy as np
import pytest

from randns.spectral import TorusSpec


@pytest.fixture
def spec2d() -> TorusSpec:
    return TorusSpec(2, 16, 32)


@pytest.fixture
def spec3d() -> TorusSpec:
    return TorusSpec(3, 8, 16)


def grid_coordinates(spec: TorusSpec) -> list[np.ndarray]:
    """Meshgrid coordinates of the physical quadrature grid."""
    x = np.arange(spec.grid_points_per_axis) / spec.grid_points_per_axis
    return np.meshgrid(*(x,) * spec.dim, indexing="ij")


def real_eigenfunction(spec: TorusSpec, k, kind: str) -> np.ndarray:
    """Evaluate the normalized trig eigenfunction on the grid.

    kind 'cos' gives sqrt(2) cos(2 pi k.x), 'sin' the sine partner and
    'const' the constant 1; all have unit L^2 norm on the unit-volume torus.
    """
    coords = grid_coordinates(spec)
    if kind == "const":
        return np.ones_like(coords[0])
    phase = 2.0 * np.pi * sum(ki * xi for ki, xi in zip(k, coords))
    if kind == "cos":
        return np.sqrt(2.0) * np.cos(phase)
    if kind == "sin":
        return np.sqrt(2.0) * np.sin(phase)
    raise ValueError(kind)
