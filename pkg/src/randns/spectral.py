"""Truncated Fourier representation of real vector fields on the periodic box.

Fields live on the symmetric wavevector cube |k_i| <= M/2 and are stored as
complex exponential coefficients with Hermitian symmetry, so every field is
real-valued by construction.  Transforms go through numpy's real FFTs on a
physical grid of G points per axis; they are exact for band-limited data
whenever G > M (and for Nyquist-free data at G = M).

Conventions: unit torus volume, f(x) = sum_k u_hat(k) exp(2*pi*i k.x), so
Parseval reads ||f||_L2^2 = sum_k |u_hat(k)|^2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

TWO_PI = 2.0 * np.pi

#: relative divergence tolerance below which a field counts as solenoidal
SOLENOIDAL_RTOL = 1e-12


@dataclass(frozen=True)
class TorusSpec:
    """Discretization of the N-dimensional unit torus (N = 2 or 3).

    modes_per_axis M is even; the retained wavevector cube is |k_i| <= M/2.
    grid_points_per_axis G >= M is the uniform physical quadrature grid.
    """

    dim: int
    modes_per_axis: int
    grid_points_per_axis: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        m = self.modes_per_axis
        if m < 4 or m % 2 != 0:
            raise ValueError(f"modes_per_axis must be an even integer >= 4, got {m}")
        if self.grid_points_per_axis < m:
            raise ValueError(
                f"grid_points_per_axis must be >= modes_per_axis, got "
                f"{self.grid_points_per_axis} < {m}"
            )

    @property
    def half(self) -> int:
        return self.modes_per_axis // 2

    @property
    def box_width(self) -> int:
        """Retained modes per axis (symmetric cube, M + 1 values)."""
        return self.modes_per_axis + 1

    @property
    def box_shape(self) -> tuple[int, ...]:
        return (self.box_width,) * self.dim

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.grid_points_per_axis,) * self.dim

    @property
    def k_axis(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1)


def default_spec(dim: int, modes_per_axis: int = 32) -> TorusSpec:
    """Desk-scale spec with the quadrature grid at G = 2M."""
    return TorusSpec(dim, modes_per_axis, 2 * modes_per_axis)


@lru_cache(maxsize=64)
def wavevector_grid(spec: TorusSpec) -> np.ndarray:
    """Integer wavevectors of the retained cube, shape (dim, *box_shape)."""
    axes = np.meshgrid(*(spec.k_axis,) * spec.dim, indexing="ij")
    out = np.stack(axes).astype(np.int64)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def ksq_grid(spec: TorusSpec) -> np.ndarray:
    out = (wavevector_grid(spec).astype(np.float64) ** 2).sum(axis=0)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def eigenvalue_grid(spec: TorusSpec) -> np.ndarray:
    """Minus-Laplacian eigenvalue 4 pi^2 |k|^2 per retained mode."""
    out = 4.0 * np.pi**2 * ksq_grid(spec)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def nyquist_mask(spec: TorusSpec) -> np.ndarray:
    """True where any |k_i| equals M/2 (modes kept zero in randomized data)."""
    k = wavevector_grid(spec)
    out = (np.abs(k) == spec.half).any(axis=0)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def dealias_mask(spec: TorusSpec) -> np.ndarray:
    """True inside the 2/3-rule cube |k_i| <= floor(M/3)."""
    cutoff = spec.modes_per_axis // 3
    k = wavevector_grid(spec)
    out = (np.abs(k) <= cutoff).all(axis=0)
    out.setflags(write=False)
    return out


def eigenvalue(k) -> float:
    """Eigenvalue of -Laplace for the mode exp(2*pi*i k.x): 4 pi^2 |k|^2."""
    kk = np.asarray(k, dtype=np.float64)
    return float(4.0 * np.pi**2 * (kk**2).sum())


@dataclass
class SpectralVectorField:
    """Real vector field as Hermitian complex coefficients on the mode cube.

    coeffs has shape (dim, *box_shape) with axis index i mapping to k = i - M/2.
    """

    spec: TorusSpec
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        expected = (self.spec.dim,) + self.spec.box_shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {expected}")
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    def copy(self) -> "SpectralVectorField":
        return SpectralVectorField(self.spec, self.coeffs.copy(), self.solenoidal)

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        if other.spec != self.spec:
            raise ValueError("field specs differ")
        return SpectralVectorField(
            self.spec, self.coeffs + other.coeffs, self.solenoidal and other.solenoidal
        )

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        if other.spec != self.spec:
            raise ValueError("field specs differ")
        return SpectralVectorField(
            self.spec, self.coeffs - other.coeffs, self.solenoidal and other.solenoidal
        )

    def __mul__(self, scalar: float) -> "SpectralVectorField":
        return SpectralVectorField(self.spec, self.coeffs * scalar, self.solenoidal)

    __rmul__ = __mul__


def zero_field(spec: TorusSpec, solenoidal: bool = True) -> SpectralVectorField:
    return SpectralVectorField(
        spec, np.zeros((spec.dim,) + spec.box_shape, dtype=np.complex128), solenoidal
    )


def hermitian_defect(f: SpectralVectorField) -> float:
    """Max |u_hat(-k) - conj(u_hat(k))| relative to the largest coefficient."""
    c = f.coeffs
    mirrored = np.conj(c[(slice(None),) + (slice(None, None, -1),) * f.spec.dim])
    scale = np.abs(c).max()
    if scale == 0.0:
        return 0.0
    return float(np.abs(c - mirrored).max() / scale)


def divergence_defect(f: SpectralVectorField) -> float:
    """Max |k.u_hat(k)| over k != 0, relative to the largest coefficient."""
    k = wavevector_grid(f.spec).astype(np.float64)
    dots = np.abs((k * f.coeffs).sum(axis=0))
    scale = np.abs(f.coeffs).max()
    if scale == 0.0:
        return 0.0
    return float(dots.max() / scale)


# --- transforms ------------------------------------------------------------

@lru_cache(maxsize=64)
def _embed_indices(spec: TorusSpec):
    """Index arrays embedding the mode cube into the G-grid rfft layout."""
    g = spec.grid_points_per_axis
    rows = spec.k_axis % g                      # full axes, all retained k
    cols = np.arange(0, spec.half + 1)          # last axis, k_N >= 0 only
    collisions = len(np.unique(rows)) < len(rows)
    return rows, cols, collisions


@lru_cache(maxsize=64)
def _embed_blocks(spec: TorusSpec):
    """(box slices, grid slices) block pairs for the k_N >= 0 half-cube.

    Negative frequencies wrap to the top of each full axis, so the cube maps
    onto the rfft layout as contiguous blocks; slice copies beat advanced
    indexing on the hot transform path.
    """
    g, half = spec.grid_points_per_axis, spec.half
    row_chunks = ((slice(0, half), slice(g - half, g)),
                  (slice(half, 2 * half + 1), slice(0, half + 1)))
    col_chunk = ((slice(half, 2 * half + 1), slice(0, half + 1)),)
    blocks = []
    for combo in itertools.product(*((row_chunks,) * (spec.dim - 1)
                                     + (col_chunk,))):
        blocks.append((tuple(c[0] for c in combo),
                       tuple(c[1] for c in combo)))
    return tuple(blocks)


@lru_cache(maxsize=64)
def _gather_neg_blocks(spec: TorusSpec):
    """Blocks reading the k_N < 0 half-cube as conj(spectrum at -k).

    Box row index i maps to grid row (half - i) mod G, which splits each full
    axis into three reversed chunks.
    """
    g, half = spec.grid_points_per_axis, spec.half
    row_chunks = (
        (slice(0, half), slice(half, 0, -1)),
        (slice(half, half + 1), slice(0, 1)),
        (slice(half + 1, 2 * half + 1), slice(g - 1, g - half - 1, -1)),
    )
    col_chunk = ((slice(0, half), slice(half, 0, -1)),)
    blocks = []
    for combo in itertools.product(*((row_chunks,) * (spec.dim - 1)
                                     + (col_chunk,))):
        blocks.append((tuple(c[0] for c in combo),
                       tuple(c[1] for c in combo)))
    return tuple(blocks)


def to_physical(f: SpectralVectorField) -> np.ndarray:
    """Sample the field on the uniform G^N grid; shape (dim, G, ..., G)."""
    return _batch_to_physical(f.coeffs[np.newaxis], f.spec)[0]


def _batch_to_physical(coeffs: np.ndarray, spec: TorusSpec) -> np.ndarray:
    """irfftn synthesis for coefficient arrays of shape (..., *box_shape)."""
    g = spec.grid_points_per_axis
    half = spec.half
    rows, cols, collisions = _embed_indices(spec)
    lead = coeffs.shape[: coeffs.ndim - spec.dim]
    rshape = lead + (g,) * (spec.dim - 1) + (g // 2 + 1,)
    spectrum = np.zeros(rshape, dtype=np.complex128)
    if collisions:
        # G == M folds the +-M/2 rows onto one grid row; accumulate the sum.
        ix = np.ix_(*([rows] * (spec.dim - 1) + [cols]))
        positive = coeffs[..., half:]
        flat = spectrum.reshape(lead + (-1,))
        grids = np.broadcast_arrays(*ix)
        target = np.ravel_multi_index(tuple(grids), rshape[len(lead):])
        np.add.at(flat, (Ellipsis, target.ravel()),
                  positive.reshape(lead + (-1,)))
        spectrum = flat.reshape(rshape)
    else:
        for box_idx, grid_idx in _embed_blocks(spec):
            spectrum[(Ellipsis, *grid_idx)] = coeffs[(Ellipsis, *box_idx)]
    return _fft.irfftn(spectrum, s=(g,) * spec.dim,
                       axes=tuple(range(-spec.dim, 0)), norm="forward")


def to_spectral(values: np.ndarray, spec: TorusSpec,
                solenoidal: bool = False) -> SpectralVectorField:
    """Inverse of to_physical on band-limited data.

    values has shape (dim, G, ..., G).
    """
    expected = (spec.dim,) + spec.grid_shape
    if values.shape != expected:
        raise ValueError(f"grid shape {values.shape} != {expected}")
    return SpectralVectorField(spec, _batch_to_spectral(values, spec), solenoidal)


def _batch_to_spectral(values: np.ndarray, spec: TorusSpec) -> np.ndarray:
    half = spec.half
    rows, cols, _ = _embed_indices(spec)
    spectrum = _fft.rfftn(values, axes=tuple(range(-spec.dim, 0)), norm="forward")
    lead = values.shape[: values.ndim - spec.dim]
    coeffs = np.empty(lead + spec.box_shape, dtype=np.complex128)
    ix_pos = np.ix_(*([rows] * (spec.dim - 1) + [cols]))
    coeffs[..., half:] = spectrum[(Ellipsis, *ix_pos)]
    # negative k_N half from Hermitian symmetry of the real transform
    rows_neg = (-spec.k_axis) % spec.grid_points_per_axis
    cols_neg = np.arange(half, 0, -1)
    ix_neg = np.ix_(*([rows_neg] * (spec.dim - 1) + [cols_neg]))
    coeffs[..., :half] = np.conj(spectrum[(Ellipsis, *ix_neg)])
    return coeffs


# --- mode-diagonal operators ------------------------------------------------

def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Helmholtz-Weyl projection onto divergence-free fields.

    Mode-wise u_hat(k) -> u_hat(k) - k (k.u_hat(k)) / |k|^2, identity at k = 0.
    """
    return SpectralVectorField(f.spec, _batch_leray(f.coeffs, f.spec), True)


def _batch_leray(coeffs: np.ndarray, spec: TorusSpec) -> np.ndarray:
    k = wavevector_grid(spec).astype(np.float64)
    ksq = ksq_grid(spec)
    safe = np.where(ksq == 0.0, 1.0, ksq)
    dots = (k * coeffs).sum(axis=-spec.dim - 1, keepdims=True)
    return coeffs - k * (dots / safe)


def heat_propagate(f: SpectralVectorField, t: float) -> SpectralVectorField:
    """Heat semigroup: multiply each mode by exp(-4 pi^2 |k|^2 t)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    decay = np.exp(-eigenvalue_grid(f.spec) * t)
    return SpectralVectorField(f.spec, f.coeffs * decay, f.solenoidal)


# --- norms -------------------------------------------------------------------

def sobolev_norm(f: SpectralVectorField, s: float) -> float:
    """H^s norm: (sum_k (1 + 4 pi^2 |k|^2)^s sum_a |u_hat_a(k)|^2)^(1/2)."""
    if not np.isfinite(s):
        raise ValueError("sobolev index must be finite")
    weight = (1.0 + eigenvalue_grid(f.spec)) ** s
    return float(np.sqrt((weight * (np.abs(f.coeffs) ** 2).sum(axis=0)).sum()))


def lebesgue_norm(f: SpectralVectorField, q: float) -> float:
    """L^q norm of |f| (Euclidean magnitude) by uniform-grid quadrature."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    values = to_physical(f)
    mag_sq = (values**2).sum(axis=0)
    if np.isinf(q):
        return float(np.sqrt(mag_sq.max()))
    return float(np.mean(mag_sq ** (q / 2.0)) ** (1.0 / q))


# --- named analytic fields ----------------------------------------------------

def _set_pair(coeffs: np.ndarray, spec: TorusSpec, k, values) -> None:
    """Assign u_hat(k) = values and u_hat(-k) = conj(values)."""
    idx = tuple(int(c) + spec.half for c in k)
    neg = tuple(spec.half - int(c) for c in k)
    coeffs[(slice(None),) + idx] = values
    coeffs[(slice(None),) + neg] = np.conj(values)


def shear_field(spec: TorusSpec, amplitude: float = 1.0) -> SpectralVectorField:
    """Parallel shear flow u = (a sin(2 pi y), 0, ...); its advective flux vanishes."""
    f = zero_field(spec)
    k = (0, 1) + (0,) * (spec.dim - 2)
    vals = np.zeros(spec.dim, dtype=np.complex128)
    vals[0] = amplitude / 2j          # sin(2 pi y) = (e^{iy} - e^{-iy}) / 2i
    _set_pair(f.coeffs, spec, k, vals)
    f.solenoidal = True
    return f


def taylor_green_field(spec: TorusSpec, amplitude: float = 1.0) -> SpectralVectorField:
    """2-D Taylor-Green vortex (-a cos 2pi x sin 2pi y, a sin 2pi x cos 2pi y)."""
    if spec.dim != 2:
        raise ValueError("Taylor-Green datum is two-dimensional")
    f = zero_field(spec)
    a = amplitude
    # cos(2pix) sin(2piy) has coefficient sy/4i at mode (sx, sy), sx,sy = +-1
    for sx in (1, -1):
        for sy in (1, -1):
            idx = (sx + spec.half, sy + spec.half)
            f.coeffs[(0,) + idx] = -a * sy / 4j
            f.coeffs[(1,) + idx] = a * sx / 4j
    f.solenoidal = True
    return f


def random_real_field(spec: TorusSpec, seed: int, solenoidal: bool = False,
                      decay: float = 0.0) -> SpectralVectorField:
    """Random band-limited real field with Nyquist modes zeroed.

    Coefficient magnitudes scale like (1 + |k|^2)^(-decay/2); decay = 0 gives
    flat spectra.  Deterministic in seed.
    """
    rng = np.random.default_rng(seed)
    shape = (spec.dim,) + spec.box_shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    flip = (slice(None),) + (slice(None, None, -1),) * spec.dim
    coeffs = 0.5 * (raw + np.conj(raw[flip]))
    coeffs *= (1.0 + ksq_grid(spec)) ** (-decay / 2.0)
    coeffs[:, nyquist_mask(spec)] = 0.0
    f = SpectralVectorField(spec, coeffs, False)
    if solenoidal:
        f = leray_project(f)
    return f
