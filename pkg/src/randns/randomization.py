"""Gaussian randomization of initial data, one draw per real eigenmode.

The real eigenbasis pairs a cosine and a sine function with every +-k pair of
wavevectors (plus the constant mode), ordered by (|k|^2, lexicographic k) so
that modes of equal eigenvalue have a fixed enumeration.  Each eigenmode n
receives an independent standard Gaussian g_n shared across the vector
components, which keeps divergence-free data divergence-free.

Gaussians are counter-based: g_n is a pure function of
(base_seed, sample_index, n) via a Philox stream keyed on the pair, so
ensemble workers never share state and the draw attached to a wavevector does
not move when the truncation cube grows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

from .spectral import SpectralVectorField, TorusSpec, sobolev_norm, zero_field


@dataclass(frozen=True)
class RandomizationDraw:
    """Key of one randomization sample: (base_seed, sample_index)."""

    base_seed: int
    sample_index: int = 0

    def __post_init__(self):
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")


def gaussian_stream(draw: RandomizationDraw, count: int) -> np.ndarray:
    """First `count` standard Gaussians of the draw's stream.

    Prefix-stable: extending `count` never changes earlier entries.  Each
    Gaussian is the inverse normal CDF of one 53-bit Philox word, so entry n
    depends only on (base_seed, sample_index, n).
    """
    key = np.array([draw.base_seed & 0xFFFFFFFFFFFFFFFF, draw.sample_index],
                   dtype=np.uint64)
    words = np.random.Philox(key=key).random_raw(count)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass
class ModeTable:
    """Real-eigenmode bookkeeping for one truncation cube.

    pair_reps lists the lexicographically positive representative of every
    +-k pair in the cube; pair_ranks is its 1-based rank in the global
    (|k|^2, lex) enumeration of the whole integer lattice, which makes mode
    indices independent of the cube size.  Mode 0 is the constant; the pair
    of rank r owns cosine index 2r-1 and sine index 2r.
    """

    pair_reps: np.ndarray        # (P, dim) int
    pair_ranks: np.ndarray       # (P,) int, 1-based
    cos_slot: np.ndarray         # box-shaped int, stream index of the cell's cosine
    sin_slot: np.ndarray         # box-shaped int
    stream_length: int


@lru_cache(maxsize=16)
def mode_table(dim: int, modes_per_axis: int) -> ModeTable:
    half = modes_per_axis // 2
    max_normsq = dim * half * half
    radius = int(np.ceil(np.sqrt(max_normsq)))

    # global enumeration of lex-positive lattice points with |k|^2 <= max_normsq
    axes = np.meshgrid(*(np.arange(-radius, radius + 1),) * dim, indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    pts = pts[(pts**2).sum(axis=1) <= max_normsq]
    lead_sign = np.zeros(len(pts), dtype=np.int64)
    for d in range(dim):
        lead_sign = np.where(lead_sign == 0, np.sign(pts[:, d]), lead_sign)
    pts = pts[lead_sign > 0]
    normsq = (pts**2).sum(axis=1)
    order = np.lexsort(tuple(pts[:, d] for d in reversed(range(dim))) + (normsq,))
    pts = pts[order]
    rank_of = {tuple(p): r + 1 for r, p in enumerate(pts)}

    # cells of the truncation cube, paired by +-k
    spec_axis = np.arange(-half, half + 1)
    cell_axes = np.meshgrid(*(spec_axis,) * dim, indexing="ij")
    cells = np.stack([a.ravel() for a in cell_axes], axis=1)
    cell_sign = np.zeros(len(cells), dtype=np.int64)
    for d in range(dim):
        cell_sign = np.where(cell_sign == 0, np.sign(cells[:, d]), cell_sign)
    reps_per_cell = np.where(cell_sign[:, None] < 0, -cells, cells)
    ranks_per_cell = np.array(
        [0 if s == 0 else rank_of[tuple(rep)]
         for s, rep in zip(cell_sign, reps_per_cell)],
        dtype=np.int64,
    )

    box_shape = (modes_per_axis + 1,) * dim
    cos_slot = np.where(ranks_per_cell > 0, 2 * ranks_per_cell - 1, 0)
    sin_slot = np.where(ranks_per_cell > 0, 2 * ranks_per_cell, 0)
    pos = cell_sign > 0
    table = ModeTable(
        pair_reps=cells[pos],
        pair_ranks=ranks_per_cell[pos],
        cos_slot=cos_slot.reshape(box_shape),
        sin_slot=sin_slot.reshape(box_shape),
        stream_length=int(2 * ranks_per_cell.max() + 1),
    )
    table.cos_slot.setflags(write=False)
    table.sin_slot.setflags(write=False)
    return table


@dataclass
class RealModeCoefficients:
    """Coefficients of a field in the real trig eigenbasis.

    Rows are ordered by global mode index; `alpha[i]` is the N-vector
    coefficient of eigenmode `indices[i]`.  kind is 'const', 'cos' or 'sin'.
    """

    spec: TorusSpec
    indices: np.ndarray          # (R,) int
    wavevectors: np.ndarray      # (R, dim) int (representative k; 0 for const)
    kinds: np.ndarray            # (R,) '<U5'
    alpha: np.ndarray            # (R, dim) float


def decompose_real_basis(f: SpectralVectorField) -> RealModeCoefficients:
    """Exact real-eigenbasis coefficients of a Hermitian-symmetric field.

    For the pair +-k the cosine coefficient is sqrt(2) Re u_hat(k) and the
    sine coefficient is -sqrt(2) Im u_hat(k), matching
    u_hat(k) e^{2pi i k.x} + c.c. = a sqrt(2) cos(2pi k.x) + b sqrt(2) sin(2pi k.x).
    """
    spec = f.spec
    table = mode_table(spec.dim, spec.modes_per_axis)
    half = spec.half
    const_alpha = f.coeffs[(slice(None),) + (half,) * spec.dim].real

    rep_cells = tuple(table.pair_reps[:, d] + half for d in range(spec.dim))
    rep_coeffs = f.coeffs[(slice(None),) + rep_cells]      # (dim, P)
    cos_alpha = np.sqrt(2.0) * rep_coeffs.real
    sin_alpha = -np.sqrt(2.0) * rep_coeffs.imag

    p = len(table.pair_ranks)
    indices = np.concatenate(
        [[0], 2 * table.pair_ranks - 1, 2 * table.pair_ranks]
    )
    wavevectors = np.concatenate(
        [np.zeros((1, spec.dim), dtype=np.int64), table.pair_reps, table.pair_reps]
    )
    kinds = np.concatenate(
        [np.array(["const"]), np.full(p, "cos"), np.full(p, "sin")]
    )
    alpha = np.concatenate([const_alpha[None, :], cos_alpha.T, sin_alpha.T])
    order = np.argsort(indices, kind="stable")
    return RealModeCoefficients(
        spec, indices[order], wavevectors[order], kinds[order], alpha[order]
    )


def recompose_real_basis(modes: RealModeCoefficients,
                         solenoidal: bool = False) -> SpectralVectorField:
    """Inverse of decompose_real_basis."""
    spec = modes.spec
    f = zero_field(spec, solenoidal)
    half = spec.half
    pair_alpha: dict[tuple, list] = {}
    for idx, k, kind, a in zip(modes.indices, modes.wavevectors, modes.kinds,
                               modes.alpha):
        if kind == "const":
            f.coeffs[(slice(None),) + (half,) * spec.dim] = a
        else:
            entry = pair_alpha.setdefault(tuple(k), [None, None])
            entry[0 if kind == "cos" else 1] = a
    for k, (a_cos, a_sin) in pair_alpha.items():
        a_cos = 0.0 if a_cos is None else a_cos
        a_sin = 0.0 if a_sin is None else a_sin
        val = (a_cos - 1j * a_sin) / np.sqrt(2.0)
        cell = tuple(ki + half for ki in k)
        neg = tuple(half - ki for ki in k)
        f.coeffs[(slice(None),) + cell] = val
        f.coeffs[(slice(None),) + neg] = np.conj(val)
    return f


def randomize(f: SpectralVectorField, draw: RandomizationDraw) -> SpectralVectorField:
    """Multiply every real-eigenmode coefficient vector by its Gaussian g_n.

    In the complex storage this multiplies Re u_hat(k) by the cosine draw and
    Im u_hat(k) by the sine draw of the pair, mirrored Hermitianly, so the
    output stays real and any per-mode orthogonality to k (solenoidality) is
    preserved exactly.
    """
    spec = f.spec
    table = mode_table(spec.dim, spec.modes_per_axis)
    g = gaussian_stream(draw, table.stream_length)
    out = g[table.cos_slot] * f.coeffs.real + 1j * g[table.sin_slot] * f.coeffs.imag
    return SpectralVectorField(spec, out, f.solenoidal)


def expected_energy_check(f: SpectralVectorField, s: float, samples: int,
                          base_seed: int = 0) -> float:
    """Monte Carlo mean of ||f^omega||_{H^s}^2; converges to ||f||_{H^s}^2."""
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    total = 0.0
    for i in range(samples):
        fw = randomize(f, RandomizationDraw(base_seed, i))
        total += sobolev_norm(fw, s) ** 2
    return total / samples


def energy_sample_stats(f: SpectralVectorField, s: float, samples: int,
                        base_seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of the Monte Carlo H^s energy estimate."""
    vals = np.array([
        sobolev_norm(randomize(f, RandomizationDraw(base_seed, i)), s) ** 2
        for i in range(samples)
    ])
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def supercritical_datum(spec: TorusSpec, s: float, amplitude: float = 1.0,
                        tail_eps: float = 0.01) -> SpectralVectorField:
    """Canonical divergence-free datum of H^s norm `amplitude`, s in (-1, 0).

    Real-mode magnitudes follow (1 + lambda_n^2)^(-s/2 - N/4) (1 + n)^(-1/2 - eps),
    which puts the datum in H^s with slowly decaying tails; each mode's
    direction is the unit projection of a coordinate axis onto k-perp, and
    Nyquist modes stay zero so transforms are exact on any admissible grid.
    """
    if not -1.0 < s < 0.0:
        raise ValueError(f"s={s} violates -1 < s < 0")
    table = mode_table(spec.dim, spec.modes_per_axis)
    half = spec.half
    f = zero_field(spec, solenoidal=True)
    dim = spec.dim

    # constant mode: n = 0, lambda = 0, direction e_1
    f.coeffs[(0,) + (half,) * dim] = 1.0

    reps = table.pair_reps.astype(np.float64)
    normsq = (reps**2).sum(axis=1)
    nyq = (np.abs(table.pair_reps) == half).any(axis=1)
    lam_sq = 4.0 * np.pi**2 * normsq
    mag_scale = (1.0 + lam_sq) ** (-s / 2.0 - dim / 4.0)
    n_cos = 2 * table.pair_ranks - 1
    n_sin = 2 * table.pair_ranks
    mag_cos = mag_scale * (1.0 + n_cos) ** (-0.5 - tail_eps)
    mag_sin = mag_scale * (1.0 + n_sin) ** (-0.5 - tail_eps)

    # unit direction orthogonal to k: project the axis with the smallest |k_d|
    axis_choice = np.argmin(np.abs(table.pair_reps), axis=1)
    directions = np.zeros_like(reps)
    directions[np.arange(len(reps)), axis_choice] = 1.0
    proj = directions - reps * ((directions * reps).sum(axis=1) / normsq)[:, None]
    proj /= np.linalg.norm(proj, axis=1)[:, None]

    alpha_cos = proj * mag_cos[:, None]
    alpha_sin = proj * mag_sin[:, None]
    alpha_cos[nyq] = 0.0
    alpha_sin[nyq] = 0.0
    vals = (alpha_cos - 1j * alpha_sin).T / np.sqrt(2.0)   # (dim, P)

    rep_cells = tuple(table.pair_reps[:, d] + half for d in range(dim))
    neg_cells = tuple(half - table.pair_reps[:, d] for d in range(dim))
    f.coeffs[(slice(None),) + rep_cells] = vals
    f.coeffs[(slice(None),) + neg_cells] = np.conj(vals)

    f.coeffs *= amplitude / sobolev_norm(f, s)
    return f
