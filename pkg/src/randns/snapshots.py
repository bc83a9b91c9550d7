"""Binary persistence: NSRF1 field snapshots and trajectory containers.

NSRF1 layout: magic "NSRF1", then a little-endian header
{dim: u8, M: u32, G: u32, s: f64, component count: u8}, then per component
the complex coefficients as interleaved (re, im) f64 in lexicographic
wavevector order (C order of the symmetric mode cube).  Round trips are
bit-exact.

A trajectory snapshot prefixes a header {J: u32, T: f64} to the J + 1 field
records.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import SpectralVectorField, TorusSpec, divergence_defect
from .trajectories import TimeGrid, Trajectory

FIELD_MAGIC = b"NSRF1"
_HEADER = struct.Struct("<BIIdB")
_TRAJ_HEADER = struct.Struct("<Id")


class SnapshotError(ValueError):
    """Malformed, truncated or mismatched snapshot data."""


def _field_bytes(f: SpectralVectorField, s: float) -> bytes:
    spec = f.spec
    header = _HEADER.pack(spec.dim, spec.modes_per_axis,
                          spec.grid_points_per_axis, s, spec.dim)
    body = np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()
    return FIELD_MAGIC + header + body


def _field_from_buffer(buf: bytes, offset: int) -> tuple[SpectralVectorField, float, int]:
    magic = buf[offset:offset + len(FIELD_MAGIC)]
    if magic != FIELD_MAGIC:
        raise SnapshotError(f"bad magic {magic!r}, expected {FIELD_MAGIC!r}")
    offset += len(FIELD_MAGIC)
    try:
        dim, m, g, s, ncomp = _HEADER.unpack_from(buf, offset)
    except struct.error as exc:
        raise SnapshotError("truncated header") from exc
    offset += _HEADER.size
    spec = TorusSpec(dim, m, g)
    if ncomp != dim:
        raise SnapshotError(f"component count {ncomp} != dim {dim}")
    count = dim * (m + 1) ** dim
    end = offset + 16 * count
    if end > len(buf):
        raise SnapshotError(
            f"truncated payload: need {16 * count} bytes, have {len(buf) - offset}"
        )
    coeffs = np.frombuffer(buf[offset:end], dtype="<c16").reshape(
        (dim,) + spec.box_shape
    ).astype(np.complex128)
    field = SpectralVectorField(spec, coeffs)
    field.solenoidal = divergence_defect(field) < 1e-9
    return field, s, end


def save_field(path, f: SpectralVectorField, s: float = 0.0) -> None:
    Path(path).write_bytes(_field_bytes(f, s))


def load_field(path) -> tuple[SpectralVectorField, float]:
    """Read an NSRF1 snapshot; returns (field, sobolev index from the header)."""
    buf = Path(path).read_bytes()
    field, s, end = _field_from_buffer(buf, 0)
    if end != len(buf):
        raise SnapshotError(f"{len(buf) - end} trailing bytes after field record")
    return field, s


def save_trajectory(path, traj: Trajectory, s: float = 0.0) -> None:
    parts = [_TRAJ_HEADER.pack(traj.grid.steps, traj.grid.T)]
    for j in range(traj.grid.steps + 1):
        parts.append(_field_bytes(traj.state(j), s))
    Path(path).write_bytes(b"".join(parts))


def load_trajectory(path) -> tuple[Trajectory, float]:
    buf = Path(path).read_bytes()
    try:
        steps, T = _TRAJ_HEADER.unpack_from(buf, 0)
    except struct.error as exc:
        raise SnapshotError("truncated trajectory header") from exc
    offset = _TRAJ_HEADER.size
    fields = []
    s = 0.0
    for _ in range(steps + 1):
        f, s, offset = _field_from_buffer(buf, offset)
        fields.append(f)
    if offset != len(buf):
        raise SnapshotError(f"{len(buf) - offset} trailing bytes")
    spec = fields[0].spec
    coeffs = np.stack([f.coeffs for f in fields])
    solenoidal = all(f.solenoidal for f in fields)
    traj = Trajectory(TimeGrid(T, steps), spec, coeffs, solenoidal)
    return traj, s
