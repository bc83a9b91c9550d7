"""Transforms, projections, norms and the heat semigroup on the mode cube."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randns.spectral import (
    SpectralVectorField,
    TorusSpec,
    _set_pair,
    divergence_defect,
    eigenvalue,
    heat_propagate,
    hermitian_defect,
    lebesgue_norm,
    leray_project,
    random_real_field,
    shear_field,
    sobolev_norm,
    taylor_green_field,
    to_physical,
    to_spectral,
    zero_field,
)

from conftest import grid_coordinates, real_eigenfunction


def unit_cos_field(spec, k, component=0, scale=1.0):
    """Field whose `component` is scale * sqrt(2) cos(2 pi k.x)."""
    f = zero_field(spec)
    vals = np.zeros(spec.dim, dtype=complex)
    vals[component] = scale * np.sqrt(2.0) / 2.0
    _set_pair(f.coeffs, spec, k, vals)
    return f


class TestTorusSpec:
    def test_invariants(self):
        with pytest.raises(ValueError):
            TorusSpec(4, 8, 16)
        with pytest.raises(ValueError):
            TorusSpec(2, 7, 16)
        with pytest.raises(ValueError):
            TorusSpec(2, 2, 16)
        with pytest.raises(ValueError):
            TorusSpec(2, 16, 8)

    def test_box(self, spec2d):
        assert spec2d.box_shape == (17, 17)
        assert spec2d.k_axis[0] == -8 and spec2d.k_axis[-1] == 8


class TestEigenvalue:
    @pytest.mark.parametrize("k,expected", [
        ((0, 0), 0.0),
        ((1, 0), 4 * np.pi**2),
        ((1, 1), 8 * np.pi**2),
    ])
    def test_values(self, k, expected):
        assert eigenvalue(k) == pytest.approx(expected, rel=1e-14)


class TestTransforms:
    def test_zero_field(self, spec2d):
        assert np.all(to_physical(zero_field(spec2d)) == 0.0)

    def test_single_cosine(self, spec2d):
        f = zero_field(spec2d)
        _set_pair(f.coeffs, spec2d, (1, 0), np.array([0.5, 0.0], dtype=complex))
        xx, _ = grid_coordinates(spec2d)
        vals = to_physical(f)
        assert np.allclose(vals[0], np.cos(2 * np.pi * xx), atol=1e-13)
        assert np.abs(vals[1]).max() == 0.0

    @pytest.mark.parametrize("dim", [2, 3])
    def test_round_trip(self, dim):
        spec = TorusSpec(dim, 8, 16)
        f = random_real_field(spec, seed=11)
        g = to_spectral(to_physical(f), spec)
        assert np.abs(g.coeffs - f.coeffs).max() < 1e-12

    def test_round_trip_tight_grid(self):
        # Nyquist-free data is exact even at G = M
        spec = TorusSpec(2, 8, 8)
        f = random_real_field(spec, seed=5)
        g = to_spectral(to_physical(f), spec)
        assert np.abs(g.coeffs - f.coeffs).max() < 1e-12

    def test_shape_mismatch(self, spec2d):
        with pytest.raises(ValueError, match="grid shape"):
            to_spectral(np.zeros((2, 8, 8)), spec2d)

    def test_physical_is_real(self, spec2d):
        vals = to_physical(random_real_field(spec2d, seed=1))
        assert vals.dtype == np.float64


class TestLeray:
    def test_pure_gradient_mode(self, spec2d):
        f = zero_field(spec2d)
        _set_pair(f.coeffs, spec2d, (1, 0), np.array([1.0, 0.0], dtype=complex))
        assert np.abs(leray_project(f).coeffs).max() < 1e-15

    def test_tangential_mode_unchanged(self, spec2d):
        f = zero_field(spec2d)
        _set_pair(f.coeffs, spec2d, (1, 0), np.array([0.0, 1.0], dtype=complex))
        p = leray_project(f)
        assert np.abs(p.coeffs - f.coeffs).max() < 1e-15

    @pytest.mark.parametrize("dim", [2, 3])
    def test_idempotent_and_solenoidal(self, dim):
        spec = TorusSpec(dim, 8, 16)
        f = random_real_field(spec, seed=3)
        p = leray_project(f)
        pp = leray_project(p)
        scale = np.abs(p.coeffs).max()
        assert np.abs(pp.coeffs - p.coeffs).max() <= 1e-12 * scale
        assert divergence_defect(p) <= 1e-12
        assert p.solenoidal


class TestSobolevNorm:
    def test_zero(self, spec2d):
        assert sobolev_norm(zero_field(spec2d), -0.5) == 0.0

    @pytest.mark.parametrize("s", [-0.9, -0.2, 0.0, 0.7])
    def test_unit_eigenfunction(self, spec2d, s):
        f = unit_cos_field(spec2d, (1, 0))
        assert sobolev_norm(f, s) == pytest.approx((1 + 4 * np.pi**2) ** (s / 2),
                                                   rel=1e-12)

    def test_multimode_brute_force(self, spec2d):
        # assemble a field from known real-basis coefficients in physical
        # space, then compare against the direct eigenbasis sum
        terms = [((1, 0), "cos", (0.3, -0.2)),
                 ((2, 1), "sin", (0.5, 0.1)),
                 ((0, 3), "cos", (-0.4, 0.7)),
                 ((0, 0), "const", (0.2, 0.9))]
        vals = np.zeros((2,) + spec2d.grid_shape)
        for k, kind, alpha in terms:
            e = real_eigenfunction(spec2d, k, kind)
            for a in range(2):
                vals[a] += alpha[a] * e
        f = to_spectral(vals, spec2d)
        for s in (-0.7, -0.3, 0.4):
            expected = np.sqrt(sum(
                (a1**2 + a2**2) * (1 + eigenvalue(k)) ** s
                for k, _, (a1, a2) in terms
            ))
            assert sobolev_norm(f, s) == pytest.approx(expected, rel=1e-12)


class TestLebesgueNorm:
    @pytest.mark.parametrize("q", [1, 2, 4, 8, np.inf])
    def test_constant_field(self, spec2d, q):
        f = zero_field(spec2d)
        f.coeffs[0, spec2d.half, spec2d.half] = -0.75
        assert lebesgue_norm(f, q) == pytest.approx(0.75, rel=1e-12)

    def test_quartic_cosine(self, spec2d):
        # integral of (sqrt2 cos)^4 = 3/2 in closed form
        f = unit_cos_field(spec2d, (1, 0))
        assert lebesgue_norm(f, 4) == pytest.approx((3 / 2) ** 0.25, rel=1e-12)

    def test_parseval(self, spec2d):
        f = random_real_field(spec2d, seed=7)
        assert lebesgue_norm(f, 2) == pytest.approx(sobolev_norm(f, 0.0),
                                                    rel=1e-10)

    def test_bad_exponent(self, spec2d):
        with pytest.raises(ValueError, match="q must be >= 1"):
            lebesgue_norm(zero_field(spec2d), 0.5)


class TestHeatPropagate:
    def test_identity_at_zero(self, spec2d):
        f = random_real_field(spec2d, seed=2)
        assert np.array_equal(heat_propagate(f, 0.0).coeffs, f.coeffs)

    def test_single_mode_decay(self, spec2d):
        f = unit_cos_field(spec2d, (1, 0))
        g = heat_propagate(f, 0.3)
        assert np.abs(g.coeffs - f.coeffs * np.exp(-4 * np.pi**2 * 0.3)).max() < 1e-15

    def test_semigroup(self, spec2d):
        f = random_real_field(spec2d, seed=4)
        a = heat_propagate(heat_propagate(f, 0.07), 0.13)
        b = heat_propagate(f, 0.2)
        assert np.abs(a.coeffs - b.coeffs).max() <= 1e-12 * np.abs(f.coeffs).max()

    def test_negative_time(self, spec2d):
        with pytest.raises(ValueError, match=">= 0"):
            heat_propagate(zero_field(spec2d), -0.1)

    def test_preserves_structure(self, spec2d):
        f = random_real_field(spec2d, seed=6, solenoidal=True)
        g = heat_propagate(f, 0.05)
        assert hermitian_defect(g) == 0.0
        assert divergence_defect(g) <= 1e-12
        assert g.solenoidal


class TestEigenfunctionBound:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_lq_bound_small(self, dim):
        # every tensor eigenfunction is bounded by 2^(N/2) in each L^q
        spec = TorusSpec(dim, 8, 16)
        bound = 2 ** (dim / 2) + 1e-9
        k_choices = [(kind, k) for k in range(1, spec.half + 1)
                     for kind in ("cos", "sin")] + [("const", 0)]
        rng = np.random.default_rng(0)
        combos = list(itertools.product(k_choices, repeat=dim))
        for combo in rng.choice(len(combos), size=40, replace=False):
            factors = combos[combo]
            coords = grid_coordinates(spec)
            vals = np.ones_like(coords[0])
            for d, (kind, k) in enumerate(factors):
                kv = [0] * dim
                kv[d] = k
                vals = vals * real_eigenfunction(spec, kv, kind)
            f = to_spectral(np.stack([vals] + [np.zeros_like(vals)] * (dim - 1)),
                            spec)
            for q in (2, 4, 8, np.inf):
                assert lebesgue_norm(f, q) <= bound


class TestNamedFields:
    def test_shear_is_steady_datum(self, spec2d):
        f = shear_field(spec2d, 2.0)
        xx, yy = grid_coordinates(spec2d)
        vals = to_physical(f)
        assert np.allclose(vals[0], 2.0 * np.sin(2 * np.pi * yy), atol=1e-12)
        assert np.abs(vals[1]).max() == 0.0
        assert divergence_defect(f) == 0.0

    def test_taylor_green(self, spec2d):
        f = taylor_green_field(spec2d)
        xx, yy = grid_coordinates(spec2d)
        vals = to_physical(f)
        assert np.allclose(vals[0], -np.cos(2 * np.pi * xx) * np.sin(2 * np.pi * yy),
                           atol=1e-12)
        assert np.allclose(vals[1], np.sin(2 * np.pi * xx) * np.cos(2 * np.pi * yy),
                           atol=1e-12)
        assert divergence_defect(f) <= 1e-15


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.sampled_from([2, 3]))
def test_round_trip_property(seed, dim):
    spec = TorusSpec(dim, 8, 16)
    f = random_real_field(spec, seed=seed)
    g = to_spectral(to_physical(f), spec)
    assert np.abs(g.coeffs - f.coeffs).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0.0, 0.5),
       u=st.floats(0.0, 0.5))
def test_heat_semigroup_property(seed, t, u):
    spec = TorusSpec(2, 8, 16)
    f = random_real_field(spec, seed=seed)
    a = heat_propagate(heat_propagate(f, t), u)
    b = heat_propagate(f, t + u)
    assert np.abs(a.coeffs - b.coeffs).max() <= 1e-12 * (1 + np.abs(f.coeffs).max())
