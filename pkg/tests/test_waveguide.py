"""Tests for the waveguide module."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from giant_atom.waveguide import (
    TargetProfile,
    WaveguideModel,
    WeightProfile,
    build_kgrid,
    target_value,
    weight_value,
)


def test_build_kgrid_default_size(fine_model):
    """Test the default grid spans [-3, 3] with 6001 points."""
    grid = build_kgrid(fine_model)

    assert len(grid) == 6001
    assert grid.k[0] == pytest.approx(-3.0)
    assert grid.k[-1] == pytest.approx(3.0)
    assert fine_model.length == pytest.approx(2 * math.pi / 1e-3)


def test_build_kgrid_minimal():
    """Test the smallest possible grid."""
    grid = build_kgrid(WaveguideModel(k_max=1.0, delta_k=1.0))

    np.testing.assert_array_equal(grid.k, [-1.0, 0.0, 1.0])


def test_grid_symmetric_and_increasing(fine_grid):
    """Test the grid is strictly increasing and mirror-symmetric."""
    assert np.all(np.diff(fine_grid.k) > 0)
    np.testing.assert_array_equal(fine_grid.k, -fine_grid.k[fine_grid.mirror()])


def test_grid_dispersion(fine_grid):
    """Test omega_k = c|k| and detunings on every point."""
    np.testing.assert_array_equal(fine_grid.omega, 3.0 * np.abs(fine_grid.k))
    np.testing.assert_array_equal(fine_grid.detunings(4.5), 3.0 * np.abs(fine_grid.k) - 4.5)


def test_grid_is_read_only(fine_grid):
    """Test the grid array cannot be mutated."""
    with pytest.raises(ValueError):
        fine_grid.k[0] = 1.0


@pytest.mark.parametrize("kwargs", [{"delta_k": 0.0}, {"delta_k": -1e-3}, {"k_max": 0.0}, {"delta_k": 4.0}])
def test_waveguide_rejects_bad_parameters(kwargs):
    """Test degenerate spacings and cutoffs are rejected."""
    with pytest.raises(ValueError):
        WaveguideModel(**kwargs)


def test_band_gap_target_values(band_gap):
    """Test band-gap target inside, outside and at the edges."""
    assert target_value(band_gap, 1.5) == 0.0
    assert target_value(band_gap, -1.5) == 0.0
    assert target_value(band_gap, 0.0) == 1.0
    assert target_value(band_gap, 1.45) == 0.0
    assert target_value(band_gap, 1.55) == 0.0
    assert target_value(band_gap, 1.56) == 1.0


def test_chiral_target_values(chiral):
    """Test the chiral target suppresses only the negative side."""
    assert target_value(chiral, 1.5) == 1.0
    assert target_value(chiral, -1.5) == 0.0
    assert target_value(chiral, -2.0) == 0.0
    assert target_value(chiral, -0.9) == 1.0


def test_target_rejects_beyond_cutoff(band_gap):
    """Test |k| > k_max is rejected."""
    with pytest.raises(ValueError):
        target_value(band_gap, 3.1)
    with pytest.raises(ValueError):
        weight_value(WeightProfile(), band_gap, np.array([0.0, -3.5]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"k_0": 0.04, "k_d": 0.1},
        {"k_0": 2.99, "k_d": 0.1},
        {"k_d": 0.0},
    ],
)
def test_target_rejects_bad_gap(kwargs):
    """Test gaps reaching k=0 or the cutoff are rejected."""
    with pytest.raises(ValueError):
        TargetProfile(**kwargs)


def test_weight_values(band_gap, chiral):
    """Test weights follow the target's gap convention."""
    assert weight_value(WeightProfile(w_in=60, w_out=1), band_gap, 1.5) == 60.0
    assert weight_value(WeightProfile(w_in=30, w_out=1), chiral, -1.5) == 30.0
    assert weight_value(WeightProfile(w_in=30, w_out=1), chiral, 1.5) == 1.0
    assert weight_value(WeightProfile(w_in=60, w_out=2), band_gap, 0.3) == 2.0


def test_weight_rejects_inverted_order():
    """Test w_in < w_out is rejected."""
    with pytest.raises(ValueError):
        WeightProfile(w_in=1.0, w_out=2.0)


def test_band_gap_target_is_even(band_gap, fine_grid):
    """Test the band-gap target is even in k."""
    values = target_value(band_gap, fine_grid.k)
    np.testing.assert_array_equal(values, values[fine_grid.mirror()])


def test_chiral_target_breaks_evenness_only_in_gap(chiral, fine_grid):
    """Test the chiral target differs from its mirror only on the gap interval."""
    values = target_value(chiral, fine_grid.k)
    differs = values != values[fine_grid.mirror()]
    assert np.all(chiral.gap_mask(fine_grid.k)[differs] | chiral.gap_mask(-fine_grid.k)[differs])
    assert np.any(differs)


def test_weight_integral_matches_closed_form(band_gap):
    """Test the quadrature of w(k) against w_out(2k_max - gap) + w_in*gap."""
    w = WeightProfile(w_in=60.0, w_out=1.0)
    k = np.linspace(-3.0, 3.0, 600_001)
    integral = trapezoid(weight_value(w, band_gap, k), k)
    expected = 1.0 * (6.0 - band_gap.total_gap_width) + 60.0 * band_gap.total_gap_width

    assert integral == pytest.approx(expected, rel=1e-3)


@given(
    k0=st.floats(min_value=0.5, max_value=2.0),
    kd=st.floats(min_value=0.01, max_value=0.8),
    k=st.floats(min_value=-3.0, max_value=3.0),
)
def test_target_and_weight_agree_on_gap(k0, kd, k):
    """Test target is zero exactly where the weight is w_in."""
    profile = TargetProfile(kind="band_gap", k_0=k0, k_d=kd)
    w = WeightProfile(w_in=5.0, w_out=1.0)

    assert (target_value(profile, k) == 0.0) == (weight_value(w, profile, k) == 5.0)
