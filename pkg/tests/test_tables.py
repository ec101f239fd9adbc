"""Tests for the published coupling sequences."""

import math

import numpy as np
import pytest

from giant_atom.coupling import validate
from giant_atom.tables import BUILTIN_IDS, builtin_sequence


def test_builtin_ids():
    """Test the published sequences and the computed lattice are registered."""
    assert BUILTIN_IDS == ("table_s1", "table_s2", "bandgap_lattice")


def test_table_s1_contents(table_s1):
    """Test the band-gap sequence has 28 real points with its strongest at 0.544 lambda_0."""
    lambda0 = 2 * math.pi / 1.5
    strongest = int(np.argmax(table_s1.amplitudes))

    assert len(table_s1) == 28
    assert table_s1.is_real
    assert table_s1.amplitudes[strongest] == 0.9543
    assert table_s1.positions[strongest] / lambda0 == pytest.approx(0.544)
    assert table_s1.extent / lambda0 == pytest.approx(16.364)


def test_table_s2_contents(table_s2):
    """Test the chiral sequence is sorted and keeps its printed phases."""
    lambda0 = 2 * math.pi / 1.5

    assert len(table_s2) == 10
    assert not table_s2.is_real
    assert np.all(np.diff(table_s2.positions) > 0)
    assert table_s2.positions[-1] / lambda0 == pytest.approx(0.909)
    assert table_s2.phases[-1] == pytest.approx(0.460 * math.pi)
    assert table_s2.amplitudes[-1] == 0.243


def test_builtin_sequence_g0_and_label():
    """Test g0 is applied and the id becomes the label."""
    seq = builtin_sequence("table_s1", g0=0.01)

    assert seq.g0 == 0.01
    assert seq.label == "table_s1"


def test_builtin_sequence_scales_with_k0():
    """Test positions follow lambda_0 = 2 pi / k_0."""
    a = builtin_sequence("table_s2", k0=1.5)
    b = builtin_sequence("table_s2", k0=3.0)

    np.testing.assert_allclose(b.positions, a.positions / 2)


def test_unknown_builtin():
    """Test unknown ids are rejected."""
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin_sequence("table_s3")


def test_bandgap_lattice_contents(bandgap_lattice, bandgap_constraints, fine_model):
    """Test the lattice golden is real, symmetric, on a lambda_0 / 2 lattice and feasible."""
    lambda0 = 2 * math.pi / 1.5
    half_steps = bandgap_lattice.positions / (lambda0 / 2)

    assert bandgap_lattice.is_real
    assert 0 < len(bandgap_lattice) <= 29
    np.testing.assert_allclose(half_steps, np.round(half_steps), atol=1e-9)
    np.testing.assert_allclose(bandgap_lattice.positions, -bandgap_lattice.positions[::-1], atol=1e-9)
    np.testing.assert_allclose(bandgap_lattice.amplitudes, bandgap_lattice.amplitudes[::-1])
    assert np.all(bandgap_lattice.amplitudes <= 1.5)
    assert validate(bandgap_lattice, bandgap_constraints, fine_model).passed


def test_bandgap_lattice_scales_with_k0():
    """Test the computed lattice follows lambda_0 like the printed tables."""
    a = builtin_sequence("bandgap_lattice", k0=1.5)
    b = builtin_sequence("bandgap_lattice", k0=3.0, g0=0.01)

    np.testing.assert_allclose(b.positions, a.positions / 2)
    np.testing.assert_array_equal(b.amplitudes, a.amplitudes)
    assert b.g0 == 0.01
    assert b.label == "bandgap_lattice"
