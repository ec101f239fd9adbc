"""Shared fixtures and hypothesis profiles."""

import os

import hypothesis
import numpy as np
import pytest

from giant_atom.coupling import ConstraintSet
from giant_atom.tables import builtin_sequence
from giant_atom.waveguide import TargetProfile, WaveguideModel, build_kgrid

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def fine_model():
    return WaveguideModel(c=3.0, k_max=3.0, delta_k=1e-3)


@pytest.fixture
def coarse_model():
    return WaveguideModel(c=3.0, k_max=3.0, delta_k=5e-3)


@pytest.fixture
def fine_grid(fine_model):
    return build_kgrid(fine_model)


@pytest.fixture
def band_gap():
    return TargetProfile(kind="band_gap", k_0=1.5, k_d=0.1, G_0=1.0, k_max=3.0)


@pytest.fixture
def chiral():
    return TargetProfile(kind="chiral", k_0=1.5, k_d=1.0, G_0=1.0, k_max=3.0)


@pytest.fixture
def table_s1():
    return builtin_sequence("table_s1")


@pytest.fixture
def table_s2():
    return builtin_sequence("table_s2")


@pytest.fixture
def bandgap_lattice():
    return builtin_sequence("bandgap_lattice")


@pytest.fixture
def bandgap_constraints():
    return ConstraintSet(eta=0.1, max_extent=17.0, n_max=30)
