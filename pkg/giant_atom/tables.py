"""Coupling sequences shipped as golden data.

The two published tables list positions in units of lambda_0 = 2 pi / k_0
exactly as printed; phases of the chiral sequence are listed in units of pi.
``bandgap_lattice`` is computed rather than printed: the lattice-stage
solution of the default band-gap problem on the fine grid.
"""

import math
from functools import lru_cache

import numpy as np

from .coupling import DEFAULT_G0, ConstraintSet, CouplingSequence
from .errors import OptimizationFailed
from .optimizer import DesignProblem, lattice_design
from .waveguide import TargetProfile, WaveguideModel, WeightProfile, build_kgrid

BUILTIN_K0 = 1.5

TABLE_S1_POSITIONS = (
    -8.196, -7.901, -6.992, -6.682, -4.721, -4.396, -3.726, -3.419, -2.732, -2.441,
    -1.71, -1.46, -0.507, -0.006, 0.244, 0.544, 1.488, 2.459, 3.439, 4.448,
    4.861, 5.44, 5.88, 6.383, 6.846, 7.166, 7.857, 8.168,
)  # fmt: skip

TABLE_S1_AMPLITUDES = (
    0.0184, 0.0291, 0.0268, 0.0146, 0.0306, 0.0502, 0.0302, 0.086, 0.0317, 0.1206,
    0.0906, 0.0748, 0.0223, 0.1413, 0.1553, 0.9543, 0.0458, 0.1441, 0.1305, 0.1152,
    0.0298, 0.0393, 0.0402, 0.0219, 0.0472, 0.0184, 0.0366, 0.0265,
)  # fmt: skip

# Row order as printed; not monotone in x.
TABLE_S2_POSITIONS = (
    -0.909, -0.757, -0.383, -0.508, -0.0975, -0.222, 0.393, 0.120, 0.641, 0.909,
)  # fmt: skip

TABLE_S2_AMPLITUDES = (
    0.088, 0.130, 0.628, 0.429, 0.392, 0.591, 0.365, 0.198, 0.615, 0.243,
)  # fmt: skip

TABLE_S2_PHASES_PI = (
    0.388, -0.500, -0.446, 0.500, -0.500, 0.500, -0.500, 0.179, 0.0048, 0.460,
)  # fmt: skip

BUILTIN_IDS = ("table_s1", "table_s2", "bandgap_lattice")


@lru_cache(maxsize=1)
def _bandgap_lattice_lambda0() -> tuple[np.ndarray, np.ndarray]:
    """Positions (in lambda_0) and amplitudes of the default band-gap lattice."""
    target = TargetProfile(k_0=BUILTIN_K0)
    problem = DesignProblem(
        target=target,
        weights=WeightProfile(),
        constraints=ConstraintSet(k_0=BUILTIN_K0),
        grid=build_kgrid(WaveguideModel()),
        budget=1,
    )
    seq = lattice_design(problem)
    if seq is None:
        raise OptimizationFailed("the band-gap lattice program has no solution")
    return seq.positions / target.lambda0, seq.amplitudes


def builtin_sequence(
    sequence_id: str, g0: float = DEFAULT_G0, k0: float = BUILTIN_K0
) -> CouplingSequence:
    """Return a golden sequence by id, canonically sorted by position."""
    if sequence_id == "table_s1":
        return CouplingSequence.from_lambda0(
            TABLE_S1_POSITIONS, TABLE_S1_AMPLITUDES, k0=k0, g0=g0, label="table_s1"
        )
    if sequence_id == "table_s2":
        phases = math.pi * np.asarray(TABLE_S2_PHASES_PI)
        return CouplingSequence.from_lambda0(
            TABLE_S2_POSITIONS,
            TABLE_S2_AMPLITUDES,
            phases,
            k0=k0,
            g0=g0,
            label="table_s2",
        )
    if sequence_id == "bandgap_lattice":
        positions, amplitudes = _bandgap_lattice_lambda0()
        return CouplingSequence.from_lambda0(
            positions, amplitudes, k0=k0, g0=g0, label="bandgap_lattice"
        )
    raise ValueError(f"unknown builtin sequence '{sequence_id}' (known: {', '.join(BUILTIN_IDS)})")
