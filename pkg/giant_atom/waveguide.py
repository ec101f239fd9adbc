"""Discretized waveguide environment, target coupling profiles and weights."""

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

# Relative slack used when comparing momenta against gap edges and the cutoff.
EDGE_TOLERANCE = 1e-9


class WaveguideModel(BaseModel):
    """Linear-dispersion waveguide, omega_k = c|k|, with a hard momentum cutoff."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    c: float = Field(3.0, gt=0)
    k_max: float = Field(3.0, gt=0)
    delta_k: float = Field(1e-3, gt=0)

    @model_validator(mode="after")
    def _check_spacing(self) -> "WaveguideModel":
        if self.delta_k > self.k_max:
            raise ValueError("delta_k must not exceed k_max")
        return self

    @property
    def length(self) -> float:
        """Effective waveguide length L_w = 2 pi / delta_k."""
        return 2.0 * math.pi / self.delta_k

    @property
    def n_modes(self) -> int:
        return 2 * _half_count(self.k_max, self.delta_k) + 1

    @property
    def continuum_factor(self) -> float:
        """sqrt(L_w / 2 pi): converts per-mode couplings to continuum normalization."""
        return math.sqrt(self.length / (2.0 * math.pi))

    def omega(self, k: np.ndarray | float) -> np.ndarray:
        return self.c * np.abs(np.asarray(k, dtype=float))


def _half_count(k_max: float, delta_k: float) -> int:
    return int(math.floor(k_max / delta_k + EDGE_TOLERANCE))


@dataclass(frozen=True)
class KGrid:
    """Symmetric uniform momentum grid k_j = j * delta_k, j = -n..n."""

    k: np.ndarray
    delta_k: float
    c: float

    def __post_init__(self) -> None:
        self.k.flags.writeable = False

    def __len__(self) -> int:
        return int(self.k.size)

    @property
    def omega(self) -> np.ndarray:
        return self.c * np.abs(self.k)

    @property
    def length(self) -> float:
        return 2.0 * math.pi / self.delta_k

    def detunings(self, omega_q: float) -> np.ndarray:
        """Delta_k = omega_k - omega_q."""
        return self.omega - omega_q

    def mirror(self) -> np.ndarray:
        """Index map j -> index of -k_j."""
        return np.arange(len(self) - 1, -1, -1)


def build_kgrid(model: WaveguideModel) -> KGrid:
    """Discretize [-k_max, k_max] with spacing delta_k; 2 k_max/delta_k + 1 points."""
    if model.delta_k <= 0 or model.k_max <= 0:
        raise ValueError("delta_k and k_max must be positive")
    n = _half_count(model.k_max, model.delta_k)
    k = model.delta_k * np.arange(-n, n + 1, dtype=float)
    logger.debug(f"Built k-grid with {k.size} modes (delta_k={model.delta_k})")
    return KGrid(k=k, delta_k=model.delta_k, c=model.c)


class TargetProfile(BaseModel):
    """Piecewise-constant target |G_k^I| with one gap (chiral) or a mirrored pair (band gap)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["band_gap", "chiral"] = "band_gap"
    k_0: float = Field(1.5, gt=0)
    k_d: float = Field(0.1, gt=0)
    G_0: float = Field(1.0, gt=0)
    k_max: float = Field(3.0, gt=0)

    @model_validator(mode="after")
    def _check_gap(self) -> "TargetProfile":
        if self.k_0 - self.k_d / 2 <= 0:
            raise ValueError("gap must not reach k = 0 (need k_0 - k_d/2 > 0)")
        if self.k_0 + self.k_d / 2 >= self.k_max:
            raise ValueError("gap must lie below the cutoff (need k_0 + k_d/2 < k_max)")
        return self

    @property
    def lambda0(self) -> float:
        """Wavelength of the gap-centre mode, the reported length unit."""
        return 2.0 * math.pi / self.k_0

    @property
    def gap_intervals(self) -> list[tuple[float, float]]:
        lo, hi = self.k_0 - self.k_d / 2, self.k_0 + self.k_d / 2
        if self.kind == "band_gap":
            return [(-hi, -lo), (lo, hi)]
        return [(-hi, -lo)]

    @property
    def total_gap_width(self) -> float:
        return self.k_d * len(self.gap_intervals)

    def gap_mask(self, k: np.ndarray | float) -> np.ndarray:
        """True on the closed gap interval(s); edges count as in-gap."""
        k = np.asarray(k, dtype=float)
        eps = EDGE_TOLERANCE * max(1.0, self.k_max)
        mask = np.zeros(k.shape, dtype=bool)
        for lo, hi in self.gap_intervals:
            mask |= (k >= lo - eps) & (k <= hi + eps)
        return mask

    def gap_detuning_window(self, c: float, omega_q: float) -> tuple[float, float]:
        """Detuning interval covered by the gap modes, omega = c|k|."""
        return c * (self.k_0 - self.k_d / 2) - omega_q, c * (self.k_0 + self.k_d / 2) - omega_q

    def contains_frequency(self, c: float, omega_q: float) -> bool:
        lo, hi = self.gap_detuning_window(c, omega_q)
        return lo <= 0.0 <= hi


class WeightProfile(BaseModel):
    """Weight w(k): w_in on the gap interval(s), w_out elsewhere."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    w_in: float = Field(60.0, gt=0)
    w_out: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "WeightProfile":
        if self.w_in < self.w_out:
            raise ValueError("w_in must be >= w_out")
        return self


def _check_cutoff(profile: TargetProfile, k: np.ndarray) -> None:
    if np.any(np.abs(k) > profile.k_max * (1 + EDGE_TOLERANCE)):
        raise ValueError(f"|k| exceeds the cutoff k_max={profile.k_max}")


def target_value(profile: TargetProfile, k: np.ndarray | float) -> np.ndarray | float:
    """|G_k^I|: 0 inside the closed gap interval(s), G_0 elsewhere."""
    k_arr = np.asarray(k, dtype=float)
    _check_cutoff(profile, k_arr)
    values = np.where(profile.gap_mask(k_arr), 0.0, profile.G_0)
    return float(values) if values.ndim == 0 else values


def weight_value(
    w: WeightProfile, profile: TargetProfile, k: np.ndarray | float
) -> np.ndarray | float:
    """w(k) with the same gap-edge convention as target_value."""
    k_arr = np.asarray(k, dtype=float)
    _check_cutoff(profile, k_arr)
    values = np.where(profile.gap_mask(k_arr), w.w_in, w.w_out)
    return float(values) if values.ndim == 0 else values
