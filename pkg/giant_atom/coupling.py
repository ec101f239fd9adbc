"""Giant-atom coupling sequences and their momentum-space couplings.

A sequence is the set {x_i, A_i, theta_i}; the physical coupling at point i is
g(x_i) = g0 * A_i * exp(i theta_i) and the per-mode coupling on the k-grid is

    G_k = g0 * sum_i A_i exp(i theta_i) exp(-i k x_i).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .waveguide import KGrid, TargetProfile, WaveguideModel

logger = logging.getLogger(__name__)

DEFAULT_G0 = 0.002


def wrap_phase(theta: np.ndarray) -> np.ndarray:
    """Map phases into (-pi, pi], leaving values already in range untouched."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    return np.where((theta > np.pi) | (theta <= -np.pi), wrapped, theta)


def _frozen(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CouplingSequence:
    """Ordered coupling points of one giant atom.

    Positions are raw length units; amplitudes are dimensionless multiples of
    ``g0``. Points are sorted by position on construction.
    """

    positions: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))
    g0: float = DEFAULT_G0
    label: str = ""

    def __post_init__(self) -> None:
        x = np.asarray(self.positions, dtype=float).reshape(-1)
        a = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        theta = np.asarray(self.phases, dtype=float).reshape(-1)
        if theta.size == 0:
            theta = np.zeros_like(x)
        if not (x.size == a.size == theta.size):
            raise ValueError("positions, amplitudes and phases must have equal length")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be finite and non-negative")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        if self.g0 < 0:
            raise ValueError("g0 must be non-negative")
        order = np.argsort(x, kind="stable")
        object.__setattr__(self, "positions", _frozen(x[order]))
        object.__setattr__(self, "amplitudes", _frozen(a[order]))
        object.__setattr__(self, "phases", _frozen(wrap_phase(theta[order])))

    @classmethod
    def from_lambda0(
        cls,
        positions: Iterable[float],
        amplitudes: Iterable[float],
        phases: Optional[Iterable[float]] = None,
        *,
        k0: float = 1.5,
        g0: float = DEFAULT_G0,
        label: str = "",
    ) -> "CouplingSequence":
        """Build a sequence from positions given in units of lambda_0 = 2 pi / k0."""
        lambda0 = 2.0 * math.pi / k0
        x = np.asarray(list(positions), dtype=float) * lambda0
        theta = np.zeros_like(x) if phases is None else np.asarray(list(phases), dtype=float)
        return cls(x, np.asarray(list(amplitudes), dtype=float), theta, g0=g0, label=label)

    @classmethod
    def empty(cls, g0: float = DEFAULT_G0, label: str = "") -> "CouplingSequence":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), g0=g0, label=label)

    def __len__(self) -> int:
        return int(self.positions.size)

    @property
    def n_points(self) -> int:
        return len(self)

    @property
    def couplings(self) -> np.ndarray:
        """Physical couplings g(x_i) = g0 A_i exp(i theta_i)."""
        return self.g0 * self.amplitudes * np.exp(1j * self.phases)

    @property
    def extent(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.positions[-1] - self.positions[0])

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.phases == 0.0))

    def positions_in(self, lambda0: float) -> np.ndarray:
        return self.positions / lambda0

    def translated(self, d: float) -> "CouplingSequence":
        return CouplingSequence(
            self.positions + d, self.amplitudes, self.phases, g0=self.g0, label=self.label
        )

    def with_amplitudes(self, amplitudes: np.ndarray) -> "CouplingSequence":
        return CouplingSequence(
            self.positions, amplitudes, self.phases, g0=self.g0, label=self.label
        )

    def with_g0(self, g0: float) -> "CouplingSequence":
        return CouplingSequence(
            self.positions, self.amplitudes, self.phases, g0=g0, label=self.label
        )

    def concatenate(self, other: "CouplingSequence") -> "CouplingSequence":
        """Union of two sequences sharing g0; couplings add in k-space."""
        if other.g0 != self.g0:
            raise ValueError("sequences must share g0 to be concatenated")
        return CouplingSequence(
            np.concatenate([self.positions, other.positions]),
            np.concatenate([self.amplitudes, other.amplitudes]),
            np.concatenate([self.phases, other.phases]),
            g0=self.g0,
            label=self.label,
        )


def k_coupling(seq: CouplingSequence, grid: KGrid | np.ndarray) -> np.ndarray:
    """Per-mode coupling G_k on every grid momentum."""
    k = grid.k if isinstance(grid, KGrid) else np.asarray(grid, dtype=float)
    if len(seq) == 0:
        return np.zeros(k.shape, dtype=complex)
    phase = np.exp(-1j * np.multiply.outer(seq.positions, k))
    return seq.couplings @ phase


def conjugate_symmetry_check(
    seq: CouplingSequence, grid: KGrid, rtol: float = 1e-12
) -> bool:
    """True iff G_k = conj(G_{-k}) on every grid pair."""
    g = k_coupling(seq, grid)
    scale = float(np.max(np.abs(g), initial=0.0))
    if scale == 0.0:
        return True
    mismatch = np.abs(g - np.conj(g[grid.mirror()]))
    return bool(np.all(mismatch <= rtol * scale))


def out_of_gap_plateau(coupling: np.ndarray, profile: TargetProfile, k: np.ndarray) -> float:
    """Median |G_k| over the out-of-gap grid, the reference level for residuals."""
    outside = ~profile.gap_mask(k)
    if not np.any(outside):
        raise ValueError("grid has no out-of-gap points")
    return float(np.median(np.abs(coupling[outside])))


def gap_residual(seq: CouplingSequence, profile: TargetProfile, grid: KGrid) -> float:
    """Max in-gap |G_k| relative to the out-of-gap plateau."""
    g = k_coupling(seq, grid)
    plateau = out_of_gap_plateau(g, profile, grid.k)
    inside = profile.gap_mask(grid.k)
    if plateau == 0.0 or not np.any(inside):
        return math.inf if plateau == 0.0 else 0.0
    return float(np.max(np.abs(g[inside])) / plateau)


def gap_center_residual(seq: CouplingSequence, profile: TargetProfile, grid: KGrid) -> float:
    """|G_k| at the gap centre(s) relative to the out-of-gap plateau."""
    g = k_coupling(seq, grid)
    plateau = out_of_gap_plateau(g, profile, grid.k)
    centres = np.array([0.5 * (lo + hi) for lo, hi in profile.gap_intervals])
    return float(np.max(np.abs(k_coupling(seq, centres))) / plateau)


def ift_kernel(profile: TargetProfile, x: np.ndarray | float) -> np.ndarray:
    """Inverse Fourier transform g_I(x) of the band-gap target.

    g_I(x) = G_0 [sin(k_max x) - 2 sin(k_d x / 2) cos(k_0 x)] / (pi x),
    with the analytic limit G_0 (k_max - k_d) / pi at x = 0.
    """
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0.0, 1.0, x)
    values = (
        np.sin(profile.k_max * safe)
        - 2.0 * np.sin(profile.k_d * safe / 2.0) * np.cos(profile.k_0 * safe)
    ) / (np.pi * safe)
    limit = (profile.k_max - profile.k_d) / np.pi
    return profile.G_0 * np.where(x == 0.0, limit, values)


def ift_baseline(
    profile: TargetProfile,
    window_half_length: float,
    sample_spacing: float,
    g0: float = DEFAULT_G0,
) -> CouplingSequence:
    """Sample g_I(x) at x = n X_T inside |x| <= L (the analytic iFT route).

    Amplitudes carry X_T |g_I(x)| so that the discrete sum reproduces the
    target plateau; the sign goes into a 0 / pi phase.
    """
    if profile.kind != "band_gap":
        raise ValueError("the iFT baseline is defined for band-gap targets only")
    if window_half_length <= 0 or sample_spacing <= 0:
        raise ValueError("window half-length and sample spacing must be positive")
    n = int(math.floor(window_half_length / sample_spacing + 1e-9))
    x = sample_spacing * np.arange(-n, n + 1, dtype=float)
    g = sample_spacing * ift_kernel(profile, x)
    phases = np.where(g < 0, np.pi, 0.0)
    logger.info(f"iFT baseline sampled at {x.size} points (X_T={sample_spacing:.4g})")
    return CouplingSequence(x, np.abs(g), phases, g0=g0, label="ift-baseline")


def nyquist_bound(profile: TargetProfile) -> int:
    """Minimum point count ceil(4 k_max / k_d) for the iFT route."""
    return int(math.ceil(4.0 * profile.k_max / profile.k_d - 1e-9))


@dataclass(frozen=True)
class WavepacketSizes:
    """Single-point Weisskopf-Wigner rates Gamma_i and wavepacket sizes L_i."""

    decay_rates: np.ndarray
    sizes: np.ndarray

    def mean_size(self, exclude_uncoupled: bool = False) -> float:
        sizes = self.sizes
        if exclude_uncoupled:
            sizes = sizes[np.isfinite(sizes)]
        if sizes.size == 0:
            return math.inf
        return float(np.mean(sizes))

    @property
    def max_size(self) -> float:
        """Longest finite wavepacket, set by the weakest coupled point."""
        finite = self.sizes[np.isfinite(self.sizes)]
        return float(np.max(finite)) if finite.size else math.inf

    @property
    def strongest_point_size(self) -> float:
        """Wavepacket size of the point with the largest decay rate."""
        if self.sizes.size == 0:
            return math.inf
        return float(self.sizes[int(np.argmax(self.decay_rates))])


def wavepacket_sizes(seq: CouplingSequence, model: WaveguideModel) -> WavepacketSizes:
    """Gamma_i = 2 pi |g'_i|^2 / c with g'_i = g0 A_i sqrt(L_w / 2 pi); L_i = 2c / Gamma_i."""
    if seq.g0 <= 0:
        raise ValueError("g0 must be positive to define wavepacket sizes")
    g_prime = seq.g0 * seq.amplitudes * model.continuum_factor
    rates = 2.0 * np.pi * g_prime**2 / model.c
    with np.errstate(divide="ignore"):
        sizes = np.where(rates > 0, 2.0 * model.c / np.where(rates > 0, rates, 1.0), np.inf)
    return WavepacketSizes(decay_rates=rates, sizes=sizes)


class ConstraintSet(BaseModel):
    """Physical constraints on a design; lengths are in units of lambda_0 = 2 pi / k_0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    eta: float = Field(0.1, gt=0)
    max_extent: float = Field(17.0, gt=0)
    n_max: int = Field(30, ge=1)
    require_nonneg_real: bool = True
    markov_margin: float = Field(10.0, gt=1)
    k_0: float = Field(1.5, gt=0)

    @property
    def lambda0(self) -> float:
        return 2.0 * math.pi / self.k_0

    @property
    def min_spacing(self) -> float:
        return self.eta * self.lambda0

    @property
    def extent_length(self) -> float:
        return self.max_extent * self.lambda0


class CheckResult(BaseModel):
    passed: bool
    detail: str


class ValidationReport(BaseModel):
    """Pass/fail outcome of every constraint check."""

    checks: dict[str, CheckResult]
    mean_wavepacket_size: float
    markov_ratio: float

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, check in self.checks.items() if not check.passed]

    def summary(self) -> str:
        lines = []
        for name, check in self.checks.items():
            mark = "pass" if check.passed else "FAIL"
            lines.append(f"{name:<12} {mark}  {check.detail}")
        return "\n".join(lines)


def validate(
    seq: CouplingSequence,
    cons: ConstraintSet,
    model: WaveguideModel,
    exclude_uncoupled: bool = False,
) -> ValidationReport:
    """Check spacing, extent, count, sign and Markovianity constraints."""
    lam = cons.lambda0
    checks: dict[str, CheckResult] = {}

    if len(seq) > 1:
        gap = float(np.min(np.diff(seq.positions)))
        checks["min_spacing"] = CheckResult(
            passed=cons.min_spacing < gap,
            detail=f"min gap {gap / lam:.6g} lambda0 vs eta {cons.eta:.6g} lambda0",
        )
    else:
        checks["min_spacing"] = CheckResult(passed=True, detail="fewer than two points")

    half = cons.extent_length / 2.0
    if len(seq):
        x1, xn = float(seq.positions[0]), float(seq.positions[-1])
        inside = -half < x1 and xn < half
        detail = f"[{x1 / lam:.6g}, {xn / lam:.6g}] lambda0 within +-{cons.max_extent / 2:.6g}"
    else:
        inside, detail = True, "empty sequence"
    checks["extent"] = CheckResult(passed=inside, detail=detail)

    checks["count"] = CheckResult(
        passed=len(seq) <= cons.n_max, detail=f"N={len(seq)} vs N_max={cons.n_max}"
    )

    if cons.require_nonneg_real:
        real = bool(np.all(seq.phases == 0.0) and np.all(seq.amplitudes >= 0.0))
        checks["nonnegative"] = CheckResult(
            passed=real, detail="all couplings real and non-negative" if real else "phases present"
        )

    sizes = wavepacket_sizes(seq, model) if seq.g0 > 0 else None
    mean_size = sizes.mean_size(exclude_uncoupled) if sizes is not None else math.inf
    ratio = mean_size / cons.extent_length
    strongest = sizes.strongest_point_size if sizes is not None else math.inf
    checks["markov"] = CheckResult(
        passed=ratio >= cons.markov_margin,
        detail=(
            f"mean wavepacket {mean_size / lam:.4g} lambda0, ratio {ratio:.4g}, "
            f"strongest point {strongest / lam:.4g} lambda0"
        ),
    )
    return ValidationReport(checks=checks, mean_wavepacket_size=mean_size, markov_ratio=ratio)


def perturb(
    seq: CouplingSequence,
    sigma_A: float,
    sigma_phi: float,
    seed: int,
    stream: int = 0,
) -> CouplingSequence:
    """Gaussian amplitude (relative) and phase (absolute) disorder.

    Each point draws from its own counter-derived stream keyed by
    (seed, stream, point index); negative amplitudes are clamped to zero.
    """
    if sigma_A < 0 or sigma_phi < 0:
        raise ValueError("disorder widths must be non-negative")
    if sigma_A == 0 and sigma_phi == 0:
        return seq
    draws = np.empty((len(seq), 2))
    for i in range(len(seq)):
        draws[i] = np.random.default_rng([seed, stream, i]).standard_normal(2)
    amplitudes = np.maximum(seq.amplitudes + sigma_A * seq.amplitudes * draws[:, 0], 0.0)
    phases = seq.phases + sigma_phi * draws[:, 1]
    return CouplingSequence(seq.positions, amplitudes, phases, g0=seq.g0, label=seq.label)
