"""Spectral and steady-state observables of a giant atom on the waveguide.

Mode sums use the per-mode coupling G_k on the discretized grid; rate
formulas use the continuum coupling G'_k = G_k sqrt(L_w / 2 pi).
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq, curve_fit
from scipy.signal import find_peaks

from .coupling import CouplingSequence, k_coupling
from .errors import NoBoundStateError
from .waveguide import KGrid, TargetProfile, WaveguideModel, build_kgrid

logger = logging.getLogger(__name__)

POLE_SAMPLES = 10_000
POLE_CHUNK = 500
MIN_RESIDUE = 1e-3
COINCIDENCE = 1e-12


@dataclass(frozen=True)
class _Spectrum:
    """Detunings and per-mode weights |G_k|^2 of one sequence."""

    grid: KGrid
    couplings: np.ndarray
    detunings: np.ndarray

    @classmethod
    def of(cls, seq: CouplingSequence, omega_q: float, model: WaveguideModel) -> "_Spectrum":
        grid = build_kgrid(model)
        return cls(grid, k_coupling(seq, grid), grid.detunings(omega_q))

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.couplings) ** 2

    @property
    def half_spacing(self) -> float:
        return self.grid.c * self.grid.delta_k / 2

    def sigma(self, energies: np.ndarray) -> np.ndarray:
        e = np.asarray(energies, dtype=float).reshape(-1)
        out = np.empty(e.size)
        w = self.weights
        for start in range(0, e.size, POLE_CHUNK):
            block = e[start : start + POLE_CHUNK]
            out[start : start + block.size] = (w / np.subtract.outer(block, self.detunings)).sum(axis=1)
        return out

    def mixing(self, energy: float) -> float:
        """sum_k |G_k|^2 / (E - Delta_k)^2."""
        return float(np.sum(self.weights / (energy - self.detunings) ** 2))


@dataclass(frozen=True)
class SelfEnergyCurve:
    """Sigma_e(E) sampled on real energies; NaN where E hits a coupled grid detuning."""

    energies: np.ndarray
    values: np.ndarray
    excluded: np.ndarray


@dataclass(frozen=True)
class BoundStateSolution:
    energy: float
    residue: float
    mixing: float
    positions: np.ndarray
    psi_b: np.ndarray
    trapped_energy: float


def self_energy(
    seq: CouplingSequence, omega_q: float, model: WaveguideModel, energies: np.ndarray
) -> SelfEnergyCurve:
    spectrum = _Spectrum.of(seq, omega_q, model)
    e = np.asarray(energies, dtype=float)
    coupled = spectrum.detunings[spectrum.weights > 0]
    excluded = np.zeros(e.shape, dtype=bool)
    if coupled.size:
        nearest = np.min(np.abs(np.subtract.outer(e.reshape(-1), coupled)), axis=1)
        excluded = (nearest <= COINCIDENCE * np.maximum(1.0, np.abs(e.reshape(-1)))).reshape(e.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = spectrum.sigma(e).reshape(e.shape)
    values = np.where(excluded, np.nan, values)
    return SelfEnergyCurve(energies=e, values=values, excluded=excluded)


def pole_window(profile: TargetProfile, model: WaveguideModel, omega_q: float) -> tuple[float, float]:
    """Gap-detuning window shrunk by 2 c delta_k at both ends."""
    lo, hi = profile.gap_detuning_window(model.c, omega_q)
    eps = 2 * model.c * model.delta_k
    if lo + eps >= hi - eps:
        raise ValueError("gap window is narrower than the pole-search margin")
    return lo + eps, hi - eps


def find_pole(
    seq: CouplingSequence,
    omega_q: float,
    model: WaveguideModel,
    profile: TargetProfile,
    samples: int = POLE_SAMPLES,
) -> float:
    """Real root of f(E) = E - Sigma_e(E) in the gap window, closest to zero.

    f is increasing between grid poles, so roots are the - to + crossings of a
    dense scan; brackets that straddle a pole are rejected by their residue.
    """
    spectrum = _Spectrum.of(seq, omega_q, model)
    lo, hi = pole_window(profile, model, omega_q)
    energies = np.linspace(lo, hi, samples)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = energies - spectrum.sigma(energies)

    def residual(e: float) -> float:
        return float(e - np.sum(spectrum.weights / (e - spectrum.detunings)))

    roots = []
    crossings = np.nonzero((f[:-1] < 0) & (f[1:] > 0))[0]
    for i in crossings:
        try:
            root = brentq(
                residual, energies[i], energies[i + 1], xtol=1e-15, rtol=8.9e-16, maxiter=200
            )
        except ValueError:
            logger.debug(f"Bracket [{energies[i]:.6e}, {energies[i + 1]:.6e}] lost its sign change")
            continue
        if 1.0 / (1.0 + spectrum.mixing(root)) > MIN_RESIDUE:
            roots.append(root)
    for e in energies[f == 0.0]:
        roots.append(float(e))
    if not roots:
        raise NoBoundStateError(
            f"no bound-state pole for omega_q={omega_q:g} in detuning window [{lo:.4g}, {hi:.4g}]"
        )
    pole = float(min(roots, key=abs))
    logger.info(f"Bound-state pole at E_b={pole:.6e} (omega_q={omega_q:g}, {len(roots)} root(s))")
    return pole


def residue_population(
    seq: CouplingSequence, omega_q: float, model: WaveguideModel, energy: float
) -> float:
    """Long-time |c_e|^2 from the residue at the pole, 1 / (1 + sum |G_k|^2/(E_b - Delta_k)^2)^2."""
    spectrum = _Spectrum.of(seq, omega_q, model)
    value = 1.0 / (1.0 + spectrum.mixing(energy)) ** 2
    logger.info(f"Residue population {value:.6f} at E_b={energy:.4e}")
    return value


def weak_coupling_population(seq: CouplingSequence, omega_q: float, model: WaveguideModel) -> float:
    """Approximate trapped population (1 + sum |G_k / Delta_k|^2)^-2, resonant terms dropped."""
    spectrum = _Spectrum.of(seq, omega_q, model)
    keep = np.abs(spectrum.detunings) >= spectrum.half_spacing
    s = np.sum(spectrum.weights[keep] / spectrum.detunings[keep] ** 2)
    return float(1.0 / (1.0 + s) ** 2)


def _photonic_amplitude(
    spectrum: _Spectrum, energy: float, positions: np.ndarray
) -> np.ndarray:
    """Eigenvector photonic part sum_k G_k/(E_b - Delta_k) e^{ikx} / sqrt(L_w), unnormalized in c_b."""
    denominators = energy - spectrum.detunings
    keep = np.abs(denominators) >= spectrum.half_spacing
    coefficients = spectrum.couplings[keep] / denominators[keep]
    k = spectrum.grid.k[keep]
    x = np.asarray(positions, dtype=float).reshape(-1)
    out = np.empty(x.size, dtype=complex)
    for start in range(0, x.size, POLE_CHUNK):
        block = x[start : start + POLE_CHUNK]
        out[start : start + block.size] = np.exp(1j * np.multiply.outer(block, k)) @ coefficients
    return out.reshape(np.shape(positions)) / math.sqrt(spectrum.grid.length)


def bound_state_field(
    seq: CouplingSequence,
    omega_q: float,
    model: WaveguideModel,
    positions: np.ndarray,
    profile: TargetProfile,
) -> np.ndarray:
    """Photonic field the long-time dynamics converges to, c_b^2 sum_k G_k/(E_b-Delta_k) e^{ikx}.

    Comparable with ``field_profile`` after taking |.|^2.
    """
    if not profile.contains_frequency(model.c, omega_q):
        raise ValueError(f"omega_q={omega_q:g} lies outside the gap")
    spectrum = _Spectrum.of(seq, omega_q, model)
    energy = find_pole(seq, omega_q, model, profile)
    projection = 1.0 / (1.0 + spectrum.mixing(energy))
    return projection * _photonic_amplitude(spectrum, energy, positions)


def _window_positions(seq: CouplingSequence, n: int) -> np.ndarray:
    return np.linspace(float(seq.positions[0]), float(seq.positions[-1]), n)


def trapped_photon_energy(
    seq: CouplingSequence,
    omega_q: float,
    model: WaveguideModel,
    profile: TargetProfile,
    n_positions: int = 2001,
) -> float:
    """Photon weight of the normalized bound state inside [x_1, x_N]; zero without a pole."""
    if len(seq) < 2:
        return 0.0
    try:
        energy = find_pole(seq, omega_q, model, profile)
    except NoBoundStateError:
        return 0.0
    spectrum = _Spectrum.of(seq, omega_q, model)
    x = _window_positions(seq, n_positions)
    c_b = 1.0 / math.sqrt(1.0 + spectrum.mixing(energy))
    intensity = np.abs(c_b * _photonic_amplitude(spectrum, energy, x)) ** 2
    return float(trapezoid(intensity, x))


def bound_state(
    seq: CouplingSequence,
    omega_q: float,
    model: WaveguideModel,
    profile: TargetProfile,
    positions: Optional[np.ndarray] = None,
) -> BoundStateSolution:
    """Pole, residue, mixing, field and trapped energy in one pass."""
    if not profile.contains_frequency(model.c, omega_q):
        raise ValueError(f"omega_q={omega_q:g} lies outside the gap")
    spectrum = _Spectrum.of(seq, omega_q, model)
    energy = find_pole(seq, omega_q, model, profile)
    mixing = spectrum.mixing(energy)
    x = _window_positions(seq, 2001) if positions is None else np.asarray(positions, dtype=float)
    psi = _photonic_amplitude(spectrum, energy, x) / (1.0 + mixing)
    return BoundStateSolution(
        energy=energy,
        residue=1.0 / (1.0 + mixing) ** 2,
        mixing=mixing,
        positions=x,
        psi_b=psi,
        trapped_energy=trapped_photon_energy(seq, omega_q, model, profile),
    )


def _interpolate(grid: KGrid, values: np.ndarray, k: float) -> complex:
    return complex(np.interp(k, grid.k, values.real) + 1j * np.interp(k, grid.k, values.imag))


def resonant_couplings(
    seq: CouplingSequence, omega_q: float, model: WaveguideModel
) -> tuple[complex, complex]:
    """G'_{+k_r} and G'_{-k_r}, k_r = omega_q / c, linearly interpolated on the grid."""
    k_r = omega_q / model.c
    if k_r > model.k_max:
        raise ValueError(f"resonant momentum {k_r:g} exceeds k_max={model.k_max:g}")
    grid = build_kgrid(model)
    g = k_coupling(seq, grid) * model.continuum_factor
    return _interpolate(grid, g, k_r), _interpolate(grid, g, -k_r)


def ww_decay_rate(seq: CouplingSequence, omega_q: float, model: WaveguideModel) -> float:
    """Total Weisskopf-Wigner rate 2 pi (|G'_{k_r}|^2 + |G'_{-k_r}|^2) / c."""
    plus, minus = resonant_couplings(seq, omega_q, model)
    return 2 * math.pi * (abs(plus) ** 2 + abs(minus) ** 2) / model.c


def chiral_factor(
    seq: CouplingSequence, omega_q: float, model: WaveguideModel
) -> tuple[float, float]:
    """(beta_+, beta_-) from the resonant couplings; NaN when both vanish."""
    plus, minus = resonant_couplings(seq, omega_q, model)
    right, left = abs(plus) ** 2, abs(minus) ** 2
    total = right + left
    if total == 0.0:
        logger.warning(f"No resonant coupling at omega_q={omega_q:g}; chiral factor undefined")
        return math.nan, math.nan
    return right / total, left / total


def flux_totals(
    positions: np.ndarray, intensity: np.ndarray, origin: float = 0.0
) -> tuple[float, float]:
    """Integrated photon weight (Phi_R, Phi_L) on either side of ``origin``."""
    x = np.asarray(positions, dtype=float)
    y = np.asarray(intensity, dtype=float)
    right = float(trapezoid(np.where(x > origin, y, 0.0), x))
    left = float(trapezoid(np.where(x < origin, y, 0.0), x))
    return right, left


def flux_ratio(right: float, left: float) -> tuple[float, float]:
    total = right + left
    if total <= 0.0:
        logger.warning("Zero total photon flux; flux chirality undefined")
        return math.nan, math.nan
    return right / total, left / total


def flux_chirality(
    positions: np.ndarray, intensity: np.ndarray, origin: float = 0.0
) -> tuple[float, float]:
    """(beta_+, beta_-) from the late-time field on either side of ``origin``."""
    return flux_ratio(*flux_totals(positions, intensity, origin))


def dipole_dipole_J(
    seq: CouplingSequence, omega_q: float, model: WaveguideModel, d_s: float
) -> complex:
    """Exchange strength J_AB = -sum_k |G_k|^2 e^{i k d_s} / Delta_k for a copy translated by d_s.

    Terms with |Delta_k| < c delta_k / 2 are dropped.
    """
    spectrum = _Spectrum.of(seq, omega_q, model)
    keep = np.abs(spectrum.detunings) >= spectrum.half_spacing
    k = spectrum.grid.k[keep]
    terms = spectrum.weights[keep] * np.exp(1j * k * d_s) / spectrum.detunings[keep]
    return complex(-np.sum(terms))


def dipole_sweep(
    seq: CouplingSequence, omega_q: float, model: WaveguideModel, separations: Iterable[float]
) -> np.ndarray:
    spectrum = _Spectrum.of(seq, omega_q, model)
    keep = np.abs(spectrum.detunings) >= spectrum.half_spacing
    kernel = spectrum.weights[keep] / spectrum.detunings[keep]
    d = np.asarray(list(separations), dtype=float)
    return -(np.exp(1j * np.multiply.outer(d, spectrum.grid.k[keep])) @ kernel)


def chirality_sweep(
    seq: CouplingSequence, omegas: Iterable[float], model: WaveguideModel
) -> np.ndarray:
    return np.array([chiral_factor(seq, w, model)[0] for w in omegas])


def trapped_energy_sweep(
    seq: CouplingSequence, omegas: Iterable[float], model: WaveguideModel, profile: TargetProfile
) -> np.ndarray:
    return np.array([trapped_photon_energy(seq, w, model, profile) for w in omegas])


def trapped_population_sweep(
    seq: CouplingSequence,
    g0_values: Iterable[float],
    omega_q: float,
    model: WaveguideModel,
    profile: TargetProfile,
) -> np.ndarray:
    """Residue population as the overall coupling scale g0 varies."""
    values = []
    for g0 in g0_values:
        scaled = seq.with_g0(g0)
        values.append(residue_population(scaled, omega_q, model, find_pole(scaled, omega_q, model, profile)))
    return np.array(values)


# Trace post-processing


def steady_population(population: np.ndarray, tail_fraction: float = 0.2) -> float:
    """Mean over the last ``tail_fraction`` of a trace."""
    p = np.asarray(population, dtype=float)
    n = max(1, int(round(tail_fraction * p.size)))
    return float(np.mean(p[-n:]))


def fit_decay_rate(
    times: np.ndarray, population: np.ndarray, lower: float = 0.1, upper: float = 0.9
) -> float:
    """Least-squares slope of -ln p(t) over samples with lower <= p <= upper."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(population, dtype=float)
    window = (p >= lower) & (p <= upper)
    if np.count_nonzero(window) < 3:
        raise ValueError("too few samples inside the fit window")
    slope, _ = np.polyfit(t[window], np.log(p[window]), 1)
    return float(-slope)


def _sinusoid(t: np.ndarray, offset: float, amplitude: float, omega: float, phase: float) -> np.ndarray:
    return offset + amplitude * np.cos(omega * t + phase)


def rabi_frequency(times: np.ndarray, signal: np.ndarray, padding: int = 16) -> float:
    """Dominant angular frequency of a uniformly sampled trace.

    Mean-removed, zero-padded FFT peak refined by a parabola through the
    three bins around it, then by a least-squares sinusoid fit started there.
    The fit is kept only if it stays within one FFT bin of the peak.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal, dtype=float)
    dt = float(t[1] - t[0])
    n_fft = padding * y.size
    spectrum = np.abs(np.fft.rfft(y - np.mean(y), n=n_fft))
    peak = int(np.argmax(spectrum[1:])) + 1
    offset = 0.0
    if 1 <= peak < spectrum.size - 1:
        a, b, c = spectrum[peak - 1], spectrum[peak], spectrum[peak + 1]
        denom = a - 2 * b + c
        if denom != 0:
            offset = 0.5 * (a - c) / denom
    omega = 2 * math.pi * (peak + offset) / (n_fft * dt)

    basis = np.column_stack([np.ones_like(t), np.cos(omega * t), np.sin(omega * t)])
    (mean, cos_part, sin_part), *_ = np.linalg.lstsq(basis, y, rcond=None)
    start = [mean, math.hypot(cos_part, sin_part), omega, math.atan2(-sin_part, cos_part)]
    try:
        params, _ = curve_fit(_sinusoid, t, y, p0=start)
    except (RuntimeError, ValueError) as exc:
        logger.debug(f"Sinusoid fit failed, keeping the FFT estimate: {exc}")
        return omega
    fitted = abs(float(params[2]))
    bin_width = 2 * math.pi / (y.size * dt)
    if not math.isfinite(fitted) or abs(fitted - omega) > bin_width:
        return omega
    return fitted


def contrast_ratio(signal: np.ndarray, first: int = 1, last: int = 5) -> float:
    """Ratio of the ``last``-th to the ``first``-th local maximum of a trace."""
    y = np.asarray(signal, dtype=float)
    peaks, _ = find_peaks(y)
    if peaks.size < last:
        raise ValueError(f"trace has {peaks.size} maxima, need {last}")
    return float(y[peaks[last - 1]] / y[peaks[first - 1]])


def localized_fraction(
    positions: np.ndarray, intensity: np.ndarray, x_min: float, x_max: float
) -> float:
    """Share of the integrated intensity that lies inside [x_min, x_max]."""
    x = np.asarray(positions, dtype=float)
    y = np.asarray(intensity, dtype=float)
    total = float(trapezoid(y, x))
    if total <= 0.0:
        return math.nan
    inside = float(trapezoid(np.where((x >= x_min) & (x <= x_max), y, 0.0), x))
    return inside / total


def profile_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-lag normalized cross-correlation of two non-negative profiles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = math.sqrt(float(np.sum(a * a)) * float(np.sum(b * b)))
    return float(np.sum(a * b) / denom) if denom > 0 else math.nan
