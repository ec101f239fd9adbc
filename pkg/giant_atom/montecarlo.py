"""Disorder ensembles over coupling sequences.

Realization n perturbs the sequence with seed ``base_seed + n``; atoms of a
pair draw from independent streams. Realizations run on a thread pool whose
``map`` preserves order, so aggregates do not depend on the worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Literal, Optional, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .analysis import contrast_ratio, flux_ratio, flux_totals, resonant_couplings
from .coupling import CouplingSequence, k_coupling, perturb
from .dynamics import SimulationPlan, Trajectory, evolve_pair, evolve_single
from .errors import GiantAtomError
from .waveguide import KGrid, WaveguideModel

logger = logging.getLogger(__name__)

T = TypeVar("T")


class DisorderSpec(BaseModel):
    """Gaussian amplitude (relative) and phase (radians) disorder."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_A: float = Field(0.0, ge=0)
    sigma_phi: float = Field(0.0, ge=0)
    n_realizations: int = Field(200, ge=1)
    base_seed: int = Field(0, ge=0)
    coupling_average: Literal["complex", "magnitude"] = "complex"
    skip_failed: bool = False

    @property
    def seeds(self) -> np.ndarray:
        return self.base_seed + np.arange(self.n_realizations)

    @property
    def is_clean(self) -> bool:
        return self.sigma_A == 0 and self.sigma_phi == 0


@dataclass(frozen=True)
class EnsembleResult:
    """Aggregates over the realizations that completed."""

    seeds: np.ndarray
    n_used: int
    mean_coupling: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    mean_populations: Optional[np.ndarray] = None
    field_positions: Optional[np.ndarray] = None
    mean_field: Optional[np.ndarray] = None
    beta: Optional[tuple[float, float]] = None
    contrast: Optional[float] = None
    failed_seeds: tuple[int, ...] = ()


def _average(stack: np.ndarray) -> np.ndarray:
    """Mean over axis 0; identical rows come back unchanged."""
    if np.all(stack == stack[0]):
        return stack[0].copy()
    return np.mean(stack, axis=0)


def _map(fn: Callable[[int], T], seeds: Iterable[int], workers: int) -> list[T]:
    if workers <= 1:
        return [fn(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _realize(seq: CouplingSequence, spec: DisorderSpec, seed: int, stream: int = 0) -> CouplingSequence:
    return perturb(seq, spec.sigma_A, spec.sigma_phi, seed, stream=stream)


def ensemble_coupling(
    seq: CouplingSequence, spec: DisorderSpec, grid: KGrid, workers: int = 1
) -> EnsembleResult:
    """|mean_n G_k^(n)| (or mean_n |G_k^(n)|) over the disorder ensemble."""
    seeds = spec.seeds

    def coupling(seed: int) -> np.ndarray:
        return k_coupling(_realize(seq, spec, int(seed)), grid)

    stack = np.array(_map(coupling, seeds, workers))
    if spec.coupling_average == "complex":
        mean = np.abs(_average(stack))
    else:
        mean = _average(np.abs(stack))
    logger.info(
        f"Coupling ensemble: {seeds.size} realizations, sigma_A={spec.sigma_A:g}, "
        f"sigma_phi={spec.sigma_phi:g}"
    )
    return EnsembleResult(seeds=seeds, n_used=int(seeds.size), mean_coupling=mean)


def _collect(
    run: Callable[[int], Optional[T]], spec: DisorderSpec, workers: int
) -> tuple[list[T], tuple[int, ...]]:
    """Run every realization; failed ones are dropped only when skip_failed is set."""

    def guarded(seed: int) -> Optional[T]:
        try:
            return run(int(seed))
        except GiantAtomError as exc:
            if not spec.skip_failed:
                raise
            logger.warning(f"Realization with seed {seed} failed and is skipped: {exc}")
            return None

    outcomes = _map(guarded, spec.seeds, workers)
    kept = [out for out in outcomes if out is not None]
    failed = tuple(int(s) for s, out in zip(spec.seeds, outcomes) if out is None)
    if not kept:
        raise GiantAtomError("every disorder realization failed")
    return kept, failed


def ensemble_dynamics(
    seq: CouplingSequence, spec: DisorderSpec, plan: SimulationPlan, workers: int = 1
) -> EnsembleResult:
    """Disorder-averaged |c_e(t)|^2 for a single-atom plan."""
    if plan.n_atoms != 1:
        raise ValueError("ensemble_dynamics needs a single-atom plan")

    def run(seed: int) -> Trajectory:
        logger.debug(f"Dynamics realization seed={seed}")
        return evolve_single(plan.with_sequences(_realize(seq, spec, seed)))

    trajectories, failed = _collect(run, spec, workers)
    populations = _average(np.array([tr.populations for tr in trajectories]))
    return EnsembleResult(
        seeds=spec.seeds,
        n_used=len(trajectories),
        times=plan.record_times,
        mean_populations=populations,
        failed_seeds=failed,
    )


def ensemble_chirality(
    seq: CouplingSequence,
    spec: DisorderSpec,
    plan: SimulationPlan,
    workers: int = 1,
    origin: float = 0.0,
) -> EnsembleResult:
    """Flux chirality with Phi_R and Phi_L averaged over realizations before the ratio."""
    if plan.n_atoms != 1:
        raise ValueError("ensemble_chirality needs a single-atom plan")
    if not plan.record_field:
        plan = replace(plan, record_field=True)

    def run(seed: int) -> np.ndarray:
        trajectory = evolve_single(plan.with_sequences(_realize(seq, spec, seed)))
        snapshot = trajectory.final_field
        if snapshot is None:
            raise GiantAtomError("run recorded no field snapshot")
        return snapshot.intensity

    fields, failed = _collect(run, spec, workers)
    positions = plan.positions_for_field()
    stack = np.array(fields)
    totals = np.array([flux_totals(positions, f, origin) for f in stack])
    right, left = _average(totals)
    return EnsembleResult(
        seeds=spec.seeds,
        n_used=len(fields),
        field_positions=positions,
        mean_field=_average(stack),
        beta=flux_ratio(float(right), float(left)),
        failed_seeds=failed,
    )


def ensemble_chiral_factor(
    seq: CouplingSequence,
    spec: DisorderSpec,
    omegas: Sequence[float],
    model: WaveguideModel,
    workers: int = 1,
) -> np.ndarray:
    """beta_+ per omega_q with |G'_{+k_r}|^2 and |G'_{-k_r}|^2 averaged before the ratio.

    The resonant intensities stand in for the emitted fluxes, so this is the
    cheap counterpart of ``ensemble_chirality`` for frequency sweeps.
    """

    def intensities(seed: int) -> np.ndarray:
        realized = _realize(seq, spec, seed)
        rows = []
        for omega in omegas:
            plus, minus = resonant_couplings(realized, omega, model)
            rows.append((abs(plus) ** 2, abs(minus) ** 2))
        return np.array(rows)

    mean = _average(np.array(_map(intensities, spec.seeds, workers)))
    total = mean[:, 0] + mean[:, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.where(total > 0, mean[:, 0] / np.where(total > 0, total, 1.0), math.nan)
    logger.info(f"Chiral-factor ensemble over {len(omegas)} frequencies, min beta_+={np.nanmin(beta):.4f}")
    return beta


def ensemble_rabi(
    seq_pair: tuple[CouplingSequence, CouplingSequence],
    spec: DisorderSpec,
    plan: SimulationPlan,
    workers: int = 1,
) -> EnsembleResult:
    """Disorder-averaged |c_e1|^2 and |c_e2|^2; each atom gets its own perturbation stream."""
    if plan.n_atoms != 2:
        raise ValueError("ensemble_rabi needs a two-atom plan")
    first, second = seq_pair

    def run(seed: int) -> Trajectory:
        logger.debug(f"Pair realization seed={seed}")
        atoms = (_realize(first, spec, seed, stream=0), _realize(second, spec, seed, stream=1))
        return evolve_pair(plan.with_sequences(*atoms))

    trajectories, failed = _collect(run, spec, workers)
    populations = _average(np.array([tr.populations for tr in trajectories]))
    try:
        contrast: Optional[float] = contrast_ratio(populations[:, 0])
    except ValueError as exc:
        logger.warning(f"Oscillation contrast undefined: {exc}")
        contrast = None
    return EnsembleResult(
        seeds=spec.seeds,
        n_used=len(trajectories),
        times=plan.record_times,
        mean_populations=populations,
        contrast=contrast,
        failed_seeds=failed,
    )
