"""Constrained search for coupling sequences whose |G_k| matches a target profile.

The search runs at a fixed point count: a population-based global stage
(scipy's differential evolution) followed by a Nelder-Mead refinement of the
best member, then points with negligible amplitude are pruned. Constraints are
enforced by repairing every candidate before it is scored.

Before the search a lattice stage solves a linear program for the amplitudes
on a fixed lattice. Its solution seeds the population and competes as a
candidate of its own.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import Bounds, LinearConstraint, differential_evolution, milp, minimize

from .coupling import (
    DEFAULT_G0,
    ConstraintSet,
    CouplingSequence,
    ValidationReport,
    gap_residual,
    ift_kernel,
    validate,
)
from .errors import OptimizationFailed
from .waveguide import (
    EDGE_TOLERANCE,
    KGrid,
    TargetProfile,
    WaveguideModel,
    WeightProfile,
    build_kgrid,
    target_value,
    weight_value,
)

logger = logging.getLogger(__name__)

MARKOV_PENALTY = 1e6
PRUNE_THRESHOLD = 1e-3
GLOBAL_SHARE = 0.8
SPACING_SLACK = 1e-9

# Lattice stage, in units of G_0.
LATTICE_GAP_TOLERANCE = 1e-6
LATTICE_FLOOR = 0.3
CHIRAL_GAP_TOLERANCE = 2e-3
CHIRAL_PASSBAND_FLOOR = 0.5
LATTICE_FILL = 0.9
GAP_SAMPLES = 401
LATTICE_DROP = 1e-9


@dataclass(frozen=True)
class DesignProblem:
    """Everything needed to run one design search.

    ``grid`` is the reporting grid; the inner loop uses a coarser grid with
    spacing ``opt_delta_k`` when that is larger than the grid spacing. When
    ``max_gap_residual`` is set, candidates whose in-gap residual meets it
    are preferred over candidates with a smaller C_m.
    """

    target: TargetProfile
    weights: WeightProfile
    constraints: ConstraintSet
    grid: KGrid
    allow_phases: bool = False
    rng_seed: int = 0
    budget: int = 20000
    g0: float = DEFAULT_G0
    opt_delta_k: Optional[float] = 1e-2
    population: int = 20
    workers: int = 1
    lattice_start: bool = True
    max_gap_residual: Optional[float] = None

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be at least one evaluation")
        if self.population < 5:
            raise ValueError("population must have at least 5 members")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_gap_residual is not None and self.max_gap_residual <= 0:
            raise ValueError("max_gap_residual must be positive")
        if self.allow_phases and self.constraints.require_nonneg_real:
            raise ValueError("allow_phases conflicts with require_nonneg_real constraints")
        if float(np.max(np.abs(self.grid.k))) > self.target.k_max * (1 + EDGE_TOLERANCE):
            raise ValueError("grid extends beyond the target cutoff")

    @property
    def model(self) -> WaveguideModel:
        return WaveguideModel(
            c=self.grid.c, k_max=float(np.max(np.abs(self.grid.k))), delta_k=self.grid.delta_k
        )

    def search_grid(self) -> KGrid:
        if self.opt_delta_k is None or self.opt_delta_k <= self.grid.delta_k:
            return self.grid
        model = self.model
        return build_kgrid(WaveguideModel(c=model.c, k_max=model.k_max, delta_k=self.opt_delta_k))


@dataclass(frozen=True)
class OptimizationResult:
    sequence: CouplingSequence
    objective: float
    in_gap_residual: float
    trace: np.ndarray
    evaluations: int
    initial_objective: float
    report: ValidationReport
    selected: str = ""


@dataclass(frozen=True)
class _ObjectiveTerms:
    """Target and weight sampled once on a grid."""

    k: np.ndarray
    target: np.ndarray
    weight: np.ndarray
    delta_k: float

    @classmethod
    def on(cls, problem: DesignProblem, grid: KGrid) -> "_ObjectiveTerms":
        return cls(
            k=grid.k,
            target=np.asarray(target_value(problem.target, grid.k)),
            weight=np.asarray(weight_value(problem.weights, problem.target, grid.k)),
            delta_k=grid.delta_k,
        )

    def evaluate(self, positions: np.ndarray, amplitudes: np.ndarray, phases: np.ndarray) -> float:
        if positions.size == 0:
            magnitude = np.zeros_like(self.k)
        else:
            weights = amplitudes * np.exp(1j * phases)
            magnitude = np.abs(weights @ np.exp(-1j * np.multiply.outer(positions, self.k)))
        return float(trapezoid(np.abs(magnitude - self.target) * self.weight, dx=self.delta_k))


def objective_cm(seq: CouplingSequence, problem: DesignProblem) -> float:
    """Weighted L1 mismatch between |G_k|/g0 and the target, trapezoidal on the problem grid."""
    terms = _ObjectiveTerms.on(problem, problem.grid)
    return terms.evaluate(seq.positions, seq.amplitudes, seq.phases)


def repair_positions(x: np.ndarray, cons: ConstraintSet) -> np.ndarray:
    """Sort, push apart to the minimum spacing and fit inside the open extent window."""
    n = x.size
    gap = cons.min_spacing * (1 + SPACING_SLACK)
    margin = EDGE_TOLERANCE * cons.extent_length
    lo, hi = -cons.extent_length / 2 + margin, cons.extent_length / 2 - margin
    if n > 1 and (n - 1) * gap >= hi - lo:
        raise ValueError(f"{n} points cannot fit the extent at the minimum spacing")
    offsets = gap * np.arange(n)
    shifted = np.maximum.accumulate(np.clip(np.sort(x), lo, hi) - offsets)
    shifted = np.minimum(shifted, hi - offsets[-1]) if n else shifted
    return shifted + offsets


def feasible_point_count(cons: ConstraintSet) -> int:
    """Largest N <= N_max that fits the extent at the minimum spacing."""
    usable = cons.extent_length * (1 - 4 * EDGE_TOLERANCE)
    gap = cons.min_spacing * (1 + SPACING_SLACK)
    return max(1, min(cons.n_max, int(math.ceil(usable / gap))))


class _Codec:
    """Maps flat parameter vectors [x, A, (theta)] to repaired point arrays."""

    def __init__(self, problem: DesignProblem, n_points: int):
        self.problem = problem
        self.n = n_points
        self.a_max = 1.5 * problem.target.G_0
        cons = problem.constraints
        half = cons.extent_length / 2 * (1 - EDGE_TOLERANCE)
        bounds = [(-half, half)] * n_points + [(0.0, self.a_max)] * n_points
        if problem.allow_phases:
            bounds += [(-math.pi, math.pi)] * n_points
        self.bounds = bounds

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def decode(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n
        order = np.argsort(v[:n], kind="stable")
        x = repair_positions(v[:n][order], self.problem.constraints)
        a = np.clip(v[n : 2 * n][order], 0.0, self.a_max)
        theta = v[2 * n : 3 * n][order] if self.problem.allow_phases else np.zeros(n)
        return x, a, theta

    def encode(self, x: np.ndarray, a: np.ndarray, theta: np.ndarray) -> np.ndarray:
        parts = [x, a] + ([theta] if self.problem.allow_phases else [])
        return np.concatenate(parts)

    def sequence(self, v: np.ndarray, label: str) -> CouplingSequence:
        x, a, theta = self.decode(v)
        return CouplingSequence(x, a, theta, g0=self.problem.g0, label=label)


class _Evaluator:
    """Penalized objective on the search grid; counts evaluations across threads."""

    def __init__(self, codec: _Codec, terms: _ObjectiveTerms):
        self.codec = codec
        self.terms = terms
        problem = codec.problem
        model = problem.model
        # Gamma_i = rate_scale * A_i^2, L_i = 2c / Gamma_i.
        self._rate_scale = 2 * math.pi * (problem.g0 * model.continuum_factor) ** 2 / model.c
        self._c = model.c
        self._lock = threading.Lock()
        self.count = 0
        self.best = math.inf

    def markov_penalty(self, amplitudes: np.ndarray) -> float:
        cons = self.codec.problem.constraints
        rates = self._rate_scale * amplitudes**2
        if amplitudes.size == 0 or np.any(rates == 0):
            return 0.0
        ratio = float(np.mean(2 * self._c / rates)) / cons.extent_length
        if ratio >= cons.markov_margin:
            return 0.0
        return MARKOV_PENALTY * (1 + (cons.markov_margin - ratio) / cons.markov_margin)

    def __call__(self, v: np.ndarray) -> float:
        x, a, theta = self.codec.decode(np.asarray(v, dtype=float))
        value = self.terms.evaluate(x, a, theta) + self.markov_penalty(a)
        with self._lock:
            self.count += 1
            self.best = min(self.best, value)
        return value


def _warm_start(problem: DesignProblem, codec: _Codec) -> np.ndarray:
    """Jittered uniform layout; iFT amplitudes for band gaps, random for chiral targets."""
    rng = np.random.default_rng([problem.rng_seed, 0])
    n = codec.n
    lo, hi = codec.bounds[0]
    spacing = (hi - lo) / n
    x = lo + spacing * (np.arange(n) + 0.5) + rng.uniform(-0.25, 0.25, n) * spacing
    if problem.target.kind == "band_gap":
        g = spacing * ift_kernel(problem.target, x)
        a = np.clip(np.abs(g), 0.0, codec.a_max)
        theta = np.where(g < 0, math.pi, 0.0) if problem.allow_phases else np.zeros(n)
    else:
        a = rng.uniform(0.0, problem.target.G_0, n)
        theta = rng.uniform(-math.pi, math.pi, n) if problem.allow_phases else np.zeros(n)
    return codec.encode(x, a, theta)


def _gap_momenta(problem: DesignProblem, nonnegative: bool) -> np.ndarray:
    """Dense samples of every gap interval joined with the reporting grid's in-gap modes."""
    profile = problem.target
    parts = [np.linspace(lo, hi, GAP_SAMPLES) for lo, hi in profile.gap_intervals]
    parts.append(problem.grid.k[profile.gap_mask(problem.grid.k)])
    k = np.concatenate(parts)
    return np.unique(k[k >= 0] if nonnegative else k)


def _solve(cost: np.ndarray, constraints: list[LinearConstraint], bounds: Bounds) -> Optional[np.ndarray]:
    result = milp(cost, constraints=constraints, bounds=bounds)
    if not result.success or result.x is None:
        logger.warning(f"Lattice program failed: {result.message}")
        return None
    return np.asarray(result.x)


def _real_lattice(problem: DesignProblem, terms: _ObjectiveTerms) -> Optional[CouplingSequence]:
    """Symmetric lattice x_n = n pi / k_0 with non-negative amplitudes.

    |G_k| / g0 is then the even cosine series b_0 + 2 sum_n b_n cos(n pi k / k_0),
    linear in the amplitudes. The program pins it to zero on the gap, keeps
    it above a floor near k = 0 and minimizes the weighted L1 mismatch
    elsewhere.
    """
    profile, cons = problem.target, problem.constraints
    spacing = math.pi / profile.k_0
    if spacing <= cons.min_spacing * (1 + SPACING_SLACK):
        return None
    half = cons.extent_length / 2 * (1 - 2 * EDGE_TOLERANCE)
    m = min((cons.n_max - 1) // 2, int(math.floor(half / spacing)))
    if m * spacing >= half:
        m -= 1
    if m < 1:
        return None
    orders = spacing * np.arange(m + 1)
    a_max = 1.5 * profile.G_0

    def basis(k: np.ndarray) -> np.ndarray:
        rows = np.cos(np.multiply.outer(k, orders))
        rows[:, 1:] *= 2.0
        return rows

    fit_mask = (terms.k >= 0) & ~profile.gap_mask(terms.k)
    k_fit = terms.k[fit_mask]
    target = terms.target[fit_mask]
    n_b, n_t = m + 1, k_fit.size
    fit = basis(k_fit)
    slack = np.eye(n_t)

    k_gap = _gap_momenta(problem, nonnegative=True)
    gap_rows = np.hstack([basis(k_gap), np.zeros((k_gap.size, n_t))])
    tolerance = LATTICE_GAP_TOLERANCE * profile.G_0
    constraints = [
        LinearConstraint(np.hstack([fit, -slack]), -np.inf, target),
        LinearConstraint(np.hstack([fit, slack]), target, np.inf),
        LinearConstraint(gap_rows, -tolerance, tolerance),
    ]
    k_floor = k_fit[k_fit <= profile.k_0 / 2]
    if k_floor.size:
        floor_rows = np.hstack([basis(k_floor), np.zeros((k_floor.size, n_t))])
        constraints.append(LinearConstraint(floor_rows, LATTICE_FLOOR * profile.G_0, np.inf))

    cost = np.concatenate([np.zeros(n_b), terms.weight[fit_mask] * terms.delta_k])
    upper = np.concatenate([np.full(n_b, a_max), np.full(n_t, np.inf)])
    solution = _solve(cost, constraints, Bounds(np.zeros(n_b + n_t), upper))
    if solution is None:
        return None
    b = np.clip(solution[:n_b], 0.0, a_max)
    amplitudes = np.concatenate([b[:0:-1], b])
    positions = spacing * np.arange(-m, m + 1, dtype=float)
    # Solver noise only; small amplitudes above this still shape the gap.
    keep = amplitudes > LATTICE_DROP * profile.G_0
    return CouplingSequence(
        positions[keep], amplitudes[keep], g0=problem.g0, label=f"{profile.kind}-lattice"
    )


def _complex_lattice(problem: DesignProblem, terms: _ObjectiveTerms) -> Optional[CouplingSequence]:
    """Uniform lattice with free complex couplings for one-sided gaps.

    Re G_k and Im G_k are linear in the real and imaginary coupling parts.
    The program holds both near zero on the gap, keeps Re G_k above a floor
    around +k_0 and fits Re G_k to the target with Im G_k near zero elsewhere.
    """
    profile, cons = problem.target, problem.constraints
    n = feasible_point_count(cons)
    if n < 2:
        return None
    spacing = LATTICE_FILL * cons.extent_length / (n - 1)
    if spacing <= cons.min_spacing * (1 + SPACING_SLACK):
        return None
    positions = spacing * (np.arange(n) - (n - 1) / 2)
    bound = 1.5 * profile.G_0 / math.sqrt(2.0)

    def real_part(k: np.ndarray) -> np.ndarray:
        phase = np.multiply.outer(k, positions)
        return np.hstack([np.cos(phase), np.sin(phase)])

    def imag_part(k: np.ndarray) -> np.ndarray:
        phase = np.multiply.outer(k, positions)
        return np.hstack([-np.sin(phase), np.cos(phase)])

    fit_mask = ~profile.gap_mask(terms.k)
    k_fit = terms.k[fit_mask]
    target = terms.target[fit_mask]
    n_t = k_fit.size
    slack, zeros = np.eye(n_t), np.zeros((n_t, n_t))

    def padded(rows: np.ndarray) -> np.ndarray:
        return np.hstack([rows, np.zeros((rows.shape[0], 2 * n_t))])

    k_gap = _gap_momenta(problem, nonnegative=False)
    k_anchor = profile.k_0 + profile.k_d / 4 * np.array([-1.0, 0.0, 1.0])
    tolerance = CHIRAL_GAP_TOLERANCE * profile.G_0
    constraints = [
        LinearConstraint(np.hstack([real_part(k_fit), -slack, zeros]), -np.inf, target),
        LinearConstraint(np.hstack([real_part(k_fit), slack, zeros]), target, np.inf),
        LinearConstraint(np.hstack([imag_part(k_fit), zeros, -slack]), -np.inf, 0.0),
        LinearConstraint(np.hstack([imag_part(k_fit), zeros, slack]), 0.0, np.inf),
        LinearConstraint(padded(real_part(k_gap)), -tolerance, tolerance),
        LinearConstraint(padded(imag_part(k_gap)), -tolerance, tolerance),
        LinearConstraint(padded(real_part(k_anchor)), CHIRAL_PASSBAND_FLOOR * profile.G_0, np.inf),
    ]
    weight = terms.weight[fit_mask] * terms.delta_k
    cost = np.concatenate([np.zeros(2 * n), weight, weight])
    lower = np.concatenate([np.full(2 * n, -bound), np.zeros(2 * n_t)])
    upper = np.concatenate([np.full(2 * n, bound), np.full(2 * n_t, np.inf)])
    solution = _solve(cost, constraints, Bounds(lower, upper))
    if solution is None:
        return None
    couplings = solution[:n] + 1j * solution[n : 2 * n]
    keep = np.abs(couplings) > LATTICE_DROP * profile.G_0
    return CouplingSequence(
        positions[keep],
        np.abs(couplings[keep]),
        np.angle(couplings[keep]),
        g0=problem.g0,
        label=f"{profile.kind}-lattice",
    )


def lattice_design(problem: DesignProblem) -> Optional[CouplingSequence]:
    """Lattice-stage sequence for the problem, or None when no lattice program applies.

    Band gaps get the symmetric lambda_0 / 2 lattice with real non-negative
    couplings; chiral targets need ``allow_phases``.
    """
    terms = _ObjectiveTerms.on(problem, problem.search_grid())
    if problem.target.kind == "band_gap":
        seq = _real_lattice(problem, terms)
    elif problem.allow_phases:
        seq = _complex_lattice(problem, terms)
    else:
        return None
    if seq is not None:
        logger.info(
            f"Lattice stage: N={len(seq)}, "
            f"in-gap residual {gap_residual(seq, problem.target, problem.grid):.3e}"
        )
    return seq


def _lattice_vector(lattice: CouplingSequence, codec: _Codec) -> Optional[np.ndarray]:
    """Encode the lattice, padded with uncoupled points past its right end."""
    n_pad = codec.n - len(lattice)
    if n_pad < 0 or len(lattice) == 0:
        return None
    cons = codec.problem.constraints
    step = 2 * cons.min_spacing
    pads = lattice.positions[-1] + step * np.arange(1, n_pad + 1)
    limit = cons.extent_length / 2 * (1 - 2 * EDGE_TOLERANCE) - step
    if n_pad and pads[-1] >= limit:
        return None
    return codec.encode(
        np.concatenate([lattice.positions, pads]),
        np.concatenate([lattice.amplitudes, np.zeros(n_pad)]),
        np.concatenate([lattice.phases, np.zeros(n_pad)]),
    )


def _initial_population(
    problem: DesignProblem, codec: _Codec, lattice: Optional[CouplingSequence] = None
) -> np.ndarray:
    lo, hi = np.array(codec.bounds).T
    start = _lattice_vector(lattice, codec) if lattice is not None else None
    rows = [start if start is not None else _warm_start(problem, codec)]
    for j in range(1, problem.population):
        rows.append(np.random.default_rng([problem.rng_seed, j]).uniform(lo, hi))
    return np.vstack(rows)


def _drop_uncoupled(seq: CouplingSequence) -> CouplingSequence:
    keep = seq.amplitudes > 0
    if np.all(keep):
        return seq
    return CouplingSequence(
        seq.positions[keep], seq.amplitudes[keep], seq.phases[keep], g0=seq.g0, label=seq.label
    )


def _prune(seq: CouplingSequence) -> CouplingSequence:
    if len(seq) == 0:
        return seq
    keep = seq.amplitudes >= PRUNE_THRESHOLD * float(np.max(seq.amplitudes))
    return CouplingSequence(
        seq.positions[keep], seq.amplitudes[keep], seq.phases[keep], g0=seq.g0, label=seq.label
    )


def _run_global(
    problem: DesignProblem, codec: _Codec, evaluator: _Evaluator, population: np.ndarray,
    budget: int, trace: list[float],
) -> np.ndarray:
    maxiter = budget // problem.population - 1

    def record(xk: np.ndarray, convergence: Optional[float] = None) -> None:
        trace.append(evaluator.best)
        logger.debug(f"generation {len(trace) - 1}: best C_m {evaluator.best:.6g}")

    options = dict(
        maxiter=maxiter,
        init=population,
        seed=problem.rng_seed,
        updating="deferred",
        polish=False,
        tol=0.0,
        callback=record,
    )
    if problem.workers > 1:
        with ThreadPoolExecutor(max_workers=problem.workers) as pool:
            result = differential_evolution(evaluator, codec.bounds, workers=pool.map, **options)
    else:
        result = differential_evolution(evaluator, codec.bounds, **options)
    logger.info(f"Global stage: {result.nfev} evaluations, best C_m {result.fun:.6g}")
    return np.asarray(result.x)


def _run_local(
    codec: _Codec, evaluator: _Evaluator, start: np.ndarray, budget: int, trace: list[float]
) -> np.ndarray:
    def record(xk: np.ndarray) -> None:
        trace.append(evaluator.best)

    result = minimize(
        evaluator,
        start,
        method="Nelder-Mead",
        bounds=codec.bounds,
        callback=record,
        options={"maxfev": budget, "adaptive": True, "xatol": 1e-12, "fatol": 1e-14},
    )
    logger.info(f"Local stage: {result.nfev} evaluations, best C_m {result.fun:.6g}")
    return np.asarray(result.x)


def optimize(problem: DesignProblem) -> OptimizationResult:
    """Search for the feasible sequence with the smallest C_m within the budget.

    Ties on the reporting-grid objective go to fewer points, then smaller extent.
    With ``max_gap_residual`` set, only candidates meeting it compete unless
    none does.
    """
    cons = problem.constraints
    n_points = feasible_point_count(cons)
    codec = _Codec(problem, n_points)
    evaluator = _Evaluator(codec, _ObjectiveTerms.on(problem, problem.search_grid()))
    logger.info(
        f"Optimizing {problem.target.kind} design: N={n_points}, dim={codec.dim}, "
        f"budget={problem.budget}, seed={problem.rng_seed}"
    )

    lattice = lattice_design(problem) if problem.lattice_start else None
    population = _initial_population(problem, codec, lattice)
    trace: list[float] = []
    evaluator(population[0])
    trace.append(evaluator.best)
    vectors = {"initial": population[0]}

    remaining = problem.budget - evaluator.count
    best_vector = population[0]
    if remaining >= problem.population:
        global_budget = max(problem.population, int(GLOBAL_SHARE * remaining))
        best_vector = _run_global(problem, codec, evaluator, population, global_budget, trace)
        vectors["global"] = best_vector

    # Nelder-Mead may overrun maxfev by one simplex shrink.
    local_budget = problem.budget - evaluator.count - (codec.dim + 1)
    if local_budget > codec.dim + 1:
        vectors["local"] = _run_local(codec, evaluator, best_vector, local_budget, trace)

    label = f"{problem.target.kind}-design"
    candidates = {name: _drop_uncoupled(codec.sequence(v, label=label)) for name, v in vectors.items()}
    final_name = list(candidates)[-1]
    candidates["pruned"] = _prune(candidates[final_name])
    if lattice is not None:
        candidates["lattice"] = lattice

    model = problem.model
    scored = []
    for name, seq in candidates.items():
        report = validate(seq, cons, model)
        if not report.passed:
            if name == "pruned":
                logger.warning(f"Pruned candidate rejected: {', '.join(report.failures())}")
            else:
                logger.debug(f"Candidate '{name}' infeasible: {', '.join(report.failures())}")
            continue
        key = (objective_cm(seq, problem), len(seq), seq.extent)
        scored.append((key, name, seq, report, gap_residual(seq, problem.target, problem.grid)))
    if not scored:
        raise OptimizationFailed(
            f"no feasible candidate within {problem.budget} evaluations "
            f"(seed {problem.rng_seed})"
        )

    limit = problem.max_gap_residual
    if limit is not None:
        meeting = [item for item in scored if item[4] <= limit]
        if meeting:
            scored = meeting
        else:
            best = min(item[4] for item in scored)
            logger.warning(f"No candidate reaches in-gap residual {limit:.3g} (best {best:.3e})")

    scored.sort(key=lambda item: item[0])
    (objective, _, _), name, seq, report, residual = scored[0]
    initial_objective = objective_cm(candidates["initial"], problem)
    logger.info(
        f"Selected '{name}' candidate: N={len(seq)}, C_m={objective:.6g}, "
        f"in-gap residual {residual:.3e}, evaluations {evaluator.count}"
    )
    return OptimizationResult(
        sequence=seq,
        objective=objective,
        in_gap_residual=residual,
        trace=np.asarray(trace),
        evaluations=evaluator.count,
        initial_objective=initial_objective,
        report=report,
        selected=name,
    )
