"""Command pipelines behind the CLI and the built-in reproduction scenarios."""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .analysis import (
    bound_state,
    chirality_sweep,
    dipole_dipole_J,
    dipole_sweep,
    flux_chirality,
    localized_fraction,
    rabi_frequency,
    trapped_energy_sweep,
    trapped_population_sweep,
    weak_coupling_population,
)
from .config import ExperimentDoc, RunBlock, SequenceSource, Settings, load_settings
from .coupling import (
    DEFAULT_G0,
    ConstraintSet,
    CouplingSequence,
    gap_center_residual,
    gap_residual,
    ift_baseline,
    k_coupling,
    nyquist_bound,
    validate,
)
from .dynamics import SimulationPlan, default_field_positions, evolve_pair, evolve_single
from .errors import ConstraintViolationError, DocumentError
from .io import write_manifest, write_sequence, write_table
from .montecarlo import (
    DisorderSpec,
    ensemble_chiral_factor,
    ensemble_chirality,
    ensemble_coupling,
    ensemble_dynamics,
    ensemble_rabi,
)
from .optimizer import DesignProblem, optimize
from .waveguide import TargetProfile, WeightProfile, build_kgrid

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    command: str
    out_dir: Path
    files: list[Path]
    manifest: Path
    summary: dict[str, str] = field(default_factory=dict)


class _Run:
    """Shared state of one pipeline execution: document, output directory, written files."""

    def __init__(self, doc: ExperimentDoc, out_dir: Path, workers: int):
        self.doc = doc
        self.out_dir = out_dir
        self.workers = workers
        self.model = doc.waveguide
        self.lambda0 = doc.lambda0
        self.files: list[Path] = []
        self.summary: dict[str, str] = {}

    def sequence(self) -> CouplingSequence:
        if self.doc.sequence is None:
            raise DocumentError(f"command '{self.doc.command}' needs a 'sequence' block")
        return self.doc.sequence.resolve(self.doc.target.k_0)

    def checked_sequence(self) -> CouplingSequence:
        """The document's sequence, rejected before any simulation if it violates constraints."""
        seq = self.sequence()
        report = validate(seq, self.doc.constraints, self.model)
        if not report.passed:
            logger.error(f"Constraint report for '{seq.label}':\n{report.summary()}")
            raise ConstraintViolationError(report)
        return seq

    def table(self, name: str, columns: dict[str, Any], metadata: Optional[dict[str, Any]] = None) -> None:
        self.files.append(write_table(self.out_dir / name, columns, metadata))

    def field_positions(self) -> np.ndarray:
        window = self.doc.run.field_window
        if window is None:
            return default_field_positions(self.model, self.doc.run.field_points)
        lo, hi = window
        return np.linspace(lo * self.lambda0, hi * self.lambda0, self.doc.run.field_points)

    def single_plan(self, seq: CouplingSequence, omega_q: float) -> SimulationPlan:
        run = self.doc.run
        return SimulationPlan.single(
            seq,
            omega_q,
            self.model,
            run.t_final,
            n_records=run.n_records,
            record_field=run.record_field,
            field_positions=self.field_positions(),
        )

    def omega_window(self, points: int = 61) -> list[float]:
        """Run-block frequencies, or a sweep across the gap frequencies."""
        if self.doc.run.omega_values:
            return list(self.doc.run.omega_values)
        target, c = self.doc.target, self.model.c
        lo, hi = c * (target.k_0 - target.k_d / 2), c * (target.k_0 + target.k_d / 2)
        return list(np.linspace(lo, hi, points))

    def disorder_metadata(self, spec: DisorderSpec, n_used: int) -> dict[str, Any]:
        return {
            "sigma_A": spec.sigma_A,
            "sigma_phi": spec.sigma_phi,
            "base_seed": spec.base_seed,
            "realizations": n_used,
            "coupling_average": spec.coupling_average,
        }


def _design(ctx: _Run) -> None:
    doc, run = ctx.doc, ctx.doc.run
    g0 = doc.sequence.g0 if doc.sequence is not None else DEFAULT_G0
    grid = build_kgrid(ctx.model)
    if run.method == "ift":
        seq = ift_baseline(
            doc.target, run.ift_half_length * ctx.lambda0, run.ift_spacing * ctx.lambda0, g0=g0
        )
        residual = gap_residual(seq, doc.target, grid)
        ctx.summary.update(
            {
                "points": str(len(seq)),
                "nyquist bound": str(nyquist_bound(doc.target)),
                "in-gap residual": f"{residual:.4e}",
                "gap-centre residual": f"{gap_center_residual(seq, doc.target, grid):.4e}",
            }
        )
    else:
        allow_phases = run.allow_phases if run.allow_phases is not None else doc.target.kind == "chiral"
        problem = DesignProblem(
            target=doc.target,
            weights=doc.weights,
            constraints=doc.constraints,
            grid=grid,
            allow_phases=allow_phases,
            rng_seed=run.seed,
            budget=run.budget,
            g0=g0,
            population=run.population,
            workers=ctx.workers,
            max_gap_residual=run.max_gap_residual,
        )
        result = optimize(problem)
        seq = result.sequence
        ctx.table(
            "trace.txt",
            {"iteration": np.arange(result.trace.size), "best_objective": result.trace},
            {"seed": run.seed, "evaluations": result.evaluations},
        )
        ctx.summary.update(
            {
                "points": str(len(seq)),
                "objective C_m": f"{result.objective:.6g}",
                "in-gap residual": f"{result.in_gap_residual:.4e}",
                "evaluations": str(result.evaluations),
                "selected candidate": result.selected,
            }
        )
    ctx.files.append(write_sequence(ctx.out_dir / "sequence.txt", seq, doc.target.k_0))
    ctx.table(
        "coupling.txt",
        {"k": grid.k, "abs_G_over_g0": np.abs(k_coupling(seq, grid)) / seq.g0},
        {"label": seq.label},
    )


def _dynamics(ctx: _Run) -> None:
    seq = ctx.checked_sequence()
    omegas = ctx.doc.run.omega_values or [ctx.doc.run.omega_q]
    for omega in omegas:
        trajectory = evolve_single(ctx.single_plan(seq, omega))
        tag = f"w{omega:g}"
        ctx.table(
            f"population_{tag}.txt",
            {"t": trajectory.times, "pop_e1": trajectory.excited_population, "norm": trajectory.norms},
            {"omega_q": omega, "sequence": seq.label},
        )
        snapshot = trajectory.final_field
        if snapshot is not None:
            ctx.table(
                f"field_{tag}.txt",
                {"x_over_lambda0": snapshot.positions / ctx.lambda0, "intensity": snapshot.intensity},
                {"t": snapshot.t, "omega_q": omega},
            )
            if len(seq) > 1:
                share = localized_fraction(
                    snapshot.positions, snapshot.intensity, seq.positions[0], seq.positions[-1]
                )
                ctx.summary[f"field inside coupling region ({tag})"] = f"{share:.4f}"
        ctx.summary[f"final |c_e|^2 ({tag})"] = f"{trajectory.excited_population[-1]:.6f}"


def _bound_state(ctx: _Run) -> None:
    doc, run = ctx.doc, ctx.doc.run
    seq = ctx.checked_sequence()
    positions = ctx.field_positions() if run.field_window is not None else None
    solution = bound_state(seq, run.omega_q, ctx.model, doc.target, positions=positions)
    weak = weak_coupling_population(seq, run.omega_q, ctx.model)
    ctx.table(
        "bound_state_field.txt",
        {"x_over_lambda0": solution.positions / ctx.lambda0, "intensity": np.abs(solution.psi_b) ** 2},
        {
            "omega_q": run.omega_q,
            "E_b": repr(solution.energy),
            "residue_population": repr(solution.residue),
            "weak_coupling_population": repr(weak),
            "trapped_energy": repr(solution.trapped_energy),
        },
    )
    ctx.summary.update(
        {
            "E_b": f"{solution.energy:.6e}",
            "trapped population": f"{solution.residue:.6f}",
            "weak-coupling estimate": f"{weak:.6f}",
            "Phi_B": f"{solution.trapped_energy:.6f}",
        }
    )
    if run.omega_values:
        phi = trapped_energy_sweep(seq, run.omega_values, ctx.model, doc.target)
        ctx.table("trapped_energy.txt", {"omega_q": np.asarray(run.omega_values), "Phi_B": phi})
    if run.g0_values:
        pops = trapped_population_sweep(seq, run.g0_values, run.omega_q, ctx.model, doc.target)
        ctx.table(
            "trapped_population.txt",
            {"g0": np.asarray(run.g0_values), "trapped_population": pops},
            {"omega_q": run.omega_q},
        )


def _chirality(ctx: _Run) -> None:
    doc, run = ctx.doc, ctx.doc.run
    seq = ctx.checked_sequence()
    omegas = ctx.omega_window()
    beta = chirality_sweep(seq, omegas, ctx.model)
    ctx.table("chirality.txt", {"omega_q": np.asarray(omegas), "beta_plus": beta})
    ctx.summary["min beta_+ over sweep"] = f"{np.nanmin(beta):.4f}"
    if not run.record_field:
        return
    plan = ctx.single_plan(seq, run.omega_q)
    if doc.disorder.is_clean:
        trajectory = evolve_single(plan)
        snapshot = trajectory.final_field
        if snapshot is None:
            return
        positions, intensity, label = snapshot.positions, snapshot.intensity, "field.txt"
        flux_beta = flux_chirality(positions, intensity)
    else:
        ensemble = ensemble_chirality(seq, doc.disorder, plan, workers=ctx.workers)
        positions = np.asarray(ensemble.field_positions)
        intensity, label = np.asarray(ensemble.mean_field), "field_disorder.txt"
        flux_beta = ensemble.beta or (math.nan, math.nan)
    ctx.table(
        label,
        {"x_over_lambda0": positions / ctx.lambda0, "intensity": intensity},
        {"t": run.t_final, "omega_q": run.omega_q, "flux_beta_plus": flux_beta[0]},
    )
    ctx.summary["flux beta_+"] = f"{flux_beta[0]:.4f}"


def _dipole(ctx: _Run) -> None:
    doc, run = ctx.doc, ctx.doc.run
    seq = ctx.checked_sequence()
    separations = np.asarray(run.d_s_values if run.d_s_values else np.linspace(0.0, 20.0, 81))
    j_values = dipole_sweep(seq, run.omega_q, ctx.model, separations * ctx.lambda0)
    ctx.table(
        "dipole.txt",
        {"d_s_over_lambda0": separations, "J_AB_real": j_values.real, "J_AB_imag": j_values.imag},
        {"omega_q": run.omega_q},
    )
    if not run.rabi:
        return
    d_s = run.d_s * ctx.lambda0
    j_ab = dipole_dipole_J(seq, run.omega_q, ctx.model, d_s)
    plan = SimulationPlan.pair(
        seq, run.omega_q, ctx.model, run.t_final, d_s, n_records=run.n_records
    )
    if doc.disorder.is_clean:
        trajectory = evolve_pair(plan)
        times, pops, norms = trajectory.times, trajectory.populations, trajectory.norms
        metadata: dict[str, Any] = {"omega_q": run.omega_q, "d_s_over_lambda0": run.d_s}
        columns = {"t": times, "pop_e1": pops[:, 0], "pop_e2": pops[:, 1], "norm": norms}
        name = "rabi.txt"
    else:
        ensemble = ensemble_rabi((seq, plan.sequences[1]), doc.disorder, plan, workers=ctx.workers)
        times, pops = np.asarray(ensemble.times), np.asarray(ensemble.mean_populations)
        metadata = {"omega_q": run.omega_q, "d_s_over_lambda0": run.d_s}
        metadata.update(ctx.disorder_metadata(doc.disorder, ensemble.n_used))
        if ensemble.contrast is not None:
            metadata["contrast_ratio"] = ensemble.contrast
            ctx.summary["contrast (5th/1st maximum)"] = f"{ensemble.contrast:.4f}"
        columns = {"t": times, "mean_pop_e1": pops[:, 0], "mean_pop_e2": pops[:, 1]}
        name = "rabi_disorder.txt"
    ctx.table(name, columns, metadata)
    ctx.summary.update(
        {
            "|J_AB|": f"{abs(j_ab):.6e}",
            "2|J_AB|": f"{2 * abs(j_ab):.6e}",
            "Rabi frequency": f"{rabi_frequency(times, pops[:, 0]):.6e}",
        }
    )


def _disorder(ctx: _Run) -> None:
    doc, run = ctx.doc, ctx.doc.run
    spec = doc.disorder
    seq = ctx.checked_sequence()
    grid = build_kgrid(ctx.model)
    coupling = ensemble_coupling(seq, spec, grid, workers=ctx.workers)
    ctx.table(
        "coupling_disorder.txt",
        {
            "k": grid.k,
            "mean_abs_G_over_g0": np.asarray(coupling.mean_coupling) / seq.g0,
            "clean_abs_G_over_g0": np.abs(k_coupling(seq, grid)) / seq.g0,
        },
        ctx.disorder_metadata(spec, coupling.n_used),
    )
    if doc.target.kind == "band_gap":
        plan = ctx.single_plan(seq, run.omega_q)
        ensemble = ensemble_dynamics(seq, spec, plan, workers=ctx.workers)
        mean_pops = np.asarray(ensemble.mean_populations)
        metadata = {"omega_q": run.omega_q, **ctx.disorder_metadata(spec, ensemble.n_used)}
        if ensemble.failed_seeds:
            metadata["skipped_seeds"] = " ".join(str(s) for s in ensemble.failed_seeds)
        ctx.table(
            "population_disorder.txt",
            {"t": np.asarray(ensemble.times), "mean_pop_e1": mean_pops[:, 0]},
            metadata,
        )
        ctx.summary["final mean |c_e|^2"] = f"{mean_pops[-1, 0]:.6f}"
    else:
        omegas = ctx.omega_window()
        beta = ensemble_chiral_factor(seq, spec, omegas, ctx.model, workers=ctx.workers)
        ctx.table(
            "chirality_disorder.txt",
            {"omega_q": np.asarray(omegas), "beta_plus": beta},
            ctx.disorder_metadata(spec, spec.n_realizations),
        )
        ctx.summary["min averaged beta_+"] = f"{np.nanmin(beta):.4f}"


PIPELINES: dict[str, Callable[[_Run], None]] = {
    "design": _design,
    "dynamics": _dynamics,
    "bound-state": _bound_state,
    "chirality": _chirality,
    "dipole": _dipole,
    "disorder": _disorder,
}


def _chiral_doc(command: str, **blocks: Any) -> ExperimentDoc:
    return ExperimentDoc(
        command=command,  # type: ignore[arg-type]
        target=TargetProfile(kind="chiral", k_0=1.5, k_d=1.0),
        weights=WeightProfile(w_in=30.0, w_out=1.0),
        constraints=ConstraintSet(eta=0.1, max_extent=2.0, n_max=10, require_nonneg_real=False),
        sequence=SequenceSource(builtin="table_s2"),
        **blocks,
    )


def _bandgap_doc(command: str, **blocks: Any) -> ExperimentDoc:
    return ExperimentDoc(
        command=command,  # type: ignore[arg-type]
        sequence=SequenceSource(builtin="bandgap_lattice"),
        **blocks,
    )


SCENARIOS: dict[str, Callable[[], ExperimentDoc]] = {
    "bandgap-fractional-decay": lambda: _bandgap_doc(
        "dynamics", run=RunBlock(omega_values=[4.5, 3.9], t_final=300.0)
    ),
    "bandgap-bound-state": lambda: _bandgap_doc(
        "bound-state",
        run=RunBlock(
            omega_q=4.5,
            omega_values=[float(w) for w in np.linspace(4.2, 4.8, 61)],
            g0_values=[0.001, 0.0015, 0.002, 0.0025, 0.003, 0.0035, 0.004],
        ),
    ),
    "bandgap-disorder": lambda: _bandgap_doc(
        "disorder",
        disorder=DisorderSpec(sigma_A=0.1, n_realizations=50),
        run=RunBlock(omega_q=4.5, t_final=300.0, record_field=False),
    ),
    "chiral-broadband": lambda: _chiral_doc("chirality", run=RunBlock(omega_q=4.5, t_final=300.0)),
    "chiral-disorder": lambda: _chiral_doc(
        "disorder",
        disorder=DisorderSpec(sigma_A=0.1, sigma_phi=0.1 * math.pi, n_realizations=50),
    ),
    "dipole-sweep": lambda: _bandgap_doc(
        "dipole",
        run=RunBlock(
            omega_q=4.4, d_s_values=[float(d) for d in np.linspace(0.0, 20.0, 81)], rabi=False
        ),
    ),
    "dipole-rabi": lambda: _bandgap_doc(
        "dipole", run=RunBlock(omega_q=4.4, d_s=0.0, t_final=2000.0, n_records=801)
    ),
    "ift-baseline": lambda: _bandgap_doc(
        "design", run=RunBlock(method="ift", ift_half_length=35.81, ift_spacing=0.2387)
    ),
}


def scenario_document(name: str) -> ExperimentDoc:
    """Document of a built-in reproduction scenario."""
    if name not in SCENARIOS:
        raise DocumentError(f"unknown scenario '{name}' (known: {', '.join(SCENARIOS)})")
    return SCENARIOS[name]()


def _with_seed(doc: ExperimentDoc, seed: int) -> ExperimentDoc:
    return doc.model_copy(
        update={
            "run": doc.run.model_copy(update={"seed": seed}),
            "disorder": doc.disorder.model_copy(update={"base_seed": seed}),
        }
    )


def run(
    doc: ExperimentDoc,
    settings: Optional[Settings] = None,
    out_dir: Optional[Path] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    base_dir: Optional[Path] = None,
) -> RunOutcome:
    """Execute the document's pipeline and write its tables plus a manifest.

    ``base_dir`` anchors a relative sequence path; documents read with
    ``load_document`` are already anchored to their own directory.
    """
    settings = settings or load_settings()
    if base_dir is not None:
        doc = doc.anchored(base_dir)
    name: str = doc.command
    if doc.command == "reproduce":
        if not doc.run.scenario:
            raise DocumentError("'reproduce' needs run.scenario")
        name = doc.run.scenario
        doc = scenario_document(name).model_copy(update={"output_dir": doc.output_dir})
    if seed is not None:
        doc = _with_seed(doc, seed)
    workers = threads or settings.threads
    target = Path(out_dir or doc.output_dir or settings.output_dir / name)

    logger.info(f"Running '{name}' into {target} with {workers} worker(s)")
    started = time.perf_counter()
    ctx = _Run(doc, target, workers)
    PIPELINES[doc.command](ctx)
    wall = time.perf_counter() - started

    resolved = doc.model_copy(update={"output_dir": None}).model_dump(mode="json")
    seeds = {"run.seed": doc.run.seed, "disorder.base_seed": doc.disorder.base_seed}
    manifest = write_manifest(target, resolved, seeds, ctx.files, wall)
    logger.info(f"Finished '{name}' in {wall:.2f} s, {len(ctx.files)} file(s)")
    return RunOutcome(command=name, out_dir=target, files=ctx.files, manifest=manifest, summary=ctx.summary)
