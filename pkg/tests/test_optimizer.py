"""Tests for the coupling-sequence optimizer."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from giant_atom.analysis import chirality_sweep
from giant_atom.coupling import ConstraintSet, CouplingSequence, gap_residual, ift_baseline, validate
from giant_atom.errors import OptimizationFailed
from giant_atom.optimizer import (
    DesignProblem,
    feasible_point_count,
    lattice_design,
    objective_cm,
    optimize,
    repair_positions,
)
from giant_atom.waveguide import WaveguideModel, WeightProfile, build_kgrid


@pytest.fixture
def coarse_grid(coarse_model):
    return build_kgrid(coarse_model)


@pytest.fixture
def problem(band_gap, bandgap_constraints, coarse_grid):
    return DesignProblem(
        target=band_gap,
        weights=WeightProfile(),
        constraints=bandgap_constraints,
        grid=coarse_grid,
        budget=400,
        population=10,
    )


def test_objective_of_empty_sequence(band_gap, bandgap_constraints, fine_grid):
    """Test C_m of no coupling is the out-of-gap length less the trapezoid edge cells."""
    problem = DesignProblem(
        target=band_gap, weights=WeightProfile(), constraints=bandgap_constraints, grid=fine_grid
    )

    assert objective_cm(CouplingSequence.empty(), problem) == pytest.approx(5.798, abs=5e-3)


def test_objective_scales_with_weights(problem, table_s1):
    """Test C_m is linear in the weight profile."""
    doubled = DesignProblem(
        target=problem.target,
        weights=WeightProfile(w_in=120.0, w_out=2.0),
        constraints=problem.constraints,
        grid=problem.grid,
    )

    assert objective_cm(table_s1, doubled) == pytest.approx(2 * objective_cm(table_s1, problem))


def test_objective_ignores_g0(problem, table_s1):
    """Test C_m compares |G_k| / g0 against the target."""
    assert objective_cm(table_s1.with_g0(0.5), problem) == pytest.approx(objective_cm(table_s1, problem))


def test_ift_baseline_beats_empty(band_gap, bandgap_constraints, fine_grid):
    """Test the sampled inverse transform tracks the target far better than nothing."""
    problem = DesignProblem(
        target=band_gap,
        weights=WeightProfile(w_in=1.0, w_out=1.0),
        constraints=bandgap_constraints,
        grid=fine_grid,
    )
    seq = ift_baseline(band_gap, 150.0, 1.0)

    assert objective_cm(seq, problem) < 1.0
    assert objective_cm(CouplingSequence.empty(), problem) > 5.0


def test_problem_rejects_bad_settings(band_gap, bandgap_constraints, coarse_grid):
    """Test budgets, populations and phase conflicts are validated."""
    base = dict(target=band_gap, weights=WeightProfile(), constraints=bandgap_constraints, grid=coarse_grid)

    with pytest.raises(ValueError):
        DesignProblem(**base, budget=0)
    with pytest.raises(ValueError):
        DesignProblem(**base, population=2)
    with pytest.raises(ValueError):
        DesignProblem(**base, allow_phases=True)


def test_problem_rejects_grid_beyond_cutoff(band_gap, bandgap_constraints):
    """Test the grid may not extend past the target cutoff."""
    grid = build_kgrid(WaveguideModel(k_max=4.0, delta_k=0.01))

    with pytest.raises(ValueError):
        DesignProblem(target=band_gap, weights=WeightProfile(), constraints=bandgap_constraints, grid=grid)


def test_search_grid_is_coarser(problem):
    """Test the inner loop uses opt_delta_k when it is coarser than the grid."""
    assert problem.search_grid().delta_k == pytest.approx(1e-2)
    assert len(problem.search_grid()) == 601


def test_feasible_point_count():
    """Test N is capped by N_max and by what fits the extent."""
    assert feasible_point_count(ConstraintSet()) == 30
    cons = ConstraintSet(eta=2.0, max_extent=17.0, n_max=30)
    n = feasible_point_count(cons)

    assert n == 9
    assert (n - 1) * cons.min_spacing < cons.extent_length


@given(st.lists(st.floats(-100.0, 100.0), min_size=1, max_size=30))
def test_repair_positions_is_feasible(xs):
    """Test repaired positions respect spacing and extent for any input."""
    cons = ConstraintSet()
    x = repair_positions(np.array(xs), cons)
    half = cons.extent_length / 2

    assert np.all(np.diff(x) > cons.min_spacing)
    assert np.all((x > -half) & (x < half))


def test_repair_positions_rejects_overfull():
    """Test an impossible packing raises."""
    cons = ConstraintSet(eta=2.0, max_extent=17.0, n_max=30)

    with pytest.raises(ValueError):
        repair_positions(np.zeros(20), cons)


def test_optimize_single_evaluation(problem):
    """Test a budget of one returns the feasible warm start."""
    tiny = DesignProblem(
        target=problem.target,
        weights=problem.weights,
        constraints=problem.constraints,
        grid=problem.grid,
        budget=1,
        population=10,
    )
    result = optimize(tiny)

    assert result.evaluations == 1
    assert result.report.passed
    assert result.objective <= result.initial_objective


def test_optimize_improves_and_stays_feasible(problem, coarse_model):
    """Test the search never returns something worse than its start or infeasible."""
    result = optimize(problem)

    assert result.report.passed
    assert validate(result.sequence, problem.constraints, coarse_model).passed
    assert result.objective <= result.initial_objective
    assert result.evaluations <= problem.budget
    assert result.trace[-1] <= result.trace[0]
    assert result.sequence.is_real


def test_optimize_is_deterministic(problem):
    """Test equal seeds give identical sequences."""
    a = optimize(problem)
    b = optimize(problem)

    np.testing.assert_array_equal(a.sequence.positions, b.sequence.positions)
    np.testing.assert_array_equal(a.sequence.amplitudes, b.sequence.amplitudes)
    assert a.objective == b.objective


def test_optimize_workers_do_not_change_result(problem):
    """Test parallel evaluation reproduces the serial search."""
    parallel = DesignProblem(
        target=problem.target,
        weights=problem.weights,
        constraints=problem.constraints,
        grid=problem.grid,
        budget=problem.budget,
        population=problem.population,
        workers=2,
    )

    np.testing.assert_array_equal(optimize(parallel).sequence.positions, optimize(problem).sequence.positions)


@pytest.mark.slow
def test_optimize_with_local_stage(problem):
    """Test a budget large enough for the Nelder-Mead stage stays within the budget."""
    larger = DesignProblem(
        target=problem.target,
        weights=problem.weights,
        constraints=problem.constraints,
        grid=problem.grid,
        budget=1500,
        population=10,
    )
    result = optimize(larger)

    assert result.report.passed
    assert result.evaluations <= larger.budget + 2 * 61
    assert result.objective <= result.initial_objective


def test_optimize_chiral_with_phases(chiral, coarse_grid):
    """Test a chiral design with phases enabled returns a feasible complex sequence."""
    cons = ConstraintSet(eta=0.1, max_extent=2.0, n_max=10, require_nonneg_real=False)
    problem = DesignProblem(
        target=chiral,
        weights=WeightProfile(),
        constraints=cons,
        grid=coarse_grid,
        allow_phases=True,
        budget=300,
        population=10,
    )
    result = optimize(problem)

    assert len(result.sequence) <= 10
    assert result.sequence.extent < cons.extent_length
    assert result.objective <= result.initial_objective


def test_optimize_reports_failure(band_gap, coarse_grid):
    """Test an unsatisfiable Markov margin raises OptimizationFailed."""
    cons = ConstraintSet(eta=0.1, max_extent=17.0, n_max=30, markov_margin=1e12)
    problem = DesignProblem(
        target=band_gap, weights=WeightProfile(), constraints=cons, grid=coarse_grid, budget=1, lattice_start=False
    )

    with pytest.raises(OptimizationFailed):
        optimize(problem)


def test_problem_rejects_bad_gap_limit(band_gap, bandgap_constraints, coarse_grid):
    """Test a non-positive residual limit is refused."""
    with pytest.raises(ValueError):
        DesignProblem(
            target=band_gap,
            weights=WeightProfile(),
            constraints=bandgap_constraints,
            grid=coarse_grid,
            max_gap_residual=0.0,
        )


def test_lattice_design_opens_the_gap(band_gap, bandgap_constraints, fine_grid, fine_model):
    """Test the lattice program returns a feasible real sequence with a closed gap."""
    problem = DesignProblem(
        target=band_gap, weights=WeightProfile(), constraints=bandgap_constraints, grid=fine_grid
    )
    seq = lattice_design(problem)

    assert seq is not None
    assert seq.is_real
    assert len(seq) <= 29
    assert gap_residual(seq, band_gap, fine_grid) < 1e-4
    assert validate(seq, bandgap_constraints, fine_model).passed


def test_lattice_design_needs_room(band_gap, coarse_grid):
    """Test no lattice is proposed when half a wavelength is below the minimum spacing."""
    cons = ConstraintSet(eta=0.6, max_extent=17.0, n_max=30)
    problem = DesignProblem(target=band_gap, weights=WeightProfile(), constraints=cons, grid=coarse_grid)

    assert lattice_design(problem) is None


def test_lattice_design_chiral_needs_phases(chiral, coarse_grid):
    """Test a one-sided gap has no real lattice solution to offer."""
    cons = ConstraintSet(eta=0.1, max_extent=2.0, n_max=10)
    problem = DesignProblem(target=chiral, weights=WeightProfile(), constraints=cons, grid=coarse_grid)

    assert lattice_design(problem) is None


def test_optimize_starts_from_the_lattice(problem):
    """Test the lattice seeds the search and a residual limit keeps the gap closed."""
    gated = DesignProblem(
        target=problem.target,
        weights=problem.weights,
        constraints=problem.constraints,
        grid=problem.grid,
        budget=problem.budget,
        population=problem.population,
        max_gap_residual=1e-3,
    )
    lattice = lattice_design(gated)
    result = optimize(gated)

    assert result.initial_objective == pytest.approx(objective_cm(lattice, gated))
    assert result.in_gap_residual <= 1e-3
    assert result.report.passed


def test_optimize_without_lattice_start(problem):
    """Test disabling the lattice stage leaves it out of the candidates."""
    plain = DesignProblem(
        target=problem.target,
        weights=problem.weights,
        constraints=problem.constraints,
        grid=problem.grid,
        budget=problem.budget,
        population=problem.population,
        lattice_start=False,
    )
    result = optimize(plain)

    assert result.selected != "lattice"
    assert result.report.passed


@pytest.mark.slow
def test_bandgap_design_reaches_residual_target(band_gap, bandgap_constraints, fine_grid):
    """Test at least one of eight seeds closes the gap to 1e-3 of the plateau with 2000 evaluations."""
    residuals = []
    for seed in range(8):
        problem = DesignProblem(
            target=band_gap,
            weights=WeightProfile(),
            constraints=bandgap_constraints,
            grid=fine_grid,
            rng_seed=seed,
            budget=2000,
            max_gap_residual=1e-3,
        )
        result = optimize(problem)
        assert result.report.passed
        residuals.append(result.in_gap_residual)

    assert min(residuals) <= 1e-3


@pytest.mark.slow
def test_chiral_design_is_directional(chiral, coarse_grid, fine_model):
    """Test the chiral design emits more than 99% to the right across c (k_0 +- k_d / 4)."""
    cons = ConstraintSet(eta=0.1, max_extent=2.0, n_max=10, require_nonneg_real=False)
    problem = DesignProblem(
        target=chiral,
        weights=WeightProfile(w_in=30.0),
        constraints=cons,
        grid=coarse_grid,
        allow_phases=True,
        budget=1000,
        population=10,
        max_gap_residual=1e-2,
    )
    result = optimize(problem)
    omegas = np.linspace(3.0 * 1.25, 3.0 * 1.75, 31)

    assert result.in_gap_residual <= 1e-2
    assert np.all(chirality_sweep(result.sequence, omegas, fine_model) > 0.99)
