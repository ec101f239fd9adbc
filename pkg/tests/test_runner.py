"""Tests for the command pipelines and reproduction scenarios."""

import json

import numpy as np
import pytest

from giant_atom.config import ExperimentDoc, RunBlock, SequenceSource, Settings, load_document
from giant_atom.coupling import ConstraintSet, validate
from giant_atom.errors import ConstraintViolationError, DocumentError
from giant_atom.io import read_sequence, read_table, write_sequence
from giant_atom.montecarlo import DisorderSpec
from giant_atom.runner import SCENARIOS, run, scenario_document
from giant_atom.tables import builtin_sequence
from giant_atom.waveguide import TargetProfile, WaveguideModel

COARSE = WaveguideModel(c=3.0, k_max=3.0, delta_k=0.01)


@pytest.fixture
def settings(tmp_path):
    return Settings(output_dir=tmp_path / "results")


def test_every_scenario_builds():
    """Test each scenario document validates and names a known pipeline."""
    for name in SCENARIOS:
        doc = scenario_document(name)
        assert doc.command in ("design", "dynamics", "bound-state", "chirality", "dipole", "disorder")
        assert doc.sequence is not None


def test_unknown_scenario():
    """Test unknown scenario names raise DocumentError."""
    with pytest.raises(DocumentError):
        scenario_document("no-such-scenario")


def test_reproduce_needs_scenario(settings):
    """Test a reproduce document without a scenario is rejected."""
    with pytest.raises(DocumentError):
        run(ExperimentDoc(command="reproduce"), settings)


def test_design_pipeline(tmp_path, settings):
    """Test a short optimization writes a feasible sequence, its coupling and a trace."""
    doc = ExperimentDoc(command="design", waveguide=COARSE, run=RunBlock(budget=200, population=10, seed=3))
    outcome = run(doc, settings, out_dir=tmp_path / "design")

    seq = read_sequence(outcome.out_dir / "sequence.txt")
    assert validate(seq, doc.constraints, COARSE).passed
    metadata, trace = read_table(outcome.out_dir / "trace.txt")
    assert metadata["seed"] == "3"
    assert np.all(np.diff(trace["best_objective"]) <= 0)
    assert (outcome.out_dir / "coupling.txt").exists()


def test_seed_override_is_recorded(tmp_path, settings):
    """Test --seed style overrides reach the manifest and the replayed document."""
    doc = ExperimentDoc(command="design", waveguide=COARSE, run=RunBlock(budget=60, population=10))
    outcome = run(doc, settings, out_dir=tmp_path / "seeded", seed=11)
    manifest = json.loads(outcome.manifest.read_text())

    assert manifest["seeds"] == {"run.seed": 11, "disorder.base_seed": 11}
    assert load_document(outcome.manifest).run.seed == 11


def test_default_output_directory(settings):
    """Test runs land under the settings output directory by command name."""
    doc = ExperimentDoc(command="design", run=RunBlock(method="ift", ift_half_length=5.0))
    outcome = run(doc, settings)

    assert outcome.out_dir == settings.output_dir / "design"
    assert outcome.manifest.exists()


def test_dynamics_pipeline(tmp_path, settings):
    """Test population and field tables for each frequency."""
    doc = ExperimentDoc(
        command="dynamics",
        waveguide=COARSE,
        sequence=SequenceSource(builtin="table_s1"),
        run=RunBlock(omega_values=[4.5, 3.9], t_final=10.0, n_records=11, field_points=64),
    )
    outcome = run(doc, settings, out_dir=tmp_path / "dyn")

    for tag in ("w4.5", "w3.9"):
        _, columns = read_table(outcome.out_dir / f"population_{tag}.txt")
        assert columns["pop_e1"][0] == 1.0
        assert np.all(np.abs(columns["norm"] - 1) < 1e-6)
        assert (outcome.out_dir / f"field_{tag}.txt").exists()


def test_dynamics_rejects_infeasible_sequence(tmp_path, settings):
    """Test the constraint check runs before any simulation."""
    doc = ExperimentDoc(
        command="dynamics",
        sequence=SequenceSource(builtin="table_s1"),
        constraints=ConstraintSet(n_max=5),
    )

    with pytest.raises(ConstraintViolationError):
        run(doc, settings, out_dir=tmp_path / "bad")
    assert not (tmp_path / "bad" / "manifest.json").exists()


def test_bound_state_pipeline(tmp_path, settings):
    """Test the bound-state table carries the pole and residue in its header."""
    doc = ExperimentDoc(
        command="bound-state",
        waveguide=WaveguideModel(delta_k=5e-3),
        sequence=SequenceSource(builtin="bandgap_lattice"),
        run=RunBlock(omega_q=4.5, omega_values=[4.45, 4.5], g0_values=[0.001, 0.002]),
    )
    outcome = run(doc, settings, out_dir=tmp_path / "bound")

    metadata, columns = read_table(outcome.out_dir / "bound_state_field.txt")
    assert 0.0 < float(metadata["residue_population"]) <= 1.0
    assert np.all(columns["intensity"] >= 0)
    _, trapped = read_table(outcome.out_dir / "trapped_population.txt")
    assert trapped["trapped_population"].size == 2
    assert (outcome.out_dir / "trapped_energy.txt").exists()


def test_chirality_pipeline(tmp_path, settings):
    """Test the chiral-factor sweep over the gap frequencies."""
    doc = scenario_document("chiral-broadband").model_copy(
        update={"waveguide": COARSE, "run": RunBlock(record_field=False)}
    )
    outcome = run(doc, settings, out_dir=tmp_path / "chiral")

    _, columns = read_table(outcome.out_dir / "chirality.txt")
    assert columns["omega_q"].size == 61
    assert np.median(columns["beta_plus"]) > 0.9


def test_dipole_pipeline(tmp_path, settings):
    """Test the exchange sweep and a short two-atom run."""
    doc = ExperimentDoc(
        command="dipole",
        waveguide=COARSE,
        sequence=SequenceSource(builtin="table_s1"),
        run=RunBlock(omega_q=4.4, d_s_values=[0.0, 5.0, 10.0], t_final=20.0, n_records=41),
    )
    outcome = run(doc, settings, out_dir=tmp_path / "dipole")

    _, sweep = read_table(outcome.out_dir / "dipole.txt")
    assert sweep["J_AB_imag"][0] == 0.0
    _, rabi = read_table(outcome.out_dir / "rabi.txt")
    assert rabi["pop_e1"][0] == 1.0
    assert rabi["pop_e2"][0] == 0.0
    assert "|J_AB|" in outcome.summary


def test_disorder_pipeline_chiral(tmp_path, settings):
    """Test the chiral disorder pipeline writes averaged and clean couplings."""
    doc = ExperimentDoc(
        command="disorder",
        waveguide=COARSE,
        target=TargetProfile(kind="chiral", k_0=1.5, k_d=1.0),
        constraints=ConstraintSet(max_extent=2.0, n_max=10, require_nonneg_real=False),
        sequence=SequenceSource(builtin="table_s2"),
        disorder=DisorderSpec(sigma_A=0.1, sigma_phi=0.1, n_realizations=5),
        run=RunBlock(omega_values=[4.4, 4.5]),
    )
    outcome = run(doc, settings, out_dir=tmp_path / "disorder", threads=2)

    metadata, columns = read_table(outcome.out_dir / "coupling_disorder.txt")
    assert metadata["realizations"] == "5"
    assert columns["mean_abs_G_over_g0"].size == columns["clean_abs_G_over_g0"].size
    assert (outcome.out_dir / "chirality_disorder.txt").exists()


def test_bandgap_scenarios_use_the_lattice_golden():
    """Test the band-gap and dipole scenarios run on the computed lattice sequence."""
    for name in ("bandgap-fractional-decay", "bandgap-bound-state", "bandgap-disorder", "dipole-rabi"):
        assert scenario_document(name).sequence.builtin == "bandgap_lattice"


def _relative_sequence_doc(tmp_path):
    docs = tmp_path / "docs"
    docs.mkdir()
    write_sequence(docs / "seq.txt", builtin_sequence("bandgap_lattice"), k0=1.5)
    body = {
        "command": "dynamics",
        "waveguide": COARSE.model_dump(),
        "sequence": {"path": "seq.txt"},
        "run": {"t_final": 5.0, "n_records": 6, "record_field": False},
    }
    path = docs / "doc.json"
    path.write_text(json.dumps(body))
    return path


def test_relative_sequence_path_follows_the_document(tmp_path, settings, monkeypatch):
    """Test a relative sequence path resolves next to the document, not the working directory."""
    path = _relative_sequence_doc(tmp_path)
    elsewhere = tmp_path / "elsewhere"
    elsewhere.mkdir()
    monkeypatch.chdir(elsewhere)

    outcome = run(load_document(path), settings, out_dir=tmp_path / "out")

    replayed = load_document(outcome.manifest)
    assert replayed.sequence.path == (tmp_path / "docs" / "seq.txt").resolve()
    assert run(replayed, settings, out_dir=tmp_path / "replay").manifest.exists()


def test_run_anchors_relative_paths_to_base_dir(tmp_path, settings, monkeypatch):
    """Test run() resolves a relative sequence path against base_dir."""
    path = _relative_sequence_doc(tmp_path)
    doc = ExperimentDoc.model_validate(json.loads(path.read_text()))
    monkeypatch.chdir(tmp_path)

    outcome = run(doc, settings, out_dir=tmp_path / "out", base_dir=path.parent)

    _, columns = read_table(outcome.out_dir / "population_w4.5.txt")
    assert columns["pop_e1"][0] == 1.0
