"""Configuration management for giant_atom: runtime settings and experiment documents."""

import json
import math
import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .coupling import DEFAULT_G0, ConstraintSet, CouplingSequence
from .errors import DocumentError
from .io import read_sequence
from .montecarlo import DisorderSpec
from .tables import builtin_sequence
from .waveguide import TargetProfile, WaveguideModel, WeightProfile

load_dotenv()


class Settings(BaseModel):
    """Runtime settings taken from the environment."""

    threads: int = Field(1, ge=1)
    output_dir: Path = Path("results")
    log_level: str = "INFO"


def load_settings() -> Settings:
    """Load settings from environment variables."""
    return Settings(
        threads=int(os.getenv("GIANT_ATOM_THREADS", "1")),
        output_dir=Path(os.getenv("GIANT_ATOM_OUTPUT_DIR", "results")),
        log_level=os.getenv("GIANT_ATOM_LOG_LEVEL", "INFO").upper(),
    )


class SequencePoint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_over_lambda0: float
    amplitude: float = Field(ge=0)
    phase_rad: float = 0.0


class SequenceSource(BaseModel):
    """Exactly one of a builtin table id, a sequence file or inline points."""

    model_config = ConfigDict(extra="forbid")

    builtin: Optional[Literal["table_s1", "table_s2", "bandgap_lattice"]] = None
    path: Optional[Path] = None
    points: Optional[list[SequencePoint]] = None
    g0: float = Field(DEFAULT_G0, gt=0)
    label: str = ""

    @model_validator(mode="after")
    def _one_source(self) -> "SequenceSource":
        given = [s for s in (self.builtin, self.path, self.points) if s is not None]
        if len(given) != 1:
            raise ValueError("sequence needs exactly one of 'builtin', 'path' or 'points'")
        return self

    def resolve(self, k0: float, base_dir: Optional[Path] = None) -> CouplingSequence:
        if self.builtin is not None:
            return builtin_sequence(self.builtin, g0=self.g0, k0=k0)
        if self.path is not None:
            path = self.path if base_dir is None or self.path.is_absolute() else base_dir / self.path
            return read_sequence(path, k0=k0).with_g0(self.g0)
        points = self.points or []
        return CouplingSequence.from_lambda0(
            [p.x_over_lambda0 for p in points],
            [p.amplitude for p in points],
            [p.phase_rad for p in points],
            k0=k0,
            g0=self.g0,
            label=self.label or "inline",
        )


class RunBlock(BaseModel):
    """Run parameters; lengths are in units of lambda_0."""

    model_config = ConfigDict(extra="forbid")

    omega_q: float = 4.5
    omega_values: Optional[list[float]] = None
    t_final: float = Field(300.0, gt=0)
    n_records: int = Field(301, ge=2)
    d_s: float = 0.0
    d_s_values: Optional[list[float]] = None
    rabi: bool = True
    seed: int = Field(0, ge=0)
    budget: int = Field(20000, ge=1)
    population: int = Field(20, ge=5)
    allow_phases: Optional[bool] = None
    method: Literal["optimize", "ift"] = "optimize"
    max_gap_residual: Optional[float] = Field(None, gt=0)
    # 301 samples at unit raw spacing for k_0 = 1.5.
    ift_half_length: float = Field(35.81, gt=0)
    ift_spacing: float = Field(0.2387, gt=0)
    record_field: bool = True
    field_points: int = Field(2048, ge=2)
    field_window: Optional[tuple[float, float]] = None
    g0_values: Optional[list[float]] = None
    scenario: Optional[str] = None


class ExperimentDoc(BaseModel):
    """A complete, strictly validated experiment description."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["design", "dynamics", "bound-state", "chirality", "dipole", "disorder", "reproduce"]
    waveguide: WaveguideModel = WaveguideModel()
    target: TargetProfile = TargetProfile()
    weights: WeightProfile = WeightProfile()
    constraints: ConstraintSet = ConstraintSet()
    disorder: DisorderSpec = DisorderSpec()
    sequence: Optional[SequenceSource] = None
    run: RunBlock = RunBlock()
    output_dir: Optional[Path] = None

    @property
    def lambda0(self) -> float:
        return 2 * math.pi / self.target.k_0

    def anchored(self, base_dir: Path) -> "ExperimentDoc":
        """Copy whose relative sequence path is made absolute against ``base_dir``."""
        source = self.sequence
        if source is None or source.path is None or source.path.is_absolute():
            return self
        path = (Path(base_dir) / source.path).resolve()
        return self.model_copy(update={"sequence": source.model_copy(update={"path": path})})


def load_document(path: Path) -> ExperimentDoc:
    """Read an experiment document, or the document stored in a run manifest.

    Relative sequence paths are resolved against the document's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DocumentError(f"cannot read {path}: {e}") from e
    if isinstance(raw, dict) and "document" in raw and "command" not in raw:
        raw = raw["document"]
    try:
        doc = ExperimentDoc.model_validate(raw)
    except ValidationError as e:
        raise DocumentError(f"invalid experiment document {path}: {e}") from e
    return doc.anchored(path.parent)
