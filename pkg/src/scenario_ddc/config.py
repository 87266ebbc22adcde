"""Experiment configuration: TOML loading, validation, and desk-scale presets."""
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

from .errors import DataValidationError
from .fleet import FixedLaw, GaussianLaw, RolloutConfig, UniformBoxLaw

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

THREADS_ENV_VAR = "SCENARIO_DDC_THREADS"


@dataclass(frozen=True)
class FleetConfig:
    sigma2: float = 0.01
    truncation: str = "ellipsoid"
    wbar: float = 0.015
    input_law: str = "uniform-box"
    input_magnitude: float = 1.0
    input_std: float = 1.0
    x0_law: str = "uniform-box"
    x0_magnitude: float = 1.0
    x0_vector: Optional[List[float]] = None
    M: int = 50
    N: int = 16

    def make_input_law(self):
        if self.input_law == "uniform-box":
            return UniformBoxLaw(self.input_magnitude)
        if self.input_law == "gaussian":
            return GaussianLaw(self.input_std)
        raise DataValidationError(
            f"[fleet] input_law must be 'uniform-box' or 'gaussian', got {self.input_law!r}"
        )

    def make_x0_law(self):
        if self.x0_law == "uniform-box":
            return UniformBoxLaw(self.x0_magnitude)
        if self.x0_law == "fixed":
            if self.x0_vector is None:
                raise DataValidationError("[fleet] x0_law 'fixed' needs x0_vector")
            return FixedLaw(self.x0_vector)
        raise DataValidationError(
            f"[fleet] x0_law must be 'uniform-box' or 'fixed', got {self.x0_law!r}"
        )

    def make_rollout_config(self, seed: int = 0, M: Optional[int] = None) -> RolloutConfig:
        return RolloutConfig(
            M=self.M if M is None else M,
            wbar=self.wbar,
            input_law=self.make_input_law(),
            x0_law=self.make_x0_law(),
            seed=seed,
        )


@dataclass(frozen=True)
class SweepConfig:
    sigma2_values: List[float] = field(default_factory=lambda: [1e-4, 1e-2, 0.05])
    N_values: List[int] = field(default_factory=lambda: [4, 8, 16, 32])
    M_values: List[int] = field(default_factory=lambda: [10, 50, 200])
    repetitions: int = 10
    n_test: int = 200


@dataclass(frozen=True)
class ScenarioBlock:
    alpha: float = 0.05
    epsilon: float = 0.01


@dataclass(frozen=True)
class SolverConfig:
    delta: float = 1e-6
    feasibility_tol: float = 1e-6
    backends: Optional[List[str]] = None  # None selects the default ladder
    objective: str = "feasibility"
    retry_cap: int = 5


@dataclass(frozen=True)
class UncertaintyConfig:
    """Scalar consistent-set study: fixed system, grid window, seeds per length."""

    A: float = 0.9
    B: float = 1.4
    wbar: float = 0.015
    M_values: List[int] = field(default_factory=lambda: [5, 20, 100, 500])
    n_seeds: int = 5
    window: List[float] = field(default_factory=lambda: [0.4, 1.4, 0.9, 1.9])
    resolution: int = 81
    input_magnitude: float = 1.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    figures: bool = True
    timings: bool = False  # keep raw CSVs byte-reproducible by default


@dataclass(frozen=True)
class ExperimentConfig:
    fleet: FleetConfig = FleetConfig()
    sweep: SweepConfig = SweepConfig()
    scenario: ScenarioBlock = ScenarioBlock()
    solver: SolverConfig = SolverConfig()
    uncertainty: UncertaintyConfig = UncertaintyConfig()
    output: OutputConfig = OutputConfig()
    master_seed: int = 0


_SECTIONS = {
    "fleet": FleetConfig,
    "sweep": SweepConfig,
    "scenario": ScenarioBlock,
    "solver": SolverConfig,
    "uncertainty": UncertaintyConfig,
    "output": OutputConfig,
}


def _build_section(name, cls, table):
    fields = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(table) - fields
    if unknown:
        raise DataValidationError(
            f"[{name}] unknown keys {sorted(unknown)}; expected a subset of {sorted(fields)}"
        )
    try:
        return cls(**table)
    except TypeError as exc:
        raise DataValidationError(f"[{name}] {exc}")


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.sweep.repetitions < 1:
        raise DataValidationError("[sweep] repetitions must be >= 1")
    for key in ("sigma2_values", "N_values", "M_values"):
        if not getattr(cfg.sweep, key):
            raise DataValidationError(f"[sweep] {key} must be a nonempty list")
    if cfg.sweep.n_test < 1:
        raise DataValidationError("[sweep] n_test must be >= 1")
    if not (0 < cfg.scenario.alpha < 1 and 0 < cfg.scenario.epsilon < 1):
        raise DataValidationError("[scenario] alpha and epsilon must lie in (0, 1)")
    if cfg.solver.delta <= 0:
        raise DataValidationError("[solver] delta must be > 0")
    if cfg.solver.retry_cap < 0:
        raise DataValidationError("[solver] retry_cap must be >= 0")
    if cfg.solver.objective not in ("feasibility", "max-margin"):
        raise DataValidationError(
            "[solver] objective must be 'feasibility' or 'max-margin'"
        )
    if cfg.fleet.sigma2 <= 0:
        raise DataValidationError("[fleet] sigma2 must be > 0")
    if cfg.fleet.wbar < 0:
        raise DataValidationError("[fleet] wbar must be >= 0")
    if cfg.fleet.M < 1 or cfg.fleet.N < 1:
        raise DataValidationError("[fleet] M and N must be >= 1")
    if cfg.uncertainty.resolution < 2:
        raise DataValidationError("[uncertainty] resolution must be >= 2")
    if cfg.uncertainty.n_seeds < 1:
        raise DataValidationError("[uncertainty] n_seeds must be >= 1")
    # constructing the laws surfaces any law/parameter mismatch early
    cfg.fleet.make_input_law()
    cfg.fleet.make_x0_law()
    return cfg


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration."""
    try:
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    except FileNotFoundError:
        raise DataValidationError(f"config file not found: {path}")
    except _toml.TOMLDecodeError as exc:
        raise DataValidationError(f"{path}: invalid TOML ({exc})")
    unknown = set(doc) - set(_SECTIONS) - {"master_seed"}
    if unknown:
        raise DataValidationError(
            f"{path}: unknown sections {sorted(unknown)}; expected "
            f"{sorted(_SECTIONS)} and master_seed"
        )
    sections = {}
    for name, cls in _SECTIONS.items():
        table = doc.get(name, {})
        if not isinstance(table, dict):
            raise DataValidationError(f"{path}: [{name}] must be a table")
        sections[name] = _build_section(name, cls, table)
    master_seed = doc.get("master_seed", 0)
    if not isinstance(master_seed, int) or master_seed < 0:
        raise DataValidationError(f"{path}: master_seed must be a nonnegative integer")
    return _validate(ExperimentConfig(master_seed=master_seed, **sections))


def default_config() -> ExperimentConfig:
    return _validate(ExperimentConfig())


def fig3_style_config() -> ExperimentConfig:
    """Trajectory-length sweep preset (fixed sigma2 = 0.1, N x M grid)."""
    cfg = default_config()
    return replace(
        cfg,
        fleet=replace(cfg.fleet, sigma2=0.1),
        sweep=replace(cfg.sweep, N_values=[16, 32], M_values=[10, 50, 200]),
    )


def resolve_threads(cli_value: Optional[int]) -> int:
    """CLI flag wins; otherwise the environment variable; otherwise 1."""
    if cli_value is not None:
        if cli_value < 1:
            raise DataValidationError("--threads must be >= 1")
        return cli_value
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise DataValidationError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")
        if value < 1:
            raise DataValidationError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
        return value
    return 1


def write_default_config(path) -> None:
    """Emit a commented template covering every section."""
    cfg = default_config()
    text = f"""# experiment configuration
master_seed = {cfg.master_seed}

[fleet]
sigma2 = {cfg.fleet.sigma2}
truncation = "{cfg.fleet.truncation}"       # ellipsoid | box
wbar = {cfg.fleet.wbar}
input_law = "{cfg.fleet.input_law}"    # uniform-box | gaussian
input_magnitude = {cfg.fleet.input_magnitude}
x0_law = "{cfg.fleet.x0_law}"       # uniform-box | fixed
x0_magnitude = {cfg.fleet.x0_magnitude}
M = {cfg.fleet.M}
N = {cfg.fleet.N}

[sweep]
sigma2_values = {cfg.sweep.sigma2_values}
N_values = {cfg.sweep.N_values}
M_values = {cfg.sweep.M_values}
repetitions = {cfg.sweep.repetitions}
n_test = {cfg.sweep.n_test}

[scenario]
alpha = {cfg.scenario.alpha}
epsilon = {cfg.scenario.epsilon}

[solver]
delta = {cfg.solver.delta}
feasibility_tol = {cfg.solver.feasibility_tol}
objective = "{cfg.solver.objective}"  # feasibility | max-margin
retry_cap = {cfg.solver.retry_cap}

[uncertainty]
A = {cfg.uncertainty.A}
B = {cfg.uncertainty.B}
wbar = {cfg.uncertainty.wbar}
M_values = {cfg.uncertainty.M_values}
n_seeds = {cfg.uncertainty.n_seeds}
window = {cfg.uncertainty.window}
resolution = {cfg.uncertainty.resolution}

[output]
directory = "{cfg.output.directory}"
figures = {str(cfg.output.figures).lower()}
timings = {str(cfg.output.timings).lower()}
"""
    Path(path).write_text(text)
