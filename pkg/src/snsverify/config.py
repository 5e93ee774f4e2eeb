"""Experiment configuration: strict JSON schema, named field presets.

The schema is nested dataclasses; unknown keys anywhere are rejected so a
typo cannot silently change hypothesis-sensitive parameters.  Configs
round-trip losslessly through to_dict/from_dict.

Field presets (deterministic, documented):

* "zero"    - the zero field;
* "gentle"  - a fixed smooth pattern on five low modes, scaled to `norm`;
* "low"     - supported on |k| = 1 modes only;
* "high"    - supported on the first band above the forcing radius;
* "mixed"   - sqrt(0.7) low + sqrt(0.3) high, the default separation
              direction (exercises both the schedule and the residual).

A field may also be loaded from a CSV in the canonical serialization
format via {"file": "path.csv"}.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .spectral import FourierField, PhysicsParams, SpectralGrid, field_from_csv, make_grid, zero_field


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


_GENTLE_PATTERN = [
    ((1, 0), 0.60 + 0.20j),
    ((0, 1), -0.40 + 0.50j),
    ((1, 1), 0.30 - 0.30j),
    ((1, -1), 0.10 + 0.45j),
    ((2, 0), 0.00 + 0.25j),
]

_LOW_PATTERN = [((1, 0), 0.8 + 0.3j), ((0, 1), -0.2 + 0.55j)]
_HIGH_PATTERN = [((2, 1), 0.7 - 0.2j), ((1, 2), 0.25 + 0.6j)]


def _pattern_field(grid: SpectralGrid, pattern) -> FourierField:
    amps = np.zeros(grid.n_modes, dtype=np.complex128)
    for (k1, k2), a in pattern:
        idx = grid.mode_index(k1, k2)
        if idx < 0:
            raise ConfigError(f"preset mode ({k1},{k2}) outside truncation {grid.n_max}")
        amps[idx] = a
    return FourierField(grid, amps)


def _unit(u: FourierField) -> FourierField:
    n = u.norm()
    if n == 0.0:
        raise ConfigError("cannot normalize the zero field")
    return (1.0 / n) * u


def preset_field(grid: SpectralGrid, name: str, norm: float, n0: int = 2) -> FourierField:
    """Build a named preset field scaled to the requested norm."""
    if name == "zero" or norm == 0.0:
        return zero_field(grid)
    if name == "gentle":
        return norm * _unit(_pattern_field(grid, _GENTLE_PATTERN))
    if name == "low":
        return norm * _unit(_pattern_field(grid, _LOW_PATTERN))
    if name == "high":
        base = _HIGH_PATTERN
        if min(k1 * k1 + k2 * k2 for (k1, k2), _ in base) <= n0 * n0:
            raise ConfigError(f"'high' preset modes are not above the forcing radius {n0}")
        return norm * _unit(_pattern_field(grid, base))
    if name == "mixed":
        low = _unit(_pattern_field(grid, _LOW_PATTERN))
        high = _unit(_pattern_field(grid, _HIGH_PATTERN))
        return norm * _unit(np.sqrt(0.7) * low + np.sqrt(0.3) * high)
    raise ConfigError(f"unknown field preset '{name}'")


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class GridConfig:
    n: int = 8

    @staticmethod
    def from_dict(d: dict) -> "GridConfig":
        _check_keys(d, {"n"}, "grid")
        return GridConfig(n=int(d.get("n", 8)))


@dataclass(frozen=True)
class PhysicsConfig:
    nu: float = 1.6
    n0: int = 2

    @staticmethod
    def from_dict(d: dict) -> "PhysicsConfig":
        _check_keys(d, {"nu", "n0"}, "physics")
        return PhysicsConfig(nu=float(d.get("nu", 1.6)), n0=int(d.get("n0", 2)))


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "uniform"
    amplitude: float = 0.2
    values: tuple = ()   # per-mode rows (k1, k2, q) for kind="per_mode"

    @staticmethod
    def from_dict(d: dict) -> "NoiseConfig":
        _check_keys(d, {"kind", "amplitude", "values"}, "noise")
        kind = d.get("kind", "uniform")
        if kind not in ("uniform", "per_mode"):
            raise ConfigError(f"unknown noise kind '{kind}'")
        values = tuple(tuple(v) for v in d.get("values", ()))
        return NoiseConfig(kind=kind, amplitude=float(d.get("amplitude", 0.2)), values=values)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_final: float = 1.0

    @staticmethod
    def from_dict(d: dict) -> "IntegratorConfig":
        _check_keys(d, {"dt", "t_final"}, "integrator")
        return IntegratorConfig(dt=float(d.get("dt", 1e-3)), t_final=float(d.get("t_final", 1.0)))


@dataclass(frozen=True)
class FieldSpec:
    preset: str = "gentle"
    norm: float = 0.3
    file: str = ""

    @staticmethod
    def from_dict(d: dict, where: str) -> "FieldSpec":
        _check_keys(d, {"preset", "norm", "file"}, where)
        return FieldSpec(preset=d.get("preset", "gentle"), norm=float(d.get("norm", 0.3)),
                         file=d.get("file", ""))

    def build(self, grid: SpectralGrid, n0: int) -> FourierField:
        if self.file:
            return field_from_csv(Path(self.file).read_text(), grid)
        return preset_field(grid, self.preset, self.norm, n0)


@dataclass(frozen=True)
class SeparationConfig:
    norm: float = 0.1
    direction: str = "mixed"

    @staticmethod
    def from_dict(d: dict) -> "SeparationConfig":
        _check_keys(d, {"norm", "direction"}, "initial.separation")
        return SeparationConfig(norm=float(d.get("norm", 0.1)), direction=d.get("direction", "mixed"))


@dataclass(frozen=True)
class InitialConfig:
    x0: FieldSpec = field(default_factory=FieldSpec)
    separation: SeparationConfig = field(default_factory=SeparationConfig)

    @staticmethod
    def from_dict(d: dict) -> "InitialConfig":
        _check_keys(d, {"x0", "separation"}, "initial")
        return InitialConfig(
            x0=FieldSpec.from_dict(d.get("x0", {}), "initial.x0"),
            separation=SeparationConfig.from_dict(d.get("separation", {})),
        )


@dataclass(frozen=True)
class TestFunctionConfig:
    kind: str = "gauss_bump"
    amplitude: float = 1.0
    scale: float = 1.0
    band: int = 2
    center: str = "origin"   # "origin" or a direction preset name

    @staticmethod
    def from_dict(d: dict) -> "TestFunctionConfig":
        _check_keys(d, {"kind", "amplitude", "scale", "band", "center"}, "test_functions[]")
        return TestFunctionConfig(
            kind=d.get("kind", "gauss_bump"),
            amplitude=float(d.get("amplitude", 1.0)),
            scale=float(d.get("scale", 1.0)),
            band=int(d.get("band", 2)),
            center=d.get("center", "origin"),
        )


_DEFAULT_TEST_FUNCTIONS = (
    TestFunctionConfig(kind="gauss_bump", amplitude=1.0, scale=1.0, band=2, center="origin"),
    TestFunctionConfig(kind="coordinate_sigmoid", amplitude=1.0, scale=1.0, band=2, center="low"),
)


@dataclass(frozen=True)
class EstimatorConfig:
    n_paths: int = 10_000
    seed: int = 20240908
    n_triples: int = 10_000
    t_grid: tuple = (1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0)
    p_list: tuple = (1, 2)
    gamma_list: tuple = (0.05, 0.1, 0.2)
    asf_times: tuple = (0.5, 1.0, 2.0, 4.0)
    mlh_times: tuple = (1.0, 2.0, 4.0)
    mlh_separations: tuple = (0.01, 0.1, 0.5)
    probe_eps: tuple = (0.05, 0.1, 0.2)
    dictionary_size: int = 32
    test_functions: tuple = _DEFAULT_TEST_FUNCTIONS

    @staticmethod
    def from_dict(d: dict) -> "EstimatorConfig":
        _check_keys(d, {
            "n_paths", "seed", "n_triples", "t_grid", "p_list", "gamma_list",
            "asf_times", "mlh_times", "mlh_separations", "probe_eps",
            "dictionary_size", "test_functions",
        }, "estimators")
        tfs = d.get("test_functions")
        if tfs is None:
            parsed_tfs = _DEFAULT_TEST_FUNCTIONS
        else:
            parsed_tfs = tuple(TestFunctionConfig.from_dict(tf) for tf in tfs)
        base = EstimatorConfig()
        return EstimatorConfig(
            n_paths=int(d.get("n_paths", base.n_paths)),
            seed=int(d.get("seed", base.seed)),
            n_triples=int(d.get("n_triples", base.n_triples)),
            t_grid=tuple(float(t) for t in d.get("t_grid", base.t_grid)),
            p_list=tuple(int(p) for p in d.get("p_list", base.p_list)),
            gamma_list=tuple(float(g) for g in d.get("gamma_list", base.gamma_list)),
            asf_times=tuple(float(t) for t in d.get("asf_times", base.asf_times)),
            mlh_times=tuple(float(t) for t in d.get("mlh_times", base.mlh_times)),
            mlh_separations=tuple(float(s) for s in d.get("mlh_separations", base.mlh_separations)),
            probe_eps=tuple(float(e) for e in d.get("probe_eps", base.probe_eps)),
            dictionary_size=int(d.get("dictionary_size", base.dictionary_size)),
            test_functions=parsed_tfs,
        )


@dataclass(frozen=True)
class FlagsConfig:
    nonlinear: bool = True
    nu_in_control: bool = True
    corrupt_projection: bool = False
    constant_shrink: float = 1.0

    @staticmethod
    def from_dict(d: dict) -> "FlagsConfig":
        _check_keys(d, {"nonlinear", "nu_in_control", "corrupt_projection", "constant_shrink"},
                    "flags")
        return FlagsConfig(
            nonlinear=bool(d.get("nonlinear", True)),
            nu_in_control=bool(d.get("nu_in_control", True)),
            corrupt_projection=bool(d.get("corrupt_projection", False)),
            constant_shrink=float(d.get("constant_shrink", 1.0)),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    estimators: EstimatorConfig = field(default_factory=EstimatorConfig)
    flags: FlagsConfig = field(default_factory=FlagsConfig)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        _check_keys(d, {"grid", "physics", "noise", "integrator", "initial",
                        "estimators", "flags"}, "config root")
        return ExperimentConfig(
            grid=GridConfig.from_dict(d.get("grid", {})),
            physics=PhysicsConfig.from_dict(d.get("physics", {})),
            noise=NoiseConfig.from_dict(d.get("noise", {})),
            integrator=IntegratorConfig.from_dict(d.get("integrator", {})),
            initial=InitialConfig.from_dict(d.get("initial", {})),
            estimators=EstimatorConfig.from_dict(d.get("estimators", {})),
            flags=FlagsConfig.from_dict(d.get("flags", {})),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        return ExperimentConfig.from_dict(raw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def load(path) -> "ExperimentConfig":
        return ExperimentConfig.from_json(Path(path).read_text())

    # -- materialized objects ------------------------------------------------

    def make_grid(self) -> SpectralGrid:
        return make_grid(self.grid.n)

    def make_params(self) -> PhysicsParams:
        return PhysicsParams(nu=self.physics.nu, n_forced=self.physics.n0)

    def make_noise(self):
        from .dynamics import NoiseOperator, uniform_noise

        grid = self.make_grid()
        if self.noise.kind == "uniform":
            return uniform_noise(grid, self.physics.n0, self.noise.amplitude)
        nf = grid.band_size(self.physics.n0)
        q = np.zeros(nf)
        for k1, k2, qv in self.noise.values:
            idx = grid.mode_index(int(k1), int(k2))
            if idx < 0 or idx >= nf:
                raise ConfigError(f"per-mode noise entry ({k1},{k2}) outside the forced band")
            q[idx] = float(qv)
        if np.any(q <= 0):
            raise ConfigError("per-mode noise must cover every mode of the forced band")
        return NoiseOperator(grid, self.physics.n0, q)

    def make_x0(self) -> FourierField:
        return self.initial.x0.build(self.make_grid(), self.physics.n0)

    def separation_field(self, norm: float | None = None) -> FourierField:
        n = self.initial.separation.norm if norm is None else norm
        return preset_field(self.make_grid(), self.initial.separation.direction, n,
                            self.physics.n0)

    def make_y0(self, separation_norm: float | None = None) -> FourierField:
        return self.make_x0() + self.separation_field(separation_norm)

    def make_test_functions(self):
        from .estimators import TestFunction

        grid = self.make_grid()
        out = []
        for i, tf in enumerate(self.test_function_configs()):
            if tf.center == "origin":
                center = zero_field(grid)
            else:
                center = preset_field(grid, tf.center, 1.0, self.physics.n0)
            out.append(TestFunction(kind=tf.kind, center=center, scale=tf.scale,
                                    amplitude=tf.amplitude, band=tf.band,
                                    label=f"f{i}_{tf.kind}"))
        return out

    def test_function_configs(self):
        return list(self.estimators.test_functions)

    def make_settings(self, n_paths: int | None = None, dt: float | None = None):
        from .estimators import SimSettings

        return SimSettings(
            dt=self.integrator.dt if dt is None else dt,
            n_paths=self.estimators.n_paths if n_paths is None else n_paths,
            seed=self.estimators.seed,
            nonlinear=self.flags.nonlinear,
            nu_in_control=self.flags.nu_in_control,
        )


DEFAULT_CONFIG = ExperimentConfig()
