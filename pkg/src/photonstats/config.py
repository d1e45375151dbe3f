"""Run configuration: YAML presets under ``config/`` plus environment settings."""
from dataclasses import dataclass, field, fields, is_dataclass
import os
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple, Union, get_type_hints

from dotenv import load_dotenv
import yaml

from photonstats.correlate import CorrelationConfig, PulsedConfig
from photonstats.errors import ConfigError, PhysicsDomainError
from photonstats.physics import EmitterPhysics, ExcitationModel
from photonstats.simulate import DetectorModel, EmitterModel
from photonstats.trace import WindowPolicy

load_dotenv()

CONFIG_DIR = Path(os.getenv("PHOTONSTATS_CONFIG_DIR", Path(__file__).resolve().parents[2] / "config"))
PRESETS = ("dr1", "dr2", "poisson")


@dataclass(frozen=True)
class EmitterSection:
    """Rates (ns^-1), lifetimes (ns) or published yields; exactly one style per file."""

    gamma_r: Optional[float] = None
    gamma_a_minus: Optional[float] = None
    gamma_a_plus: Optional[float] = None
    tau_x: Optional[float] = None
    tau_a_minus: Optional[float] = None
    tau_a_plus: Optional[float] = None
    q_trion: Optional[float] = None
    q_biexciton: Optional[float] = None
    gamma_a_charged_extra: float = 0.0
    dwell_bright_ms: float = 10.0
    dwell_grey_ms: float = 1.0
    max_excitons: int = 2
    # coherent reference source instead of an emitter (counts/s over both channels)
    poisson_rate: Optional[float] = None

    def physics(self) -> EmitterPhysics:
        try:
            if self.gamma_r is not None:
                base = EmitterPhysics(self.gamma_r, self.gamma_a_minus or 0.0, self.gamma_a_plus or 0.0)
            elif self.tau_x is None:
                raise ConfigError("emitter", "needs gamma_r or tau_x")
            elif self.q_trion is not None or self.q_biexciton is not None:
                if self.q_trion is None or self.q_biexciton is None:
                    raise ConfigError("emitter.q_biexciton", "q_trion and q_biexciton go together")
                base = EmitterPhysics.from_yields(self.tau_x, self.q_trion, self.q_biexciton)
            else:
                base = EmitterPhysics.from_lifetimes(
                    self.tau_x,
                    self.tau_a_minus if self.tau_a_minus is not None else float("inf"),
                    self.tau_a_plus if self.tau_a_plus is not None else float("inf"),
                )
            return EmitterPhysics(base.gamma_r, base.gamma_a_minus, base.gamma_a_plus, self.gamma_a_charged_extra)
        except PhysicsDomainError as e:
            raise ConfigError("emitter", str(e)) from e


@dataclass(frozen=True)
class ExcitationSection:
    mean_excitations: float = 0.4
    rep_period_ps: int = 400_000


@dataclass(frozen=True)
class DetectorSection:
    efficiency: float = 0.104
    split_ratio: float = 0.5
    dark_rate: float = 100.0
    dead_time_ps: int = 22_000
    jitter_sigma_ps: float = 150.0


@dataclass(frozen=True)
class AcquisitionSection:
    duration_s: float = 15.0
    seed: int = 0


@dataclass(frozen=True)
class WindowsSection:
    posterior: float = 0.99
    grey_max_per_ms: Optional[float] = None
    bright_min_per_ms: Optional[float] = None


@dataclass(frozen=True)
class CorrelatorSection:
    start_ps: int = 100_000
    stop_ps: int = 100_000_000_000
    bins_per_decade: int = 16
    align_to_pulses: bool = True


@dataclass(frozen=True)
class PulsedSection:
    periods: int = 8
    resolution_ps: int = 1000
    # lag window of the log g2 whose mean sets the ACF side-peak level
    plateau_ps: Tuple[int, int] = (4_000_000, 40_000_000)


@dataclass(frozen=True)
class LifetimeSection:
    bin_width_ns: float = 1.0
    bright_window_ns: Optional[Tuple[float, float]] = None
    grey_window_ns: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class AnalysisSection:
    bin_width_us: float = 250.0
    windows: WindowsSection = field(default_factory=WindowsSection)
    correlator: CorrelatorSection = field(default_factory=CorrelatorSection)
    pulsed: PulsedSection = field(default_factory=PulsedSection)
    lifetime: LifetimeSection = field(default_factory=LifetimeSection)
    # substream g2 plateaus checked over this lag range
    flatness_ps: Tuple[int, int] = (1_000_000, 10_000_000_000)
    q_x_assumed: float = 1.0
    quote_trion_percent: bool = True
    q_trion_quoted: Optional[float] = None
    review_windows: bool = False
    notes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    name: str = "custom"
    emitter: EmitterSection = field(default_factory=EmitterSection)
    excitation: ExcitationSection = field(default_factory=ExcitationSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    acquisition: AcquisitionSection = field(default_factory=AcquisitionSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    def __post_init__(self):
        checks = [
            ("acquisition.duration_s", self.acquisition.duration_s > 0, "must be > 0"),
            ("excitation.rep_period_ps", self.excitation.rep_period_ps > 0, "must be > 0"),
            ("excitation.mean_excitations", self.excitation.mean_excitations > 0, "must be > 0"),
            ("detector.efficiency", 0.0 <= self.detector.efficiency <= 1.0, "must be in [0, 1]"),
            ("detector.split_ratio", 0.0 < self.detector.split_ratio < 1.0, "must be in (0, 1)"),
            ("detector.dead_time_ps", self.detector.dead_time_ps >= 0, "must be >= 0"),
            ("detector.dark_rate", self.detector.dark_rate >= 0, "must be >= 0"),
            ("emitter.dwell_bright_ms", self.emitter.dwell_bright_ms > 0, "must be > 0"),
            ("emitter.dwell_grey_ms", self.emitter.dwell_grey_ms > 0, "must be > 0"),
            ("emitter.max_excitons", self.emitter.max_excitons >= 2, "must be >= 2"),
            ("analysis.bin_width_us", self.analysis.bin_width_us > 0, "must be > 0"),
            ("analysis.windows.posterior", 0.5 < self.analysis.windows.posterior < 1.0, "must be in (0.5, 1)"),
            ("analysis.pulsed.periods", self.analysis.pulsed.periods >= 1, "must be >= 1"),
            ("analysis.q_x_assumed", 0.0 < self.analysis.q_x_assumed <= 1.0, "must be in (0, 1]"),
        ]
        for key, ok, message in checks:
            if not ok:
                raise ConfigError(key, message)

    @property
    def is_reference(self) -> bool:
        return self.emitter.poisson_rate is not None

    def emitter_model(self) -> EmitterModel:
        e = self.emitter
        return EmitterModel(
            physics=e.physics(),
            excitation=ExcitationModel(self.excitation.mean_excitations),
            rep_period_ps=self.excitation.rep_period_ps,
            dwell_bright_ms=e.dwell_bright_ms,
            dwell_grey_ms=e.dwell_grey_ms,
            max_excitons=e.max_excitons,
        )

    def detector_model(self) -> DetectorModel:
        d = self.detector
        return DetectorModel(d.efficiency, d.split_ratio, d.dark_rate, d.dead_time_ps, d.jitter_sigma_ps)

    def window_policy(self) -> WindowPolicy:
        w = self.analysis.windows
        return WindowPolicy(w.posterior, w.grey_max_per_ms, w.bright_min_per_ms)

    def correlation_config(self, threads: int = 1) -> CorrelationConfig:
        c = self.analysis.correlator
        align = self.excitation.rep_period_ps if c.align_to_pulses else 0
        return CorrelationConfig(c.start_ps, c.stop_ps, c.bins_per_decade, threads, align)

    def pulsed_config(self, threads: int = 1) -> PulsedConfig:
        p = self.analysis.pulsed
        return PulsedConfig(p.periods, p.resolution_ps, threads)


def _coerce(value: Any, hint: Any, key: str) -> Any:
    origin = getattr(hint, "__origin__", None)
    if origin is Union:
        if value is None:
            return None
        hint = next(a for a in hint.__args__ if a is not type(None))
        origin = getattr(hint, "__origin__", None)
    if is_dataclass(hint):
        return _build(hint, value, key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list, got {value!r}")
        item = hint.__args__[0]
        return tuple(_coerce(v, item, key) for v in value)
    try:
        if hint is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if hint is int and (isinstance(value, bool) or isinstance(value, float) and not value.is_integer()):
            raise ValueError
        if hint in (int, float, str):
            return hint(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {hint.__name__}, got {value!r}")
    return value


def _build(cls, data: Any, prefix: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(prefix or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}" if prefix else str(key), "unknown key")
    kwargs = {key: _coerce(value, hints[key], f"{prefix}.{key}" if prefix else key)
              for key, value in data.items()}
    return cls(**kwargs)


def config_from_dict(data: Mapping[str, Any], name: str = "custom") -> RunConfig:
    data = dict(data or {})
    data.setdefault("name", name)
    return _build(RunConfig, data)


def resolve_config_path(path_or_preset: Union[str, os.PathLike]) -> Path:
    text = str(path_or_preset)
    if text in PRESETS or (os.sep not in text and not text.endswith((".yml", ".yaml"))):
        return CONFIG_DIR / f"{text}.yml"
    return Path(text)


def load_config(path_or_preset: Union[str, os.PathLike]) -> RunConfig:
    """Load a preset name (``dr1``) or a YAML file path."""
    path = resolve_config_path(path_or_preset)
    if not path.is_file():
        raise ConfigError(str(path_or_preset), f"no configuration file at {path}")
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(str(path), f"invalid YAML: {e}") from e
    return config_from_dict(data or {}, name=path.stem)


def config_to_dict(config: RunConfig) -> dict:
    def plain(obj):
        if is_dataclass(obj):
            return {f.name: plain(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, tuple):
            return [plain(v) for v in obj]
        return obj

    return plain(config)


@dataclass(frozen=True)
class Environment:
    threads: int = 1
    temporal_address: str = "localhost:7233"
    task_queue: str = "photon-analysis-task-queue"
    tags_dir: str = "data/tags"
    results_dir: str = "data/results"


def environment() -> Environment:
    try:
        threads = max(1, int(os.getenv("PHOTONSTATS_THREADS", "1")))
    except ValueError:
        raise ConfigError("PHOTONSTATS_THREADS", f"expected an integer, got {os.getenv('PHOTONSTATS_THREADS')!r}")
    return Environment(
        threads=threads,
        temporal_address=os.getenv("TEMPORAL_ADDRESS", "localhost:7233"),
        task_queue=os.getenv("PHOTONSTATS_TASK_QUEUE", "photon-analysis-task-queue"),
        tags_dir=os.getenv("PHOTONSTATS_TAGS_DIR", "data/tags"),
        results_dir=os.getenv("PHOTONSTATS_RESULTS_DIR", "data/results"),
    )
