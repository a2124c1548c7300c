"""Project configuration: scenario defaults, TOML-style load and dump.

A project file is flat TOML-style text with dotted sections.  The parser
handles the subset the dumper emits: ``[section]`` and ``[section.sub]``
headers, ``key = value`` lines with quoted strings, booleans, integers,
floats (including ``inf``), and ``#`` comments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError, InvalidInputError
from .notch import NotchParams
from .pitune import MarginSpec, PiGains
from .plant import DEFAULT_SAMPLE_PERIOD, ExcitationSpec, TwoMassParams

__all__ = [
    "DriveConfig",
    "WelchConfig",
    "NotchDesignConfig",
    "CompareConfig",
    "BaselineConfig",
    "ProjectConfig",
    "default_config",
    "load_config",
    "dump_config",
]

SCHEMA_VERSION = 1

# Synthetic benchmark mechanism.  The motor inertia is a typical small-servo
# rotor; the load inertia is solved from the resonance relation
# w_res^2 = k (Jm + Jl)/(Jm Jl) so that the stiff coupling (k = 5118)
# resonates at 750 Hz, which puts the compliant coupling (k = 1828) at
# 448 Hz with the same inertia pair.
MOTOR_INERTIA = 2.9e-4
LOAD_INERTIA = 1.122779e-3

_SCENARIOS = {
    "rigid": dict(stiffness=5118.0, coupling_damping=0.117,
                  amplitude_margin_db=5.4),
    "flexible": dict(stiffness=1828.0, coupling_damping=0.049,
                     amplitude_margin_db=10.0),
}


@dataclass(frozen=True)
class DriveConfig:
    """Drive-side loop properties: actuation latency and torque ceiling."""

    actuation_delay_samples: int = 2
    torque_limit: float = 10.0

    def __post_init__(self):
        if self.actuation_delay_samples < 0:
            raise InvalidInputError("actuation_delay_samples must be non-negative")
        if self.torque_limit <= 0.0:
            raise InvalidInputError("torque_limit must be strictly positive")


@dataclass(frozen=True)
class WelchConfig:
    segment_length: int = 2048
    overlap_fraction: float = 0.5
    coherence_threshold: float = 0.95

    def __post_init__(self):
        if self.segment_length < 8:
            raise InvalidInputError("segment_length must be at least 8")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise InvalidInputError("overlap_fraction must lie in [0, 1)")
        if not 0.0 <= self.coherence_threshold <= 1.0:
            raise InvalidInputError("coherence_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class NotchDesignConfig:
    bandwidth_factor: float = 1.0
    depth_mode: str = "finite_half_gap"

    def __post_init__(self):
        if not 1.0 <= self.bandwidth_factor <= 2.0:
            raise InvalidInputError("bandwidth_factor must lie in [1, 2]")
        if self.depth_mode not in ("finite_half_gap", "infinite"):
            raise InvalidInputError(f"unknown depth_mode {self.depth_mode!r}")


@dataclass(frozen=True)
class CompareConfig:
    step_reference: float = 100.0
    step_duration: float = 0.25

    def __post_init__(self):
        if self.step_reference <= 0.0:
            raise InvalidInputError("step_reference must be strictly positive")
        if self.step_duration <= 0.0:
            raise InvalidInputError("step_duration must be strictly positive")


@dataclass(frozen=True)
class BaselineConfig:
    """One benchmark controller: explicit gains or a relay-tuned entry."""

    method: str = "gains"           # "gains" or "relay"
    kp: float | None = None
    ti: float | None = None
    notch: NotchParams | None = None
    relay_amplitude: float = 1.0
    relay_hysteresis: float = 0.5

    def __post_init__(self):
        if self.method not in ("gains", "relay"):
            raise InvalidInputError(f"unknown baseline method {self.method!r}")
        if self.method == "gains" and (self.kp is None or self.ti is None):
            raise InvalidInputError("baseline with method='gains' needs kp and ti")

    def gains(self) -> PiGains:
        return PiGains(kp=self.kp, ti=self.ti)


@dataclass(frozen=True)
class ProjectConfig:
    """Everything one reproducible pipeline run needs."""

    scenario: str
    sample_period: float
    output_dir: str
    plant: TwoMassParams
    drive: DriveConfig
    excitation: ExcitationSpec
    welch: WelchConfig
    notch: NotchDesignConfig
    margins: MarginSpec
    baselines: dict
    compare: CompareConfig

    def __post_init__(self):
        if self.sample_period <= 0.0:
            raise InvalidInputError("sample_period must be strictly positive")
        names = list(self.baselines)
        if len(set(names)) != len(names):
            raise InvalidInputError("baseline names must be unique")


def default_config(scenario: str = "rigid", output_dir: str | None = None) -> ProjectConfig:
    """Built-in benchmark configuration for one coupling scenario."""
    if scenario not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; pick one of {sorted(_SCENARIOS)}")
    sc = _SCENARIOS[scenario]
    plant = TwoMassParams(
        motor_inertia=MOTOR_INERTIA,
        load_inertia=LOAD_INERTIA,
        stiffness=sc["stiffness"],
        coupling_damping=sc["coupling_damping"],
        motor_viscous_friction=1e-3,
        load_viscous_friction=1e-3,
        torque_lag_time_constant=0.0,
    )
    if scenario == "rigid":
        baselines = {
            "antiresonance": BaselineConfig(
                kp=0.369, ti=4.69e-3,
                notch=NotchParams(750.0, 750.0, 20.0)),
            "relay_feedback": BaselineConfig(kp=0.494, ti=1.02e-3),
            "autotune": BaselineConfig(
                kp=1.05, ti=8.39e-3,
                notch=NotchParams(753.0, 761.0, math.inf)),
        }
    else:
        baselines = {
            "antiresonance": BaselineConfig(
                kp=0.236, ti=7.79e-3,
                notch=NotchParams(450.0, 900.0, 23.5)),
            "relay_feedback": BaselineConfig(kp=0.235, ti=1.345e-3),
            # autotune settings carried over from the stiff-coupling run;
            # this is the controller that destabilizes the compliant rig
            "autotune": BaselineConfig(
                kp=1.05, ti=8.39e-3,
                notch=NotchParams(753.0, 761.0, math.inf)),
        }
    return ProjectConfig(
        scenario=scenario,
        sample_period=DEFAULT_SAMPLE_PERIOD,
        output_dir=output_dir or f"out_{scenario}",
        plant=plant,
        drive=DriveConfig(),
        excitation=ExcitationSpec(kind="white_noise", amplitude=1.0,
                                  duration=8.0, seed=20260810),
        welch=WelchConfig(),
        notch=NotchDesignConfig(),
        margins=MarginSpec(
            desired_amplitude_margin_db=sc["amplitude_margin_db"],
            desired_phase_margin_deg=65.0,
        ),
        baselines=baselines,
        compare=CompareConfig(),
    )


# ---------------------------------------------------------------------------
# TOML-style serialization


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise ConfigError(f"cannot serialize value {v!r}")


def _parse_value(text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if text == "true":
        return True
    if text == "false":
        return False
    if text in ("inf", "+inf"):
        return math.inf
    if text == "-inf":
        return -math.inf
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {text!r}") from exc


def _parse_toml(text: str) -> dict:
    root: dict = {}
    table = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            table = root
            for part in line[1:-1].strip().split("."):
                if not part:
                    raise ConfigError(f"line {lineno}: empty section name in {line!r}")
                table = table.setdefault(part, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        # strip trailing comments outside quoted strings
        if "#" in value and '"' not in value:
            value = value.split("#", 1)[0]
        table[key.strip()] = _parse_value(value)
    return root


def dump_config(cfg: ProjectConfig, path) -> None:
    """Write the configuration as a flat TOML-style file."""
    p, d, e, w, n, m, c = (cfg.plant, cfg.drive, cfg.excitation, cfg.welch,
                           cfg.notch, cfg.margins, cfg.compare)
    lines = [
        "# servoshape project configuration",
        f"schema_version = {SCHEMA_VERSION}",
        f"scenario = {_format_value(cfg.scenario)}",
        f"output_dir = {_format_value(cfg.output_dir)}",
        f"sample_period = {_format_value(cfg.sample_period)}",
        "",
        "[plant]",
        f"motor_inertia = {_format_value(p.motor_inertia)}",
        "# solved from the resonance relation so both couplings land on the",
        "# benchmark resonance frequencies with one inertia pair",
        f"load_inertia = {_format_value(p.load_inertia)}",
        f"stiffness = {_format_value(p.stiffness)}",
        f"coupling_damping = {_format_value(p.coupling_damping)}",
        f"motor_viscous_friction = {_format_value(p.motor_viscous_friction)}",
        f"load_viscous_friction = {_format_value(p.load_viscous_friction)}",
        f"torque_lag_time_constant = {_format_value(p.torque_lag_time_constant)}",
        "",
        "[drive]",
        f"actuation_delay_samples = {_format_value(d.actuation_delay_samples)}",
        f"torque_limit = {_format_value(d.torque_limit)}",
        "",
        "[excitation]",
        f"kind = {_format_value(e.kind)}",
        f"amplitude = {_format_value(e.amplitude)}",
        f"duration = {_format_value(e.duration)}",
        f"seed = {_format_value(e.seed)}",
        f"relay_hysteresis = {_format_value(e.relay_hysteresis)}",
        "",
        "[welch]",
        f"segment_length = {_format_value(w.segment_length)}",
        f"overlap_fraction = {_format_value(w.overlap_fraction)}",
        f"coherence_threshold = {_format_value(w.coherence_threshold)}",
        "",
        "[notch]",
        f"bandwidth_factor = {_format_value(n.bandwidth_factor)}",
        f"depth_mode = {_format_value(n.depth_mode)}",
        "",
        "[margins]",
        f"desired_amplitude_margin_db = {_format_value(m.desired_amplitude_margin_db)}",
    ]
    if m.desired_phase_margin_deg is not None:
        lines.append(f"desired_phase_margin_deg = {_format_value(m.desired_phase_margin_deg)}")
    if m.damping_ratio is not None:
        lines.append(f"damping_ratio = {_format_value(m.damping_ratio)}")
    lines += [
        f"phase_offset_deg = {_format_value(m.phase_offset_deg)}",
        f"max_iterations = {_format_value(m.max_iterations)}",
        "",
        "[compare]",
        f"step_reference = {_format_value(c.step_reference)}",
        f"step_duration = {_format_value(c.step_duration)}",
    ]
    for name, base in cfg.baselines.items():
        lines += ["", f"[baselines.{name}]", f"method = {_format_value(base.method)}"]
        if base.method == "gains":
            lines += [f"kp = {_format_value(base.kp)}", f"ti = {_format_value(base.ti)}"]
        else:
            lines += [
                f"relay_amplitude = {_format_value(base.relay_amplitude)}",
                f"relay_hysteresis = {_format_value(base.relay_hysteresis)}",
            ]
        if base.notch is not None:
            lines += [
                f"notch_center = {_format_value(base.notch.center_frequency)}",
                f"notch_bandwidth = {_format_value(base.notch.bandwidth)}",
                f"notch_depth_db = {_format_value(base.notch.depth_db)}",
            ]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _take(table: dict, key: str, default=None, required: bool = False):
    if key in table:
        return table[key]
    if required:
        raise ConfigError(f"missing required key {key!r}")
    return default


def load_config(path) -> ProjectConfig:
    """Read a project file written by :func:`dump_config` (or hand-edited)."""
    try:
        with open(path) as fh:
            doc = _parse_toml(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        version = _take(doc, "schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        pt = doc.get("plant", {})
        plant = TwoMassParams(
            motor_inertia=_take(pt, "motor_inertia", required=True),
            load_inertia=_take(pt, "load_inertia", required=True),
            stiffness=_take(pt, "stiffness", required=True),
            coupling_damping=_take(pt, "coupling_damping", 0.0),
            motor_viscous_friction=_take(pt, "motor_viscous_friction", 0.0),
            load_viscous_friction=_take(pt, "load_viscous_friction", 0.0),
            torque_lag_time_constant=_take(pt, "torque_lag_time_constant", 0.0),
        )
        dr = doc.get("drive", {})
        drive = DriveConfig(
            actuation_delay_samples=_take(dr, "actuation_delay_samples", 2),
            torque_limit=_take(dr, "torque_limit", 10.0),
        )
        ex = doc.get("excitation", {})
        excitation = ExcitationSpec(
            kind=_take(ex, "kind", "white_noise"),
            amplitude=_take(ex, "amplitude", 1.0),
            duration=_take(ex, "duration", 8.0),
            seed=_take(ex, "seed", 0),
            relay_hysteresis=_take(ex, "relay_hysteresis", 0.0),
        )
        we = doc.get("welch", {})
        welch = WelchConfig(
            segment_length=_take(we, "segment_length", 2048),
            overlap_fraction=_take(we, "overlap_fraction", 0.5),
            coherence_threshold=_take(we, "coherence_threshold", 0.95),
        )
        no = doc.get("notch", {})
        notch = NotchDesignConfig(
            bandwidth_factor=_take(no, "bandwidth_factor", 1.0),
            depth_mode=_take(no, "depth_mode", "finite_half_gap"),
        )
        ma = doc.get("margins", {})
        margins = MarginSpec(
            desired_amplitude_margin_db=_take(ma, "desired_amplitude_margin_db", required=True),
            desired_phase_margin_deg=_take(ma, "desired_phase_margin_deg"),
            damping_ratio=_take(ma, "damping_ratio"),
            phase_offset_deg=_take(ma, "phase_offset_deg", 0.0),
            max_iterations=_take(ma, "max_iterations", 5),
        )
        baselines = {}
        for name, tbl in doc.get("baselines", {}).items():
            if not isinstance(tbl, dict):
                raise ConfigError(f"baseline {name!r} is not a section")
            nparams = None
            if "notch_center" in tbl:
                nparams = NotchParams(
                    center_frequency=_take(tbl, "notch_center", required=True),
                    bandwidth=_take(tbl, "notch_bandwidth", required=True),
                    depth_db=_take(tbl, "notch_depth_db", required=True),
                )
            baselines[name] = BaselineConfig(
                method=_take(tbl, "method", "gains"),
                kp=_take(tbl, "kp"),
                ti=_take(tbl, "ti"),
                notch=nparams,
                relay_amplitude=_take(tbl, "relay_amplitude", 1.0),
                relay_hysteresis=_take(tbl, "relay_hysteresis", 0.5),
            )
        co = doc.get("compare", {})
        compare = CompareConfig(
            step_reference=_take(co, "step_reference", 100.0),
            step_duration=_take(co, "step_duration", 0.25),
        )
        return ProjectConfig(
            scenario=_take(doc, "scenario", "custom"),
            sample_period=_take(doc, "sample_period", DEFAULT_SAMPLE_PERIOD),
            output_dir=_take(doc, "output_dir", "out"),
            plant=plant,
            drive=drive,
            excitation=excitation,
            welch=welch,
            notch=notch,
            margins=margins,
            baselines=baselines,
            compare=compare,
        )
    except InvalidInputError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
