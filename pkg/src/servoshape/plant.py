"""Two-mass servo mechanism model and discrete-time simulation engine.

The mechanism is a rotatory two-mass spring-damper: a motor inertia driving a
load inertia through a torsional coupling with finite stiffness and damping,
plus linear viscous friction on both shafts.  Torque commands pass through an
optional first-order lag (current-loop approximation) and a configurable
whole-sample actuation latency, and are applied with a zero-order hold at the
drive sample rate.  Integration uses the exact one-step map of the classic
fixed-step fourth-order Runge-Kutta scheme, which for this linear model is a
constant matrix recurrence; runs are therefore bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DivergenceError, FrequencyRangeError, InvalidInputError
from .sysid import FrequencyResponse

__all__ = [
    "TwoMassParams",
    "ExcitationSpec",
    "SimTrace",
    "analytic_frf",
    "sampled_frf",
    "simulate",
    "simulate_closed_loop",
]

#: Default drive sample period (8 kHz servo cycle).
DEFAULT_SAMPLE_PERIOD = 1.25e-4

#: State magnitude beyond which a simulation is declared divergent.
_DIVERGENCE_LIMIT = 1e12

#: Anti-alias guard: the sample period must be at least this many times
#: shorter than the resonance period.
_ALIAS_GUARD = 10.0


@dataclass(frozen=True)
class TwoMassParams:
    """Physical parameters of the two-mass spring-damper mechanism.

    Units: inertias in kg*m^2, stiffness in N*m/rad, damping and friction in
    N*m*s/rad, the torque lag time constant in seconds (0 = ideal torque).
    """

    motor_inertia: float
    load_inertia: float
    stiffness: float
    coupling_damping: float = 0.0
    motor_viscous_friction: float = 0.0
    load_viscous_friction: float = 0.0
    torque_lag_time_constant: float = 0.0

    def __post_init__(self):
        if self.motor_inertia <= 0.0 or self.load_inertia <= 0.0:
            raise InvalidInputError("inertias must be strictly positive")
        if self.stiffness <= 0.0:
            raise InvalidInputError("stiffness must be strictly positive")
        for name in ("coupling_damping", "motor_viscous_friction",
                     "load_viscous_friction", "torque_lag_time_constant"):
            if getattr(self, name) < 0.0:
                raise InvalidInputError(f"{name} must be non-negative")

    @property
    def resonance_hz(self) -> float:
        """Undamped resonance frequency of the coupled pair."""
        jm, jl, k = self.motor_inertia, self.load_inertia, self.stiffness
        return math.sqrt(k * (jm + jl) / (jm * jl)) / (2.0 * math.pi)

    @property
    def antiresonance_hz(self) -> float:
        """Undamped antiresonance (load-resonance) frequency."""
        return math.sqrt(self.stiffness / self.load_inertia) / (2.0 * math.pi)


@dataclass(frozen=True)
class ExcitationSpec:
    """Open-loop excitation description for identification experiments.

    ``kind`` is one of ``white_noise`` (zero-mean Gaussian torque),
    ``step`` (constant torque from t=0) or ``relay`` (bang-bang torque fed
    back on motor velocity around zero with ``relay_hysteresis``).
    ``amplitude`` is in N*m; for white noise it is the standard deviation.
    """

    kind: str
    amplitude: float
    duration: float
    seed: int = 0
    relay_hysteresis: float = 0.0

    def __post_init__(self):
        if self.kind not in ("white_noise", "step", "relay"):
            raise InvalidInputError(f"unknown excitation kind {self.kind!r}")
        if self.amplitude <= 0.0:
            raise InvalidInputError("amplitude must be strictly positive")
        if self.duration <= 0.0:
            raise InvalidInputError("duration must be strictly positive")
        if self.relay_hysteresis < 0.0:
            raise InvalidInputError("relay_hysteresis must be non-negative")


@dataclass
class SimTrace:
    """Synchronous record of one simulation run.

    All sequences share one length.  ``torque_command[i]`` is the command
    issued at ``t = i * sample_period`` and the velocity/twist samples are
    the states observed at that same instant (before the command can act).
    ``reference`` is the velocity reference; zero for open-loop runs.
    """

    sample_period: float
    torque_command: np.ndarray
    motor_velocity: np.ndarray
    load_velocity: np.ndarray
    twist_angle: np.ndarray
    reference: np.ndarray = None

    def __post_init__(self):
        if self.sample_period <= 0.0:
            raise InvalidInputError("sample_period must be positive")
        self.torque_command = np.asarray(self.torque_command, dtype=float)
        self.motor_velocity = np.asarray(self.motor_velocity, dtype=float)
        self.load_velocity = np.asarray(self.load_velocity, dtype=float)
        self.twist_angle = np.asarray(self.twist_angle, dtype=float)
        if self.reference is None:
            self.reference = np.zeros_like(self.torque_command)
        self.reference = np.asarray(self.reference, dtype=float)
        n = len(self.torque_command)
        for name in ("motor_velocity", "load_velocity", "twist_angle", "reference"):
            if len(getattr(self, name)) != n:
                raise InvalidInputError("all trace sequences must have equal length")

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.torque_command)) * self.sample_period

    def to_csv(self, path) -> None:
        """Write as ``t,torque,ref,w_motor,w_load,twist`` rows."""
        with open(path, "w", newline="") as fh:
            fh.write("t,torque,ref,w_motor,w_load,twist\n")
            for row in zip(self.time, self.torque_command, self.reference,
                           self.motor_velocity, self.load_velocity, self.twist_angle):
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        if data.ndim != 2 or data.shape[1] != 6:
            raise InvalidInputError(f"{path}: expected 6 columns t,torque,ref,w_motor,w_load,twist")
        t = data[:, 0]
        if len(t) < 2:
            raise InvalidInputError(f"{path}: trace needs at least two rows")
        return cls(
            sample_period=float(t[1] - t[0]),
            torque_command=data[:, 1],
            reference=data[:, 2],
            motor_velocity=data[:, 3],
            load_velocity=data[:, 4],
            twist_angle=data[:, 5],
        )


def _state_space(params: TwoMassParams):
    """Continuous state matrices; states [w_motor, w_load, twist(, torque)]."""
    jm, jl = params.motor_inertia, params.load_inertia
    k, bc = params.stiffness, params.coupling_damping
    bm, bl = params.motor_viscous_friction, params.load_viscous_friction
    a = np.array([
        [-(bm + bc) / jm, bc / jm, -k / jm],
        [bc / jl, -(bl + bc) / jl, k / jl],
        [1.0, -1.0, 0.0],
    ])
    b = np.array([[1.0 / jm], [0.0], [0.0]])
    tau = params.torque_lag_time_constant
    if tau > 0.0:
        a = np.block([[a, b], [np.zeros((1, 3)), np.array([[-1.0 / tau]])]])
        b = np.array([[0.0], [0.0], [0.0], [1.0 / tau]])
    return a, b


def _check_sample_period(params: TwoMassParams, sample_period: float) -> None:
    if sample_period <= 0.0:
        raise InvalidInputError("sample_period must be positive")
    limit = 1.0 / (_ALIAS_GUARD * params.resonance_hz)
    if sample_period > limit:
        raise InvalidInputError(
            f"sample_period {sample_period:.3g} s violates the anti-alias guard: "
            f"must be <= {limit:.3g} s (1/{_ALIAS_GUARD:g} of the resonance period)"
        )
    tau = params.torque_lag_time_constant
    if 0.0 < tau < sample_period / 2.5:
        raise InvalidInputError(
            "torque_lag_time_constant is too short to integrate stably at this "
            f"sample period; need tau >= {sample_period / 2.5:.3g} s or tau = 0"
        )


def _rk4_step_map(params: TwoMassParams, h: float):
    """Exact one-step matrices of the fixed-step RK4 scheme with held input."""
    a, b = _state_space(params)
    ah = a * h
    n = a.shape[0]
    eye = np.eye(n)
    p1 = ah
    p2 = p1 @ ah
    p3 = p2 @ ah
    p4 = p3 @ ah
    m = eye + p1 + p2 / 2.0 + p3 / 6.0 + p4 / 24.0
    g = h * (eye + p1 / 2.0 + p2 / 6.0 + p3 / 24.0) @ b
    return m, g[:, 0]


def _make_stepper(m: np.ndarray, g: np.ndarray):
    """Scalar-unrolled state update ``x <- M x + g u`` (3 or 4 states)."""
    if m.shape[0] == 3:
        (m00, m01, m02), (m10, m11, m12), (m20, m21, m22) = m.tolist()
        g0, g1, g2 = g.tolist()

        def step(x0, x1, x2, x3, u):
            return (m00 * x0 + m01 * x1 + m02 * x2 + g0 * u,
                    m10 * x0 + m11 * x1 + m12 * x2 + g1 * u,
                    m20 * x0 + m21 * x1 + m22 * x2 + g2 * u,
                    0.0)
    else:
        rows = m.tolist()
        (m00, m01, m02, m03) = rows[0]
        (m10, m11, m12, m13) = rows[1]
        (m20, m21, m22, m23) = rows[2]
        (m30, m31, m32, m33) = rows[3]
        g0, g1, g2, g3 = g.tolist()

        def step(x0, x1, x2, x3, u):
            return (m00 * x0 + m01 * x1 + m02 * x2 + m03 * x3 + g0 * u,
                    m10 * x0 + m11 * x1 + m12 * x2 + m13 * x3 + g1 * u,
                    m20 * x0 + m21 * x1 + m22 * x2 + m23 * x3 + g2 * u,
                    m30 * x0 + m31 * x1 + m32 * x2 + m33 * x3 + g3 * u)
    return step


def _validate_grid(frequencies) -> np.ndarray:
    f = np.asarray(frequencies, dtype=float)
    if f.ndim != 1 or len(f) < 1:
        raise InvalidInputError("frequencies must be a 1-D sequence")
    if np.any(f <= 0.0):
        raise InvalidInputError("frequencies must be strictly positive")
    if len(f) > 1 and np.any(np.diff(f) <= 0.0):
        raise InvalidInputError("frequencies must be strictly increasing")
    return f


def analytic_frf(params: TwoMassParams, frequencies) -> FrequencyResponse:
    """Exact continuous-time torque-to-motor-velocity response (collocated).

    The response shows the antiresonance dip at ``sqrt(k/J_load)/2pi`` and
    the resonance peak at ``sqrt(k (J_m + J_l)/(J_m J_l))/2pi``.  Coherence
    is 1 at all frequencies (this is a model, not a measurement).
    """
    f = _validate_grid(frequencies)
    jm, jl = params.motor_inertia, params.load_inertia
    k, bc = params.stiffness, params.coupling_damping
    bm, bl = params.motor_viscous_friction, params.load_viscous_friction
    s = 2j * np.pi * f
    num = jl * s ** 2 + (bc + bl) * s + k
    den = ((jm * jl) * s ** 3
           + (bc * (jm + jl) + jm * bl + jl * bm) * s ** 2
           + (k * (jm + jl) + bc * (bm + bl) + bm * bl) * s
           + k * (bm + bl))
    resp = num / den
    tau = params.torque_lag_time_constant
    if tau > 0.0:
        resp = resp / (tau * s + 1.0)
    return FrequencyResponse(f, resp, np.ones_like(f))


def sampled_frf(params: TwoMassParams, frequencies, sample_period: float,
                actuation_delay_samples: int = 0) -> FrequencyResponse:
    """Exact discrete-time response seen through the drive's actuation chain.

    This is the frequency response an identification experiment measures on
    the sampled loop: the zero-order-hold discretization of the mechanism
    (which carries the half-sample hold lag and sinc roll-off) times any
    whole-sample actuation latency.  Use it to compose design loops without
    running a simulation.
    """
    f = _validate_grid(frequencies)
    if sample_period <= 0.0:
        raise InvalidInputError("sample_period must be positive")
    nyquist = 0.5 / sample_period
    if f[-1] >= nyquist:
        raise FrequencyRangeError(
            f"grid reaches {f[-1]:.6g} Hz, at or above the Nyquist rate {nyquist:.6g} Hz"
        )
    if actuation_delay_samples < 0:
        raise InvalidInputError("actuation_delay_samples must be non-negative")
    a, b = _state_space(params)
    n = a.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a * sample_period
    aug[:n, n:] = b * sample_period
    e = scipy.linalg.expm(aug)
    phi = e[:n, :n]
    gam = e[:n, n]
    z = np.exp(2j * np.pi * f * sample_period)
    resp = np.empty(len(f), dtype=complex)
    eye = np.eye(n)
    for i, zi in enumerate(z):
        resp[i] = np.linalg.solve(zi * eye - phi, gam)[0]
    resp *= z ** (-float(actuation_delay_samples))
    return FrequencyResponse(f, resp, np.ones_like(f))


def _torque_commands(excitation, sample_period: float):
    if isinstance(excitation, ExcitationSpec):
        n = int(round(excitation.duration / sample_period))
        if n < 1:
            raise InvalidInputError("duration shorter than one sample period")
        if excitation.kind == "white_noise":
            rng = np.random.default_rng(excitation.seed)
            return excitation.amplitude * rng.standard_normal(n)
        if excitation.kind == "step":
            return np.full(n, excitation.amplitude)
        return None  # relay: generated in closed loop
    cmds = np.asarray(excitation, dtype=float)
    if cmds.ndim != 1 or len(cmds) < 1:
        raise InvalidInputError("torque sequence must be a non-empty 1-D array")
    return cmds


def simulate(params: TwoMassParams, excitation, sample_period: float,
             actuation_delay_samples: int = 0) -> SimTrace:
    """Run an open-loop (or relay-feedback) experiment on the mechanism.

    ``excitation`` is an :class:`ExcitationSpec` or an explicit torque
    command sequence in N*m.  Commands are applied with a zero-order hold
    ``actuation_delay_samples`` cycles after they are issued.  Identical
    inputs (same seed) produce bit-identical traces.

    Raises
    ------
    DivergenceError
        If a state exceeds the divergence limit; the message names the
        first offending sample.
    """
    _check_sample_period(params, sample_period)
    if actuation_delay_samples < 0:
        raise InvalidInputError("actuation_delay_samples must be non-negative")
    cmds = _torque_commands(excitation, sample_period)
    relay = cmds is None
    if relay:
        n = int(round(excitation.duration / sample_period))
        amp, hyst = excitation.amplitude, excitation.relay_hysteresis
    else:
        n = len(cmds)

    m, g = _rk4_step_map(params, sample_period)
    step = _make_stepper(m, g)
    queue = [0.0] * actuation_delay_samples
    x0 = x1 = x2 = x3 = 0.0
    relay_out = amp if relay else 0.0
    out_cmd = np.empty(n)
    out_wm = np.empty(n)
    out_wl = np.empty(n)
    out_th = np.empty(n)
    lim = _DIVERGENCE_LIMIT
    for i in range(n):
        if relay:
            # bang-bang torque driving motor velocity towards zero
            err = -x0
            if err > hyst:
                relay_out = amp
            elif err < -hyst:
                relay_out = -amp
            cmd = relay_out
        else:
            cmd = cmds[i]
        out_cmd[i] = cmd
        out_wm[i] = x0
        out_wl[i] = x1
        out_th[i] = x2
        queue.append(cmd)
        x0, x1, x2, x3 = step(x0, x1, x2, x3, queue.pop(0))
        if not (-lim < x0 < lim and -lim < x1 < lim and -lim < x2 < lim):
            raise DivergenceError(
                f"state magnitude exceeded {lim:.0e} at sample {i} "
                f"(t = {i * sample_period:.6g} s)", sample_index=i)
    return SimTrace(sample_period, out_cmd, out_wm, out_wl, out_th)


def simulate_closed_loop(params: TwoMassParams, gains, notch, reference,
                         sample_period: float, torque_limit: float = 10.0,
                         actuation_delay_samples: int = 0) -> SimTrace:
    """Run the discrete velocity loop: PI, optional notch, torque saturation.

    The PI acts on the velocity error with a backward-Euler integral; its
    output passes through the notch biquad (when given) and is clamped at
    ``torque_limit`` before entering the actuation queue.  Anti-windup is by
    conditional integration tied to the torque limit: the integral state
    holds while the command is saturated and the error would drive it
    deeper, and is additionally clamped so that the integral term alone
    cannot exceed the limit.

    Parameters
    ----------
    gains : PiGains
        Proportional gain and integral time of the speed controller.
    notch : NotchBiquad or None
        Discrete band-rejection filter in the torque path.
    reference : array_like
        Velocity reference in rad/s, one value per control cycle.
    """
    _check_sample_period(params, sample_period)
    if torque_limit <= 0.0:
        raise InvalidInputError("torque_limit must be strictly positive")
    if actuation_delay_samples < 0:
        raise InvalidInputError("actuation_delay_samples must be non-negative")
    kp, ti = gains.kp, gains.ti
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 1 or len(ref) < 1:
        raise InvalidInputError("reference must be a non-empty 1-D array")
    if notch is not None:
        if abs(notch.sample_period - sample_period) > 1e-12 * sample_period:
            raise InvalidInputError("notch was discretized at a different sample period")
        b0, b1, b2 = notch.numerator
        a1, a2 = notch.denominator[1], notch.denominator[2]
    n = len(ref)

    m, g = _rk4_step_map(params, sample_period)
    step = _make_stepper(m, g)
    queue = [0.0] * actuation_delay_samples
    x0 = x1 = x2 = x3 = 0.0
    integ = 0.0
    w1 = w2 = 0.0  # notch direct-form-II states
    integ_max = torque_limit * ti / kp
    saturated = 0.0
    out_cmd = np.empty(n)
    out_wm = np.empty(n)
    out_wl = np.empty(n)
    out_th = np.empty(n)
    lim = _DIVERGENCE_LIMIT
    for i in range(n):
        err = ref[i] - x0
        if saturated * err <= 0.0:
            integ += sample_period * err
            if integ > integ_max:
                integ = integ_max
            elif integ < -integ_max:
                integ = -integ_max
        u = kp * (err + integ / ti)
        if notch is not None:
            w = u - a1 * w1 - a2 * w2
            u = b0 * w + b1 * w1 + b2 * w2
            w2 = w1
            w1 = w
        if u > torque_limit:
            cmd = torque_limit
            saturated = 1.0
        elif u < -torque_limit:
            cmd = -torque_limit
            saturated = -1.0
        else:
            cmd = u
            saturated = 0.0
        out_cmd[i] = cmd
        out_wm[i] = x0
        out_wl[i] = x1
        out_th[i] = x2
        queue.append(cmd)
        x0, x1, x2, x3 = step(x0, x1, x2, x3, queue.pop(0))
        if not (-lim < x0 < lim and -lim < x1 < lim and -lim < x2 < lim):
            raise DivergenceError(
                f"state magnitude exceeded {lim:.0e} at sample {i} "
                f"(t = {i * sample_period:.6g} s)", sample_index=i)
    return SimTrace(sample_period, out_cmd, out_wm, out_wl, out_th, reference=ref)
