"""
Transient simulation of a single R3PUF cell.

Two memristive devices sit in series between the drive ``V_in`` and ground: M1 from
``V_in`` to the midpoint, M2 from the midpoint to ground. An inverter compares the
midpoint voltage against its switching threshold to digitize the response.

Like :mod:`r3puf.device`, the functions here broadcast. A :class:`CellConfig` whose
device parameters are arrays describes a whole batch of cells that is simulated in
lock-step (see :func:`stack_configs`), and a batch of one reproduces the scalar
path bit for bit.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .device import (
    DEFAULT_DT,
    ENDURANCE_LIMIT,
    DeviceParams,
    DeviceState,
    Target,
    program,
    resistance,
    resistance_of,
    switching_rate,
)

OMEGA_OFF_TOL = 0.01
OMEGA_ON_TOL = 0.99
AMBIGUITY_BAND = 0.05
# |ln(q1/q2)| below this marks a cell whose winner the first-crossing predictor
# cannot call; the coupled dynamics then decide
NEAR_TIE_TOL = 1e-4
# worst-case C2C excursion, in units of c2c_rel_std, for the readout safety check
_WORST_CASE_SIGMAS = 6.0

TRACE_COLUMNS = ("t", "v_in", "v_out", "omega1", "omega2", "r1", "r2")


class Status(enum.IntEnum):
    OK = 0
    NO_SWITCH = 1
    DOUBLE_SWITCH = 2
    INCOMPLETE = 3
    TIE = 4


class ExtractionError(RuntimeError):
    status = None

    def __init__(self, message, status=None):
        super().__init__(message)
        if status is not None:
            self.status = status


class NoSwitchError(ExtractionError):
    status = Status.NO_SWITCH


class DoubleSwitchError(ExtractionError):
    status = Status.DOUBLE_SWITCH


class DegenerateTieError(ExtractionError):
    status = Status.TIE


class ReconfigurationError(RuntimeError):
    pass


class AmbiguousReadoutWarning(UserWarning):
    pass


_STATUS_ERRORS = {
    Status.NO_SWITCH: NoSwitchError,
    Status.DOUBLE_SWITCH: DoubleSwitchError,
    Status.INCOMPLETE: ExtractionError,
    Status.TIE: DegenerateTieError,
}


@dataclass(frozen=True)
class DriveProfile:
    """Piecewise-linear ``V_in(t)`` given as ``(time, voltage)`` breakpoints."""

    breakpoints: tuple
    dt: float = DEFAULT_DT

    def __post_init__(self):
        bp = tuple((float(t), float(v)) for t, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if not bp:
            raise ValueError("a drive profile needs at least one breakpoint")
        times = np.array([t for t, _ in bp])
        if times[0] != 0.0:
            raise ValueError("drive profile must start at t=0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(bp) > 1 and self.dt > np.diff(times).min() / 10:
            raise ValueError("dt must be at most a tenth of the shortest segment")

    @classmethod
    def ramp(cls, peak: float, ramp_time: float, hold_time: float = 0.0, dt: float = DEFAULT_DT):
        bp = [(0.0, 0.0), (ramp_time, peak)]
        if hold_time > 0:
            bp.append((ramp_time + hold_time, peak))
        return cls(tuple(bp), dt)

    @property
    def duration(self) -> float:
        return self.breakpoints[-1][0]

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def voltages(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints])

    def voltage(self, t):
        bp = np.asarray(self.breakpoints)
        return np.interp(t, bp[:, 0], bp[:, 1])

    def with_dt(self, dt: float) -> "DriveProfile":
        return replace(self, dt=dt)


def default_extract_profile() -> DriveProfile:
    """
    0 to 2.5 V over 3 ms, then held for 0.1 ms.

    Slow enough that the losing device of a near-tied pair stays above
    ``OMEGA_ON_TOL`` while the winner collapses; a 1 ms ramp does not guarantee that.
    """
    return DriveProfile.ramp(2.5, 3e-3, 1e-4)


def default_reconfig_profile() -> DriveProfile:
    """Negative ramp used by transient reconfiguration: 0 to -2.5 V over 1 ms."""
    return DriveProfile.ramp(-2.5, 1e-3)


def _worst_case_resistances(m: DeviceParams):
    spread = _WORST_CASE_SIGMAS * np.asarray(m.c2c_rel_std)
    r_on_hi = m.r_on_mean * (1 + spread)
    r_off_lo = m.r_off_mean * np.maximum(1 - spread, 1e-3)
    return r_on_hi, r_off_lo


def readout_disturbs(config: "CellConfig") -> np.ndarray:
    """
    True where the readout drive could move a device out of its settled state.

    Both post-extraction layouts (M1 in HRS or M2 in HRS) are checked with the LRS
    resistance at its worst-case high and the HRS resistance at its worst-case low.
    A device already in HRS (omega=0) can only be disturbed by a SET-direction
    voltage and one in LRS (omega=1) only by a RESET-direction voltage; drives past
    the other threshold just push into the clamp.
    """
    v = config.readout_voltage
    m1, m2 = config.m1, config.m2
    on1, off1 = _worst_case_resistances(m1)
    on2, off2 = _worst_case_resistances(m2)
    bad = np.zeros(np.broadcast(m1.r_on_mean, m2.r_on_mean).shape, dtype=bool)
    for r1, r2, hrs_is_m1 in ((off1, on2, True), (on1, off2, False)):
        v_out = v * r2 / (r1 + r2)
        v1 = m1.orientation * (v - v_out)
        v2 = m2.orientation * v_out
        if hrs_is_m1:
            bad |= (v1 >= m1.v_set) | (v2 <= m2.v_reset)
        else:
            bad |= (v1 <= m1.v_reset) | (v2 >= m2.v_set)
    return bad


@dataclass(frozen=True)
class CellConfig:
    """
    One cell (or a batch of cells) plus its drive settings.

    ``inverter_vth`` is the comparator threshold; the readout supply defaults to
    the 1 V readout drive.
    """

    m1: DeviceParams
    m2: DeviceParams
    inverter_vth: object = 0.5
    v_supply: float = 1.0
    extract_profile: DriveProfile = field(default_factory=default_extract_profile)
    readout_voltage: float = 1.0
    reconfig_profile: DriveProfile = field(default_factory=default_reconfig_profile)

    def __post_init__(self):
        vth = np.asarray(self.inverter_vth)
        if not np.all((vth > 0) & (vth < self.v_supply)):
            raise ValueError("inverter_vth must lie strictly between 0 and v_supply")
        if not np.all(np.asarray(self.m1.orientation) == np.asarray(self.m2.orientation)):
            raise ValueError("both devices of a cell must share one orientation")
        # the drive that first RESETs a device must reach the sum of both
        # thresholds, otherwise the first crossing is never guaranteed
        reset_drive = np.max(-np.multiply.outer(self.m1.orientation, self.extract_profile.voltages), axis=-1)
        if not np.all(reset_drive >= np.abs(self.m1.v_reset) + np.abs(self.m2.v_reset)):
            raise ValueError("extraction profile peak is below |v_reset1| + |v_reset2|")
        if np.any(readout_disturbs(self)):
            raise ValueError("readout voltage would disturb a settled device")

    @property
    def shape(self) -> tuple:
        return np.broadcast(self.m1.r_on_mean, self.m2.r_on_mean, self.inverter_vth).shape

    def __len__(self):
        shape = self.shape
        if not shape:
            raise TypeError("a single-cell config has no len()")
        return shape[0]


@dataclass(frozen=True)
class CellState:
    s1: DeviceState
    s2: DeviceState

    @classmethod
    def fresh(cls, config: CellConfig) -> "CellState":
        return cls(DeviceState.fresh(config.m1), DeviceState.fresh(config.m2))

    @property
    def omegas(self):
        return self.s1.omega, self.s2.omega


@dataclass
class Trace:
    """Per-step record of an extraction; one row per integration step plus the end point."""

    t: np.ndarray
    v_in: np.ndarray
    v_out: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    def __len__(self):
        return len(self.t)

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in TRACE_COLUMNS]) if len(self) else np.empty((0, 7))

    @classmethod
    def empty(cls) -> "Trace":
        return cls(*(np.empty(0) for _ in TRACE_COLUMNS))


@dataclass
class Transient:
    """Outcome of driving a cell batch through one profile."""

    state: CellState
    trace: Optional[Trace]
    cross_step1: np.ndarray
    cross_step2: np.ndarray
    tie: np.ndarray


def stack_configs(configs: Sequence[CellConfig]) -> CellConfig:
    """Fuse single-cell configs that share drive settings into one batch config."""
    first = configs[0]
    for c in configs[1:]:
        if (
            c.extract_profile != first.extract_profile
            or c.reconfig_profile != first.reconfig_profile
            or c.readout_voltage != first.readout_voltage
            or c.v_supply != first.v_supply
        ):
            raise ValueError("stacked cells must share profiles and readout settings")

    def stack(name):
        kwargs = {
            f: np.array([getattr(getattr(c, name), f) for c in configs], dtype=float)
            for f in DeviceParams.__dataclass_fields__
        }
        kwargs["orientation"] = kwargs["orientation"].astype(int)
        return DeviceParams(**kwargs)

    return replace(
        first,
        m1=stack("m1"),
        m2=stack("m2"),
        inverter_vth=np.array([c.inverter_vth for c in configs], dtype=float),
    )


def _take(obj, i):
    values = {}
    for f in obj.__dataclass_fields__:
        v = getattr(obj, f)
        if np.ndim(v):
            v = v[i]
            v = v.item() if np.ndim(v) == 0 else v
        values[f] = v
    return type(obj)(**values)


def config_at(config: CellConfig, i) -> CellConfig:
    return replace(
        config,
        m1=_take(config.m1, i),
        m2=_take(config.m2, i),
        inverter_vth=_take_value(config.inverter_vth, i),
    )


def state_at(state: CellState, i) -> CellState:
    return CellState(_take(state.s1, i), _take(state.s2, i))


def _take_value(v, i):
    if np.ndim(v):
        v = v[i]
        return v.item() if np.ndim(v) == 0 else v
    return v


def divider_vout(state: CellState, v_in):
    """Midpoint voltage ``V_in * R2 / (R1 + R2)``."""
    r1 = resistance(state.s1)
    r2 = resistance(state.s2)
    return v_in * r2 / (r1 + r2)


def simulate(
    state: CellState,
    config: CellConfig,
    profile: DriveProfile,
    scheme: str = "euler",
    record: bool = False,
) -> Transient:
    """
    Integrate both devices through ``profile`` with the divider recomputed every step.

    ``scheme`` is ``"euler"`` (default) or ``"rk4"``; omega is clamped to [0, 1] at
    the end of every step. ``record`` keeps a full :class:`Trace`, which is only
    sensible for small batches.
    """
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    m1, m2 = config.m1, config.m2
    shape = np.broadcast(state.s1.omega, state.s2.omega, m1.r_on_mean, m2.r_on_mean).shape
    w1 = np.broadcast_to(np.asarray(state.s1.omega, dtype=float), shape).copy()
    w2 = np.broadcast_to(np.asarray(state.s2.omega, dtype=float), shape).copy()
    on1, off1 = state.s1.r_on_cycle, state.s1.r_off_cycle
    on2, off2 = state.s2.r_on_cycle, state.s2.r_off_cycle
    o1, o2 = m1.orientation, m2.orientation

    def rates(a, b, v):
        r1 = resistance_of(a, on1, off1)
        r2 = resistance_of(b, on2, off2)
        v_out = v * r2 / (r1 + r2)
        d1 = switching_rate(o1 * (v - v_out), m1.v_set, m1.v_reset, m1.alpha, m1.beta)
        d2 = switching_rate(o2 * v_out, m2.v_set, m2.v_reset, m2.alpha, m2.beta)
        return d1, d2, v_out, r1, r2

    n = profile.n_steps
    dt = profile.dt
    times = np.arange(n + 1) * dt
    v_at = profile.voltage(times)
    v_mid = profile.voltage(times[:-1] + dt / 2) if scheme == "rk4" else None

    cross1 = np.full(shape, -1, dtype=np.int64)
    cross2 = np.full(shape, -1, dtype=np.int64)
    tie = np.zeros(shape, dtype=bool)
    if record:
        if int(np.prod(shape)) != 1:
            raise ValueError("trace recording is for single cells only")
        rows = np.empty((n + 1, 7)) if n else np.empty((0, 7))

        def row(*values):
            return [np.ravel(x)[0] for x in values]

    for k in range(n):
        v = v_at[k]
        d1, d2, v_out, r1, r2 = rates(w1, w2, v)
        if record:
            rows[k] = row(times[k], v, v_out, w1, w2, r1, r2)
        new1 = (cross1 < 0) & (d1 != 0)
        new2 = (cross2 < 0) & (d2 != 0)
        if new1.any() or new2.any():
            # exact ties: both cross on one step with bit-identical rates
            tie |= new1 & new2 & (d1 == d2)
            cross1[new1] = k
            cross2[new2] = k
        if scheme == "rk4":
            vm = v_mid[k]
            b1, b2 = rates(w1 + 0.5 * dt * d1, w2 + 0.5 * dt * d2, vm)[:2]
            c1, c2 = rates(w1 + 0.5 * dt * b1, w2 + 0.5 * dt * b2, vm)[:2]
            e1, e2 = rates(w1 + dt * c1, w2 + dt * c2, v_at[k + 1])[:2]
            d1 = (d1 + 2 * b1 + 2 * c1 + e1) / 6
            d2 = (d2 + 2 * b2 + 2 * c2 + e2) / 6
        w1 = np.clip(w1 + dt * d1, 0.0, 1.0)
        w2 = np.clip(w2 + dt * d2, 0.0, 1.0)

    trace = None
    if record:
        if n:
            _, _, v_out, r1, r2 = rates(w1, w2, v_at[n])
            rows[n] = row(times[n], v_at[n], v_out, w1, w2, r1, r2)
            trace = Trace(*rows.T.copy())
        else:
            trace = Trace.empty()

    if not shape:
        w1, w2 = float(w1), float(w2)
    out = CellState(replace(state.s1, omega=w1), replace(state.s2, omega=w2))
    return Transient(out, trace, cross1, cross2, tie)


def classify(state: CellState, tie=False):
    """Map final omegas to a :class:`Status` (elementwise)."""
    w1, w2 = np.asarray(state.s1.omega), np.asarray(state.s2.omega)
    lo, hi = np.minimum(w1, w2), np.maximum(w1, w2)
    status = np.full(lo.shape, Status.INCOMPLETE, dtype=np.int8)
    status[(lo < OMEGA_OFF_TOL) & (hi > OMEGA_ON_TOL)] = Status.OK
    status[lo >= OMEGA_OFF_TOL] = Status.NO_SWITCH
    status[hi < OMEGA_OFF_TOL] = Status.DOUBLE_SWITCH
    status[np.asarray(tie, dtype=bool)] = Status.TIE
    return Status(int(status)) if status.ndim == 0 else status


def switched_device(state: CellState):
    """1 where M1 ended lower in omega (switched to HRS), else 2."""
    return np.where(np.asarray(state.s1.omega) < np.asarray(state.s2.omega), 1, 2)


def predict_switched_device(state: CellState, config: CellConfig):
    """
    Closed-form first-to-threshold prediction of which device switches.

    Under a slowly rising drive, device i reaches its RESET threshold when
    ``V_in * R_i / (R1 + R2) = |V_RESET,i|``, so the device with the larger
    ``R_i / |V_RESET,i|`` crosses first. Returns ``(device, near_tie)`` where
    ``near_tie`` flags cells whose log-ratio margin is below ``NEAR_TIE_TOL``.
    """
    q1 = np.asarray(resistance(state.s1)) / np.abs(config.m1.v_reset)
    q2 = np.asarray(resistance(state.s2)) / np.abs(config.m2.v_reset)
    margin = np.log(q1 / q2)
    return np.where(margin > 0, 1, 2), np.abs(margin) < NEAR_TIE_TOL


def _require_lrs(state: CellState):
    if not (np.all(np.asarray(state.s1.omega) >= OMEGA_ON_TOL) and np.all(np.asarray(state.s2.omega) >= OMEGA_ON_TOL)):
        raise ValueError("extraction needs both devices in LRS; program them with SET first")


def extract_many(
    state: CellState,
    config: CellConfig,
    scheme: str = "euler",
    dt: Optional[float] = None,
) -> tuple:
    """
    Batch extraction without raising: returns ``(state, status, transient)``.

    Cells whose status is not ``Status.OK`` are left for the caller to report.
    """
    _require_lrs(state)
    profile = config.extract_profile if dt is None else config.extract_profile.with_dt(dt)
    tr = simulate(state, config, profile, scheme=scheme)
    return tr.state, classify(tr.state, tr.tie), tr


def extract(
    state: CellState,
    config: CellConfig,
    scheme: str = "euler",
    dt: Optional[float] = None,
) -> tuple:
    """
    Ramp ``V_in`` along the extraction profile until exactly one device RESETs.

    Returns ``(state, trace)`` for a single cell.

    Raises
    ------
    NoSwitchError, DoubleSwitchError, DegenerateTieError, ExtractionError
        When the outcome is not exactly one device in HRS and one in LRS.
    """
    _require_lrs(state)
    profile = config.extract_profile if dt is None else config.extract_profile.with_dt(dt)
    tr = simulate(state, config, profile, scheme=scheme, record=True)
    status = classify(tr.state, tr.tie)
    if np.ndim(status) == 0 and status is not Status.OK:
        w1, w2 = tr.state.omegas
        raise _STATUS_ERRORS[status](
            f"extraction ended with omega1={w1:.4g}, omega2={w2:.4g} ({status.name})", status
        )
    return tr.state, tr.trace


def ambiguous(v_out, vth):
    return np.abs(np.asarray(v_out) - np.asarray(vth)) < AMBIGUITY_BAND


def readout(
    state: CellState,
    config: CellConfig,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
):
    """
    Digitize the cell at the readout drive: ``(bit, v_out)``.

    The inverter outputs 1 when the midpoint sits below its threshold, i.e. when
    M1 is in HRS. Optional gaussian noise of std ``noise_sigma`` is added to the
    midpoint voltage before comparison. The state is not touched.
    """
    v_out = divider_vout(state, config.readout_voltage)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("readout noise needs an rng")
        v_out = v_out + rng.normal(0.0, noise_sigma, np.shape(v_out))
    bit = (np.asarray(v_out) < np.asarray(config.inverter_vth)).astype(np.int8)
    if np.ndim(bit) == 0:
        bit, v_out = int(bit), float(v_out)
        if ambiguous(v_out, config.inverter_vth):
            warnings.warn(
                f"V_out={v_out:.4f} V is within {AMBIGUITY_BAND} V of the inverter threshold",
                AmbiguousReadoutWarning,
                stacklevel=2,
            )
    return bit, v_out


def readout_pulse(state: CellState, config: CellConfig, duration: float = 1e-5) -> CellState:
    """Hold the readout voltage for ``duration`` seconds through the integrator."""
    dt = min(config.extract_profile.dt, duration / 10)
    v = config.readout_voltage
    profile = DriveProfile(((0.0, v), (duration, v)), dt)
    return simulate(state, config, profile).state


def program_cell(state: CellState, config: CellConfig, target, rng, endurance: int = ENDURANCE_LIMIT) -> CellState:
    """Program M1 then M2; per cell the C2C draws are taken in that order."""
    s1 = program(state.s1, config.m1, target, rng, endurance)
    s2 = program(state.s2, config.m2, target, rng, endurance)
    return CellState(s1, s2)


def reconfigure(
    state: CellState,
    config: CellConfig,
    rng,
    transient: bool = False,
    endurance: int = ENDURANCE_LIMIT,
) -> CellState:
    """
    SET both devices back to LRS with fresh cycle-to-cycle resistances.

    With ``transient=True`` the negative reconfiguration ramp is simulated first
    and both devices must come out above ``OMEGA_ON_TOL``; the discrete SET (which
    carries the C2C redraw) follows either way.
    """
    if transient:
        after = simulate(state, config, config.reconfig_profile).state
        lo = np.minimum(after.s1.omega, after.s2.omega)
        if not np.all(lo > OMEGA_ON_TOL):
            raise ReconfigurationError(
                f"reconfiguration ramp left a device at omega={np.min(lo):.4g}"
            )
    return program_cell(state, config, Target.SET, rng, endurance)


@dataclass
class CycleResult:
    bit: int
    v_out: float
    state: CellState
    trace: Trace


def run_cycle(
    state: CellState,
    config: CellConfig,
    rng,
    scheme: str = "euler",
    dt: Optional[float] = None,
    endurance: int = ENDURANCE_LIMIT,
) -> CycleResult:
    """Program both devices to LRS, extract, and read out one response bit."""
    state = program_cell(state, config, Target.SET, rng, endurance)
    state, trace = extract(state, config, scheme=scheme, dt=dt)
    bit, v_out = readout(state, config)
    return CycleResult(bit, v_out, state, trace)


def collapse_onset(trace: Trace) -> float:
    """``V_in`` at which ``V_out`` peaks during the rising ramp, i.e. where the collapse begins."""
    if not len(trace):
        raise ValueError("empty trace")
    return float(trace.v_in[int(np.argmax(trace.v_out))])
