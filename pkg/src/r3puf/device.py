"""
Behavioral model of a bipolar memristive device.

Resistance interpolates geometrically between the HRS and LRS values through a
state variable ``omega`` in [0, 1]; the state only moves while the voltage across
the device is past one of its switching thresholds.

Every function here is elementwise, so the dataclass fields may be plain floats
(one device) or equally shaped numpy arrays (a population of devices).
"""
from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

ENDURANCE_LIMIT = 100_000
DEFAULT_ALPHA = 1e5
DEFAULT_DT = 1e-7

ArrayLike = Union[float, np.ndarray]
RngLike = Union[np.random.Generator, Sequence[np.random.Generator]]


class EnduranceExceeded(RuntimeError):
    """Raised when a device would be programmed past its endurance limit."""


class Target(str, enum.Enum):
    SET = "set"
    RESET = "reset"


@dataclass(frozen=True)
class DeviceParams:
    """
    Sampled parameters of one memristive device (or an array of them).

    ``alpha`` is in V^-1 s^-1. ``orientation`` maps a circuit voltage drop onto the
    device frame: positive device-frame voltage drives SET, negative drives RESET.
    ``c2c_rel_std`` is the relative std of the resistance redrawn at each
    programming event; the 5% default is a stand-in, since the measured
    cycle-to-cycle spread is only known graphically.
    """

    r_on_mean: ArrayLike
    r_off_mean: ArrayLike
    v_set: ArrayLike = 1.0
    v_reset: ArrayLike = -1.0
    alpha: ArrayLike = DEFAULT_ALPHA
    beta: ArrayLike = 0.0
    c2c_rel_std: ArrayLike = 0.05
    orientation: ArrayLike = -1

    def __post_init__(self):
        if not np.all(np.asarray(self.r_on_mean) > 0):
            raise ValueError("r_on_mean must be positive")
        if not np.all(np.asarray(self.r_off_mean) > np.asarray(self.r_on_mean)):
            raise ValueError("r_off_mean must exceed r_on_mean")
        if not np.all(np.asarray(self.v_set) > 0):
            raise ValueError("v_set must be positive")
        if not np.all(np.asarray(self.v_reset) < 0):
            raise ValueError("v_reset must be negative")
        if not np.all(np.asarray(self.alpha) > 0):
            raise ValueError("alpha must be positive")
        if not np.all(np.asarray(self.beta) >= 0):
            raise ValueError("beta must be non-negative")
        if not np.all(np.asarray(self.c2c_rel_std) >= 0):
            raise ValueError("c2c_rel_std must be non-negative")
        if not np.all(np.isin(np.asarray(self.orientation), (-1, 1))):
            raise ValueError("orientation must be +1 or -1")


@dataclass(frozen=True)
class DeviceState:
    """Live state of a device: ``omega`` plus this programming cycle's resistances."""

    omega: ArrayLike
    r_on_cycle: ArrayLike
    r_off_cycle: ArrayLike
    program_cycle_count: ArrayLike = 0

    def __post_init__(self):
        omega = np.asarray(self.omega)
        if not np.all((omega >= 0) & (omega <= 1)):
            raise ValueError("omega must lie in [0, 1]")
        if not np.all(np.asarray(self.r_on_cycle) > 0):
            raise ValueError("r_on_cycle must be positive")
        if not np.all(np.asarray(self.r_off_cycle) > np.asarray(self.r_on_cycle)):
            raise ValueError("r_off_cycle must exceed r_on_cycle")
        if not np.all(np.asarray(self.program_cycle_count) >= 0):
            raise ValueError("program_cycle_count must be >= 0")

    @classmethod
    def fresh(cls, params: DeviceParams) -> "DeviceState":
        """An unformed device: HRS, resistances at the device means, no cycles used."""
        shape = np.shape(params.r_on_mean)
        zeros = np.zeros(shape) if shape else 0.0
        count = np.zeros(shape, dtype=np.int64) if shape else 0
        return cls(zeros, params.r_on_mean, params.r_off_mean, count)


def resistance_of(omega: ArrayLike, r_on: ArrayLike, r_off: ArrayLike) -> ArrayLike:
    return r_off * np.power(r_on / r_off, omega)


def resistance(state: DeviceState) -> ArrayLike:
    """Instantaneous resistance, ``r_off * (r_on / r_off) ** omega``."""
    return resistance_of(state.omega, state.r_on_cycle, state.r_off_cycle)


def switching_rate(v, v_set, v_reset, alpha, beta=0.0):
    """
    d(omega)/dt for device-frame voltage ``v``.

    Both threshold branches vanish at their threshold, so the rate is continuous.
    """
    v = np.asarray(v, dtype=float)
    rate = np.where(
        v >= v_set,
        alpha * (v - v_set),
        np.where(v <= v_reset, alpha * (v - v_reset), beta * v),
    )
    return rate if rate.ndim else float(rate)


def state_derivative(state: DeviceState, params: DeviceParams, v_device) -> ArrayLike:
    """Rate of change of ``omega`` at device-frame voltage ``v_device`` (orientation applied)."""
    return switching_rate(v_device, params.v_set, params.v_reset, params.alpha, params.beta)


def integrate_step(
    state: DeviceState, params: DeviceParams, v_device, dt: float = DEFAULT_DT
) -> DeviceState:
    """
    Advance ``omega`` by one forward-Euler step at a fixed device voltage, then clamp.

    The rate does not depend on ``omega``, so for a single device under a held
    voltage every explicit scheme reduces to this step. Coupled two-device
    integration (where RK4 differs) lives in :mod:`r3puf.cell`.
    """
    if not np.isfinite(dt) or dt <= 0:
        raise ValueError(f"dt must be finite and positive, got {dt!r}")
    if not np.all(np.isfinite(v_device)):
        raise ValueError("v_device must be finite")
    rate = state_derivative(state, params, v_device)
    omega = np.clip(state.omega + dt * rate, 0.0, 1.0)
    if np.ndim(omega) == 0:
        omega = float(omega)
    return replace(state, omega=omega)


def lognormal_factor(rel_std, rng: RngLike, size=None):
    """
    Multiplicative factor with mean 1 and relative std ``rel_std``.

    ``rel_std`` is the relative std of the factor itself, not of its logarithm.
    Zero spread returns exactly 1.0 without consuming randomness. ``rng`` may be a
    single Generator or one Generator per element.
    """
    rel_std = np.asarray(rel_std, dtype=float)
    sigma = np.sqrt(np.log1p(rel_std**2))
    mu = -0.5 * sigma**2
    if isinstance(rng, np.random.Generator):
        if not np.any(rel_std > 0):
            return np.ones(size) if size is not None else 1.0
        return rng.lognormal(mu, sigma, size)
    sigma = np.broadcast_to(sigma, (len(rng),))
    mu = np.broadcast_to(mu, (len(rng),))
    return np.array(
        [g.lognormal(m, s) if s > 0 else 1.0 for g, m, s in zip(rng, mu, sigma)]
    )


def program(
    state: DeviceState,
    params: DeviceParams,
    target: Target | str,
    rng: RngLike,
    endurance: int = ENDURANCE_LIMIT,
) -> DeviceState:
    """
    Discrete SET or RESET with cycle-to-cycle resampling.

    SET drives ``omega`` to 1 and redraws ``r_on_cycle`` around ``r_on_mean``;
    RESET drives it to 0 and redraws ``r_off_cycle`` around ``r_off_mean``.

    Raises
    ------
    EnduranceExceeded
        If the cycle count would pass ``endurance``.
    """
    target = Target(target)
    count = np.asarray(state.program_cycle_count) + 1
    if np.any(count > endurance):
        raise EnduranceExceeded(
            f"programming would exceed the endurance limit of {endurance} cycles"
        )
    scalar = np.ndim(state.omega) == 0
    factor = lognormal_factor(params.c2c_rel_std, rng)
    if target is Target.SET:
        r_on = params.r_on_mean * factor
        r_off = state.r_off_cycle
        omega = 1.0 if scalar else np.ones_like(state.omega)
    else:
        r_on = state.r_on_cycle
        r_off = params.r_off_mean * factor
        omega = 0.0 if scalar else np.zeros_like(state.omega)
    if scalar:
        r_on, r_off, count = float(r_on), float(r_off), int(count)
    return DeviceState(omega, r_on, r_off, count)
