"""
Monte-Carlo device populations and chips.

Every random draw comes from a counter-based (Philox) stream keyed by
``(master_seed, chip, cell, purpose, epoch)``, so any cell can be regenerated on
its own and results do not depend on how cells are batched or distributed.
"""
from __future__ import annotations

import csv
import enum
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .cell import CellConfig
from .device import DEFAULT_ALPHA, DeviceParams, lognormal_factor

DISTRIBUTIONS = ("lognormal", "gaussian")


@dataclass(frozen=True)
class ParamDist:
    """A parameter's mean, relative std and distribution family."""

    mean: float
    rel_std: float
    dist: str

    def __post_init__(self):
        if self.rel_std < 0:
            raise ValueError("rel_std must be >= 0")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}, got {self.dist!r}")
        if self.dist == "lognormal" and self.mean <= 0:
            raise ValueError("lognormal parameters need a positive mean")

    def sample(self, rng: np.random.Generator, size=None):
        # rel_std is the spread of the parameter itself, for both families
        if self.dist == "lognormal":
            return self.mean * lognormal_factor(self.rel_std, rng, size)
        return rng.normal(self.mean, self.rel_std * abs(self.mean), size)


def _lognormal(mean):
    return ParamDist(mean, 0.05, "lognormal")


def _gaussian(mean):
    return ParamDist(mean, 0.05, "gaussian")


@dataclass(frozen=True)
class VariationSpec:
    """
    Distributions for every sampled quantity; defaults follow the parameter table.

    The inverter threshold is not sampled directly. Transistor length and width
    are drawn, and the relative W/L deviation moves the comparator threshold with
    sensitivity ``vth_sensitivity``.
    """

    r_on: ParamDist = field(default_factory=lambda: _lognormal(5e5))
    r_off: ParamDist = field(default_factory=lambda: _lognormal(5e8))
    v_set: ParamDist = field(default_factory=lambda: _gaussian(1.0))
    v_reset: ParamDist = field(default_factory=lambda: _gaussian(-1.0))
    transistor_length: ParamDist = field(default_factory=lambda: _gaussian(120e-9))
    transistor_width: ParamDist = field(default_factory=lambda: _gaussian(90e-9))
    c2c_rel_std: float = 0.05
    alpha: float = DEFAULT_ALPHA
    beta: float = 0.0
    vth_nominal: float = 0.5
    vth_sensitivity: float = 0.4
    v_supply: float = 1.0
    voltage_floor: float = 0.1

    def __post_init__(self):
        for name in ("r_on", "r_off"):
            if getattr(self, name).dist != "lognormal":
                raise ValueError(f"{name} must be lognormal")
        for name in ("v_set", "v_reset", "transistor_length", "transistor_width"):
            if getattr(self, name).dist != "gaussian":
                raise ValueError(f"{name} must be gaussian")
        if not self.r_off.mean > self.r_on.mean:
            raise ValueError("r_off mean must exceed r_on mean")
        if self.v_set.mean <= 0 or self.v_reset.mean >= 0:
            raise ValueError("v_set mean must be positive and v_reset mean negative")
        if self.c2c_rel_std < 0:
            raise ValueError("c2c_rel_std must be >= 0")
        if not 0 < self.vth_nominal < self.v_supply:
            raise ValueError("vth_nominal must lie inside (0, v_supply)")
        if self.voltage_floor <= 0:
            raise ValueError("voltage_floor must be positive")

    @classmethod
    def zero(cls, **overrides) -> "VariationSpec":
        """Every spread set to zero (means unchanged)."""
        base = cls()
        fields = {
            name: ParamDist(getattr(base, name).mean, 0.0, getattr(base, name).dist)
            for name in ("r_on", "r_off", "v_set", "v_reset", "transistor_length", "transistor_width")
        }
        fields["c2c_rel_std"] = 0.0
        fields.update(overrides)
        return cls(**fields)


class Stream(enum.IntEnum):
    DEVICES = 0
    INVERTER = 1
    C2C = 2
    NOISE = 3


def chip_key(chip_id: Union[int, str]) -> int:
    if isinstance(chip_id, (int, np.integer)):
        if chip_id < 0:
            raise ValueError("integer chip ids must be non-negative")
        return int(chip_id)
    return int.from_bytes(hashlib.sha256(str(chip_id).encode()).digest()[:8], "little")


def cell_rng(master_seed: int, chip_id, cell_index: int, stream: Stream, epoch: int = 0) -> np.random.Generator:
    """Independent Philox stream for one purpose of one cell."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(chip_key(chip_id), int(cell_index), int(stream), int(epoch))
    )
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ChipSpec:
    chip_id: Union[int, str]
    n_cells: int
    master_seed: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        chip_key(self.chip_id)


def _positive_draw(dist: ParamDist, rng, floor: float, sign: float, stats: Counter, key: str):
    while True:
        v = float(dist.sample(rng))
        if sign * v >= floor:
            return v
        stats[key] += 1


def sample_device(spec: VariationSpec, rng: np.random.Generator, stats: Optional[Counter] = None) -> DeviceParams:
    """
    Draw one device's D2D parameters.

    Resistance pairs with ``r_off <= r_on`` and switching voltages within
    ``voltage_floor`` of zero are redrawn; ``stats`` counts the redraws.
    """
    stats = stats if stats is not None else Counter()
    while True:
        r_on = float(spec.r_on.sample(rng))
        r_off = float(spec.r_off.sample(rng))
        if r_off > r_on:
            break
        stats["resistance_rejections"] += 1
    v_set = _positive_draw(spec.v_set, rng, spec.voltage_floor, 1.0, stats, "v_set_rejections")
    v_reset = _positive_draw(spec.v_reset, rng, spec.voltage_floor, -1.0, stats, "v_reset_rejections")
    return DeviceParams(
        r_on_mean=r_on,
        r_off_mean=r_off,
        v_set=v_set,
        v_reset=v_reset,
        alpha=spec.alpha,
        beta=spec.beta,
        c2c_rel_std=spec.c2c_rel_std,
        orientation=-1,
    )


def sample_inverter_threshold(spec: VariationSpec, rng: np.random.Generator, stats: Optional[Counter] = None) -> float:
    """
    Comparator threshold ``vth_nominal * (1 + k * delta)``.

    ``delta`` is the relative deviation of the sampled W/L ratio from nominal and
    ``k`` is ``vth_sensitivity``. Results are clamped to (0.1, 0.9) of the supply.
    """
    length = float(spec.transistor_length.sample(rng))
    width = float(spec.transistor_width.sample(rng))
    nominal_ratio = spec.transistor_width.mean / spec.transistor_length.mean
    delta = (width / length) / nominal_ratio - 1.0
    vth = spec.vth_nominal * (1.0 + spec.vth_sensitivity * delta)
    lo, hi = 0.1 * spec.v_supply, 0.9 * spec.v_supply
    if not lo < vth < hi:
        if stats is not None:
            stats["vth_clamped"] += 1
        vth = float(np.clip(vth, lo, hi))
    return vth


def build_cell(spec: VariationSpec, master_seed: int, chip_id, cell_index: int, stats=None, **cell_kwargs) -> CellConfig:
    rng = cell_rng(master_seed, chip_id, cell_index, Stream.DEVICES)
    m1 = sample_device(spec, rng, stats)
    m2 = sample_device(spec, rng, stats)
    vth = sample_inverter_threshold(spec, cell_rng(master_seed, chip_id, cell_index, Stream.INVERTER), stats)
    return CellConfig(m1, m2, inverter_vth=vth, v_supply=spec.v_supply, **cell_kwargs)


def build_chip(chip: ChipSpec, spec: VariationSpec, stats: Optional[Counter] = None, **cell_kwargs) -> list:
    """
    Sample ``chip.n_cells`` independent cells.

    Reproducible bit for bit from ``(master_seed, chip_id)``. Extra keyword
    arguments (drive profiles, readout voltage) are passed to every :class:`CellConfig`.
    """
    return [
        build_cell(spec, chip.master_seed, chip.chip_id, i, stats, **cell_kwargs)
        for i in range(chip.n_cells)
    ]


POPULATION_COLUMNS = (
    "cell", "r_on1", "r_off1", "v_set1", "v_reset1", "r_on2", "r_off2", "v_set2", "v_reset2", "inverter_vth",
)


def export_population(configs, path, header: Optional[dict] = None):
    """Write sampled cell parameters as CSV, one row per cell."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(POPULATION_COLUMNS)
        for i, c in enumerate(configs):
            values = (
                c.m1.r_on_mean, c.m1.r_off_mean, c.m1.v_set, c.m1.v_reset,
                c.m2.r_on_mean, c.m2.r_off_mean, c.m2.v_set, c.m2.v_reset,
                c.inverter_vth,
            )
            w.writerow([i, *(repr(float(v)) for v in values)])
