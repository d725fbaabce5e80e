"""
PUF quality metrics over a response matrix, and the median-split baseline.

Bit statistics are computed from integer counts, so results do not depend on
reduction order or on how cells are ordered.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

MIDDLE_BAND = (0.1, 0.9)


@dataclass(frozen=True)
class ResponseMatrix:
    """
    Response bits and midpoint voltages indexed ``[chip, cell, repetition, epoch]``.
    """

    bits: np.ndarray
    v_out: Optional[np.ndarray] = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 4:
            raise ValueError("bits must be indexed (chip, cell, repetition, epoch)")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits.astype(np.int8, copy=False))
        if self.v_out is not None and np.shape(self.v_out) != bits.shape:
            raise ValueError("v_out must have the same shape as bits")

    @classmethod
    def from_bits(cls, bits, v_out=None) -> "ResponseMatrix":
        """Pad lower-rank input (chip, cell[, repetition[, epoch]]) with unit axes."""
        bits = np.asarray(bits)
        while bits.ndim < 4:
            bits = bits[..., None]
        if v_out is not None:
            v_out = np.asarray(v_out, dtype=float).reshape(bits.shape)
        return cls(bits, v_out)

    @property
    def n_chips(self):
        return self.bits.shape[0]

    @property
    def n_cells(self):
        return self.bits.shape[1]

    @property
    def n_repetitions(self):
        return self.bits.shape[2]

    @property
    def n_epochs(self):
        return self.bits.shape[3]


def _reference(m: ResponseMatrix) -> np.ndarray:
    if m.bits.size == 0:
        raise ValueError("empty response matrix")
    return m.bits[:, :, 0, 0]


def uniformity(m: ResponseMatrix) -> float:
    """Fraction of ones over all chips and cells (epoch 0, repetition 0)."""
    ref = _reference(m)
    return int(ref.sum()) / ref.size


def reliability(m: ResponseMatrix) -> float:
    """
    One minus the mean intra-cell bit-error rate.

    Repetition 0 is the enrolled reference. For each (chip, cell, epoch) the error
    rate is the share of all repetitions that disagree with it.
    """
    if m.n_repetitions < 2:
        raise ValueError("reliability needs at least 2 repetitions")
    ref = m.bits[:, :, :1, :]
    errors = int(np.count_nonzero(m.bits != ref))
    return 1.0 - errors / m.bits.size


def bit_errors(m: ResponseMatrix) -> int:
    return int(np.count_nonzero(m.bits != m.bits[:, :, :1, :]))


def uniqueness(m: ResponseMatrix) -> float:
    """Mean pairwise normalized Hamming distance between chips' epoch-0 responses."""
    if m.n_chips < 2:
        raise ValueError("uniqueness needs at least 2 chips")
    ref = _reference(m).astype(np.int64)
    c = m.n_chips
    ones = ref.sum(axis=0)
    # each cell contributes ones * zeros differing chip pairs
    differing = int((ones * (c - ones)).sum())
    pairs = c * (c - 1) // 2
    return differing / (pairs * m.n_cells)


def bit_aliasing(m: ResponseMatrix) -> np.ndarray:
    """Per-cell fraction of ones across chips (epoch 0, repetition 0)."""
    ref = _reference(m)
    return ref.sum(axis=0) / m.n_chips


def reconfig_distance(m: ResponseMatrix) -> float:
    """Mean normalized Hamming distance between consecutive epochs, per chip (repetition 0)."""
    if m.n_epochs < 2:
        raise ValueError("reconfig_distance needs at least 2 epochs")
    b = m.bits[:, :, 0, :]
    flips = int(np.count_nonzero(b[:, :, 1:] != b[:, :, :-1]))
    return flips / (m.n_chips * m.n_cells * (m.n_epochs - 1))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    middle_band_count: int
    total: int

    @property
    def middle_band_fraction(self) -> float:
        return self.middle_band_count / self.total if self.total else 0.0

    def rows(self):
        return [
            (float(lo), float(hi), int(n))
            for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts)
        ]

    def to_csv(self, path, header: Optional[dict] = None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
            w = csv.writer(fh)
            w.writerow(("bin_low", "bin_high", "count"))
            for lo, hi, n in self.rows():
                w.writerow((repr(lo), repr(hi), n))


def vout_histogram(v_out, n_bins: int = 50, v_read: float = 1.0) -> Histogram:
    """
    Bin ``V_out`` over ``[0, v_read]`` and count samples inside the forbidden middle
    band (10% to 90% of ``v_read``).

    Accepts a :class:`ResponseMatrix` (its ``v_out`` is used) or a plain array.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if isinstance(v_out, ResponseMatrix):
        if v_out.v_out is None:
            raise ValueError("response matrix carries no v_out values")
        v_out = v_out.v_out
    v = np.ravel(np.asarray(v_out, dtype=float))
    counts, edges = np.histogram(v, bins=n_bins, range=(0.0, v_read))
    lo, hi = MIDDLE_BAND
    middle = int(np.count_nonzero((v > lo * v_read) & (v < hi * v_read)))
    return Histogram(edges, counts, middle, v.size)


@dataclass(frozen=True)
class MetricReport:
    uniformity: float
    reliability: Optional[float]
    uniqueness: Optional[float]
    bit_aliasing: list
    reconfig_distance: Optional[float]
    histogram: dict

    def to_dict(self) -> dict:
        return asdict(self)


def metric_report(m: ResponseMatrix, n_bins: int = 50, v_read: float = 1.0) -> MetricReport:
    """Every metric that the matrix's dimensions allow; the rest are ``None``."""
    hist = vout_histogram(m, n_bins, v_read) if m.v_out is not None else None
    return MetricReport(
        uniformity=uniformity(m),
        reliability=reliability(m) if m.n_repetitions >= 2 else None,
        uniqueness=uniqueness(m) if m.n_chips >= 2 else None,
        bit_aliasing=[float(x) for x in bit_aliasing(m)],
        reconfig_distance=reconfig_distance(m) if m.n_epochs >= 2 else None,
        histogram=None if hist is None else {
            "edges": [float(e) for e in hist.edges],
            "counts": [int(c) for c in hist.counts],
            "middle_band_count": hist.middle_band_count,
            "middle_band_fraction": hist.middle_band_fraction,
        },
    )


@dataclass(frozen=True)
class BaselineResult:
    """Median-split outcome: bit 0 keeps a device in LRS, bit 1 writes it to HRS."""

    bits: np.ndarray
    median: float
    write_back: np.ndarray
    digitize_ops: int
    write_ops: int

    @property
    def extra_ops(self) -> int:
        return self.digitize_ops + self.write_ops

    @property
    def extra_ops_per_device(self) -> float:
        return self.extra_ops / self.bits.size

    @property
    def uniformity(self) -> float:
        return int(self.bits.sum()) / self.bits.size


def median_split_baseline(r_on_samples) -> BaselineResult:
    """
    The reliable median-split PUF used for comparison.

    Devices below the median of the digitized LRS resistances stay in LRS (bit 0)
    and the rest are written to HRS (bit 1). Devices equal to the median go to LRS
    first, in input order, while the lower half still has room, so the split is
    balanced to within one device for any input. Every device costs one
    digitization and one write-back decision.
    """
    r = np.asarray(r_on_samples, dtype=float).ravel()
    if r.size < 2:
        raise ValueError("median split needs at least 2 samples")
    order = np.argsort(r, kind="stable")
    n_lrs = (r.size + 1) // 2
    bits = np.ones(r.size, dtype=np.int8)
    bits[order[:n_lrs]] = 0
    return BaselineResult(
        bits=bits,
        median=float(np.median(r)),
        write_back=np.flatnonzero(bits),
        digitize_ops=int(r.size),
        write_ops=int(r.size),
    )


# the cell extracts its own bit during the ramp: no digitization or write-back
R3PUF_EXTRA_OPS_PER_DEVICE = 0
