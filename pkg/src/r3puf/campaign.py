"""
Seeded Monte-Carlo campaigns: build chips, cycle every cell through its
programming epochs, read it out repeatedly, and collect metrics.

Campaign outputs are a pure function of the configuration (master seed
included). Cells may be split across worker processes; every record is keyed by
(chip, cell, repetition, epoch) and each cell draws only from its own streams, so
the split never changes a result.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .cell import (
    TRACE_COLUMNS,
    CellState,
    DriveProfile,
    Status,
    Trace,
    ambiguous,
    divider_vout,
    extract_many,
    predict_switched_device,
    program_cell,
    reconfigure,
    simulate,
    stack_configs,
    switched_device,
)
from .device import DEFAULT_DT, Target
from .metrics import (
    MetricReport,
    ResponseMatrix,
    bit_errors,
    median_split_baseline,
    metric_report,
    R3PUF_EXTRA_OPS_PER_DEVICE,
)
from .population import ParamDist, Stream, VariationSpec, build_cell, cell_rng

log = logging.getLogger(__name__)

_PARAM_NAMES = ("r_on", "r_off", "v_set", "v_reset", "transistor_length", "transistor_width")


class ConfigError(ValueError):
    pass


class MissingTraceError(KeyError):
    pass


class DegenerateCellError(RuntimeError):
    def __init__(self, cells):
        self.cells = cells
        head = ", ".join(f"chip {c} cell {i} epoch {e} ({s})" for c, i, e, s in cells[:5])
        more = f" and {len(cells) - 5} more" if len(cells) > 5 else ""
        super().__init__(f"degenerate extraction outcome at {head}{more}")


@dataclass(frozen=True)
class CampaignConfig:
    variation: VariationSpec = field(default_factory=VariationSpec)
    chips: int = 1
    cells_per_chip: int = 15_000
    readout_repetitions: int = 100
    reconfig_epochs: int = 5
    master_seed: int = 2017
    noise_sigma: float = 0.0
    output_dir: Optional[str] = None
    trace_cells: tuple = ()
    dt: float = DEFAULT_DT
    scheme: str = "euler"
    extract_peak: float = 2.5
    extract_ramp_time: float = 3e-3
    extract_hold_time: float = 1e-4
    reconfig_peak: float = -2.5
    reconfig_ramp_time: float = 1e-3
    readout_voltage: float = 1.0
    transient_reconfig: bool = False
    n_bins: int = 50

    def __post_init__(self):
        for name in ("chips", "cells_per_chip", "readout_repetitions", "reconfig_epochs"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.scheme not in ("euler", "rk4"):
            raise ConfigError(f"scheme must be 'euler' or 'rk4', got {self.scheme!r}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        cells = tuple((int(c), int(i)) for c, i in self.trace_cells)
        for c, i in cells:
            if not (0 <= c < self.chips and 0 <= i < self.cells_per_chip):
                raise ConfigError(f"trace cell {c}:{i} is outside the campaign")
        object.__setattr__(self, "trace_cells", cells)

    @property
    def extract_profile(self) -> DriveProfile:
        return DriveProfile.ramp(self.extract_peak, self.extract_ramp_time, self.extract_hold_time, self.dt)

    @property
    def reconfig_profile(self) -> DriveProfile:
        return DriveProfile.ramp(self.reconfig_peak, self.reconfig_ramp_time, 0.0, self.dt)

    def cell_kwargs(self) -> dict:
        return dict(
            extract_profile=self.extract_profile,
            reconfig_profile=self.reconfig_profile,
            readout_voltage=self.readout_voltage,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trace_cells"] = [f"{c}:{i}" for c, i in self.trace_cells]
        return d

    def content_hash(self) -> str:
        """sha256 over every setting that can change a result."""
        d = self.to_dict()
        for key in ("output_dir", "trace_cells"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _param_from(raw, default: ParamDist, name: str) -> ParamDist:
    if not isinstance(raw, dict):
        raise ConfigError(f"variation.{name} must be a mapping with mean/rel_std/dist")
    unknown = set(raw) - {"mean", "rel_std", "dist"}
    if unknown:
        raise ConfigError(f"unknown keys in variation.{name}: {sorted(unknown)}")
    try:
        return ParamDist(
            float(raw.get("mean", default.mean)),
            float(raw.get("rel_std", default.rel_std)),
            str(raw.get("dist", default.dist)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"variation.{name}: {exc}") from exc


def variation_from_dict(raw: Optional[dict]) -> VariationSpec:
    raw = dict(raw or {})
    base = VariationSpec()
    kwargs = {}
    for name in _PARAM_NAMES:
        if name in raw:
            kwargs[name] = _param_from(raw.pop(name), getattr(base, name), name)
    scalar_names = {f.name for f in fields(VariationSpec)} - set(_PARAM_NAMES)
    for key, value in raw.items():
        if key not in scalar_names:
            raise ConfigError(f"unknown variation key {key!r}")
        try:
            kwargs[key] = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"variation.{key} must be a number") from exc
    try:
        return VariationSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_cell_ref(text: str) -> tuple:
    try:
        chip, cell = str(text).split(":")
        return int(chip), int(cell)
    except ValueError as exc:
        raise ConfigError(f"cell reference must look like CHIP:CELL, got {text!r}") from exc


_INT_KEYS = {"chips", "cells_per_chip", "readout_repetitions", "reconfig_epochs", "master_seed", "n_bins"}
_BOOL_KEYS = {"transient_reconfig"}
_STR_KEYS = {"scheme", "output_dir"}


def config_from_dict(raw: dict) -> CampaignConfig:
    """
    Build a config from the nested mapping layout of the config file.

    Top-level sections are ``campaign``, ``simulation`` and ``variation``; keys of
    the first two map onto :class:`CampaignConfig` fields.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    raw = dict(raw)
    unknown = set(raw) - {"campaign", "simulation", "variation"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    flat = {}
    for section in ("campaign", "simulation"):
        flat.update(raw.get(section) or {})
    known = {f.name for f in fields(CampaignConfig)} - {"variation"}
    kwargs = {}
    for key, value in flat.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _INT_KEYS:
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError
                kwargs[key] = int(value)
            elif key in _BOOL_KEYS:
                kwargs[key] = bool(value)
            elif key in _STR_KEYS:
                kwargs[key] = None if value is None else str(value)
            elif key == "trace_cells":
                kwargs[key] = tuple(parse_cell_ref(v) for v in (value or ()))
            else:
                kwargs[key] = float(value)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    kwargs["variation"] = variation_from_dict(raw.get("variation"))
    try:
        return CampaignConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> CampaignConfig:
    """Read a YAML campaign file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw or {})


def config_to_dict(config: CampaignConfig) -> dict:
    """Inverse of :func:`config_from_dict`."""
    d = config.to_dict()
    variation = d.pop("variation")
    sim_keys = {
        "dt", "scheme", "extract_peak", "extract_ramp_time", "extract_hold_time",
        "reconfig_peak", "reconfig_ramp_time", "readout_voltage", "transient_reconfig", "n_bins",
    }
    return {
        "campaign": {k: v for k, v in d.items() if k not in sim_keys},
        "simulation": {k: v for k, v in d.items() if k in sim_keys},
        "variation": variation,
    }


def _chunk_worker(args):
    config, start, stop = args
    n = config.cells_per_chip
    coords = [divmod(k, n) for k in range(start, stop)]
    return _simulate_cells(config, coords)


def _simulate_cells(config: CampaignConfig, coords: list) -> dict:
    """Simulate the listed ``(chip, cell)`` pairs as one lock-step batch."""
    stats = Counter()
    kw = config.cell_kwargs()
    seed = config.master_seed
    batch = stack_configs([build_cell(config.variation, seed, c, i, stats, **kw) for c, i in coords])
    n, reps, epochs = len(coords), config.readout_repetitions, config.reconfig_epochs
    out = {
        "bits": np.empty((n, reps, epochs), dtype=np.int8),
        "v_out": np.empty((n, reps, epochs)),
        "v_clean": np.empty((n, epochs)),
        "status": np.empty((n, epochs), dtype=np.int8),
        "switched": np.empty((n, epochs), dtype=np.int8),
        "predicted": np.empty((n, epochs), dtype=np.int8),
        "near_tie": np.empty((n, epochs), dtype=bool),
        "contested": np.empty((n, epochs), dtype=bool),
        "ambiguous": np.empty((n, epochs), dtype=bool),
        "r_on_cycle": np.empty((n, epochs, 2)),
        "vth": np.asarray(batch.inverter_vth, dtype=float),
        "v_reset": np.stack([batch.m1.v_reset, batch.m2.v_reset], axis=-1),
    }
    state = CellState.fresh(batch)
    for e in range(epochs):
        rngs = [cell_rng(seed, c, i, Stream.C2C, e) for c, i in coords]
        if e == 0:
            # forming: the first SET of fresh devices
            state = program_cell(state, batch, Target.SET, rngs)
        else:
            state = reconfigure(state, batch, rngs, transient=config.transient_reconfig)
        out["r_on_cycle"][:, e] = np.stack([state.s1.r_on_cycle, state.s2.r_on_cycle], axis=-1)
        out["predicted"][:, e], out["near_tie"][:, e] = predict_switched_device(state, batch)
        state, status, tr = extract_many(state, batch, scheme=config.scheme)
        out["status"][:, e] = status
        out["switched"][:, e] = switched_device(state)
        out["contested"][:, e] = (tr.cross_step1 >= 0) & (tr.cross_step2 >= 0)
        v_clean = divider_vout(state, config.readout_voltage)
        out["v_clean"][:, e] = v_clean
        out["ambiguous"][:, e] = ambiguous(v_clean, batch.inverter_vth)
        if config.noise_sigma > 0:
            noise = np.stack([
                cell_rng(seed, c, i, Stream.NOISE, e).normal(0.0, config.noise_sigma, reps) for c, i in coords
            ])
        else:
            noise = np.zeros((n, reps))
        v_meas = v_clean[:, None] + noise
        out["v_out"][:, :, e] = v_meas
        out["bits"][:, :, e] = v_meas < out["vth"][:, None]
    out["stats"] = dict(stats)
    return out


def _merge(parts: list) -> dict:
    merged = {k: np.concatenate([p[k] for p in parts]) for k in parts[0] if k != "stats"}
    stats = Counter()
    for p in parts:
        stats.update(p["stats"])
    merged["stats"] = stats
    return merged


@dataclass
class CampaignResult:
    config: CampaignConfig
    config_hash: str
    matrix: ResponseMatrix
    report: MetricReport
    v_clean: np.ndarray
    inverter_vth: np.ndarray
    v_reset: np.ndarray
    r_on_cycle: np.ndarray
    status: np.ndarray
    switched: np.ndarray
    predicted: np.ndarray
    near_tie: np.ndarray
    contested: np.ndarray
    ambiguous: np.ndarray
    stats: dict
    traces: dict = field(default_factory=dict)

    @property
    def degenerate_cells(self) -> list:
        coords = np.argwhere(self.status != Status.OK)
        return [(int(c), int(i), int(e), Status(int(self.status[c, i, e])).name) for c, i, e in coords]

    def one_switch_fraction(self) -> float:
        """Share of non-tie cell extractions that ended with exactly one device switched."""
        eligible = self.status != Status.TIE
        return float(np.count_nonzero(self.status[eligible] == Status.OK) / max(np.count_nonzero(eligible), 1))

    def oracle_agreement(self) -> float:
        ok = self.status == Status.OK
        return float(np.count_nonzero((self.switched == self.predicted) & ok) / max(np.count_nonzero(ok), 1))

    @property
    def flagged_near_ties(self) -> np.ndarray:
        """Small threshold margin, or both devices crossed their threshold during extraction."""
        return self.near_tie | self.contested

    def unflagged_oracle_misses(self) -> int:
        ok = self.status == Status.OK
        return int(np.count_nonzero(ok & (self.switched != self.predicted) & ~self.flagged_near_ties))

    def diagnostics(self) -> dict:
        counts = Counter(Status(int(s)).name for s in self.status.ravel())
        return {
            "status_counts": dict(sorted(counts.items())),
            "one_switch_fraction": self.one_switch_fraction(),
            "oracle_agreement": self.oracle_agreement(),
            "oracle_misses": int(np.count_nonzero((self.switched != self.predicted) & (self.status == Status.OK))),
            "unflagged_oracle_misses": self.unflagged_oracle_misses(),
            "near_tie_cells": int(np.count_nonzero(self.near_tie)),
            "contested_cells": int(np.count_nonzero(self.contested)),
            "ambiguous_readouts": int(np.count_nonzero(self.ambiguous)),
            "bit_errors": bit_errors(self.matrix),
            "sampler": dict(sorted(self.stats.items())),
        }

    def to_json(self) -> str:
        doc = {
            "meta": {"config_hash": self.config_hash, "master_seed": self.config.master_seed},
            "config": config_to_dict(self.config),
            "metrics": self.report.to_dict(),
            "diagnostics": self.diagnostics(),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @property
    def header(self) -> dict:
        return {"config_hash": self.config_hash, "master_seed": self.config.master_seed}


def run_campaign(
    config: CampaignConfig,
    jobs: int = 1,
    chunk_size: Optional[int] = None,
    write: bool = True,
    strict: bool = False,
) -> CampaignResult:
    """
    Run the full pipeline: build, form, then per epoch reconfigure, extract and read out.

    Files are written to ``config.output_dir`` when it is set and ``write`` is
    true. With ``strict`` a :class:`DegenerateCellError` listing cell coordinates
    is raised after the outputs are written.
    """
    n = config.cells_per_chip
    total = config.chips * n
    if chunk_size is None:
        chunk_size = -(-total // max(jobs, 1))
    tasks = [(config, start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]
    log.info("campaign %s: %d chip(s) x %d cells, %d epoch(s), %d task(s)",
             config.content_hash()[:12], config.chips, n, config.reconfig_epochs, len(tasks))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_chunk_worker, tasks))
    else:
        parts = [_chunk_worker(t) for t in tasks]
    merged = _merge(parts)
    stats = merged.pop("stats")

    def stacked(key):
        # flat cell order is chip-major
        a = merged[key]
        return a.reshape((config.chips, n) + a.shape[1:])

    bits = stacked("bits")
    v_out = stacked("v_out")
    matrix = ResponseMatrix(bits, v_out)
    # bimodality is judged on the noiseless midpoint voltage
    hist_matrix = ResponseMatrix(bits[:, :, :1, :], stacked("v_clean")[:, :, None, :])
    report = metric_report(matrix, config.n_bins, config.readout_voltage)
    report = replace(report, histogram=metric_report(hist_matrix, config.n_bins, config.readout_voltage).histogram)
    result = CampaignResult(
        config=config,
        config_hash=config.content_hash(),
        matrix=matrix,
        report=report,
        v_clean=stacked("v_clean"),
        inverter_vth=stacked("vth"),
        v_reset=stacked("v_reset"),
        r_on_cycle=stacked("r_on_cycle"),
        status=stacked("status"),
        switched=stacked("switched"),
        predicted=stacked("predicted"),
        near_tie=stacked("near_tie"),
        contested=stacked("contested"),
        ambiguous=stacked("ambiguous"),
        stats=dict(stats),
    )
    for chip, cell in config.trace_cells:
        result.traces[(chip, cell)] = cell_trace(config, chip, cell)
    if write and config.output_dir:
        write_outputs(result, config.output_dir)
    if strict and result.degenerate_cells:
        raise DegenerateCellError(result.degenerate_cells)
    return result


def replay_cell(config: CampaignConfig, chip: int, cell: int, epoch: int = 0):
    """Rebuild one cell and its programmed (pre-extraction) state for ``epoch``."""
    cfg = build_cell(config.variation, config.master_seed, chip, cell, **config.cell_kwargs())
    state = CellState.fresh(cfg)
    for e in range(epoch + 1):
        rng = cell_rng(config.master_seed, chip, cell, Stream.C2C, e)
        state = program_cell(state, cfg, Target.SET, rng)
    return cfg, state


def cell_trace(config: CampaignConfig, chip: int, cell: int, epoch: int = 0, readout_time: float = 1e-5) -> Trace:
    """
    Full waveform of one cell: the extraction ramp followed by a readout hold.

    The readout segment keeps ``V_in`` at the readout voltage, so its ``V_out``
    shows the digitized state. The drive steps down at the junction, so the
    junction time appears twice (once at each voltage).
    """
    cfg, state = replay_cell(config, chip, cell, epoch)
    tr = simulate(state, cfg, cfg.extract_profile, scheme=config.scheme, record=True)
    read_profile = DriveProfile(((0.0, cfg.readout_voltage), (readout_time, cfg.readout_voltage)), config.dt)
    rd = simulate(tr.state, cfg, read_profile, record=True)
    offset = cfg.extract_profile.duration
    parts = [getattr(tr.trace, c) for c in TRACE_COLUMNS]
    parts2 = [getattr(rd.trace, c) for c in TRACE_COLUMNS]
    parts2[0] = parts2[0] + offset
    return Trace(*(np.concatenate([a, b]) for a, b in zip(parts, parts2)))


def write_trace_csv(trace: Trace, path, header: Optional[dict] = None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace.as_array():
            w.writerow([repr(float(x)) for x in row])


def export_trace(result: CampaignResult, chip: int, cell: int, path=None) -> Path:
    """Write a recorded cell trace as CSV (t, v_in, v_out, omega1, omega2, r1, r2)."""
    try:
        trace = result.traces[(chip, cell)]
    except KeyError:
        raise MissingTraceError(f"no trace recorded for chip {chip} cell {cell}") from None
    if path is None:
        path = Path(result.config.output_dir or ".") / f"trace_{chip}_{cell}.csv"
    write_trace_csv(trace, path, result.header)
    return Path(path)


def write_responses_csv(result: CampaignResult, path):
    """One row per (chip, cell, epoch): enrolled bit, noiseless V_out, threshold, flip count."""
    m = result.matrix
    flips = np.count_nonzero(m.bits != m.bits[:, :, :1, :], axis=2)
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in result.header.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(("chip", "cell", "epoch", "bit", "v_out", "inverter_vth", "flips", "status"))
        for c in range(m.n_chips):
            for i in range(m.n_cells):
                for e in range(m.n_epochs):
                    w.writerow((
                        c, i, e, int(m.bits[c, i, 0, e]), repr(float(result.v_clean[c, i, e])),
                        repr(float(result.inverter_vth[c, i])), int(flips[c, i, e]),
                        Status(int(result.status[c, i, e])).name,
                    ))


def write_outputs(result: CampaignResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "responses": out / "responses.csv",
        "histogram": out / "vout_hist.csv",
    }
    paths["report"].write_text(result.to_json())
    write_responses_csv(result, paths["responses"])
    hist = result.report.histogram
    with open(paths["histogram"], "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in result.header.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(("bin_low", "bin_high", "count"))
        edges = hist["edges"]
        for lo, hi, n in zip(edges[:-1], edges[1:], hist["counts"]):
            w.writerow((repr(lo), repr(hi), n))
    for chip, cell in result.traces:
        paths[f"trace_{chip}_{cell}"] = export_trace(result, chip, cell, out / f"trace_{chip}_{cell}.csv")
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return paths


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: object
    target: str


def acceptance_checks(result: CampaignResult) -> list:
    """Threshold gate over a finished campaign; only checks its dimensions allow are run."""
    cfg = result.config
    r = result.report
    checks = [
        Check("uniformity", 0.485 <= r.uniformity <= 0.515, r.uniformity, "[0.485, 0.515]"),
        Check("bimodal_vout", r.histogram["middle_band_count"] == 0, r.histogram["middle_band_count"],
              "middle-band count == 0"),
        Check("one_switch", result.one_switch_fraction() == 1.0, result.one_switch_fraction(),
              "== 1.0 of non-tie cells"),
        Check("oracle_agreement",
              result.oracle_agreement() >= 0.999 and result.unflagged_oracle_misses() == 0,
              result.oracle_agreement(), ">= 0.999, misses flagged as near-ties"),
    ]
    if cfg.readout_repetitions >= 2 and cfg.noise_sigma == 0:
        errors = bit_errors(result.matrix)
        checks.append(Check("reliability", errors == 0, errors, "bit errors == 0"))
    if cfg.reconfig_epochs >= 2:
        d = r.reconfig_distance
        if cfg.variation.c2c_rel_std > 0:
            checks.append(Check("reconfig_distance", 0.48 <= d <= 0.52, d, "[0.48, 0.52]"))
        else:
            checks.append(Check("reconfig_distance", d == 0.0, d, "== 0 without C2C"))
    return checks


def baseline_comparison(config: CampaignConfig) -> dict:
    """
    Median-split baseline on the same sampled devices (LRS resistance after forming).
    """
    chips = []
    for chip in range(config.chips):
        r_on = []
        for cell in range(config.cells_per_chip):
            _, state = replay_cell(config, chip, cell, 0)
            r_on += [state.s1.r_on_cycle, state.s2.r_on_cycle]
        b = median_split_baseline(r_on)
        ones = int(b.bits.sum())
        chips.append({
            "chip": chip,
            "devices": int(b.bits.size),
            "ones": ones,
            "zeros": int(b.bits.size - ones),
            "uniformity": b.uniformity,
            "median_r_on": b.median,
            "extra_ops": b.extra_ops,
            "extra_ops_per_device": b.extra_ops_per_device,
        })
    return {
        "meta": {"config_hash": config.content_hash(), "master_seed": config.master_seed},
        "baseline": chips,
        "r3puf_extra_ops_per_device": R3PUF_EXTRA_OPS_PER_DEVICE,
    }
