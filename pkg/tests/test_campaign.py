import csv
import json

import numpy as np
import pytest
import yaml

from oracles import expected_reconfig_distance, noisy_reliability
from r3puf.campaign import (
    CampaignConfig,
    ConfigError,
    DegenerateCellError,
    MissingTraceError,
    acceptance_checks,
    baseline_comparison,
    cell_trace,
    config_from_dict,
    config_to_dict,
    export_trace,
    load_config,
    parse_cell_ref,
    replay_cell,
    run_campaign,
)
from r3puf.cell import Status
from r3puf.population import VariationSpec


def small(**kw):
    base = dict(
        chips=2, cells_per_chip=30, readout_repetitions=4, reconfig_epochs=3,
        extract_ramp_time=1e-3, extract_hold_time=1e-5, master_seed=11,
    )
    base.update(kw)
    return CampaignConfig(**base)


@pytest.fixture(scope="module")
def result():
    return run_campaign(small(), write=False)


def test_shapes(result):
    assert result.matrix.bits.shape == (2, 30, 4, 3)
    assert result.v_clean.shape == (2, 30, 3)
    assert result.r_on_cycle.shape == (2, 30, 3, 2)
    assert np.all(result.status == Status.OK)


def test_byte_identical_reruns(result):
    assert run_campaign(small(), write=False).to_json() == result.to_json()


def test_parallel_and_chunked_runs_match(result):
    par = run_campaign(small(), jobs=2, write=False)
    chunked = run_campaign(small(), chunk_size=7, write=False)
    for other in (par, chunked):
        np.testing.assert_array_equal(other.matrix.bits, result.matrix.bits)
        np.testing.assert_array_equal(other.v_clean, result.v_clean)
        assert other.to_json() == result.to_json()


def test_cells_do_not_depend_on_campaign_size(result):
    fewer = run_campaign(small(cells_per_chip=10), write=False)
    np.testing.assert_array_equal(fewer.matrix.bits, result.matrix.bits[:, :10])


def test_replay_reproduces_campaign_draws(result):
    for chip, cell, epoch in ((0, 3, 0), (1, 29, 2)):
        _, state = replay_cell(result.config, chip, cell, epoch)
        assert state.s1.r_on_cycle == result.r_on_cycle[chip, cell, epoch, 0]
        assert state.s2.r_on_cycle == result.r_on_cycle[chip, cell, epoch, 1]


def test_bits_follow_switched_device(result):
    # M1 in HRS pulls the midpoint low, which the inverter reads as 1
    np.testing.assert_array_equal(result.matrix.bits[:, :, 0, :] == 1, result.switched == 1)


def test_seed_changes_results(result):
    other = run_campaign(small(master_seed=12), write=False)
    assert not np.array_equal(other.matrix.bits, result.matrix.bits)
    assert other.config_hash != result.config_hash


def test_reconfig_distance_near_resampling_oracle():
    res = run_campaign(small(chips=1, cells_per_chip=400, readout_repetitions=2, reconfig_epochs=6), write=False)
    cfg = res.config
    means = [replay_cell(cfg, 0, i, 0)[0] for i in range(cfg.cells_per_chip)]
    m1 = np.array([c.m1.r_on_mean for c in means])
    m2 = np.array([c.m2.r_on_mean for c in means])
    expected = expected_reconfig_distance(m1, m2, res.v_reset[0, :, 0], res.v_reset[0, :, 1], 0.05)
    # 2000 epoch pairs, binomial std about 0.01
    assert res.report.reconfig_distance == pytest.approx(expected, abs=0.04)


def test_without_c2c_epochs_repeat():
    spec = VariationSpec(c2c_rel_std=0.0)
    res = run_campaign(small(variation=spec), write=False)
    assert res.report.reconfig_distance == 0.0


def test_noise_reliability_near_oracle():
    res = run_campaign(small(chips=1, cells_per_chip=200, readout_repetitions=50,
                             reconfig_epochs=1, noise_sigma=0.25), write=False)
    expected = noisy_reliability(res.v_clean, res.inverter_vth[..., None], 0.25, 50)
    assert res.report.reliability == pytest.approx(expected, abs=0.01)
    assert res.report.reliability < 1.0


def test_noise_free_histogram_is_bimodal(result):
    assert result.report.histogram["middle_band_count"] == 0
    assert sum(result.report.histogram["counts"]) == 2 * 30 * 3


def test_degenerate_cells_are_reported_with_coordinates():
    cfg = small(variation=VariationSpec.zero(), chips=1, cells_per_chip=3, reconfig_epochs=1)
    res = run_campaign(cfg, write=False)
    assert res.degenerate_cells == [(0, i, 0, "TIE") for i in range(3)]
    with pytest.raises(DegenerateCellError, match="chip 0 cell 0 epoch 0"):
        run_campaign(cfg, write=False, strict=True)


def test_acceptance_checks_shape(result):
    names = [c.name for c in acceptance_checks(result)]
    assert names == ["uniformity", "bimodal_vout", "one_switch", "oracle_agreement", "reliability",
                     "reconfig_distance"]


def test_write_outputs(tmp_path):
    cfg = small(output_dir=str(tmp_path), trace_cells=((1, 4),))
    res = run_campaign(cfg)
    header = f"# config_hash={res.config_hash} master_seed=11"
    for name in ("report.json", "responses.csv", "vout_hist.csv", "trace_1_4.csv"):
        assert (tmp_path / name).exists()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["meta"] == {"config_hash": res.config_hash, "master_seed": 11}
    for name in ("responses.csv", "vout_hist.csv", "trace_1_4.csv"):
        assert (tmp_path / name).read_text().splitlines()[0] == header
    rows = list(csv.DictReader((tmp_path / "responses.csv").read_text().splitlines()[1:]))
    assert len(rows) == 2 * 30 * 3
    first = rows[0]
    assert (first["chip"], first["cell"], first["epoch"]) == ("0", "0", "0")
    assert int(first["bit"]) == res.matrix.bits[0, 0, 0, 0]
    trace = (tmp_path / "trace_1_4.csv").read_text().splitlines()
    assert trace[1] == "t,v_in,v_out,omega1,omega2,r1,r2"


def test_trace_continues_into_readout():
    cfg = small()
    tr = cell_trace(cfg, 0, 2, readout_time=1e-5)
    step = np.diff(tr.t)
    # the drive steps down to the readout level at one instant, so only that
    # time repeats
    assert np.count_nonzero(step == 0) == 1 and np.all(step >= 0)
    assert tr.v_in[-1] == cfg.readout_voltage
    assert tr.t[-1] == pytest.approx(cfg.extract_profile.duration + 1e-5)


def test_missing_trace(result, tmp_path):
    with pytest.raises(MissingTraceError):
        export_trace(result, 0, 0, tmp_path / "x.csv")


def test_baseline_comparison():
    doc = baseline_comparison(small(cells_per_chip=11))
    assert doc["r3puf_extra_ops_per_device"] == 0
    for chip in doc["baseline"]:
        assert chip["devices"] == 22
        assert abs(chip["ones"] - chip["zeros"]) <= 1
        assert chip["extra_ops_per_device"] > 0


@pytest.mark.parametrize("bad", [
    {"campaign": {"chips": 0}},
    {"campaign": {"cells_per_chip": -3}},
    {"campaign": {"chips": 1.5}},
    {"campaign": {"bogus": 1}},
    {"other": {}},
    {"simulation": {"scheme": "midpoint"}},
    {"simulation": {"dt": "fast"}},
    {"variation": {"r_on": {"mean": 5e5, "rel_std": -1}}},
    {"variation": {"r_on": {"spread": 1}}},
    {"variation": {"nonsense": 1}},
    {"campaign": {"trace_cells": ["0-1"]}},
    {"campaign": {"chips": 1, "trace_cells": ["3:0"]}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_config_round_trip(tmp_path):
    cfg = small(noise_sigma=0.1, trace_cells=((0, 1),))
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(config_to_dict(cfg)))
    assert load_config(path) == cfg


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("campaign: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    notmap = tmp_path / "list.yaml"
    notmap.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(notmap)


def test_hash_ignores_output_location():
    assert small(output_dir="a").content_hash() == small(output_dir="b").content_hash()
    assert small().content_hash() != small(noise_sigma=0.1).content_hash()


def test_parse_cell_ref():
    assert parse_cell_ref("3:14") == (3, 14)
    with pytest.raises(ConfigError):
        parse_cell_ref("3")
