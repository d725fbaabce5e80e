import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from r3puf.metrics import (
    R3PUF_EXTRA_OPS_PER_DEVICE,
    ResponseMatrix,
    bit_aliasing,
    bit_errors,
    median_split_baseline,
    metric_report,
    reconfig_distance,
    reliability,
    uniformity,
    uniqueness,
    vout_histogram,
)

bit_arrays = arrays(
    np.int8,
    st.tuples(st.integers(2, 4), st.integers(1, 6), st.integers(2, 4), st.integers(2, 3)),
    elements=st.integers(0, 1),
)


def test_matrix_validation():
    with pytest.raises(ValueError):
        ResponseMatrix(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ResponseMatrix(np.full((1, 1, 1, 1), 2))
    with pytest.raises(ValueError):
        ResponseMatrix(np.zeros((1, 2, 1, 1)), np.zeros((1, 3, 1, 1)))
    m = ResponseMatrix.from_bits([[1, 0, 1]])
    assert m.bits.shape == (1, 3, 1, 1)


def test_uniformity_counts_reference_bits():
    bits = np.zeros((1, 4, 3, 2), dtype=int)
    bits[0, :3, 0, 0] = 1
    bits[0, :, 1:, :] = 1  # later repetitions and epochs are ignored
    assert uniformity(ResponseMatrix(bits)) == 0.75


def test_reliability_alternating_cell_is_half():
    bits = np.zeros((1, 1, 4, 1), dtype=int)
    bits[0, 0, 1::2, 0] = 1
    assert reliability(ResponseMatrix(bits)) == 0.5
    assert bit_errors(ResponseMatrix(bits)) == 2


def test_reliability_needs_repetitions():
    with pytest.raises(ValueError):
        reliability(ResponseMatrix(np.zeros((1, 2, 1, 1))))


@settings(max_examples=60)
@given(bit_arrays)
def test_uniqueness_matches_pairwise_hamming(bits):
    m = ResponseMatrix(bits)
    ref = bits[:, :, 0, 0]
    pairs = list(itertools.combinations(range(ref.shape[0]), 2))
    brute = np.mean([np.mean(ref[a] != ref[b]) for a, b in pairs])
    assert uniqueness(m) == pytest.approx(brute, abs=1e-12)


@settings(max_examples=60)
@given(bit_arrays)
def test_reconfig_distance_matches_loop(bits):
    m = ResponseMatrix(bits)
    c, n, _, e = bits.shape
    total = sum(
        bits[i, j, 0, k] != bits[i, j, 0, k + 1] for i in range(c) for j in range(n) for k in range(e - 1)
    )
    assert reconfig_distance(m) == pytest.approx(total / (c * n * (e - 1)), abs=1e-12)


@settings(max_examples=60)
@given(bit_arrays)
def test_metrics_are_bounded_and_order_free(bits):
    m = ResponseMatrix(bits)
    perm = np.random.default_rng(0).permutation(bits.shape[1])
    shuffled = ResponseMatrix(bits[:, perm])
    for f in (uniformity, reliability, uniqueness, reconfig_distance):
        v = f(m)
        assert 0.0 <= v <= 1.0
        assert f(shuffled) == v
    assert np.all((bit_aliasing(m) >= 0) & (bit_aliasing(m) <= 1))


def test_histogram_middle_band():
    v = np.array([0.0, 0.05, 0.1, 0.5, 0.9, 0.95, 1.0])
    h = vout_histogram(v, n_bins=10)
    assert h.counts.sum() == v.size
    assert h.middle_band_count == 1  # band edges are excluded
    assert h.middle_band_fraction == pytest.approx(1 / 7)


def test_histogram_csv(tmp_path):
    h = vout_histogram(np.array([0.01, 0.99]), n_bins=4)
    path = tmp_path / "h.csv"
    h.to_csv(path, {"master_seed": 1})
    lines = path.read_text().splitlines()
    assert lines[0] == "# master_seed=1"
    assert lines[1] == "bin_low,bin_high,count"
    assert len(lines) == 6


def test_metric_report_skips_what_dimensions_do_not_allow():
    r = metric_report(ResponseMatrix.from_bits([[1, 0, 1, 0]]))
    assert r.uniformity == 0.5
    assert r.reliability is None and r.uniqueness is None and r.reconfig_distance is None
    assert r.histogram is None


@given(arrays(np.float64, st.integers(2, 300), elements=st.sampled_from([1.0, 2.0, 3.0, 5e5, 5e5 + 1])))
def test_baseline_is_balanced_even_with_duplicates(r):
    b = median_split_baseline(r)
    ones = int(b.bits.sum())
    assert abs(ones - (r.size - ones)) <= 1
    assert b.extra_ops_per_device > R3PUF_EXTRA_OPS_PER_DEVICE


@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(1e3, 1e7)))
def test_baseline_low_half_stays_in_lrs(r):
    b = median_split_baseline(r)
    assert b.bits.sum() == r.size // 2
    if np.any(b.bits == 0) and np.any(b.bits == 1):
        assert r[b.bits == 0].max() <= r[b.bits == 1].min()
    np.testing.assert_array_equal(b.write_back, np.flatnonzero(b.bits))


def test_baseline_needs_two_devices():
    with pytest.raises(ValueError):
        median_split_baseline([1.0])


@given(bit_arrays)
def test_complement_uniformity(bits):
    assert uniformity(ResponseMatrix(1 - bits)) == pytest.approx(1 - uniformity(ResponseMatrix(bits)), abs=1e-12)


def test_noise_free_reliability_is_exactly_one():
    bits = np.tile(np.array([0, 1, 1])[None, :, None, None], (2, 1, 10, 3))
    assert reliability(ResponseMatrix(bits)) == 1.0
