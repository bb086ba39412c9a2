import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srp_locate.dsp import CrossCorrelation
from srp_locate.geometry import DevicePlacement, Room, make_grid, tdoa
from srp_locate.roomsim import SimConfig, propagate, sample_scenario, simulate_rir, simulate_sample, synthetic_speech
from srp_locate.srp import (
    LikelihoodGrid,
    estimate_source,
    read_map_csv,
    required_lag,
    srp_global,
    srp_pairwise,
    srp_pairwise_maps,
    write_map,
)

ROOM = Room((6.0, 5.0, 3.0))
GRID = make_grid(ROOM)


def delta_corr(max_lag=200):
    values = np.zeros(2 * max_lag + 1)
    values[max_lag] = 1.0
    return CrossCorrelation(values, 16000)


def anechoic_scene(n_mics, index=0, seed=5):
    cfg = SimConfig(n_mics=n_mics, reverberant=False, snr_range_db=(30.0, 30.0), source_height=1.5)
    sample, signals = simulate_sample(cfg, "test", index, seed)
    return sample, signals


def test_delta_correlation_interpolation():
    p_i, p_j = np.array([1.0, 1.0, 1.5]), np.array([4.0, 3.0, 1.5])
    lmap = srp_pairwise(delta_corr(), p_i, p_j, GRID, mode="point")
    lags = tdoa(GRID.points, p_i, p_j) * 16000
    near = np.abs(lags) < 1
    np.testing.assert_allclose(lmap.values[near], 1 - np.abs(lags[near]), atol=1e-12)
    assert np.all(lmap.values[near] > 0)
    assert np.all(lmap.values[~near] == 0)


def test_delta_correlation_exact_zero_tdoa_gives_one():
    # the perpendicular bisector x = 3 holds cell centres when the grid is symmetric about it
    grid = make_grid(Room((6.0, 5.0, 3.0)), 25)
    p_i, p_j = np.array([2.0, 2.5, 1.5]), np.array([4.0, 2.5, 1.5])
    lmap = srp_pairwise(delta_corr(), p_i, p_j, grid, mode="point")
    assert lmap.values[:, 12].tolist() == [1.0] * 25


@pytest.mark.parametrize("mode", ["point", "cell"])
def test_zero_correlation_gives_zero_map(mode):
    corr = CrossCorrelation(np.zeros(401), 16000)
    lmap = srp_pairwise(corr, (1, 1, 1.5), (4, 3, 1.5), GRID, mode=mode)
    assert np.all(lmap.values == 0)


def test_insufficient_lag_names_requirement():
    p_i, p_j = (0.5, 0.5, 1.5), (5.5, 4.5, 1.5)
    need = required_lag(p_i, p_j)
    with pytest.raises(ValueError, match=r"requires \d+"):
        srp_pairwise(delta_corr(5), p_i, p_j, GRID)
    srp_pairwise(delta_corr(need), p_i, p_j, GRID)


def test_cell_mode_dominates_point_mode():
    sample, signals = anechoic_scene(2)
    point = srp_global(signals, sample.placement, make_grid(sample.room), mode="point").values
    cell = srp_global(signals, sample.placement, make_grid(sample.room), mode="cell").values
    assert np.all(cell >= point - 1e-12)


def test_source_cell_near_maximum():
    # source moved onto a cell centre, so the point-mode map is sampled at its exact TDOA
    cfg = SimConfig(n_mics=2, reverberant=False, snr_range_db=(30.0, 30.0), source_height=1.5)
    rng = np.random.default_rng(11)
    room, placement = sample_scenario(cfg, rng)
    grid = make_grid(room)
    row, col = grid.cell_of(placement.source)
    src = np.array([*grid.center(row, col), 1.5])
    placement = DevicePlacement(src, placement.mics)
    s = synthetic_speech(8000, 16000, rng)
    signals = [propagate(s, simulate_rir(room, src, m, 0), 30.0, rng) for m in placement.mics]
    lmap = srp_global(signals, placement, grid, mode="point").values
    assert lmap[row, col] >= 0.95 * lmap.max()


def test_global_single_pair_and_additivity():
    sample, signals = anechoic_scene(3)
    grid = make_grid(sample.room)
    maps = srp_pairwise_maps(signals, sample.placement, grid)
    total = srp_global(signals, sample.placement, grid)
    np.testing.assert_array_equal(total.values, maps[0].values + maps[1].values + maps[2].values)
    two = DevicePlacement(sample.placement.source, sample.placement.mics[:2])
    np.testing.assert_array_equal(srp_global(signals[:2], two, grid).values, maps[0].values)


def test_global_needs_two_mics():
    sample, signals = anechoic_scene(2)
    one = DevicePlacement(sample.placement.source, sample.placement.mics[:1])
    with pytest.raises(ValueError, match="at least 2"):
        srp_global(signals[:1], one, GRID)


@settings(max_examples=10, deadline=None)
@given(gains=st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=4), index=st.integers(0, 50))
def test_gain_invariance(gains, index):
    sample, signals = anechoic_scene(4, index)
    grid = make_grid(sample.room)
    base = srp_global(signals, sample.placement, grid).values
    scaled = srp_global(signals * np.array(gains)[:, None], sample.placement, grid).values
    np.testing.assert_allclose(scaled, base, atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(perm=st.permutations(range(4)), index=st.integers(0, 50))
def test_permutation_invariance(perm, index):
    sample, signals = anechoic_scene(4, index)
    grid = make_grid(sample.room)
    base = srp_global(signals, sample.placement, grid).values
    pl = DevicePlacement(sample.placement.source, sample.placement.mics[list(perm)])
    np.testing.assert_allclose(srp_global(signals[list(perm)], pl, grid).values, base, atol=1e-9)


def test_estimate_single_peak():
    values = np.zeros((25, 25))
    values[3, 7] = 1.0
    point, cell = estimate_source(LikelihoodGrid(values, GRID))
    assert cell == (3, 7)
    np.testing.assert_allclose(point, GRID.center(3, 7))


def test_estimate_tie_break():
    point, cell = estimate_source(LikelihoodGrid(np.ones((25, 25)), GRID))
    assert cell == (0, 0)
    values = np.zeros((25, 25))
    values[4, 2] = values[2, 9] = 2.0
    assert estimate_source(LikelihoodGrid(values, GRID))[1] == (2, 9)


def test_estimate_nan():
    values = np.zeros((25, 25))
    values[1, 1] = np.nan
    with pytest.raises(ValueError, match="NaN"):
        estimate_source(LikelihoodGrid(values, GRID))


def test_anechoic_estimate_close():
    sample, signals = anechoic_scene(6, 3)
    grid = make_grid(sample.room)
    _, (row, col) = estimate_source(srp_global(signals, sample.placement, grid))
    true_row, true_col = grid.cell_of(sample.placement.source)
    assert max(abs(row - true_row), abs(col - true_col)) <= 1


def test_grid_shape_checked():
    with pytest.raises(ValueError):
        LikelihoodGrid(np.zeros((5, 5)), GRID)


def test_normalized_keeps_argmax():
    values = np.random.default_rng(0).standard_normal((25, 25))
    lmap = LikelihoodGrid(values, GRID)
    norm = lmap.normalized()
    assert norm.min() == 0 and norm.max() == 1
    assert np.argmax(norm) == np.argmax(values)
    assert np.all(LikelihoodGrid(np.full((25, 25), 3.0), GRID).normalized() == 0)


def test_csv_roundtrip(tmp_path):
    values = np.random.default_rng(1).standard_normal((25, 25))
    write_map(values, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert len(lines) == 25 and all(len(line.split(",")) == 25 for line in lines)
    np.testing.assert_array_equal(read_map_csv(tmp_path / "m.csv"), values)


def test_pgm_layout(tmp_path):
    values = np.zeros((25, 25))
    values[0, 0], values[24, 3] = -1.0, 1.0
    write_map(values, tmp_path / "m.pgm")
    blob = (tmp_path / "m.pgm").read_bytes()
    header = b"P5\n25 25\n255\n"
    assert blob.startswith(header)
    img = np.frombuffer(blob[len(header):], dtype=np.uint8).reshape(25, 25)
    # largest y on top
    assert img[0, 3] == 255 and img[24, 0] == 0
    assert img[12, 12] == 128
