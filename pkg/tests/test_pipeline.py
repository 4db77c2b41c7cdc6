import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentsnet.errors import ConfigError, ContainerError, GeometryError, ShapeError, ThresholdSearchError
from momentsnet.kernels import KernelBank, MomentFamily, build_kernel_bank, moment_project
from momentsnet.pipeline import (
    FeatureMap,
    HashedMap,
    Image,
    NetConfig,
    auto_threshold,
    binarize,
    block_geometry,
    block_histogram,
    build_banks,
    extract_batch,
    extract_features,
    extract_patches,
    feature_dim,
    final_maps,
    hash_maps,
    moment_descriptor,
    ones_fraction,
    read_features_binary,
    run_stage,
    unhash,
    write_features_binary,
    write_features_csv,
)

import oracles


def _random_image(seed, shape=(32, 32)):
    return Image(np.random.default_rng(seed).random(shape))


# -- patches ---------------------------------------------------------------------

def test_patch_count_and_centering():
    patches = extract_patches(_random_image(0), 11, 11)
    assert patches.shape == (1024, 11, 11)
    assert np.abs(patches.mean(axis=(1, 2))).max() <= 1e-12


def test_constant_image_gives_zero_patches():
    patches = extract_patches(Image(np.full((9, 7), 0.6)), 3, 3)
    # interior patches are exactly constant; border ones see the zero padding
    interior = patches.reshape(9, 7, 3, 3)[1:-1, 1:-1]
    assert np.abs(interior).max() <= 1e-15


def test_single_bright_pixel_padding_oracle():
    grid = np.zeros((7, 7))
    grid[3, 3] = 1.0
    patches = extract_patches(grid, 3, 3)
    energetic = np.flatnonzero(np.abs(patches).reshape(49, -1).max(axis=1) > 0)
    # brute force: pixel (u, v) anchors a window containing (3, 3) iff |u-3| <= 1 and |v-3| <= 1
    expected = [u * 7 + v for u in range(7) for v in range(7) if abs(u - 3) <= 1 and abs(v - 3) <= 1]
    assert energetic.tolist() == expected


@pytest.mark.parametrize("k1,k2", [(3, 3), (4, 5), (2, 6)])
def test_patches_match_explicit_padding(k1, k2):
    grid = np.random.default_rng(1).random((6, 8))
    top, left = (k1 - 1) // 2, (k2 - 1) // 2
    patches = extract_patches(grid, k1, k2)
    for u in range(6):
        for v in range(8):
            window = np.zeros((k1, k2))
            for i in range(k1):
                for j in range(k2):
                    r, c = u - top + i, v - left + j
                    if 0 <= r < 6 and 0 <= c < 8:
                        window[i, j] = grid[r, c]
            np.testing.assert_allclose(patches[u * 8 + v], window - window.mean(), atol=1e-15)


# -- stages ------------------------------------------------------------------------

def test_run_stage_fan_out_and_point_check():
    bank = build_kernel_bank(MomentFamily("Zernike"), 11, 11, 9)
    image = _random_image(2)
    first = run_stage([image], bank)
    assert len(first) == 9 and all(m.grid.shape == (32, 32) for m in first)
    second = run_stage(first, bank)
    assert len(second) == 81
    assert second[10].provenance == (0, 1, 1)
    patches = extract_patches(image, 11, 11)
    u, v = 13, 20
    direct = moment_project(patches[u * 32 + v], bank)
    np.testing.assert_allclose([m.grid[u, v] for m in first], direct, atol=1e-14)


def test_run_stage_zero_image():
    bank = build_kernel_bank(MomentFamily("Legendre"), 5, 5, 4)
    maps = run_stage([Image(np.zeros((10, 10)))], bank)
    assert len(maps) == 4 and all(np.all(m.grid == 0) for m in maps)


# -- binarize / hash ---------------------------------------------------------------

def test_binarize_examples():
    assert binarize(np.array([[-1.0, 0.15]]), 0.1).tolist() == [[0, 1]]
    assert binarize(np.abs(np.random.default_rng(0).random((4, 4))), 0.0).all()
    values = np.random.default_rng(1).random((4, 4))
    assert not binarize(values, values.max() + 1).any()
    assert binarize(np.array([[0.1]]), 0.1).tolist() == [[1]]


def test_hash_examples():
    ones = [np.ones((2, 2))] * 3
    assert np.all(hash_maps(ones).grid == 7)
    maps = [np.array([[1]]), np.array([[0]]), np.array([[1]])]
    assert hash_maps(maps).grid[0, 0] == 5
    assert np.all(hash_maps([np.zeros((3, 3))] * 4).grid == 0)
    with pytest.raises(ShapeError):
        hash_maps([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(ShapeError):
        hash_maps([np.zeros((2, 2))] * 21)


@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_hash_round_trip(L, seed):
    rng = np.random.default_rng(seed)
    maps = [rng.integers(0, 2, size=(5, 4)).astype(np.uint8) for _ in range(L)]
    hashed = hash_maps(maps)
    assert hashed.grid.min() >= 0 and hashed.grid.max() <= 2**L - 1
    for a, b in zip(unhash(hashed), maps):
        np.testing.assert_array_equal(a, b)


# -- block histograms ------------------------------------------------------------------

def test_block_geometry_example():
    assert block_geometry(32, 32, 8, 8, 0.5) == (4, 4, 7, 7)
    assert block_geometry(32, 32, 7, 7, 0.5) == (4, 4, 7, 7)  # stride rounds half up
    assert block_geometry(10, 10, 3, 3, 0.99)[:2] == (1, 1)
    with pytest.raises(GeometryError):
        block_geometry(32, 32, 33, 8, 0.5)


def test_uniform_hashed_map():
    hist = block_histogram(HashedMap(np.full((32, 32), 5), 3), 8, 8, 0.5, 8).reshape(49, 8)
    assert np.all(hist[:, 5] == 64) and hist.sum() == 49 * 64


@settings(max_examples=40, deadline=None)
@given(
    st.integers(4, 14),
    st.integers(4, 14),
    st.integers(1, 4),
    st.floats(0, 0.95),
    st.integers(0, 2**32 - 1),
)
def test_block_histogram_matches_loops(M, N, L, R, seed):
    rng = np.random.default_rng(seed)
    h1, h2 = int(rng.integers(1, M + 1)), int(rng.integers(1, N + 1))
    grid = rng.integers(0, 2**L, size=(M, N))
    got = block_histogram(HashedMap(grid, L), h1, h2, R, 2**L).reshape(-1, 2**L)
    np.testing.assert_array_equal(got, oracles.block_histograms(grid.tolist(), h1, h2, R, 2**L))
    assert np.all(got.sum(axis=1) == h1 * h2)


def test_block_histogram_rejects_out_of_range_values():
    with pytest.raises(ShapeError):
        block_histogram(np.full((4, 4), 8), 2, 2, 0.0, 8)


# -- config --------------------------------------------------------------------------

def test_config_defaults_and_quintet():
    cfg = NetConfig.from_quintet("Zernike", 9, 11, 8, 0.5, 0.1)
    assert cfg.quintet() == (9, 11, 8, 0.5, 0.1)
    assert (cfg.l2, cfg.k2, cfg.h2) == (9, 11, 8)
    assert cfg.family == MomentFamily("Zernike")
    cfg.validate()


@pytest.mark.parametrize(
    "kwargs,param",
    [
        ({"k1": 32}, "k"),
        ({"k1": 1}, "k"),
        ({"h1": 33}, "h"),
        ({"overlap": 1.0}, "overlap"),
        ({"stages": 3}, "stages"),
        ({"l1": 0}, "l1"),
        ({"l1": 21}, "l1"),
        ({"stages": 2, "l2": 21}, "l2"),
    ],
)
def test_config_errors_name_parameter(kwargs, param):
    with pytest.raises(ConfigError) as info:
        NetConfig(**kwargs).validate()
    assert info.value.param == param


def test_geometry_error_for_big_block():
    with pytest.raises(GeometryError) as info:
        NetConfig.from_quintet("Zernike", 9, 11, 40, 0.5, 0.1).validate()
    assert info.value.param == "h"


# -- features ------------------------------------------------------------------------

def test_feature_dimension_examples():
    two = NetConfig(family="Tchebichef", stages=2, l1=8, k1=7, h1=8, overlap=0.5)
    assert feature_dim(two) == 8 * 49 * 256 == 100352
    one = NetConfig(l1=9, h1=8, overlap=0.5)
    assert feature_dim(one) == 49 * 512 == 25088
    feats = extract_features(_random_image(3), one, build_banks(one))
    assert feats.shape == (25088,) and feats.dtype == np.float32


def test_two_stage_feature_length():
    cfg = NetConfig(family="Legendre", stages=2, l1=3, l2=4, k1=5, h1=6, overlap=0.3, input_size=(16, 16))
    feats = extract_features(_random_image(4, (16, 16)), cfg, build_banks(cfg))
    assert len(feats) == feature_dim(cfg) == 3 * block_geometry(16, 16, 6, 6, 0.3)[2] ** 2 * 16


def test_zero_image_concentrates_at_bin_zero():
    cfg = NetConfig(l1=4, k1=5, h1=8, threshold=0.1)
    hist = extract_features(Image(np.zeros((32, 32))), cfg, build_banks(cfg)).reshape(-1, 16)
    assert np.all(hist[:, 0] == 64) and hist[:, 1:].sum() == 0


def test_extract_features_deterministic_and_batch_parallel():
    cfg = NetConfig(l1=5, k1=7, h1=8)
    banks = build_banks(cfg)
    images = [_random_image(s) for s in range(6)]
    a = extract_batch(images, cfg, banks, jobs=1)
    b = extract_batch(images, cfg, banks, jobs=2)
    assert a.tobytes() == b.tobytes()
    assert extract_features(images[0], cfg, banks).tobytes() == a[0].tobytes()


def test_second_stage_permutation_keeps_histogram_multiset():
    cfg = NetConfig(family="Legendre", stages=2, l1=2, l2=3, k1=5, h1=8, threshold=0.0)
    first, second = build_banks(cfg)
    perm = [2, 0, 1]
    shuffled = KernelBank(second.family, 5, 5, second.filters[perm], [second.orders[i] for i in perm], second.cell_area)
    image = _random_image(5)
    a = extract_features(image, cfg, [first, second]).reshape(-1, 8)
    b = extract_features(image, cfg, [first, shuffled]).reshape(-1, 8)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(np.sort(a, axis=1), np.sort(b, axis=1))


def test_bank_mismatch_is_rejected():
    cfg = NetConfig(l1=5, k1=7, h1=8)
    with pytest.raises(ConfigError):
        extract_features(_random_image(0), cfg, [build_kernel_bank(MomentFamily("Zernike"), 7, 7, 4)])
    with pytest.raises(ShapeError):
        extract_features(_random_image(0, (16, 16)), cfg, build_banks(cfg))


# -- thresholds --------------------------------------------------------------------------

def test_ones_fraction_examples():
    assert ones_fraction([np.ones((3, 3))]) == 1.0
    assert ones_fraction([np.array([[1, 0], [0, 1]])]) == 0.5
    values = np.random.default_rng(0).random((32, 32))
    t = np.median(values)
    assert abs(ones_fraction([binarize(values, t)]) - 0.5) <= 1 / 1024
    with pytest.raises(ShapeError):
        ones_fraction([])


@given(st.integers(0, 2**32 - 1), st.lists(st.floats(-3, 3), min_size=2, max_size=12))
def test_ones_fraction_monotone(seed, ts):
    values = np.random.default_rng(seed).standard_normal((6, 6))
    fractions = [ones_fraction([binarize(values, t)]) for t in sorted(ts)]
    assert all(a >= b for a, b in zip(fractions, fractions[1:]))


def test_auto_threshold_uniform_values():
    # evenly spaced values realize fraction(t) = 1 - t exactly
    grid = np.linspace(0, 1, 200_001)
    t = auto_threshold([grid.reshape(-1, 1)])
    assert 0.5 <= t <= 0.6
    assert 0.4 <= ones_fraction([grid >= t]) <= 0.5
    # sampled values: the sample median sits within a few 1/sqrt(n) of 0.5
    values = np.random.default_rng(0).random(200_000)
    t = auto_threshold([values.reshape(400, 500)])
    assert 0.5 - 0.005 <= t <= 0.6
    assert 0.4 <= ones_fraction([values >= t]) <= 0.5


def test_auto_threshold_degenerate_and_full_target():
    with pytest.raises(ThresholdSearchError):
        auto_threshold([np.full((4, 4), 0.3)])
    values = np.random.default_rng(1).random((10, 10))
    assert auto_threshold([values], target=(0.0, 1.0)) == values.min()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.6), st.floats(0.05, 0.3))
def test_auto_threshold_lands_in_target(seed, lo, width):
    values = np.random.default_rng(seed).standard_normal(5000)
    target = (lo, min(lo + width, 0.99))
    t = auto_threshold(values, target)
    fraction = np.mean(values >= t)
    assert target[0] <= fraction <= target[1]
    # a noticeably smaller threshold overshoots the upper bound
    assert np.mean(values >= t - 1e-3 * np.ptp(values)) > target[1] - 1e-3


def test_auto_threshold_reports_unreachable_range():
    values = np.array([0.0] * 50 + [1.0] * 50)
    with pytest.raises(ThresholdSearchError) as info:
        auto_threshold(values, target=(0.6, 0.7))
    assert info.value.achievable is not None


# -- descriptors and export ----------------------------------------------------------------

def test_moment_descriptor_counts_orders():
    d = moment_descriptor(_random_image(0), "Zernike", 4)
    assert d.shape == (9,)  # m >= 0 pairs with n <= 4
    d = moment_descriptor(_random_image(0, (5, 5)), "Tchebichef", 20)
    assert d.shape == (25,)


def test_feature_containers_round_trip(tmp_path):
    X = np.random.default_rng(0).random((3, 7)).astype(np.float32)
    write_features_binary(tmp_path / "f.mnfv", X)
    raw = (tmp_path / "f.mnfv").read_bytes()
    assert raw[:4] == b"MNFV" and raw[4] == 1
    assert int.from_bytes(raw[5:9], "little") == 3 and int.from_bytes(raw[9:13], "little") == 7
    np.testing.assert_array_equal(read_features_binary(tmp_path / "f.mnfv"), X)
    (tmp_path / "bad.mnfv").write_bytes(raw[:-4])
    with pytest.raises(ContainerError):
        read_features_binary(tmp_path / "bad.mnfv")
    write_features_csv(tmp_path / "f.csv", X, labels=[0, 1, 2], ids=["a", "b", "c"])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[1].startswith("a,0,")


def test_feature_map_types():
    fm = FeatureMap(np.zeros((2, 2)), (0, 1))
    assert binarize(fm, 0.0).all()
    assert final_maps(_random_image(0), NetConfig(l1=3, k1=5), build_banks(NetConfig(l1=3, k1=5))).shape == (3, 32, 32)
