import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fastpose.heatmap import (
    CorruptedPredictionError,
    DegenerateMapError,
    GaussianConfig,
    ImageSpec,
    JointSet,
    Visibility,
    decode_batch,
    decode_heatmaps,
    encode_joints,
    heatmap_to_image,
    image_to_heatmap,
    l1_normalize,
)

import oracles

SPEC = ImageSpec(256, 256, 4)


def test_shapes_and_dtype():
    js = JointSet.from_coords(np.full((16, 2), 100.0))
    maps = encode_joints(js, SPEC)
    assert maps.shape == (16, 64, 64)
    assert maps.dtype == np.float64


def test_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    spec = ImageSpec(64, 48, 4)
    for sigma, norm in [(1.0, True), (2.0, False), (1.5, True)]:
        pts = rng.uniform([0, 0], [48, 64], size=(3, 2))
        maps = encode_joints(JointSet.from_coords(pts), spec, GaussianConfig(sigma, norm))
        for k, (x, y) in enumerate(pts):
            ref = np.array(oracles.gaussian_map(x, y, 4, 16, 12, sigma, norm))
            np.testing.assert_allclose(maps[k], ref, rtol=0, atol=1e-14)


def test_normalized_peak_value():
    for sigma in (0.5, 1.0, 2.0, 3.0):
        cfg = GaussianConfig(sigma)
        # joint on a pixel centre so the peak sample hits the kernel maximum
        js = JointSet.from_coords([[4 * 10 + 1.5, 4 * 7 + 1.5]])
        m = encode_joints(js, SPEC, cfg)
        assert abs(m.max() - 1.0 / (2 * math.pi * sigma**2)) <= 1e-9


def test_normalized_mass_close_to_one_inside():
    js = JointSet.from_coords([[128.0, 128.0]])
    m = encode_joints(js, SPEC, GaussianConfig(2.0))
    # sampled +-3 sigma window keeps ~(erf(3/sqrt2))^2 of the mass
    assert abs(m.sum() - 1.0) < 0.01


def test_unlabelled_gives_zero_map_and_sentinel():
    js = JointSet(np.array([[10.0, 10.0], [50.0, 60.0]]),
                  np.array([Visibility.UNLABELLED, Visibility.OCCLUDED]))
    assert (js.joints[0] == -1).all()
    m = encode_joints(js, SPEC)
    assert not m[0].any()
    assert m[1].max() > 0


def test_out_of_bounds_raises():
    with pytest.raises(ValueError, match="outside"):
        encode_joints(JointSet.from_coords([[256.0, 3.0]]), SPEC)


def test_coordinate_maps_are_inverse():
    p = np.random.default_rng(1).uniform(-10, 300, size=(50, 2))
    np.testing.assert_allclose(heatmap_to_image(image_to_heatmap(p, 4), 4), p, atol=1e-12)


def test_roundtrip_1000_joints_axiswise():
    # pixel-centre extent of the image: the last pixel's centre is W - 1
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 255.5, size=(1000, 2))
    errs = []
    for chunk in pts.reshape(-1, 10, 2):
        maps = encode_joints(JointSet.from_coords(chunk), SPEC)
        dec = decode_heatmaps(maps, SPEC)
        errs.append(np.abs(dec.joints - chunk))
    assert np.max(errs) <= 0.5 * SPEC.stride


def test_roundtrip_unrefined_100_sets():
    rng = np.random.default_rng(5)
    for _ in range(100):
        pts = rng.uniform(0, 255.5, size=(16, 2))
        dec = decode_heatmaps(encode_joints(JointSet.from_coords(pts), SPEC), SPEC, refine=False)
        assert np.abs(dec.joints - pts).max() <= 0.5 * SPEC.stride


def test_far_edge_strip_bound():
    # beyond the last pixel centre the peak lies off the grid; the error is
    # capped by the distance to the last centre plus half a heatmap pixel
    xs = np.linspace(255.5, 255.999, 50)
    pts = np.stack([xs, np.full_like(xs, 100.0)], axis=1)
    dec = decode_heatmaps(encode_joints(JointSet.from_coords(pts), SPEC), SPEC)
    err = np.abs(dec.joints[:, 0] - xs)
    assert err.max() <= 0.625 * SPEC.stride


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0, 3.0])
def test_lattice_identity(sigma):
    k = np.arange(0, 64, 3)
    pts = np.stack([4 * k + 1.5, 4 * k[::-1] + 1.5], axis=1)
    maps = encode_joints(JointSet.from_coords(pts), SPEC, GaussianConfig(sigma))
    np.testing.assert_array_equal(decode_heatmaps(maps, SPEC).joints, pts)


def test_single_pixel_decode():
    m = np.zeros((1, 64, 64))
    m[0, 7, 5] = 1.0
    # (5, 7) times the stride plus the pixel-centre offset
    np.testing.assert_array_equal(decode_heatmaps(m, SPEC).joints[0], [21.5, 29.5])


def test_hand_value_unit_peak():
    # joint at heatmap (10, 20): value at (12, 20) with sigma 2 is exp(-4/8)
    pt = heatmap_to_image([10.0, 20.0], 4)
    m = encode_joints(JointSet.from_coords([pt]), SPEC, GaussianConfig(2.0, normalized_peak=False))
    assert abs(m[0, 20, 12] - math.exp(-0.5)) < 1e-12


def test_refinement_reduces_error():
    rng = np.random.default_rng(3)
    pts = rng.uniform(16, 240, size=(200, 2))
    maps = encode_joints(JointSet.from_coords(pts), SPEC)
    raw, _ = decode_batch(maps, 4, refine=False)
    ref, _ = decode_batch(maps, 4, refine=True)
    assert np.linalg.norm(ref - pts, axis=1).mean() < np.linalg.norm(raw - pts, axis=1).mean()


def test_decode_nan_raises():
    m = np.zeros((2, 8, 8))
    m[1, 3, 3] = np.nan
    with pytest.raises(CorruptedPredictionError):
        decode_batch(m)


def test_decode_all_zero_is_unlabelled():
    m = np.zeros((2, 64, 64))
    m[1, 5, 9] = 1.0
    js = decode_heatmaps(m, SPEC)
    assert js.visibility[0] == Visibility.UNLABELLED
    assert js.visibility[1] == Visibility.VISIBLE


def test_decode_accepts_torch_and_batches():
    m = torch.zeros(3, 2, 64, 64)
    m[..., 10, 20] = 1.0
    coords, vals = decode_batch(m, 4)
    assert coords.shape == (3, 2, 2) and vals.shape == (3, 2)
    np.testing.assert_allclose(coords[0, 0], [20 * 4 + 1.5, 10 * 4 + 1.5])


def test_decode_shape_checked():
    with pytest.raises(ValueError):
        decode_heatmaps(np.zeros((2, 32, 32)), SPEC)


def test_l1_normalize():
    m = np.random.default_rng(4).random((3, 5, 5))
    np.testing.assert_allclose(l1_normalize(m).sum(axis=(1, 2)), 1.0)
    t = torch.tensor(m)
    assert torch.allclose(l1_normalize(t).sum(dim=(1, 2)), torch.ones(3, dtype=t.dtype))
    with pytest.raises(DegenerateMapError):
        l1_normalize(np.zeros((1, 3, 3)))


def test_config_validation():
    with pytest.raises(ValueError):
        GaussianConfig(sigma=0)
    with pytest.raises(ValueError):
        ImageSpec(256, 250, 4)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0, 255.5, allow_nan=False),
    y=st.floats(0, 255.5, allow_nan=False),
    sigma=st.sampled_from([1.0, 1.5, 2.0]),
)
def test_property_roundtrip_and_argmax(x, y, sigma):
    maps = encode_joints(JointSet.from_coords([[x, y]]), SPEC, GaussianConfig(sigma))
    (px, py) = decode_heatmaps(maps, SPEC).joints[0]
    assert abs(px - x) <= 2.0 and abs(py - y) <= 2.0
    # argmax lands on the heatmap pixel nearest to the continuous centre
    iy, ix = np.unravel_index(maps[0].argmax(), maps[0].shape)
    cx, cy = image_to_heatmap([x, y], 4)
    assert abs(ix - cx) <= 0.5 + 1e-9 and abs(iy - cy) <= 0.5 + 1e-9


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0, 255.9), y=st.floats(0, 255.9), sigma=st.sampled_from([0.5, 1.0, 2.0, 3.0]))
def test_property_transpose_equivariance(x, y, sigma):
    cfg = GaussianConfig(sigma)
    a = encode_joints(JointSet.from_coords([[x, y]]), SPEC, cfg)
    b = encode_joints(JointSet.from_coords([[y, x]]), SPEC, cfg)
    np.testing.assert_array_equal(a[0].T, b[0])


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0, 255.9), y=st.floats(0, 255.9))
def test_property_monotone_decay(x, y):
    m = encode_joints(JointSet.from_coords([[x, y]]), SPEC, GaussianConfig(2.0))[0]
    cx, cy = image_to_heatmap([x, y], 4)
    yy, xx = np.mgrid[0:64, 0:64]
    d2 = ((xx - cx) ** 2 + (yy - cy) ** 2).ravel()
    v = m.ravel()
    nz = v > 0
    order = np.argsort(d2[nz], kind="stable")
    assert np.all(np.diff(v[nz][order]) <= 1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_property_l1_keeps_argmax(seed):
    m = np.random.default_rng(seed).random((4, 8, 8)) + 1e-3
    n = l1_normalize(m)
    assert np.all(np.abs(n.sum(axis=(1, 2)) - 1) <= 1e-6)
    assert (n.reshape(4, -1).argmax(1) == m.reshape(4, -1).argmax(1)).all()


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0, 255.9), y=st.floats(0, 255.9))
def test_property_nonnegative_and_bounded(x, y):
    maps = encode_joints(JointSet.from_coords([[x, y]]), SPEC)
    assert maps.min() >= 0
    assert maps.max() <= GaussianConfig().peak + 1e-15
