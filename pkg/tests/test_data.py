import hashlib
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fmsr.data import (
    ImageU8,
    PairedSample,
    bicubic_resize,
    load_image,
    make_pair,
    make_pairs,
    read_manifest,
    resize_weights,
    sample_patches,
    save_image,
    synthetic_image,
    to_float,
    to_u8,
)
from fmsr.errors import ShapeError


# ---- scalar bicubic oracle ----------------------------------------------------------


def keys(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def mirror(j, n):
    while j < 0 or j >= n:
        j = -1 - j if j < 0 else 2 * n - 1 - j
    return j


def resample_1d(row, out, antialias):
    """Every output sample as an explicitly enumerated weighted sum of input taps."""
    n = len(row)
    s = out / n
    k = s if (antialias and s < 1) else 1.0
    res = []
    for o in range(out):
        c = (o + 0.5) / s - 0.5
        lo, hi = math.floor(c - 2 / k) - 1, math.ceil(c + 2 / k) + 1
        num = den = 0.0
        for j in range(lo, hi + 1):
            w = keys((c - j) * k)
            num += w * row[mirror(j, n)]
            den += w
        res.append(num / den)
    return res


def oracle_resize(img, oh, ow, antialias=True):
    img = np.asarray(img, dtype=np.float64)
    tmp = np.array([[resample_1d(img[c, :, x], oh, antialias) for x in range(img.shape[2])] for c in range(img.shape[0])])
    tmp = tmp.transpose(0, 2, 1)  # [C, oh, W]
    return np.array([[resample_1d(tmp[c, y], ow, antialias) for y in range(oh)] for c in range(img.shape[0])])


# ---- bicubic_resize -------------------------------------------------------------------


def test_kernel_values():
    assert keys(0) == 1 and keys(1) == 0 and keys(2) == 0
    assert keys(0.5) == pytest.approx(0.5625)
    assert keys(1.5) == pytest.approx(-0.0625)


def test_same_size_is_identity():
    img = np.random.default_rng(0).random((3, 7, 9))
    np.testing.assert_array_equal(bicubic_resize(img, 7, 9), img)
    np.testing.assert_array_equal(resize_weights(9, 9), np.eye(9))


@pytest.mark.parametrize("out", [(1, 1), (3, 5), (17, 11), (40, 40)])
def test_constant_stays_constant(out):
    img = np.full((3, 13, 10), 0.37)
    res = bicubic_resize(img, *out)
    np.testing.assert_allclose(res, 0.37, atol=1e-12)


def test_ramp_downscale_matches_kernel_sum_oracle():
    ramp = np.arange(8, dtype=np.float64)[None, None, :] / 7
    got = bicubic_resize(ramp, 1, 2, antialias=True)
    want = oracle_resize(ramp, 1, 2, antialias=True)
    np.testing.assert_allclose(got, want, atol=1e-12)
    # symmetric ramp, symmetric grid: outputs mirror each other about 0.5
    assert got[0, 0, 0] + got[0, 0, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("antialias", [True, False])
@pytest.mark.parametrize("shape", [(9, 13, 4, 5), (5, 6, 12, 17), (16, 16, 4, 4), (3, 3, 8, 2)])
def test_matches_loop_oracle(shape, antialias):
    h, w, oh, ow = shape
    img = np.random.default_rng(h * w).random((2, h, w))
    np.testing.assert_allclose(bicubic_resize(img, oh, ow, antialias), oracle_resize(img, oh, ow, antialias), atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.booleans())
def test_weight_rows_sum_to_one(n_in, n_out, antialias):
    w = resize_weights(n_in, n_out, antialias)
    assert w.shape == (n_out, n_in)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)


def test_resize_errors():
    with pytest.raises(ValueError):
        bicubic_resize(np.zeros((3, 4, 4)), 0, 4)
    with pytest.raises(ValueError):
        bicubic_resize(np.zeros((3, 4, 4)), 4, -1)
    with pytest.raises(ShapeError):
        bicubic_resize(np.zeros((4, 4)), 2, 2)


def test_torch_input_roundtrip_dtype():
    torch = pytest.importorskip("torch")
    t = torch.rand(3, 8, 8)
    out = bicubic_resize(t, 4, 4)
    assert isinstance(out, torch.Tensor) and out.dtype == torch.float32
    np.testing.assert_allclose(out.numpy(), bicubic_resize(t.numpy(), 4, 4), atol=1e-6)


# ---- make_pairs -----------------------------------------------------------------------


def test_divisibility_crop():
    hr = np.zeros((641, 640, 3), np.uint8)
    (pair,) = make_pairs([hr], 4)
    assert pair.hr.shape == (3, 640, 640) and pair.lr.shape == (3, 160, 160)
    assert pair.scale == 4 and pair.offset == (0, 0)


def test_crop_is_centered():
    hr = np.random.default_rng(0).random((3, 70, 67)).astype(np.float32)
    pair = make_pair(hr, 4)
    assert pair.offset == (1, 1)
    np.testing.assert_array_equal(pair.hr, hr[:, 1:69, 1:65])


def test_constant_hr_gives_constant_lr():
    (pair,) = make_pairs([np.full((3, 64, 48), 0.25, np.float32)], 4)
    np.testing.assert_allclose(pair.lr, 0.25, atol=1e-6)


def test_lr_digest_matches_oracle_pipeline():
    hr = synthetic_image((42, 37), seed=3)
    (pair,) = make_pairs([hr], 2, min_lr_size=8)
    crop = hr[:, 0:42, 0:36]  # 37 -> 36, offset floor(1/2) = 0
    want = oracle_resize(crop, 21, 18, antialias=True).astype(np.float32)
    np.testing.assert_allclose(pair.lr, want, atol=1e-6)
    digest = lambda a: hashlib.sha256(to_u8(a).tobytes()).hexdigest()  # noqa: E731
    assert digest(pair.lr) == digest(want)


def test_small_images_skipped_with_warning():
    imgs = [np.zeros((3, 31, 40), np.float32), np.zeros((3, 32, 32), np.float32)]
    with pytest.warns(UserWarning, match="image0"):
        pairs = make_pairs(imgs, 4)
    assert len(pairs) == 1 and pairs[0].source == "image1"


def test_scale_below_two_rejected():
    with pytest.raises(ValueError):
        make_pairs([np.zeros((3, 32, 32), np.float32)], 1)


def _roundtrip(base):
    hr = np.repeat(base[None], 3, 0).astype(np.float32)
    up = bicubic_resize(make_pair(hr, 4).lr, 64, 64, antialias=False)
    return np.abs(up - hr)


@pytest.mark.parametrize("k", [0, 1, 2, 4])
@pytest.mark.parametrize("axis", [0, 1])
def test_band_limited_roundtrip(k, axis):
    # cosines on the half-pixel grid stay band-limited under symmetric extension
    t = np.mgrid[0:64, 0:64].astype(np.float64)[axis]
    base = 0.5 + 0.3 * np.cos(np.pi * k * (t + 0.5) / 64)
    assert _roundtrip(base).max() <= 0.02


@pytest.mark.parametrize("period", [32.0, 48.0])
def test_arbitrary_phase_sinusoid_roundtrip_interior(period):
    # an arbitrary phase kinks at the mirrored border, so only the interior is band-limited
    xx = np.mgrid[0:64, 0:64].astype(np.float64)[1]
    err = _roundtrip(0.5 + 0.3 * np.sin(2 * np.pi * xx / period + 0.3))
    assert err[:, :, 8:-8].max() <= 0.02


def test_pipeline_deterministic():
    hr = [synthetic_image(48, seed=i) for i in range(3)]
    a = [p.lr for p in make_pairs(hr, 3)]
    b = [p.lr for p in make_pairs(hr, 3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


# ---- sample_patches ---------------------------------------------------------------------


def _coord_pair(h, w, s):
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float32)
    lr = np.stack([ii, jj, ii + jj])
    hi, hj = np.mgrid[0 : s * h, 0 : s * w].astype(np.float32)
    hr = np.stack([hi, hj, hi * 0])
    return PairedSample(lr, hr)


def test_full_size_patch_is_whole_pair():
    pair = make_pair(synthetic_image(32, seed=1), 4)
    lr, hr = sample_patches(pair, 8, 2, seed=0)
    assert np.array_equal(lr[0], pair.lr) and np.array_equal(hr[1], pair.hr)


def test_patches_are_aligned():
    pair = _coord_pair(20, 24, 3)
    lr, hr = sample_patches(pair, 5, 30, seed=4)
    for a, b in zip(lr, hr):
        i, j = int(a[0, 0, 0]), int(a[1, 0, 0])
        assert b[0, 0, 0] == 3 * i and b[1, 0, 0] == 3 * j
        assert hr.shape[-1] == 15


def test_same_seed_same_offsets():
    pair = _coord_pair(30, 30, 2)
    a = sample_patches(pair, 7, 16, seed=11)
    b = sample_patches(pair, 7, 16, seed=11)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = sample_patches(pair, 7, 16, seed=12)
    assert not np.array_equal(a[0], c[0])


def test_patch_too_large():
    pair = _coord_pair(10, 12, 2)
    with pytest.raises(ValueError):
        sample_patches(pair, 11, 1, seed=0)
    with pytest.raises(ValueError):
        sample_patches(pair, 0, 1, seed=0)


def test_offsets_uniform_chi_square():
    # 160x160 LR, patch 64 -> offsets in {0..96}^2
    pair = _coord_pair(160, 160, 2)
    rng = np.random.default_rng(2024)
    rows, cols = [], []
    for _ in range(20):
        lr, _ = sample_patches(pair, 64, 500, seed=rng)
        rows.append(lr[:, 0, 0, 0])
        cols.append(lr[:, 1, 0, 0])
    rows = np.concatenate(rows).astype(int)
    cols = np.concatenate(cols).astype(int)
    assert rows.size == 10_000 and rows.min() >= 0 and rows.max() <= 96
    for axis in (rows, cols):
        counts = np.bincount(axis, minlength=97)
        assert stats.chisquare(counts).pvalue > 0.01
    # joint uniformity on an 8x8 grid of near-equal cells
    cell = np.arange(97) * 8 // 97
    prob = np.bincount(cell) / 97
    joint = np.bincount((rows * 8 // 97) * 8 + cols * 8 // 97, minlength=64)
    assert stats.chisquare(joint, np.outer(prob, prob).ravel() * rows.size).pvalue > 0.01


def test_augment_is_dihedral_map_of_aligned_crop():
    pair = _coord_pair(16, 16, 2)
    lr, hr = sample_patches(pair, 6, 40, seed=1, augment=True)
    maps = [lambda a, k=k, f=f: np.rot90(a[..., ::-1] if f else a, -k, axes=(1, 2)) for k in range(4) for f in (0, 1)]
    seen = set()
    for a, b in zip(lr, hr):
        # undo the right dihedral map: both become plain aligned crops
        for n, undo in enumerate(maps):
            la, hb = undo(a), undo(b)
            i, j = int(la[0, 0, 0]), int(la[1, 0, 0])
            if np.array_equal(la, pair.lr[:, i : i + 6, j : j + 6]):
                assert np.array_equal(hb, pair.hr[:, 2 * i : 2 * i + 12, 2 * j : 2 * j + 12])
                seen.add(n)
                break
        else:
            raise AssertionError("patch is not a dihedral image of an aligned crop")
    assert len(seen) > 4


# ---- image I/O ----------------------------------------------------------------------------


def test_png_roundtrip_bitwise(tmp_path):
    px = np.random.default_rng(0).integers(0, 256, (13, 17, 3), dtype=np.uint8)
    path = save_image(ImageU8(px), tmp_path / "a.png")
    back = load_image(path)
    assert np.array_equal(back.pixels, px) and back.path == str(tmp_path / "a.png")


def test_float_to_u8_rounding_rule():
    assert to_u8(np.full((3, 1, 1), 1.0))[0, 0, 0] == 255
    assert to_u8(np.full((3, 1, 1), 0.0))[0, 0, 0] == 0
    assert to_u8(np.full((3, 1, 1), 0.5))[0, 0, 0] == 128
    assert to_u8(np.full((3, 1, 1), 1.7))[0, 0, 0] == 255
    assert to_u8(np.full((3, 1, 1), -0.2))[0, 0, 0] == 0
    grid = np.arange(256)
    exact = to_u8(np.broadcast_to(grid / 255.0, (3, 1, 256)))[0, :, 0]
    assert np.array_equal(exact, grid)
    half = to_u8(np.broadcast_to((grid[:-1] + 0.5) / 255.0, (3, 1, 255)))[0, :, 0]
    assert np.array_equal(half, grid[1:])


def test_float_roundtrip_through_png(tmp_path):
    px = np.random.default_rng(1).integers(0, 256, (5, 6, 3), dtype=np.uint8)
    save_image(to_float(px), tmp_path / "f.png")
    assert np.array_equal(load_image(tmp_path / "f.png").pixels, px)


def test_grayscale_png_loads_as_rgb(tmp_path):
    from PIL import Image

    Image.fromarray(np.full((4, 5), 77, np.uint8), mode="L").save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png")
    assert img.shape == (4, 5, 3) and (img.pixels == 77).all()


def test_unreadable_file_names_path(tmp_path):
    bad = tmp_path / "not_an_image.png"
    bad.write_text("hello")
    with pytest.raises(OSError, match="not_an_image.png"):
        load_image(bad)
    with pytest.raises(OSError, match="missing.png"):
        load_image(tmp_path / "missing.png")


def test_unwritable_path_names_path(tmp_path):
    with pytest.raises(OSError, match="nodir"):
        save_image(np.zeros((5, 5, 3), np.uint8), tmp_path / "nodir" / "x.png")


def test_manifest_resolves_relative_paths(tmp_path):
    (tmp_path / "sub").mkdir()
    man = tmp_path / "sub" / "list.txt"
    man.write_text("# comment\na.png\n\n/abs/b.png\n")
    assert read_manifest(man) == [str(tmp_path / "sub" / "a.png"), "/abs/b.png"]


def test_synthetic_image_range_and_seed():
    a, b = synthetic_image(24, seed=5), synthetic_image(24, seed=5)
    assert a.shape == (3, 24, 24) and a.dtype == np.float32
    assert np.array_equal(a, b) and 0 <= a.min() and a.max() <= 1
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        synthetic_image((10, 12), seed=0)
