import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from qtopt.errors import InvalidInputError
from qtopt.jpeg import ColorSpace, ImagePlanes, load_image, rgb_to_ycbcr, ycbcr_to_rgb, ycbcr_to_rgb_int
from qtopt.jpeg.image import pad_to_blocks, read_raw, save_png, write_raw


def test_primaries_to_ycbcr():
    rgb = ImagePlanes(np.array([[[255.0, 0, 0, 255]], [[0, 255.0, 0, 255]], [[0, 0, 255.0, 255]]]),
                      ColorSpace.RGB)
    ycc = rgb_to_ycbcr(rgb).planes[:, 0]
    # red: Y = 0.299*255, Cb = 128 - 0.168736*255, Cr = 128 + 127.5 clamped
    np.testing.assert_allclose(ycc[:, 0], [76.245, 84.9723, 255.0], atol=1e-3)
    np.testing.assert_allclose(ycc[:, 3], [255.0, 128.0, 128.0], atol=1e-9)
    np.testing.assert_allclose(ycc[0, 1], 149.685, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 2, 2), elements=st.floats(0, 255)))
def test_color_roundtrip(planes):
    img = ImagePlanes(planes, ColorSpace.RGB)
    ycc = rgb_to_ycbcr(img)
    if ycc.planes.min() > 0 and ycc.planes.max() < 255:  # no clamping happened
        np.testing.assert_allclose(ycbcr_to_rgb(ycc).planes, planes, atol=1e-9)


def test_integer_color_matches_pillow():
    rng = np.random.default_rng(3)
    ycc = rng.integers(0, 256, (3, 16, 16)).astype(np.uint8)
    ref = np.asarray(Image.fromarray(np.moveaxis(ycc, 0, -1), "YCbCr").convert("RGB"))
    ours = np.moveaxis(ycbcr_to_rgb_int(ycc), 0, -1)
    assert np.abs(ours.astype(int) - ref).max() <= 1


def test_validation():
    with pytest.raises(InvalidInputError):
        ImagePlanes(np.zeros((2, 4, 4)), ColorSpace.RGB)
    with pytest.raises(InvalidInputError):
        ImagePlanes(np.full((1, 4, 4), 256.0), ColorSpace.GRAY)
    with pytest.raises(InvalidInputError):
        ImagePlanes(np.zeros((3, 4, 4)), ColorSpace.GRAY)
    with pytest.raises(InvalidInputError):
        ImagePlanes(np.zeros((1, 4, 4)), ColorSpace.RGB)
    with pytest.raises(InvalidInputError):
        rgb_to_ycbcr(ImagePlanes(np.zeros((1, 4, 4)), ColorSpace.GRAY))


def test_pad_replicates_edges():
    p = np.arange(2 * 3 * 5, dtype=float).reshape(2, 3, 5)
    out = pad_to_blocks(p)
    assert out.shape == (2, 8, 8)
    np.testing.assert_array_equal(out[:, 7, 7], p[:, 2, 4])
    np.testing.assert_array_equal(out[:, :3, :5], p)


def test_raw_roundtrip(tmp_path):
    img = ImagePlanes(np.random.default_rng(0).integers(0, 256, (3, 5, 7)).astype(float),
                      ColorSpace.RGB)
    write_raw(tmp_path / "a.raw", img)
    back = load_image(tmp_path / "a.raw")
    np.testing.assert_array_equal(back.planes, img.planes)
    (tmp_path / "b.raw").write_bytes(b"\x01\x00")
    with pytest.raises(InvalidInputError):
        read_raw(tmp_path / "b.raw")


def test_png_roundtrip(tmp_path):
    img = ImagePlanes(np.random.default_rng(0).integers(0, 256, (1, 9, 4)).astype(float),
                      ColorSpace.GRAY)
    save_png(tmp_path / "g.png", img)
    back = load_image(tmp_path / "g.png")
    assert back.colorspace is ColorSpace.GRAY
    np.testing.assert_array_equal(back.planes, img.planes)


def test_unreadable_file(tmp_path):
    (tmp_path / "x.png").write_bytes(b"garbage")
    with pytest.raises(InvalidInputError):
        load_image(tmp_path / "x.png")
