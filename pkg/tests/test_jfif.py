import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from qtopt.errors import CorruptJpegError, InvalidTableError, MustConvertError, UnsupportedJpegError
from qtopt.jpeg import (ColorSpace, ImagePlanes, QuantTableSet, decode_jpeg, encode_jpeg,
                        quantize_image, to_codec_space)


def pil_decode(data, raw_ycc=False):
    im = Image.open(io.BytesIO(data))
    if raw_ycc:
        im.draft("YCbCr", im.size)
    return np.asarray(im)


def as_hwc(planes):
    return np.moveaxis(planes, 0, -1) if planes.shape[0] == 3 else planes[0]


def pil_jpeg(arr, **kw):
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, "JPEG", **kw)
    return buf.getvalue()


@pytest.mark.parametrize("q", [5, 30, 75, 97])
def test_external_decoder_matches_internal(corpus, q):
    for name in ("astronaut", "camera"):
        codec = to_codec_space(corpus[name])
        t = QuantTableSet.standard(q, codec.channels, 1 if codec.channels == 1 else 2)
        data = encode_jpeg(codec, t).data
        ours = decode_jpeg(data)
        np.testing.assert_array_equal(as_hwc(ours.to_display().planes), pil_decode(data))
        if codec.channels == 3:
            np.testing.assert_array_equal(as_hwc(ours.planes.planes),
                                          pil_decode(data, raw_ycc=True))


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 40), w=st.integers(1, 40), seed=st.integers(0, 2**31 - 1),
       gray=st.booleans(), tabs=st.integers(1, 3))
def test_odd_sizes_and_random_tables_roundtrip(h, w, seed, gray, tabs):
    rng = np.random.default_rng(seed)
    c = 1 if gray else 3
    planes = rng.integers(0, 256, (c, h, w)).astype(float)
    img = ImagePlanes(planes, ColorSpace.GRAY if gray else ColorSpace.YCBCR)
    ntab = 1 if gray else tabs
    assignment = (0,) if gray else tuple(min(i, ntab - 1) for i in range(3))
    tables = QuantTableSet(rng.integers(1, 256, (ntab, 8, 8)).astype(float), assignment).exported()
    data = encode_jpeg(img, tables).data
    ours = decode_jpeg(data)
    assert ours.planes.planes.shape == (c, h, w)
    np.testing.assert_array_equal(as_hwc(ours.to_display().planes), pil_decode(data))
    # coefficients survive the trip exactly
    q = quantize_image(img, tables)
    for k in range(c):
        np.testing.assert_array_equal(ours.coefficients[k], q[k])
    for tid in range(ntab):
        np.testing.assert_array_equal(ours.qtables[tid], tables.quantized_export[tid])


def test_numba_flag_paths_decode_identically(corpus):
    codec = to_codec_space(corpus["chelsea"])
    data = encode_jpeg(codec, QuantTableSet.standard(50)).data
    assert encode_jpeg(codec, QuantTableSet.standard(50), use_numba=False).data == data
    a = decode_jpeg(data, use_numba=True).planes.planes
    b = decode_jpeg(data, use_numba=False).planes.planes
    np.testing.assert_array_equal(a, b)


def test_decodes_pillow_baseline_444(corpus):
    arr = corpus["chelsea"].to_uint8()
    data = pil_jpeg(arr, quality=80, subsampling=0)
    np.testing.assert_array_equal(as_hwc(decode_jpeg(data).to_display().planes),
                                  pil_decode(data))


@pytest.mark.parametrize("sub", [1, 2])
def test_decodes_pillow_subsampled(corpus, sub):
    # chroma is upsampled by replication, Pillow interpolates: close, not exact
    arr = corpus["astronaut"].to_uint8()
    data = pil_jpeg(arr, quality=85, subsampling=sub)
    ours = as_hwc(decode_jpeg(data).to_display().planes).astype(float)
    assert np.abs(ours - pil_decode(data)).mean() < 2.0


def test_decodes_restart_intervals(corpus):
    arr = corpus["chelsea"].to_uint8()
    data = pil_jpeg(arr, quality=70, subsampling=0, restart_marker_blocks=3)
    assert b"\xff\xdd" in data
    np.testing.assert_array_equal(as_hwc(decode_jpeg(data).to_display().planes),
                                  pil_decode(data))


def test_progressive_is_unsupported(corpus):
    data = pil_jpeg(corpus["camera"].to_uint8(), quality=70, progressive=True)
    with pytest.raises(UnsupportedJpegError):
        decode_jpeg(data)


def test_corrupt_streams():
    with pytest.raises(CorruptJpegError):
        decode_jpeg(b"not a jpeg")
    img = ImagePlanes(np.full((1, 16, 16), 100.0), ColorSpace.GRAY)
    data = encode_jpeg(img, QuantTableSet.standard(50, 1, 1)).data
    with pytest.raises(CorruptJpegError):
        decode_jpeg(data[:30])


def test_encoder_rejects_rgb_and_unexported(corpus):
    with pytest.raises(MustConvertError):
        encode_jpeg(corpus["astronaut"], QuantTableSet.standard(75))
    raw = QuantTableSet(np.full((2, 8, 8), 10.0), (0, 1, 1))
    with pytest.raises(InvalidTableError):
        encode_jpeg(to_codec_space(corpus["astronaut"]), raw)


def test_assignment_must_cover_channels(corpus):
    with pytest.raises(InvalidTableError):
        encode_jpeg(to_codec_space(corpus["astronaut"]), QuantTableSet.standard(75, 1, 1))


def test_higher_quality_is_bigger_and_closer(corpus):
    codec = to_codec_space(corpus["coffee"])
    small = encode_jpeg(codec, QuantTableSet.standard(50))
    big = encode_jpeg(codec, QuantTableSet.standard(90))
    assert big.size_bytes > small.size_bytes
    err = [np.abs(decode_jpeg(e.data).planes.planes - codec.planes).mean() for e in (small, big)]
    assert err[1] < err[0]
