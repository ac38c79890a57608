import struct

import numpy as np
import pytest

from waveblur.errors import BadImageFile, CorruptOperatorFile
from waveblur.io import MAGIC, read_image, read_operator, write_image, write_operator
from waveblur.operators import generate_psf, parse_psf_spec
from waveblur.theta import WeightVector, build_theta_conv, threshold_weighted
from waveblur.wavelet import Family, WaveletBasis, parse_filter


@pytest.fixture(scope="module")
def small_op():
    basis = WaveletBasis(parse_filter("sym4"), (16, 32), 2)
    theta = build_theta_conv(generate_psf(parse_psf_spec("skewed:2"), basis.dims), basis)
    return threshold_weighted(theta, 3000, WeightVector.dyadic(basis.layout))


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
@pytest.mark.parametrize("bits", [8, 16])
def test_image_round_trip(tmp_path, rng, suffix, bits):
    u = rng.random((16, 24))
    p = tmp_path / f"img{suffix}"
    write_image(p, u, bits=bits)
    v = read_image(p)
    assert v.shape == u.shape
    assert np.abs(u - v).max() <= 0.5 / (2**bits - 1) + 1e-12


def test_write_clamps(tmp_path):
    p = tmp_path / "c.pgm"
    write_image(p, np.array([[-0.5, 0.5, 1.5]]), bits=8)
    np.testing.assert_allclose(read_image(p), [[0.0, 128 / 255, 1.0]])


def test_pgm_with_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([0, 255]))
    np.testing.assert_array_equal(read_image(p), [[0.0, 1.0]])


def test_bad_pgm(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n2 1\n255\n0 1\n")
    with pytest.raises(BadImageFile):
        read_image(p)
    p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(BadImageFile):
        read_image(p)


def test_operator_round_trip_bitwise(tmp_path, small_op):
    a = tmp_path / "a.wtheta"
    b = tmp_path / "b.wtheta"
    write_operator(a, small_op, Family.SYMMLET, 4)
    op, filters = read_operator(a)
    assert filters == parse_filter("sym4")
    assert op.layout.dims == (16, 32) and op.layout.levels == 2
    for f in ("row_offsets", "col_indices", "values"):
        np.testing.assert_array_equal(getattr(op, f), getattr(small_op, f))
    write_operator(b, op, filters.family, filters.order)
    assert a.read_bytes() == b.read_bytes()


def test_operator_header_layout(tmp_path, small_op):
    p = tmp_path / "h.wtheta"
    write_operator(p, small_op, "symmlet", 4)
    data = p.read_bytes()
    assert data[:8] == MAGIC
    d, n0, n1, J, fam, order, K = struct.unpack_from("<7I", data, 8)
    assert (d, n0, n1, J, fam, order, K) == (2, 16, 32, 2, 2, 4, small_op.nnz)
    n = 16 * 32
    assert len(data) == 8 + 28 + 8 * (n + 1) + 12 * K


def _corrupt(tmp_path, small_op, mutate):
    p = tmp_path / "x.wtheta"
    write_operator(p, small_op, "symmlet", 4)
    data = bytearray(p.read_bytes())
    mutate(data)
    p.write_bytes(bytes(data))
    return p


def test_corrupt_operator_files(tmp_path, small_op):
    n = 16 * 32
    K = small_op.nnz
    cols_at = 8 + 28 + 8 * (n + 1)

    def bad_magic(d):
        d[0:8] = b"WTHETA02"

    def truncated(d):
        del d[-5:]

    def bad_family(d):
        struct.pack_into("<I", d, 8 + 16, 9)

    def bad_order(d):
        struct.pack_into("<I", d, 8 + 20, 3)

    def col_out_of_range(d):
        struct.pack_into("<I", d, cols_at, n + 3)

    def cols_unsorted(d):
        c0, c1 = struct.unpack_from("<2I", d, cols_at)
        struct.pack_into("<2I", d, cols_at, c1, c0)

    def bad_offsets(d):
        struct.pack_into("<Q", d, 8 + 28 + 8 * n, K - 1)

    for mutate in (bad_magic, truncated, bad_family, bad_order, col_out_of_range, cols_unsorted, bad_offsets):
        with pytest.raises(CorruptOperatorFile):
            read_operator(_corrupt(tmp_path, small_op, mutate))
