import numpy as np
import pytest
from builders import frame_pair
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from flowcodec.bitstream import (
    INTER,
    INTRA,
    CdfTable,
    Container,
    ContainerError,
    FrameRecord,
    TruncatedStreamError,
    build_cdfs,
    decode_inter_frame,
    encode_inter_frame,
    gaussian_pmf,
    normal_cdf,
    quantize_pmf,
    range_decode,
    range_encode,
    read_container,
    uniform_table,
    write_container,
)
from flowcodec.codec import ROUND, decode_pass, encode_mv, init_codec_params


def _random_table(rng, contexts, alphabet, offset=0):
    return CdfTable(quantize_pmf(rng.dirichlet(np.full(alphabet, 0.4), size=contexts)), offset=offset)


class TestCdf:
    def test_uniform_four_symbols(self):
        np.testing.assert_array_equal(uniform_table(4).cdf[0], [0, 2**14, 2**15, 3 * 2**14, 2**16])

    def test_gaussian_mode_at_zero(self):
        t = build_cdfs(np.zeros(1), np.ones(1), lo=-8, hi=8)
        freq = np.diff(t.cdf[0])
        assert np.argmax(freq) == 8  # symbol 0

    def test_invariants_under_extreme_models(self):
        means = np.array([0.0, 63.0, -64.0, 500.0, 0.3])
        scales = np.array([0.11, 0.11, 40.0, 1.0, 1e-3])
        cdf = build_cdfs(means, scales).cdf
        assert np.all(cdf[:, 0] == 0) and np.all(cdf[:, -1] == 2**16)
        assert np.all(np.diff(cdf, axis=1) >= 1)

    def test_tails_absorbed_by_edges(self):
        pmf = gaussian_pmf(np.array([0.0]), np.array([30.0]))
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert pmf[0, 0] > pmf[0, 1] and pmf[0, -1] > pmf[0, -2]

    def test_normal_cdf_accuracy(self):
        x = np.linspace(-9, 9, 20001)
        assert np.max(np.abs(normal_cdf(x) - ndtr(x))) < 1.5e-7

    def test_tables_are_reproducible(self):
        rng = np.random.default_rng(0)
        m, s = rng.normal(size=50), rng.uniform(0.11, 4, size=50)
        assert build_cdfs(m, s).cdf.tobytes() == build_cdfs(m.copy(), s.copy()).cdf.tobytes()

    def test_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            CdfTable(np.array([[0, 0, 65536]]))
        with pytest.raises(ValueError):
            CdfTable(np.array([[0, 100, 65535]]))


class TestRangeCoder:
    def test_empty_stream(self):
        assert range_encode([], uniform_table(4)) == b""
        assert range_decode(b"", uniform_table(4), 0).size == 0

    def test_half_mass_bound(self):
        t = uniform_table(2)
        s = np.random.default_rng(0).integers(0, 2, size=1000)
        data = range_encode(s, t)
        assert 8 * len(data) <= 1000 + 32
        np.testing.assert_array_equal(range_decode(data, t, 1000), s)

    def test_hundred_thousand_symbols(self):
        rng = np.random.default_rng(1)
        t = _random_table(rng, 64, 40, offset=-20)
        idx = rng.integers(0, 64, size=100_000)
        sym = rng.integers(-20, 20, size=100_000)
        data = range_encode(sym, t, idx)
        np.testing.assert_array_equal(range_decode(data, t, len(sym), idx), sym)
        assert 8 * len(data) <= np.ceil(t.code_length(sym, idx)) + 32

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 300), st.integers(2, 130))
    def test_randomized_roundtrip(self, seed, n, alphabet):
        rng = np.random.default_rng(seed)
        t = _random_table(rng, 3, alphabet, offset=-(alphabet // 2))
        idx = rng.integers(0, 3, size=n)
        pm = np.diff(t.cdf, axis=1) / 2**16
        sym = np.array([rng.choice(alphabet, p=pm[i]) for i in idx], dtype=np.int64) - alphabet // 2
        data = range_encode(sym, t, idx)
        np.testing.assert_array_equal(range_decode(data, t, n, idx), sym)
        assert 8 * len(data) <= np.ceil(t.code_length(sym, idx)) + 32

    def test_extreme_low_probability_symbols(self):
        t = CdfTable(quantize_pmf(np.array([[1.0, 0.0, 0.0]])), offset=0)
        sym = [1, 2, 1, 2, 0, 2] * 50
        data = range_encode(sym, t)
        np.testing.assert_array_equal(range_decode(data, t, len(sym)), sym)

    def test_out_of_alphabet_rejected(self):
        with pytest.raises(ValueError, match="position 1"):
            range_encode([0, 7], uniform_table(4))

    def test_truncated_input_reports_position(self):
        t = uniform_table(4)
        sym = np.random.default_rng(2).integers(0, 4, size=400)
        data = range_encode(sym, t)
        with pytest.raises(TruncatedStreamError, match=r"byte \d+") as err:
            range_decode(data[:40], t, len(sym))
        assert err.value.length == 40

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(3)
        t = _random_table(rng, 5, 9)
        sym, idx = rng.integers(0, 9, size=500), rng.integers(0, 5, size=500)
        assert range_encode(sym, t, idx) == range_encode(sym, t, idx)


class TestContainer:
    def _container(self):
        frames = [
            FrameRecord(INTRA, intra=bytes(range(16))),
            FrameRecord(INTER, z=b"\x01", y=b"\x02\x03", g=b"\x04\x05\x06"),
        ]
        return Container(4, 4, 1, 12, 256.0, bytes(range(32)), frames)

    def test_roundtrip(self, tmp_path):
        c = self._container()
        write_container(tmp_path / "s.frdc", c)
        assert (tmp_path / "s.frdc").read_bytes()[:4] == b"FRDC"
        assert read_container(tmp_path / "s.frdc") == c

    def test_digest_mismatch(self):
        with pytest.raises(ContainerError, match="digest mismatch"):
            Container.from_bytes(self._container().to_bytes(), expected_digest=b"\x00" * 32)

    def test_bad_magic_and_version(self):
        raw = bytearray(self._container().to_bytes())
        with pytest.raises(ContainerError, match="magic"):
            Container.from_bytes(b"XXXX" + bytes(raw[4:]))
        raw[4] = 9
        with pytest.raises(ContainerError, match="version"):
            Container.from_bytes(bytes(raw))

    def test_truncated_payload(self):
        raw = self._container().to_bytes()
        with pytest.raises(ContainerError, match="past end"):
            Container.from_bytes(raw[:-2])

    def test_payload_bits(self):
        assert self._container().frames[1].payload_bits == 48


@pytest.fixture(scope="module")
def coded():
    params = init_codec_params(seed=2)
    cur, ref, flow = frame_pair(seed=1)
    d = decode_pass(encode_mv(flow, params), ref, cur, params, 512.0, ROUND)
    rec = encode_inter_frame(d.latents.y, d.latents.z, d.g.g, params, ref)
    return params, ref, d, rec


class TestFrameCoding:
    def test_decoder_reproduces_reconstruction(self, coded):
        params, ref, d, rec = coded
        assert decode_inter_frame(rec, params, ref).tobytes() == d.reconstruction.data.tobytes()

    def test_actual_bits_track_estimate(self, coded):
        _, _, d, rec = coded
        est = d.rd.bits_y + d.rd.bits_z + d.rd.bits_g
        assert abs(rec.payload_bits - est) <= 0.01 * est + 64

    def test_rejects_unrounded(self, coded):
        params, ref, d, _ = coded
        with pytest.raises(ValueError, match="rounded"):
            encode_inter_frame(d.latents.y.data + 0.3, d.latents.z, d.g.g, params, ref)
