import json

import numpy as np
import pytest
from builders import frame_pair

from flowcodec.bitstream import Container
from flowcodec.codec import ROUND, encode_mv, init_codec_params
from flowcodec.codec.model import quantize_tensor
from flowcodec.codec.train import LAMBDA_KEY
from flowcodec.evaluation import synthetic_sequence
from flowcodec.fileio import params_digest
from flowcodec.grad import tapes_created
from flowcodec.motion import estimate_flow, init_flow_params
from flowcodec.online import (
    DEFAULT_WEIGHTS,
    LOG_FIELDS,
    GopConfig,
    OptConfig,
    WindowConfig,
    decode_sequence,
    encode_sequence,
    lr_schedule,
    optimize_single_frame,
    optimize_window,
    optimizer_iterations,
    window_loss,
    window_schedule,
)


@pytest.fixture(scope="module")
def untrained():
    p = {**init_flow_params(seed=3), **init_codec_params(seed=3)}
    p[LAMBDA_KEY] = np.array([256.0])
    return p


class TestSchedules:
    def test_lr_defaults(self):
        cfg = OptConfig()
        assert cfg.iterations == 1500
        assert lr_schedule(0, cfg) == 5e-3
        assert lr_schedule(1199, cfg) == 5e-3
        assert lr_schedule(1250, cfg) == 2.5e-3

    def test_constant_override(self):
        cfg = OptConfig.constant(3000, lr=1e-2)
        assert {lr_schedule(i, cfg) for i in (0, 1200, 2999)} == {1e-2}

    @pytest.mark.parametrize("bad", [dict(iterations=-1), dict(lr=0.0), dict(eval_every=0)])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            OptConfig(**bad)

    def test_window_examples(self):
        assert window_schedule(12, 3, 4) == 4
        assert window_schedule(12, 11, 4) == 2
        assert window_schedule(12, 10, 4) == 3

    @pytest.mark.parametrize("w", [2, 3, 4, 5])
    def test_window_shrinks_by_one_to_two(self, w):
        sizes = [window_schedule(12, i, w) for i in range(1, 12)]
        tail = sizes[-(w - 1):]
        assert tail == list(range(w, 1, -1))
        assert all(s == w for s in sizes[: len(sizes) - len(tail)])

    def test_window_loss_hand_value(self):
        assert window_loss([10.0, 4.0], (1.0, 0.5)) == 12.0

    def test_default_weights(self):
        assert DEFAULT_WEIGHTS == (1.0, 0.5, 0.2, 0.1)
        with pytest.raises(ValueError):
            WindowConfig(size=1)
        with pytest.raises(ValueError):
            WindowConfig(size=3, weights=(0.5, 0.5))


class TestSingleFrame:
    def test_zero_iterations_returns_initial(self, untrained):
        cur, ref, _ = frame_pair()
        r = optimize_single_frame(cur, ref, untrained, 256.0, OptConfig(iterations=0))
        assert r.cost == r.initial_cost and r.best_iteration == 0 and r.trace == [r.cost]
        y0 = encode_mv(estimate_flow(cur, ref, untrained), untrained).y
        np.testing.assert_array_equal(r.y_hat, quantize_tensor(y0, ROUND).data)

    def test_keep_best_monotone(self, untrained):
        cur, ref, flow = frame_pair(seed=2)
        r = optimize_single_frame(cur, ref, untrained, 256.0, OptConfig(iterations=6), init_flow=flow + 0.8)
        assert r.cost <= r.initial_cost
        assert all(b <= a for a, b in zip(r.trace, r.trace[1:]))
        assert r.cost == r.rd.total

    def test_params_untouched(self, untrained):
        before = params_digest(untrained)
        cur, ref, _ = frame_pair()
        optimize_single_frame(cur, ref, untrained, 256.0, OptConfig(iterations=2))
        assert params_digest(untrained) == before

    def test_prefix_of_longer_run(self, untrained):
        cur, ref, _ = frame_pair(seed=4)
        short = optimize_single_frame(cur, ref, untrained, 256.0, OptConfig(iterations=3, seed=9))
        long = optimize_single_frame(cur, ref, untrained, 256.0, OptConfig(iterations=6, seed=9))
        assert long.trace[:4] == short.trace

    def test_non_finite_iterations_skipped(self, untrained):
        cur, ref, _ = frame_pair()
        r = optimize_single_frame(cur, ref, untrained, float("nan"), OptConfig(iterations=3))
        assert r.skipped == [0, 1, 2]
        assert r.best_iteration == 0

    def test_eval_every_thins_rounded_decodes(self, untrained):
        cur, ref, flow = frame_pair(seed=2)
        r = optimize_single_frame(cur, ref, untrained, 256.0, OptConfig(iterations=4, eval_every=2), init_flow=flow + 0.8)
        assert r.best_iteration in (0, 2, 4)

    @pytest.mark.slow
    def test_trained_codec_improves_from_perturbed_start(self, toy_checkpoint):
        cur, ref, _ = frame_pair(seed=11)
        flow = estimate_flow(cur, ref, toy_checkpoint).data
        pert = flow + np.random.default_rng(0).normal(scale=0.5, size=flow.shape)
        r = optimize_single_frame(cur, ref, toy_checkpoint, 2048.0, OptConfig(iterations=200), init_flow=pert)
        assert r.cost < r.initial_cost


class TestWindow:
    def test_two_frame_window_matches_single(self, untrained):
        cur, ref, flow = frame_pair(seed=5)
        cfg = OptConfig(iterations=4, seed=2)
        single = optimize_single_frame(cur, ref, untrained, 256.0, cfg, init_flow=flow + 0.5)
        window = optimize_window([cur], ref, untrained, 256.0, WindowConfig(size=2), cfg, init_flow=flow + 0.5)
        assert single.y_hat.tobytes() == window.y_hat.tobytes()
        assert single.z_hat.tobytes() == window.z_hat.tobytes()
        assert single.trace == window.trace
        assert single.reconstruction.tobytes() == window.reconstruction.tobytes()

    def test_three_frame_window_keep_best(self, untrained):
        video = synthetic_sequence(frames=3, seed=1)
        r = optimize_window(video[1:], video[0], untrained, 256.0, WindowConfig(size=3), OptConfig(iterations=3))
        assert r.cost <= r.initial_cost
        assert r.cost > r.rd.total  # weighted window cost includes the follower frame

    def test_too_many_frames_rejected(self, untrained):
        video = synthetic_sequence(frames=4)
        with pytest.raises(ValueError):
            optimize_window(video[1:], video[0], untrained, 256.0, WindowConfig(size=3), OptConfig(iterations=1))


class TestSequence:
    def test_gop_structure_96_frames(self, untrained):
        video = synthetic_sequence(frames=96, size=32)
        _, reports, _ = encode_sequence(video, untrained, GopConfig(intra_period=12), "none")
        kinds = [r.type for r in reports]
        assert kinds.count("I") == 8 and kinds.count("P") == 88
        assert all(kinds[i] == "I" for i in range(0, 96, 12))

    def test_bits_match_payloads_and_decode_exact(self, untrained):
        video = synthetic_sequence(frames=5, seed=2)
        data, reports, recons = encode_sequence(video, untrained, GopConfig(intra_period=3), "single", OptConfig(iterations=2))
        c = Container.from_bytes(data)
        assert [r.bits_total for r in reports] == [f.payload_bits for f in c.frames]
        assert reports[0].bits_total == 8 * 64 * 64
        n_iter, n_tape = optimizer_iterations(), tapes_created()
        decoded = decode_sequence(data, untrained)
        assert optimizer_iterations() == n_iter and tapes_created() == n_tape
        assert decoded.tobytes() == recons.tobytes()

    def test_none_equals_single_with_zero_iterations(self, untrained):
        video = synthetic_sequence(frames=3, seed=3)
        a, _, _ = encode_sequence(video, untrained, GopConfig(intra_period=12), "none")
        b, _, _ = encode_sequence(video, untrained, GopConfig(intra_period=12), "single", OptConfig(iterations=0))
        assert a == b

    def test_window_mode_decodes(self, untrained):
        video = synthetic_sequence(frames=4, seed=4)
        data, reports, recons = encode_sequence(
            video, untrained, GopConfig(intra_period=4), "window", OptConfig(iterations=1), WindowConfig(size=3)
        )
        assert decode_sequence(data, untrained).tobytes() == recons.tobytes()

    def test_deterministic_bytes(self, untrained):
        video = synthetic_sequence(frames=3, seed=5)
        runs = [encode_sequence(video, untrained, GopConfig(), "single", OptConfig(iterations=1))[0] for _ in range(2)]
        assert runs[0] == runs[1]

    def test_lambda_without_checkpoint_rejected(self, untrained):
        with pytest.raises(ValueError, match="no checkpoint for lambda 512"):
            encode_sequence(synthetic_sequence(frames=2), untrained, GopConfig(lam=512.0), "none")

    def test_log_line_field_order(self, untrained):
        _, reports, _ = encode_sequence(synthetic_sequence(frames=2), untrained, GopConfig(), "none")
        assert tuple(json.loads(reports[1].log_line())) == LOG_FIELDS

    def test_altered_checkpoint_rejected_by_decoder(self, untrained):
        data, _, _ = encode_sequence(synthetic_sequence(frames=2), untrained, GopConfig(), "none")
        other = dict(untrained)
        other["codec.ctx_out.b"] = other["codec.ctx_out.b"] + 1e-3
        with pytest.raises(ValueError, match="digest mismatch"):
            decode_sequence(data, other)
