import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcodec.evaluation import SyntheticSpec, gen_synthetic
from flowcodec.fileio import read_checkpoint, read_video, write_checkpoint, write_video
from flowcodec.grad import Tape, check_gradients
from flowcodec.motion import (
    FinetuneConfig,
    MVLabelGrid,
    densify_labels,
    epe,
    estimate_flow,
    evaluate_flow,
    finetune_flow,
    init_flow_params,
    me_loss,
    read_mv_labels,
    warp,
    write_mv_labels,
)
from flowcodec.motion.finetune import flow_loss_and_grads


class TestWarp:
    def test_zero_flow_identity(self):
        ref = np.random.default_rng(0).uniform(size=(2, 8, 8))
        np.testing.assert_array_equal(warp(ref, np.zeros((2, 8, 8))).data, ref)

    def test_integer_shift_exact(self):
        target = np.random.default_rng(1).uniform(size=(1, 8, 8))
        reference = np.zeros_like(target)
        reference[:, :, 1:] = target[:, :, :-1]  # target shifted one column right
        flow = np.zeros((2, 8, 8))
        flow[0] = 1.0
        out = warp(reference, flow).data
        np.testing.assert_array_equal(out[:, :, :-1], target[:, :, :-1])

    def test_half_pixel(self):
        ref = np.tile(np.arange(0.0, 16.0, 2.0), (8, 1))[None]
        flow = np.zeros((2, 8, 8))
        flow[0] = 0.5
        assert warp(ref, flow).data[0, 0, 0] == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            warp(np.zeros((1, 8, 8)), np.zeros((2, 4, 4)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(-3, 3), st.integers(-3, 3), st.integers(0, 10_000))
    def test_integer_flow_exact_in_bounds(self, dx, dy, seed):
        ref = np.random.default_rng(seed).uniform(size=(1, 10, 10))
        flow = np.zeros((2, 10, 10))
        flow[0], flow[1] = dx, dy
        out = warp(ref, flow).data
        for y in range(10):
            for x in range(10):
                if 0 <= x + dx < 10 and 0 <= y + dy < 10:
                    assert out[0, y, x] == ref[0, y + dy, x + dx]


class TestEstimateFlow:
    def test_shape(self):
        p = init_flow_params(levels=3)
        rng = np.random.default_rng(0)
        flow = estimate_flow(rng.uniform(size=(1, 64, 64)), rng.uniform(size=(1, 64, 64)), p)
        assert flow.shape == (2, 64, 64)

    def test_zero_final_layers_zero_flow(self):
        p = init_flow_params(levels=3, zero_final=True)
        rng = np.random.default_rng(0)
        flow, levels = estimate_flow(rng.uniform(size=(1, 32, 32)), rng.uniform(size=(1, 32, 32)), p, return_levels=True)
        for f in levels:
            assert np.all(f.data == 0.0)

    def test_deterministic(self):
        p = init_flow_params(levels=3, seed=4)
        rng = np.random.default_rng(2)
        a, b = rng.uniform(size=(2, 1, 32, 32))
        assert estimate_flow(a, b, p).data.tobytes() == estimate_flow(a, b, p).data.tobytes()

    def test_indivisible_rejected(self):
        p = init_flow_params(levels=3)
        with pytest.raises(ValueError, match="divisible by 4"):
            estimate_flow(np.zeros((1, 30, 32)), np.zeros((1, 30, 32)), p)


class TestLosses:
    def test_epe_equal_zero(self):
        f = np.random.default_rng(0).normal(size=(2, 4, 4))
        assert epe(f, f).item() == 0.0

    def test_epe_345(self):
        f = np.zeros((2, 4, 4))
        f[0], f[1] = 3.0, 4.0
        assert epe(f, np.zeros((2, 4, 4))).item() == 5.0

    def test_epe_half(self):
        f = np.zeros((2, 4, 4))
        f[0, :2], f[1, :2] = 3.0, 4.0
        assert epe(f, np.zeros((2, 4, 4))).item() == 2.5

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_epe_symmetric_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, 2, 4, 4))
        assert epe(a, b).item() >= 0.0
        assert epe(a, b).item() == pytest.approx(epe(b, a).item(), rel=1e-15)

    def test_me_loss_hand_value(self):
        # EPE 5 everywhere, warp MSE exactly 0.01, lambda_me 100 -> 6
        cur = np.full((1, 4, 4), 0.6)
        ref = np.full((1, 4, 4), 0.5)
        flow = np.zeros((2, 4, 4))
        label = np.zeros((2, 4, 4))
        label[0], label[1] = 3.0, 4.0
        assert me_loss(cur, ref, flow, label, 100.0).item() == pytest.approx(6.0, abs=1e-12)

    def test_me_loss_zero(self):
        ref = np.random.default_rng(0).uniform(size=(1, 4, 4))
        assert me_loss(ref, ref, np.zeros((2, 4, 4)), np.zeros((2, 4, 4))).item() == 0.0

    def test_default_lambda(self):
        assert FinetuneConfig().lambda_me == 100.0

    def test_me_loss_param_gradient_fd(self):
        def builder(rng):
            base = init_flow_params(levels=2, width=4, depth=2, seed=7)
            cur, ref = rng.uniform(size=(2, 1, 8, 8))
            label = rng.normal(size=(2, 8, 8))
            names = ["flow.l0.c0.w", "flow.l1.c1.w", "flow.l0.c1.b"]

            def fn(**leaves):
                p = {**base, **leaves}
                return me_loss(cur, ref, estimate_flow(cur, ref, p), label, 100.0)

            return fn, {k: base[k] for k in names}

        report = check_gradients(builder, seed=0, max_entries=40)
        assert report.max_rel_error < 1e-4, report.lines()


class TestLabels:
    def test_single_cell(self):
        g = MVLabelGrid(width=4, height=4, mv=np.array([[[16]], [[0]]]), stride=4, precision=16)
        flow = densify_labels(g)
        assert flow.shape == (2, 4, 4)
        assert np.all(flow[0] == 1.0) and np.all(flow[1] == 0.0)

    def test_zero_grid(self):
        g = MVLabelGrid(width=8, height=8, mv=np.zeros((2, 2, 2), int))
        assert np.all(densify_labels(g) == 0.0)

    def test_two_cells(self):
        mv = np.array([[[16, -32]], [[0, 16]]])  # (2, 1 row, 2 cols)
        g = MVLabelGrid(width=4, height=2, mv=mv, stride=2, precision=16)
        flow = densify_labels(g)
        np.testing.assert_array_equal(flow[:, :, :2], np.array([[[1, 1]] * 2, [[0, 0]] * 2], float))
        np.testing.assert_array_equal(flow[0, :, 2:], -2.0)
        np.testing.assert_array_equal(flow[1, :, 2:], 1.0)

    def test_grid_extent_invariant(self):
        with pytest.raises(ValueError):
            MVLabelGrid(width=9, height=8, mv=np.zeros((2, 2, 2), int), stride=4)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2, 4, 8]))
    def test_densify_then_subsample_recovers_grid(self, seed, stride):
        rng = np.random.default_rng(seed)
        h, w = 16, 12
        mv = rng.integers(-500, 500, size=(2, -(-h // stride), -(-w // stride)))
        g = MVLabelGrid(width=w, height=h, mv=mv, stride=stride, precision=16)
        back = densify_labels(g)[:, ::stride, ::stride] * 16
        np.testing.assert_array_equal(back, mv)

    def test_file_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        grids = [
            MVLabelGrid(width=10, height=7, mv=rng.integers(-300, 300, size=(2, 2, 3)), metadata="QP=22;PROF=0"),
            MVLabelGrid(width=8, height=8, mv=rng.integers(-3, 3, size=(2, 4, 4)), stride=2, precision=4),
        ]
        path = tmp_path / "labels.mvl"
        write_mv_labels(path, grids)
        raw = path.read_bytes()
        assert raw[:4] == b"MVL1"
        back = read_mv_labels(path)
        for a, b in zip(grids, back):
            assert (a.width, a.height, a.stride, a.precision, a.metadata) == (b.width, b.height, b.stride, b.precision, b.metadata)
            np.testing.assert_array_equal(a.mv, b.mv)

    def test_synthetic_labels_match_ground_truth(self):
        for motion in [(1.0, 0.0), (-0.3125, 0.75), (2.0625, -1.5)]:
            video, labels, flows = gen_synthetic(SyntheticSpec(width=32, height=32, frames=3, motions=(motion,)))
            for g, f in zip(labels, flows):
                np.testing.assert_array_equal(densify_labels(g), f)


class TestFileFormats:
    def test_video_roundtrip(self, tmp_path):
        frames = np.random.default_rng(0).integers(0, 256, size=(3, 2, 4, 6)) / 255.0
        write_video(tmp_path / "v.fvid", frames)
        assert (tmp_path / "v.fvid").read_bytes()[:4] == b"FVID"
        np.testing.assert_array_equal(read_video(tmp_path / "v.fvid"), frames)

    def test_checkpoint_roundtrip(self, tmp_path):
        p = init_flow_params(levels=2, width=4)
        write_checkpoint(tmp_path / "c.fckp", p)
        back = read_checkpoint(tmp_path / "c.fckp")
        assert set(back) == set(p)
        for k in p:
            assert back[k].tobytes() == np.asarray(p[k], float).tobytes()


def _corpus(n, seed, size=32):
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        motion = tuple(np.round(rng.uniform(-2, 2, size=2) * 16) / 16)
        video, labels, _ = gen_synthetic(SyntheticSpec(width=size, height=size, frames=2, motions=(motion,), texture_seed=seed * 1000 + i))
        data.append((video[1], video[0], labels[0]))
    return data


class TestFinetune:
    def test_zero_lr_unchanged(self):
        p = init_flow_params(levels=2, width=8, seed=1)
        out = finetune_flow(p, _corpus(2, 0, 16), FinetuneConfig(iterations=3, lr=0.0))
        for k in p:
            assert out[k].tobytes() == p[k].tobytes()

    def test_single_sgd_step(self):
        p = init_flow_params(levels=2, width=8, seed=1)
        data = _corpus(1, 0, 16)
        out = finetune_flow(p, data, FinetuneConfig(iterations=1, lr=1e-3, optimizer="sgd", milestones={}))
        from flowcodec.motion import densify_labels as dl

        _, grads = flow_loss_and_grads(p, [(data[0][0], data[0][1], dl(data[0][2]))], 100.0)
        for k, g in grads.items():
            np.testing.assert_array_equal(out[k], p[k] - 1e-3 * g)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            finetune_flow(init_flow_params(), [], FinetuneConfig())

    def test_deterministic(self):
        p = init_flow_params(levels=2, width=8, seed=1)
        data = _corpus(3, 0, 16)
        cfg = FinetuneConfig(iterations=4, lr=1e-3, batch_size=2, seed=5)
        a, b = finetune_flow(p, data, cfg), finetune_flow(p, data, cfg)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)

    @pytest.mark.slow
    def test_translation_trend(self):
        p = init_flow_params(levels=3, seed=0)
        train, held = _corpus(128, 1), _corpus(8, 2)
        before, _ = evaluate_flow(p, held)
        tuned = finetune_flow(p, train, FinetuneConfig(iterations=1000, lr=1e-3))
        after, _ = evaluate_flow(tuned, held)
        assert after < before
