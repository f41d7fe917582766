"""Coarse-to-fine pyramid flow estimator and the warp operation.

Frames are (C, H, W) arrays in [0, 1]; flows are (2, H, W) arrays in pixel
units, channel 0 horizontal (positive right) and channel 1 vertical
(positive down).  ``warp(reference, flow)`` predicts the current frame.
"""

from __future__ import annotations

import numpy as np

from ..grad import Tensor, ops

FLOW_PREFIX = "flow"


def warp(reference, flow) -> Tensor:
    """Bilinearly sample ``reference`` at (x + flow_x, y + flow_y), borders clamped."""
    ref, fl = ops.as_tensor(reference), ops.as_tensor(flow)
    if fl.data.ndim != 3 or fl.shape[0] != 2 or ref.data.ndim != 3 or fl.shape[1:] != ref.shape[1:]:
        raise ValueError(f"warp: flow {fl.shape} does not match frame {ref.shape}")
    return ops.warp(ref, fl)


def init_flow_params(
    channels: int = 1,
    levels: int = 3,
    width: int = 16,
    depth: int = 4,
    seed: int = 0,
    zero_final: bool = False,
) -> dict[str, np.ndarray]:
    """Randomly initialised pyramid parameters, namespaced ``flow.l{level}.c{layer}``.

    Every level sees ``2 * channels + 2`` input planes: current frame, warped
    reference and the upsampled coarser flow.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    in_ch = 2 * channels + 2
    for level in range(levels):
        chans = [in_ch] + [width] * (depth - 1) + [2]
        for i in range(depth):
            cin, cout = chans[i], chans[i + 1]
            last = i == depth - 1
            std = 0.01 if last else np.sqrt(2.0 / (cin * 9))
            w = np.zeros((cout, cin, 3, 3)) if (last and zero_final) else rng.normal(scale=std, size=(cout, cin, 3, 3))
            params[f"{FLOW_PREFIX}.l{level}.c{i}.w"] = w
            params[f"{FLOW_PREFIX}.l{level}.c{i}.b"] = np.zeros(cout)
    return params


def flow_levels(params) -> int:
    n = 0
    while f"{FLOW_PREFIX}.l{n}.c0.w" in params:
        n += 1
    if n == 0:
        raise KeyError("no flow-network parameters found")
    return n


def _flow_depth(params) -> int:
    n = 0
    while f"{FLOW_PREFIX}.l0.c{n}.w" in params:
        n += 1
    return n


def _residual(params, level: int, x: Tensor) -> Tensor:
    depth = _flow_depth(params)
    for i in range(depth):
        x = ops.conv2d(x, params[f"{FLOW_PREFIX}.l{level}.c{i}.w"], params[f"{FLOW_PREFIX}.l{level}.c{i}.b"])
        if i < depth - 1:
            x = ops.leaky_relu(x, 0.1)
    return x


def estimate_flow(current, reference, params, return_levels: bool = False):
    """Pyramid flow from ``current`` to ``reference``.

    Level k refines ``2 * upsample(flow_{k+1})`` by a residual predicted from
    (current_k, warp(reference_k, upsampled flow), upsampled flow).  Level 0 is
    full resolution; the coarsest level starts from zero flow.
    """
    cur, ref = ops.as_tensor(current), ops.as_tensor(reference)
    if cur.shape != ref.shape or cur.data.ndim != 3:
        raise ValueError(f"estimate_flow: frames {cur.shape} and {ref.shape} must match and be (C, H, W)")
    levels = flow_levels(params)
    div = 2 ** (levels - 1)
    _, h, w = cur.shape
    if h % div or w % div:
        raise ValueError(f"estimate_flow: frame {h}x{w} must be divisible by {div} for {levels} levels")
    curs, refs = [cur], [ref]
    for _ in range(levels - 1):
        curs.append(ops.avgpool2x(curs[-1]))
        refs.append(ops.avgpool2x(refs[-1]))
    flow = None
    per_level = []
    for level in reversed(range(levels)):
        c, r = curs[level], refs[level]
        if flow is None:
            up = Tensor(np.zeros((2,) + c.shape[1:]))
            warped = r
        else:
            up = ops.upsample2x(flow) * 2.0
            warped = ops.warp(r, up)
        res = _residual(params, level, ops.concat([c, warped, up]))
        flow = res if level == levels - 1 else up + res
        per_level.append(flow)
    if return_levels:
        return flow, per_level[::-1]
    return flow
