"""Differentiable primitives over (C, H, W) float64 arrays.

Every function accepts :class:`Tensor` or array-like inputs and returns a
:class:`Tensor`.  Shapes are never broadcast implicitly; mismatches raise
``ValueError`` naming both extents.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .tape import Tensor, active_tape

LN2 = math.log(2.0)
PROB_FLOOR = 2.0**-16
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, vjp)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    if _is_scalar(b):
        a = as_tensor(a)
        return _emit(a.data + float(b), (a,), lambda g: (g,))
    if _is_scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    if _is_scalar(b):
        return add(a, -float(b))
    if _is_scalar(a):
        b = as_tensor(b)
        return _emit(float(a) - b.data, (b,), lambda g: (-g,))
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    if _is_scalar(b):
        a, c = as_tensor(a), float(b)
        return _emit(a.data * c, (a,), lambda g: (g * c,))
    if _is_scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def leaky_relu(x, slope: float = 0.1) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    scale = np.where(pos, 1.0, slope)
    return _emit(x.data * scale, (x,), lambda g: (g * scale,))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    out = np.logaddexp(0.0, d)
    sig = np.exp(-np.logaddexp(0.0, -d))
    return _emit(out, (x,), lambda g: (g * sig,))


def square(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    return _emit(d * d, (x,), lambda g: (2.0 * g * d,))


def sqrt(x) -> Tensor:
    """Square root with the subgradient 0 at x == 0."""
    x = as_tensor(x)
    if np.any(x.data < 0):
        raise ValueError("sqrt: negative input")
    out = np.sqrt(x.data)
    with np.errstate(divide="ignore"):
        d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1.0), 0.0)
    return _emit(out, (x,), lambda g: (g * d,))


def add_noise(x, noise: np.ndarray) -> Tensor:
    """x + noise, where ``noise`` is a constant of the backward pass."""
    x = as_tensor(x)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x.shape:
        raise ValueError(f"add_noise: shape mismatch {x.shape} vs {noise.shape}")
    return _emit(x.data + noise, (x,), lambda g: (g,))


def round_half_away(x) -> Tensor:
    """Nearest integer, ties away from zero.  Derivative is zero almost everywhere."""
    x = as_tensor(x)
    d = x.data
    out = np.sign(d) * np.floor(np.abs(d) + 0.5)
    return _emit(out, (x,), lambda g: (np.zeros_like(g),))


# ---------------------------------------------------------------- reductions


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    out = np.sum(np.ascontiguousarray(x.data).reshape(-1))
    return _emit(np.asarray(out), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.size
    return mul(sum(x), 1.0 / n)


# ---------------------------------------------------------------- channel plumbing


def concat(tensors, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    ref = ts[0].shape
    for t in ts[1:]:
        if t.data.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis
        ):
            raise ValueError(f"concat: shape mismatch {ref} vs {t.shape} along non-concat axes")
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(ts)))

    return _emit(np.concatenate([t.data for t in ts], axis=axis), ts, vjp)


def channel_slice(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _emit(x.data[start:stop].copy(), (x,), vjp)


def expand_channels(v, height: int, width: int) -> Tensor:
    """Broadcast a per-channel vector (C,) to (C, height, width)."""
    v = as_tensor(v)
    if v.data.ndim != 1:
        raise ValueError(f"expand_channels: expected (C,), got {v.shape}")
    out = np.broadcast_to(v.data[:, None, None], (v.shape[0], height, width)).copy()
    return _emit(out, (v,), lambda g: (g.sum(axis=(1, 2)),))


# ---------------------------------------------------------------- convolution


def _im2col(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((c, k, k, ho, wo))
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, i : i + s * ho : s, j : j + s * wo : s]
    return cols.reshape(c * k * k, ho * wo)


def _col2im(cols: np.ndarray, padded_shape, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    c = padded_shape[0]
    cols = cols.reshape(c, k, k, ho, wo)
    xp = np.zeros(padded_shape)
    for i in range(k):
        for j in range(k):
            xp[:, i : i + s * ho : s, j : j + s * wo : s] += cols[:, i, j]
    return xp


def _check_conv(x: Tensor, w: Tensor, b: Tensor | None, cin_axis: int, cout_axis: int, op: str):
    if x.data.ndim != 3:
        raise ValueError(f"{op}: input must be (C, H, W), got {x.shape}")
    if w.data.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValueError(f"{op}: kernel must be square 4-D, got {w.shape}")
    if w.shape[cin_axis] != x.shape[0]:
        raise ValueError(f"{op}: input has {x.shape[0]} channels but kernel {w.shape} expects {w.shape[cin_axis]}")
    if b is not None and b.shape != (w.shape[cout_axis],):
        raise ValueError(f"{op}: bias shape {b.shape} does not match {w.shape[cout_axis]} output channels")


def conv2d(x, w, b=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """Cross-correlation of x (Cin,H,W) with w (Cout,Cin,k,k), zero padded."""
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    _check_conv(x, w, b, 1, 0, "conv2d")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    cout, cin, k, _ = w.shape
    p = k // 2 if padding is None else padding
    _, h, wd = x.shape
    ho = (h + 2 * p - k) // stride + 1
    wo = (wd + 2 * p - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: input {x.shape} too small for kernel {k} at stride {stride}")
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    cols = _im2col(xp, k, stride, ho, wo)
    w2 = w.data.reshape(cout, -1)
    out = w2 @ cols
    if b is not None:
        out += b.data[:, None]
    out = out.reshape(cout, ho, wo)

    def vjp(g):
        g2 = g.reshape(cout, -1)
        gw = (g2 @ cols.T).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = _col2im(w2.T @ g2, xp.shape, k, stride, ho, wo)
            gx = gxp[:, p : p + h, p : p + wd]
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=1))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return _emit(out, inputs, vjp)


def conv_transpose2d(x, w, b=None, stride: int = 2, padding: int | None = None) -> Tensor:
    """Adjoint of a stride-``stride`` conv2d: (Cin,h,w) -> (Cout, s*h, s*w).

    ``w`` has shape (Cin, Cout, k, k).  Odd k with the default padding k//2
    gives exactly doubled extents.
    """
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    _check_conv(x, w, b, 0, 1, "conv_transpose2d")
    if stride != 2:
        raise ValueError(f"conv_transpose2d: only stride 2 is supported, got {stride}")
    cin, cout, k, _ = w.shape
    p = k // 2 if padding is None else padding
    _, h, wd = x.shape
    hs, ws = stride * h, stride * wd
    padded = (cout, hs + 2 * p, ws + 2 * p)
    if (hs + 2 * p - k) // stride + 1 != h:
        raise ValueError(f"conv_transpose2d: kernel {k} with padding {p} does not invert stride {stride}")
    w2 = w.data.reshape(cin, -1)
    x2 = x.data.reshape(cin, -1)
    outp = _col2im(w2.T @ x2, padded, k, stride, h, wd)
    out = outp[:, p : p + hs, p : p + ws]
    if b is not None:
        out = out + b.data[:, None, None]
    else:
        out = out.copy()

    def vjp(g):
        gp = np.pad(g, ((0, 0), (p, p), (p, p)))
        gcols = _im2col(gp, k, stride, h, wd)
        gx = (w2 @ gcols).reshape(x.shape) if x.requires_grad else None
        gw = (x2 @ gcols.T).reshape(w.shape) if w.requires_grad else None
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(1, 2)))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return _emit(out, inputs, vjp)


# ---------------------------------------------------------------- resampling


@lru_cache(maxsize=None)
def _upsample_matrix(n: int) -> np.ndarray:
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = (o + 0.5) / 2.0 - 0.5
        i0 = math.floor(src)
        frac = src - i0
        lo, hi = min(max(i0, 0), n - 1), min(max(i0 + 1, 0), n - 1)
        m[o, lo] += 1.0 - frac
        m[o, hi] += frac
    m.setflags(write=False)
    return m


def upsample2x(x) -> Tensor:
    """Bilinear 2x upsampling with half-pixel centres and clamped edges."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ValueError(f"upsample2x: input must be (C, H, W), got {x.shape}")
    _, h, w = x.shape
    uh, uw = _upsample_matrix(h), _upsample_matrix(w)
    out = np.matmul(np.matmul(uh, x.data), uw.T)
    return _emit(out, (x,), lambda g: (np.matmul(np.matmul(uh.T, g), uw),))


def avgpool2x(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 3 or x.shape[1] % 2 or x.shape[2] % 2:
        raise ValueError(f"avgpool2x: need (C, H, W) with even H and W, got {x.shape}")
    c, h, w = x.shape
    out = x.data.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    return _emit(out, (x,), lambda g: (np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25,))


def warp(x, flow) -> Tensor:
    """Backward warp: out(c, y, x) = bilinear sample of x at (x + flow[0], y + flow[1]).

    Sample coordinates outside the frame are clamped to the border.
    """
    x, flow = as_tensor(x), as_tensor(flow)
    if x.data.ndim != 3 or flow.data.ndim != 3 or flow.shape[0] != 2 or flow.shape[1:] != x.shape[1:]:
        raise ValueError(f"warp: frame {x.shape} and flow {flow.shape} are incompatible (flow must be (2, H, W))")
    c, h, w = x.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = gx + flow.data[0]
    sy = gy + flow.data[1]
    cx = np.clip(sx, 0.0, w - 1)
    cy = np.clip(sy, 0.0, h - 1)
    x0 = np.floor(cx).astype(np.intp)
    y0 = np.floor(cy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = cx - x0
    wy = cy - y0
    img = x.data
    ia, ib = img[:, y0, x0], img[:, y0, x1]
    ic, id_ = img[:, y1, x0], img[:, y1, x1]
    w_a = (1.0 - wx) * (1.0 - wy)
    w_b = wx * (1.0 - wy)
    w_c = (1.0 - wx) * wy
    w_d = wx * wy
    out = ia * w_a + ib * w_b + ic * w_c + id_ * w_d

    def vjp(g):
        gimg = None
        if x.requires_grad:
            base = (np.arange(c) * (h * w))[:, None, None]
            idx = np.concatenate(
                [(base + y0 * w + x0).ravel(), (base + y0 * w + x1).ravel(),
                 (base + y1 * w + x0).ravel(), (base + y1 * w + x1).ravel()]
            )
            wts = np.concatenate([(g * w_a).ravel(), (g * w_b).ravel(), (g * w_c).ravel(), (g * w_d).ravel()])
            gimg = np.bincount(idx, weights=wts, minlength=c * h * w).reshape(c, h, w)
        gflow = None
        if flow.requires_grad:
            dcx = (1.0 - wy) * (ib - ia) + wy * (id_ - ic)
            dcy = (1.0 - wx) * (ic - ia) + wx * (id_ - ib)
            inside_x = (sx >= 0.0) & (sx <= w - 1)
            inside_y = (sy >= 0.0) & (sy <= h - 1)
            gflow = np.stack([(g * dcx).sum(axis=0) * inside_x, (g * dcy).sum(axis=0) * inside_y])
        return gimg, gflow

    return _emit(out, (x, flow), vjp)


# ---------------------------------------------------------------- likelihood


def gaussian_interval_bits(x, mean, scale) -> Tensor:
    """Elementwise -log2 P(x), P = Gaussian(mean, scale) mass on [x - 0.5, x + 0.5].

    Masses below 2**-16 are floored; floored elements receive zero gradient.
    """
    x, mean, scale = as_tensor(x), as_tensor(mean), as_tensor(scale)
    _same_shape("gaussian_interval_bits", x, mean)
    _same_shape("gaussian_interval_bits", x, scale)
    if np.any(scale.data <= 0):
        raise ValueError("gaussian_interval_bits: scale must be positive")
    s = scale.data
    u = x.data - mean.data
    v = np.abs(u)
    a = (0.5 - v) / s
    b = (-0.5 - v) / s
    mass = ndtr(a) - ndtr(b)
    floored = mass < PROB_FLOOR
    bits = -np.log2(np.where(floored, PROB_FLOOR, mass))

    def vjp(g):
        pa = np.exp(-0.5 * a * a) * _INV_SQRT_2PI
        pb = np.exp(-0.5 * b * b) * _INV_SQRT_2PI
        dbits = np.where(floored, 0.0, -g / (np.where(floored, 1.0, mass) * LN2))
        dv = (pb - pa) / s
        ds = (b * pb - a * pa) / s
        gx = dbits * dv * np.sign(u)
        return gx, -gx, dbits * ds

    out = _emit(bits, (x, mean, scale), vjp)
    return out


def floored_count(x, mean, scale) -> int:
    """How many elements hit the probability floor in :func:`gaussian_interval_bits`."""
    x, mean, scale = (np.asarray(getattr(t, "data", t), dtype=np.float64) for t in (x, mean, scale))
    v = np.abs(x - mean)
    mass = ndtr((0.5 - v) / scale) - ndtr((-0.5 - v) / scale)
    return int(np.count_nonzero(mass < PROB_FLOOR))
