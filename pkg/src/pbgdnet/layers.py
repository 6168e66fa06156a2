"""CNN building blocks over single images of arbitrary spatial size.

Every layer takes channel-first tensors without a batch axis: convolution,
ReLU and pooling map (C, H, W) -> (C', H', W'), spatial pyramid pooling
collapses any (C, H, W) to a fixed-length vector, and the classifier head
works on flat vectors.  All of them register exact backward rules on the
active tape.

Convolutions follow the cross-correlation convention (no kernel flip) and
are evaluated as blocked im2col + GEMM so that huge inputs never
materialize a full column matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, ShapeMismatchError, record_op

# Column matrices at or below this size are cached from forward for reuse in
# backward; larger ones are rebuilt block by block to bound peak memory.
_COLS_CACHE_BYTES = 32 * 1024 * 1024
_COLS_BLOCK_BYTES = 64 * 1024 * 1024


class SizedInputError(ValueError):
    """Input spatial dimensions are below the operation's minimum."""


@dataclass
class Conv2dParams:
    """Weights of one convolution: (out_ch, in_ch, kh, kw) plus options."""
    weight: Tensor
    bias: Optional[Tensor] = None
    stride: int = 1
    padding: int = 0


@dataclass
class SppSpec:
    """Pyramid scale set; output length per channel is sum(s*s)."""
    scales: tuple = (1, 2, 4)
    pool_kind: str = "max"

    @property
    def bins(self) -> int:
        return int(sum(s * s for s in self.scales))


def _im2col_block(xp: np.ndarray, kh: int, kw: int, stride: int,
                  r0: int, r1: int, wo: int) -> np.ndarray:
    """Columns for output rows [r0, r1): shape (C*kh*kw, (r1-r0)*wo)."""
    c = xp.shape[0]
    nb = r1 - r0
    cols = np.empty((c, kh, kw, nb, wo), dtype=np.float64)
    for i in range(kh):
        rs = r0 * stride + i
        for j in range(kw):
            cols[:, i, j] = xp[:, rs:rs + (nb - 1) * stride + 1:stride,
                               j:j + (wo - 1) * stride + 1:stride]
    return cols.reshape(c * kh * kw, nb * wo)


def _col_scatter_block(dxp: np.ndarray, dcols: np.ndarray, kh: int, kw: int,
                       stride: int, r0: int, r1: int, wo: int) -> None:
    """Inverse of _im2col_block: accumulate column grads back into dxp."""
    c = dxp.shape[0]
    nb = r1 - r0
    dc = dcols.reshape(c, kh, kw, nb, wo)
    for i in range(kh):
        rs = r0 * stride + i
        for j in range(kw):
            dxp[:, rs:rs + (nb - 1) * stride + 1:stride,
                j:j + (wo - 1) * stride + 1:stride] += dc[:, i, j]


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """Cross-correlate (C,H,W) with (O,C,kh,kw) kernels."""
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"conv2d input must be (C,H,W), got {list(x.shape)}")
    if p.weight.data.ndim != 4:
        raise ShapeMismatchError(
            f"conv2d weight must be (O,C,kh,kw), got {list(p.weight.shape)}")
    c, h, w = x.shape
    o, cin, kh, kw = p.weight.shape
    if cin != c:
        raise ShapeMismatchError(f"conv2d: input has {c} channels, weight expects {cin}")
    stride, pad = p.stride, p.padding
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise SizedInputError(
            f"conv2d: input {h}x{w} with padding {pad} is below the "
            f"{max(kh - 2 * pad, 1)}x{max(kw - 2 * pad, 1)} minimum for a "
            f"{kh}x{kw} kernel")
    if p.bias is not None and p.bias.shape != (o,):
        raise ShapeMismatchError(
            f"conv2d bias must be ({o},), got {list(p.bias.shape)}")

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    wm = p.weight.data.reshape(o, c * kh * kw)

    cols_bytes = c * kh * kw * ho * wo * 8
    block = max(1, int(_COLS_BLOCK_BYTES // max(1, c * kh * kw * wo * 8)))
    cached_cols = None
    y = np.empty((o, ho, wo), dtype=np.float64)
    if cols_bytes <= _COLS_CACHE_BYTES:
        cached_cols = _im2col_block(xp, kh, kw, stride, 0, ho, wo)
        y[...] = (wm @ cached_cols).reshape(o, ho, wo)
    else:
        for r0 in range(0, ho, block):
            r1 = min(r0 + block, ho)
            cols = _im2col_block(xp, kh, kw, stride, r0, r1, wo)
            y[:, r0:r1, :] = (wm @ cols).reshape(o, r1 - r0, wo)
    if p.bias is not None:
        y += p.bias.data[:, None, None]
    out = Tensor(y)

    weight, bias = p.weight, p.bias

    def bwd(g):
        # Skip gradients nobody will consume (e.g. dx when x is a raw image).
        need_dx, need_dw = x.requires_grad, weight.requires_grad
        g2 = g.reshape(o, ho * wo)
        dw = np.zeros((o, c * kh * kw), dtype=np.float64) if need_dw else None
        dxp = np.zeros_like(xp) if need_dx else None
        if cached_cols is not None:
            if need_dw:
                dw += g2 @ cached_cols.T
            if need_dx:
                _col_scatter_block(dxp, wm.T @ g2, kh, kw, stride, 0, ho, wo)
        else:
            for r0 in range(0, ho, block):
                r1 = min(r0 + block, ho)
                cols = _im2col_block(xp, kh, kw, stride, r0, r1, wo)
                gb = g[:, r0:r1, :].reshape(o, (r1 - r0) * wo)
                if need_dw:
                    dw += gb @ cols.T
                if need_dx:
                    _col_scatter_block(dxp, wm.T @ gb, kh, kw, stride, r0, r1, wo)
        if need_dx:
            dx = dxp[:, pad:pad + h, pad:pad + w] if pad else dxp
        else:
            dx = None
        db = g.sum(axis=(1, 2)) if bias is not None else None
        dwr = dw.reshape(o, c, kh, kw) if need_dw else None
        grads = (dx, dwr)
        return grads + (db,) if bias is not None else grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record_op(out, inputs, bwd)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0

    return record_op(out, (x,), lambda g: (g * mask,))


def maxpool2d(x: Tensor, k: int, stride: Optional[int] = None) -> Tensor:
    """Max pooling with gradient routed to the first row-major argmax."""
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"maxpool2d input must be (C,H,W), got {list(x.shape)}")
    s = k if stride is None else stride
    c, h, w = x.shape
    if k > h or k > w:
        raise SizedInputError(
            f"maxpool2d: window {k}x{k} exceeds input {h}x{w}; minimum is {k}x{k}")
    ho = (h - k) // s + 1
    wo = (w - k) // s + 1
    best = None
    arg = None
    for ti in range(k):
        for tj in range(k):
            cand = x.data[:, ti:ti + (ho - 1) * s + 1:s, tj:tj + (wo - 1) * s + 1:s]
            if best is None:
                best = cand.copy()
                arg = np.zeros((c, ho, wo), dtype=np.intp)
            else:
                better = cand > best
                best[better] = cand[better]
                arg[better] = ti * k + tj
    out = Tensor(best)

    def bwd(g):
        dx = np.zeros_like(x.data)
        for ti in range(k):
            for tj in range(k):
                m = arg == ti * k + tj
                if not m.any():
                    continue
                dx[:, ti:ti + (ho - 1) * s + 1:s,
                   tj:tj + (wo - 1) * s + 1:s] += g * m
        return (dx,)

    return record_op(out, (x,), bwd)


def _spp_bin_edges(n: int, s: int) -> list[tuple[int, int]]:
    # Pyramid bin i covers [floor(i*n/s), ceil((i+1)*n/s)); bins tile [0, n)
    # and may overlap by one cell where the division is fractional.
    return [(i * n // s, -((-(i + 1) * n) // s)) for i in range(s)]


def spp(x: Tensor, spec: SppSpec | Sequence[int] = (1, 2, 4)) -> Tensor:
    """Spatial pyramid max pooling to a fixed-length vector.

    Output layout is scale-major, then channel, then row-major bins, so the
    length is C * sum(s*s) for every input size with H, W >= max(scale).
    """
    if not isinstance(spec, SppSpec):
        spec = SppSpec(scales=tuple(spec))
    if spec.pool_kind != "max":
        raise ValueError(f"only max pooling is supported, got {spec.pool_kind!r}")
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"spp input must be (C,H,W), got {list(x.shape)}")
    c, h, w = x.shape
    smax = max(spec.scales)
    if h < smax or w < smax:
        raise SizedInputError(
            f"spp: input {h}x{w} is below the {smax}x{smax} minimum "
            f"(largest pyramid scale)")

    chunks = []
    scatter = []  # per scale: (rows, cols, chan) flat argmax coordinates
    for s in spec.scales:
        redges = _spp_bin_edges(h, s)
        cedges = _spp_bin_edges(w, s)
        vals = np.empty((s * s, c), dtype=np.float64)
        locs = np.empty((s * s, c, 2), dtype=np.intp)
        b = 0
        for r0, r1 in redges:
            for c0, c1 in cedges:
                slab = x.data[:, r0:r1, c0:c1].reshape(c, -1)
                am = slab.argmax(axis=1)
                vals[b] = slab[np.arange(c), am]
                locs[b, :, 0] = r0 + am // (c1 - c0)
                locs[b, :, 1] = c0 + am % (c1 - c0)
                b += 1
        chunks.append(vals.T.ravel())  # channel-major within the scale block
        scatter.append(locs)
    out = Tensor(np.concatenate(chunks))

    def bwd(g):
        dx = np.zeros_like(x.data)
        off = 0
        chan = np.arange(c)
        for s, locs in zip(spec.scales, scatter):
            nb = s * s
            gb = g[off:off + c * nb].reshape(c, nb)
            for b in range(nb):
                np.add.at(dx, (chan, locs[b, :, 0], locs[b, :, 1]), gb[:, b])
            off += c * nb
        return (dx,)

    return record_op(out, (x,), bwd)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map of a flat vector: weight (k,d) @ x (d,) + bias (k,)."""
    if x.data.ndim != 1:
        raise ShapeMismatchError(f"linear input must be 1-d, got {list(x.shape)}")
    k, d = weight.shape
    if x.shape != (d,):
        raise ShapeMismatchError(
            f"linear: weight {k}x{d} does not accept input of length {x.shape[0]}")
    y = weight.data @ x.data
    if bias is not None:
        if bias.shape != (k,):
            raise ShapeMismatchError(f"linear bias must be ({k},), got {list(bias.shape)}")
        y = y + bias.data
    out = Tensor(y)
    xd, wd = x.data, weight.data

    def bwd(g):
        grads = (wd.T @ g if x.requires_grad else None,
                 np.outer(g, xd) if weight.requires_grad else None)
        return grads + (g.copy(),) if bias is not None else grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record_op(out, inputs, bwd)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Per-example cross-entropy loss, max-subtracted for stability."""
    if logits.data.ndim != 1:
        raise ShapeMismatchError(f"logits must be 1-d, got {list(logits.shape)}")
    k = logits.shape[0]
    label = int(label)
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    z = logits.data - logits.data.max()
    ez = np.exp(z)
    sez = ez.sum()
    loss = np.log(sez) - z[label]
    out = Tensor(loss)
    p = ez / sez

    def bwd(g):
        d = p.copy()
        d[label] -= 1.0
        return (d * g,)

    return record_op(out, (logits,), bwd)


def pad2d(x: Tensor, pad: int, mode: str = "zero") -> Tensor:
    """Spatial padding of (C,H,W); mode 'zero' or 'edge' (replicate)."""
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"pad2d input must be (C,H,W), got {list(x.shape)}")
    if mode not in ("zero", "edge"):
        raise ValueError(f"pad2d: unknown mode {mode!r}")
    c, h, w = x.shape
    if mode == "zero":
        out = Tensor(np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))))

        def bwd(g):
            return (g[:, pad:pad + h, pad:pad + w].copy(),)
    else:
        out = Tensor(np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)), mode="edge"))
        rmap = np.clip(np.arange(-pad, h + pad), 0, h - 1)
        cmap = np.clip(np.arange(-pad, w + pad), 0, w - 1)
        chan = np.arange(c)

        def bwd(g):
            dx = np.zeros_like(x.data)
            np.add.at(dx, (chan[:, None, None], rmap[None, :, None],
                           cmap[None, None, :]), g)
            return (dx,)

    return record_op(out, (x,), bwd)
