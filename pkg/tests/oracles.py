"""Independent reference implementations used to check the fast paths.

Everything here is written the slow, obvious way (explicit loops, direct
formula evaluation) and never calls into the package's vectorized code.
"""

import numpy as np


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def conv2d_loops(x: np.ndarray, w: np.ndarray, bias=None, stride: int = 1,
                 pad: int = 0, pad_mode: str = "zero") -> np.ndarray:
    """Direct cross-correlation over (C,H,W) with (O,C,kh,kw)."""
    c, h, wdt = x.shape
    o, _, kh, kw = w.shape
    mode = "constant" if pad_mode == "zero" else "edge"
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), mode=mode) if pad else x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wdt + 2 * pad - kw) // stride + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for ic in range(c):
                    for di in range(kh):
                        for dj in range(kw):
                            acc += xp[ic, i * stride + di, j * stride + dj] * w[oc, ic, di, dj]
                out[oc, i, j] = acc + (bias[oc] if bias is not None else 0.0)
    return out


def spp_bins_bruteforce(x: np.ndarray, scales) -> np.ndarray:
    """Enumerate every pyramid bin with floor/ceil edges and take its max."""
    c, h, w = x.shape
    out = []
    for s in scales:
        for ch in range(c):
            for i in range(s):
                r0, r1 = (i * h) // s, int(np.ceil((i + 1) * h / s))
                for j in range(s):
                    c0, c1 = (j * w) // s, int(np.ceil((j + 1) * w / s))
                    out.append(x[ch, r0:r1, c0:c1].max())
    return np.array(out)


def resize_bilinear_pointwise(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Per-output-pixel evaluation of align-corners-false sampling."""
    c, h, w = img.shape
    out = np.zeros((c, out_h, out_w))
    for ch in range(c):
        for oy in range(out_h):
            sy = min(max((oy + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
            y0 = int(np.floor(sy))
            y1 = min(y0 + 1, h - 1)
            fy = sy - y0
            for ox in range(out_w):
                sx = min(max((ox + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
                x0 = int(np.floor(sx))
                x1 = min(x0 + 1, w - 1)
                fx = sx - x0
                out[ch, oy, ox] = (img[ch, y0, x0] * (1 - fy) * (1 - fx)
                                   + img[ch, y0, x1] * (1 - fy) * fx
                                   + img[ch, y1, x0] * fy * (1 - fx)
                                   + img[ch, y1, x1] * fy * fx)
    return out


def fd_grad(f, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. every element."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise |a - n| / max(1, |a|, |n|), reduced to the worst case."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float((np.abs(a - n) / denom).max())


def adaptive_nu_scan(dims, avg_pixels: float) -> int:
    """Linear prefix scan for the smallest n with sum of pixels >= avg."""
    total = 0
    for n, (w, h) in enumerate(dims, start=1):
        total += w * h
        if total >= avg_pixels:
            return n
    return len(dims)
