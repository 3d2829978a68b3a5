"""Dense float64 tensor kernels for the network runtime.

Everything here is a pure function over C-contiguous float64 arrays with
explicit shape checks. There is no broadcasting beyond multiplication by a
scalar; shape agreement is always verified so that the decomposition
arithmetic built on top stays auditable.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_tensor",
    "elementwise_add",
    "scale",
    "matmul",
    "conv2d",
    "concat",
    "moments",
]


def as_tensor(values) -> np.ndarray:
    """Coerce nested lists or arrays to a C-contiguous float64 array."""
    return np.ascontiguousarray(values, dtype=np.float64)


def elementwise_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise sum of two equally shaped tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"elementwise_add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    """Multiply every element by the scalar s."""
    return as_tensor(a) * float(s)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of an (m, k) and a (k, n) tensor."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    return a @ b


def conv2d(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """2-d cross-correlation with per-channel bias.

    x is a (C_in, H, W) map, w a (C_out, C_in, kH, kW) kernel stack and b a
    (C_out,) bias vector. The kernel must tile the padded input exactly for
    the given stride; a non-integral output extent is an error rather than a
    silent floor.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    b = as_tensor(b)
    if x.ndim != 3 or w.ndim != 4 or b.ndim != 1:
        raise ValueError(
            f"conv2d expects (C,H,W), (O,C,kH,kW), (O,) got {x.shape}, {w.shape}, {b.shape}"
        )
    c_in, h, wd = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if c_in_w != c_in:
        raise ValueError(f"conv2d channel mismatch: input {c_in}, kernel {c_in_w}")
    if b.shape[0] != c_out:
        raise ValueError(f"conv2d bias length {b.shape[0]} != {c_out} output channels")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d invalid stride/padding: {stride}/{padding}")
    span_h = h + 2 * padding - kh
    span_w = wd + 2 * padding - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ValueError(
            f"conv2d output extent not integral for input {x.shape}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}"
        )
    h_out = span_h // stride + 1
    w_out = span_w // stride + 1
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((c_out, h_out, w_out))
    for i in range(kh):
        for j in range(kw):
            patch = xp[
                :,
                i : i + stride * (h_out - 1) + 1 : stride,
                j : j + stride * (w_out - 1) + 1 : stride,
            ]
            out += np.tensordot(w[:, :, i, j], patch, axes=(1, 0))
    return out + b[:, None, None]


def concat(parts: list[np.ndarray], axis: int = 0) -> np.ndarray:
    """Lay out tensors contiguously along one axis."""
    if not parts:
        raise ValueError("concat of an empty list")
    arrs = [as_tensor(p) for p in parts]
    first = arrs[0]
    ax = axis % first.ndim
    for p in arrs[1:]:
        if p.ndim != first.ndim:
            raise ValueError(f"concat rank mismatch: {first.shape} vs {p.shape}")
        for d in range(first.ndim):
            if d != ax and p.shape[d] != first.shape[d]:
                raise ValueError(
                    f"concat extent mismatch off axis {ax}: {first.shape} vs {p.shape}"
                )
    return np.concatenate(arrs, axis=ax)


def moments(a: np.ndarray, axes) -> tuple[np.ndarray, np.ndarray]:
    """Population mean and variance over the given axes.

    Variance divides by the element count, not count-1, matching
    normalization-layer semantics. Computed in two passes (mean first, then
    squared deviations) for accuracy.
    """
    a = as_tensor(a)
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(ax % a.ndim for ax in axes)
    if not axes:
        raise ValueError("moments over an empty axis set")
    if len(set(axes)) != len(axes):
        raise ValueError(f"moments got repeated axes: {axes}")
    mean_kept = a.mean(axis=axes, keepdims=True)
    var = ((a - mean_kept) ** 2).mean(axis=axes)
    return np.squeeze(mean_kept, axis=axes), var
