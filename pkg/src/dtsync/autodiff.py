"""Fully connected ReLU networks with hand-written reverse mode, Adam and gradient checking.

All arrays are float64.  Inputs may be a single vector ``(n_in,)`` or a batch
``(B, n_in)``; outputs follow the same convention.
"""
from __future__ import annotations

import ctypes
import ctypes.util
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np


def keep_heap_warm() -> bool:
    """Stop glibc from handing batch-sized temporaries back to the OS on every free.

    Activations of a 256 x 256 layer are 512 KB, above the default mmap
    threshold, so without this each forward pass page-faults fresh memory in.
    Returns False where the allocator cannot be tuned.
    """
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        trim, top_pad, mmap_threshold = -1, -2, -3  # M_* constants from malloc.h
        return all(libc.mallopt(opt, val) == 1 for opt, val in
                   ((mmap_threshold, 32 << 20), (trim, 256 << 20), (top_pad, 16 << 20)))
    except (OSError, AttributeError):
        return False


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"need >= 2 layers of size >= 1, got {self.layer_sizes}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def init(self, rng: np.random.Generator, out_scale: float = 1.0) -> "ParamSet":
        """Glorot-uniform weights, zero biases; the last layer is multiplied by ``out_scale``."""
        weights, biases = [], []
        pairs = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        for i, (fan_in, fan_out) in enumerate(pairs):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            if i == len(pairs) - 1:
                w *= out_scale
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return ParamSet(weights, biases)

    def zeros(self) -> "ParamSet":
        pairs = zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        ws, bs = zip(*[(np.zeros((a, b)), np.zeros(b)) for a, b in pairs])
        return ParamSet(list(ws), list(bs))


class ParamSet:
    """Weights ``(fan_in, fan_out)`` and biases per layer, with a flat view for checks and I/O."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec(tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {self.size}")
        i = 0
        for a in self.arrays():
            a[...] = vec[i:i + a.size].reshape(a.shape)
            i += a.size

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def assign(self, other: "ParamSet") -> None:
        for dst, src in zip(self.arrays(), other.arrays()):
            dst[...] = src

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class Cache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activations of hidden layers
    single: bool


def forward(params: ParamSet, x, keep: bool = False):
    """Network output; with ``keep=True`` also return the cache needed by :func:`backward`."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {h.shape[1]} != network input {params.weights[0].shape[0]}")
    inputs, pre = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w
        z += b
        if i < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    out = h[0] if single else h
    if keep:
        return out, Cache(inputs, pre, single)
    return out


def backward(params: ParamSet, cache: Cache, upstream, need_params: bool = True,
             need_input: bool = True) -> tuple[ParamSet | None, np.ndarray | None]:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input.

    Either half can be skipped; the skipped result is returned as ``None``.
    """
    g = np.asarray(upstream, dtype=float)
    g = g[None, :] if cache.single else g
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        if need_params:
            gw[i] = cache.inputs[i].T @ g
            gb[i] = g.sum(axis=0)
        if i == 0 and not need_input:
            g = None
            break
        g = g @ params.weights[i].T
        if i > 0:
            np.multiply(g, cache.pre[i - 1] > 0, out=g)
    dx = None if g is None else (g[0] if cache.single else g)
    return (ParamSet(gw, gb) if need_params else None), dx


def gradients(params: ParamSet, x, upstream) -> tuple[ParamSet, np.ndarray]:
    out, cache = forward(params, x, keep=True)
    if np.shape(upstream) != np.shape(out):
        raise ValueError(f"upstream shape {np.shape(upstream)} != output shape {np.shape(out)}")
    return backward(params, cache, upstream)


class Adam:
    """Bias-corrected Adam over a list of arrays, updated in place."""

    def __init__(self, arrays: list[np.ndarray], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            # lr * m_hat / (sqrt(v_hat) + eps), without temporaries for m_hat and v_hat
            denom = np.sqrt(v)
            denom *= 1.0 / np.sqrt(c2)
            denom += self.eps
            np.divide(m, denom, out=denom)
            denom *= self.lr / c1
            a -= denom

    def state(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


def adam_step(params: ParamSet, grads: ParamSet, opt: Adam) -> ParamSet:
    opt.step(params.arrays(), grads.arrays())
    if not params.all_finite():
        raise FloatingPointError("Adam step produced non-finite parameters")
    return params


# --------------------------------------------------------------------------- gradient checking

def _rel_err(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_flat_gradient(loss: Callable[[np.ndarray], float], theta: np.ndarray, grad: np.ndarray,
                        rng: np.random.Generator, h: float = 1e-5, max_coords: int = 2000,
                        n_directions: int = 8) -> float:
    """Max relative error between ``grad`` and central differences of ``loss`` at ``theta``.

    Small problems are checked coordinate by coordinate.  Larger ones use a
    random subset of ``max_coords`` coordinates plus ``n_directions`` random
    unit directions.
    """
    theta = np.array(theta, dtype=float)
    n = theta.size
    worst = 0.0
    coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
    for i in coords:
        old = theta[i]
        theta[i] = old + h
        up = loss(theta)
        theta[i] = old - h
        down = loss(theta)
        theta[i] = old
        worst = max(worst, _rel_err((up - down) / (2 * h), float(grad[i])))
    if n > max_coords:
        for _ in range(n_directions):
            d = rng.standard_normal(n)
            d /= np.linalg.norm(d)
            fd = (loss(theta + h * d) - loss(theta - h * d)) / (2 * h)
            worst = max(worst, _rel_err(fd, float(grad @ d)))
    return worst


def finite_diff_check(params: ParamSet, x, rng: np.random.Generator | None = None,
                      upstream=None, grads: ParamSet | None = None, h: float = 1e-5,
                      max_coords: int = 2000) -> float:
    """Compare reverse-mode gradients of ``<upstream, f(x)>`` against central differences.

    Both parameter and input gradients are checked.  ``grads`` lets a caller
    supply an externally computed (e.g. deliberately corrupted) gradient.
    """
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x, dtype=float)
    out = forward(params, x)
    if upstream is None:
        upstream = rng.standard_normal(np.shape(out))
    got_params, got_dx = gradients(params, x, upstream)
    if grads is not None:
        got_params = grads
    probe = params.copy()

    def param_loss(theta: np.ndarray) -> float:
        probe.set_flat(theta)
        return float(np.sum(upstream * forward(probe, x)))

    def input_loss(flat_x: np.ndarray) -> float:
        return float(np.sum(upstream * forward(params, flat_x.reshape(x.shape))))

    err_p = check_flat_gradient(param_loss, params.flat(), got_params.flat(), rng, h, max_coords)
    err_x = check_flat_gradient(input_loss, x.ravel(), np.ravel(got_dx), rng, h, max_coords)
    return max(err_p, err_x)


# --------------------------------------------------------------------------- checkpoint format
#
# magic b"DTSMLP\0\0" | u32 version | u32 n_layers | n_layers * u32 sizes | f64 LE params
# Parameters are flattened layer by layer as W (row-major, fan_in x fan_out) then b.

MAGIC = b"DTSMLP\x00\x00"
FORMAT_VERSION = 1


def save_params(params: ParamSet, path: str | Path) -> None:
    sizes = params.spec.layer_sizes
    header = MAGIC + struct.pack(f"<II{len(sizes)}I", FORMAT_VERSION, len(sizes), *sizes)
    Path(path).write_bytes(header + params.flat().astype("<f8").tobytes())


def load_params(path: str | Path, expect: MlpSpec | None = None) -> ParamSet:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    version, n_layers = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    sizes = struct.unpack_from(f"<{n_layers}I", blob, 16)
    spec = MlpSpec(tuple(sizes))
    if expect is not None and spec != expect:
        raise ValueError(f"{path}: checkpoint layers {spec.layer_sizes} != expected {expect.layer_sizes}")
    params = spec.zeros()
    params.set_flat(np.frombuffer(blob, dtype="<f8", offset=16 + 4 * n_layers))
    return params
