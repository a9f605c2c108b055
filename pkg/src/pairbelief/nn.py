"""Minimal dense-network substrate used by the score and ratio models.

A ``DenseNet`` is an MLP with SiLU hidden activations and an optional linear
embedding of binary flags that is injected, as an additive residual, into the
first ``h/4`` pre-activation units of every hidden layer. Gradients are
computed by a hand-written reverse pass; no external autodiff is used.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

MAGIC = b"PBNET"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Non-finite loss or gradients during training."""


def silu(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def _silu_grad(z: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


class DenseNet:
    """MLP with widths [n_in, h, ..., h, n_out] and optional flag embedding.

    ``n_flags > 0`` adds a bias-free linear embedding of the flag vector into
    ``embed_width`` features, added to the first ``embed_width`` units of each
    hidden layer's pre-activation (a residual skip through all hidden layers).
    """

    def __init__(self, widths, n_flags: int = 0, embed_width: int = 0, seed: int = 0):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if n_flags > 0 and not 0 < embed_width <= min(widths[1:-1], default=0):
            raise ValueError("embed width must fit inside the hidden width")
        self.widths = list(widths)
        self.n_flags = n_flags
        self.embed_width = embed_width if n_flags > 0 else 0
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for w_in, w_out in zip(widths[:-1], widths[1:]):
            # LeCun-style init keeps activations O(1) for unit-scale inputs
            self.weights.append(rng.standard_normal((w_in, w_out)) / np.sqrt(w_in))
            self.biases.append(np.zeros(w_out))
        self.flag_embed = (
            rng.standard_normal((n_flags, self.embed_width)) / np.sqrt(max(n_flags, 1))
            if n_flags > 0
            else None
        )

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        if self.flag_embed is not None:
            params.append(self.flag_embed)
        return params

    def set_parameters(self, params: list[np.ndarray]) -> None:
        k = 0
        for i in range(len(self.weights)):
            self.weights[i] = params[k]
            self.biases[i] = params[k + 1]
            k += 2
        if self.flag_embed is not None:
            self.flag_embed = params[k]

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, flags: np.ndarray | None = None, cache=None):
        """Forward pass on a batch (n, n_in); optionally records a cache for
        the reverse pass. Returns (n, n_out)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.widths[0]:
            raise ValueError(
                f"input width {x.shape[1]} does not match net input {self.widths[0]}"
            )
        if self.n_flags > 0:
            flags = np.atleast_2d(np.asarray(flags, dtype=float))
            if flags.shape != (x.shape[0], self.n_flags):
                raise ValueError("flag block shape mismatch")
            emb = flags @ self.flag_embed
        else:
            emb = None
        a = x
        if cache is not None:
            cache["inputs"] = [a]
            cache["pre"] = []
            cache["flags"] = flags
        n_layers = len(self.weights)
        for i in range(n_layers):
            z = a @ self.weights[i] + self.biases[i]
            if i < n_layers - 1:  # hidden layer
                if emb is not None:
                    z[:, : self.embed_width] += emb
                a_next = silu(z)
            else:
                a_next = z
            if cache is not None:
                cache["pre"].append(z)
                if i < n_layers - 1:
                    cache["inputs"].append(a_next)
            a = a_next
        return a

    def backward(self, cache, grad_out: np.ndarray):
        """Reverse pass: returns (param_grads, input_grad) for the recorded
        forward call, contracted against ``grad_out`` (n, n_out)."""
        grad_out = np.atleast_2d(np.asarray(grad_out, dtype=float))
        n_layers = len(self.weights)
        w_grads = [None] * n_layers
        b_grads = [None] * n_layers
        emb_grad = (
            np.zeros_like(self.flag_embed) if self.flag_embed is not None else None
        )
        delta = grad_out
        for i in reversed(range(n_layers)):
            if i < n_layers - 1:
                delta = delta * _silu_grad(cache["pre"][i])
                if emb_grad is not None:
                    emb_grad += cache["flags"].T @ delta[:, : self.embed_width]
            w_grads[i] = cache["inputs"][i].T @ delta
            b_grads[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        grads = []
        for wg, bg in zip(w_grads, b_grads):
            grads.extend([wg, bg])
        if emb_grad is not None:
            grads.append(emb_grad)
        return grads, delta

    def __call__(self, x, flags=None):
        return self.forward(x, flags)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimizerConfig:
    alpha_ref: float = 0.005
    iter_ref: int = 1024
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # "inv-sqrt": alpha_ref / sqrt(max(iter / iter_ref, 1)); "literal" keeps
    # the alternative alpha_ref / max(iter, iter_ref, 1) behind a switch.
    lr_schedule: str = "inv-sqrt"
    # "adaptive": decay enters the gradient before the Adam moments;
    # "decoupled": multiplicative shrink of the updated parameters.
    decay_mode: str = "adaptive"


class Adam:
    def __init__(self, params: list[np.ndarray], config: OptimizerConfig):
        self.config = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def learning_rate(self, iteration: int) -> float:
        c = self.config
        if c.lr_schedule == "literal":
            return c.alpha_ref / max(iteration, c.iter_ref, 1)
        return c.alpha_ref / np.sqrt(max(iteration / c.iter_ref, 1.0))

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], iteration: int):
        """One Adam update; iteration is 1-based. Returns updated params."""
        if iteration < 1:
            raise ValueError("iteration must be >= 1")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient")
        c = self.config
        lr = self.learning_rate(iteration)
        self.step_count += 1
        t = self.step_count
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if c.weight_decay > 0 and c.decay_mode == "adaptive":
                g = g + c.weight_decay * p
            self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
            mhat = self.m[i] / (1 - c.beta1**t)
            vhat = self.v[i] / (1 - c.beta2**t)
            p_new = p - lr * mhat / (np.sqrt(vhat) + c.eps)
            if c.weight_decay > 0 and c.decay_mode == "decoupled":
                p_new = p_new * (1 - lr * c.weight_decay)
            out.append(p_new)
        return out


# ---------------------------------------------------------------------------
# Power-function EMA
# ---------------------------------------------------------------------------


def gamma_from_sigma_ref(sigma_ref: float) -> float:
    """Solve the power-function EMA exponent from the relative profile width."""

    def f(g):
        return (g + 1.0) / ((g + 2.0) ** 2 * (g + 3.0)) - sigma_ref**2

    return float(brentq(f, 1e-6, 1e9))


class PowerFunctionEMA:
    """Online exponential averaging with the power-function profile."""

    def __init__(self, params: list[np.ndarray], sigma_ref: float = 0.01):
        self.sigma_ref = sigma_ref
        self.gamma = gamma_from_sigma_ref(sigma_ref)
        self.shadow = [p.copy() for p in params]

    def update(self, params: list[np.ndarray], step: int) -> None:
        if step < 1:
            raise ValueError("step must be >= 1")
        beta = (1.0 - 1.0 / step) ** (self.gamma + 1.0)
        for s, p in zip(self.shadow, params):
            s *= beta
            s += (1.0 - beta) * p


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, net: DenseNet, model_kind: str, hyperparams: dict | None = None,
                    ema_shadow: list[np.ndarray] | None = None) -> None:
    """Versioned binary container; hyperparameters go to a JSON sidecar."""
    meta = {
        "model_kind": model_kind,
        "widths": net.widths,
        "n_flags": net.n_flags,
        "embed_width": net.embed_width,
        "has_ema": ema_shadow is not None,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    arrays = net.parameters()
    if ema_shadow is not None:
        arrays = arrays + list(ema_shadow)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        for arr in arrays:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps(hyperparams or {}, sort_keys=True, indent=2))


def load_checkpoint(path, expect_kind: str | None = None):
    """Returns (net, model_kind, hyperparams, ema_shadow or None)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError("not a checkpoint file")
    off = len(MAGIC)
    version, meta_len = struct.unpack_from("<HI", raw, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += struct.calcsize("<HI")
    meta = json.loads(raw[off : off + meta_len])
    off += meta_len
    if expect_kind is not None and meta["model_kind"] != expect_kind:
        raise ValueError(
            f"checkpoint kind {meta['model_kind']!r} does not match expected {expect_kind!r}"
        )
    net = DenseNet(meta["widths"], n_flags=meta["n_flags"], embed_width=meta["embed_width"])
    shapes = [p.shape for p in net.parameters()]
    arrays = []
    n_arrays = len(shapes) * (2 if meta["has_ema"] else 1)
    for i in range(n_arrays):
        shape = shapes[i % len(shapes)]
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += count * 8
        arrays.append(arr)
    net.set_parameters(arrays[: len(shapes)])
    ema = arrays[len(shapes) :] if meta["has_ema"] else None
    sidecar = Path(str(path) + ".json")
    hyper = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return net, meta["model_kind"], hyper, ema
