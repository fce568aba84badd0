"""Small fully-connected networks with hand-written forward and reverse passes.

Weights live in one flat vector.  The canonical order is layer-major: for each
layer, the weight matrix (``out x in``, row-major) followed by its bias.  This
order is what weight-space boxes in the certifier index into, so it must not
change.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "MLPArchitecture",
    "forward",
    "forward_batch",
    "gradient",
    "unflatten",
    "init_weights",
    "Network",
    "save_network",
    "load_network",
    "fit_regression",
]

ACTIVATIONS = ("relu", "tanh")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MLPArchitecture:
    """Layer widths from input to output, plus one activation per hidden layer.

    The output layer is always linear.  Zero hidden layers (a purely affine
    map) is allowed; it is handy for toy systems and gradient checks.
    """

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("an architecture needs at least an input and an output width")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer widths must be positive, got {sizes}")
        acts = tuple(self.activations)
        if not acts and len(sizes) > 2:
            acts = ("relu",) * (len(sizes) - 2)
        if len(acts) != len(sizes) - 2:
            raise ValueError(
                f"{len(sizes) - 2} hidden layers need {len(sizes) - 2} activations, got {len(acts)}"
            )
        bad = [a for a in acts if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unsupported activations {bad}; choose from {ACTIVATIONS}")
        object.__setattr__(self, "activations", acts)

    @classmethod
    def build(cls, n_in: int, hidden, n_out: int, activation: str = "relu") -> "MLPArchitecture":
        hidden = tuple(int(h) for h in hidden)
        return cls((n_in, *hidden, n_out), (activation,) * len(hidden))

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        return [(self.layer_sizes[i + 1], self.layer_sizes[i]) for i in range(self.n_layers)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    def slices(self) -> list[tuple[slice, slice]]:
        """(weight slice, bias slice) into the flat vector for every layer."""
        out, pos = [], 0
        for o, i in self.layer_shapes():
            ws = slice(pos, pos + o * i)
            pos += o * i
            bs = slice(pos, pos + o)
            pos += o
            out.append((ws, bs))
        return out

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d: dict) -> "MLPArchitecture":
        return cls(tuple(d["layer_sizes"]), tuple(d.get("activations", ())))


def _check_weights(arch: MLPArchitecture, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != arch.n_params:
        raise ValueError(f"weight vector has length {w.shape[-1]}, architecture needs {arch.n_params}")
    return w


def unflatten(arch: MLPArchitecture, w) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector (or a batch of them) into per-layer (W, b)."""
    w = _check_weights(arch, w)
    batch = w.shape[:-1]
    layers = []
    for (o, i), (ws, bs) in zip(arch.layer_shapes(), arch.slices()):
        layers.append((w[..., ws].reshape(*batch, o, i), w[..., bs]))
    return layers


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(float)
    return 1.0 - a * a


def forward(arch: MLPArchitecture, w, x) -> np.ndarray:
    """Evaluate the network at ``x`` (shape ``(n_in,)`` or ``(B, n_in)``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != arch.n_in:
        raise ValueError(f"input has width {x.shape[-1]}, network expects {arch.n_in}")
    h = x
    layers = unflatten(arch, w)
    for li, (W, b) in enumerate(layers):
        h = h @ W.T + b
        if li < len(layers) - 1:
            h = _act(arch.activations[li], h)
    return h


def forward_batch(arch: MLPArchitecture, W_batch, X) -> np.ndarray:
    """Evaluate ``S`` networks with distinct weights on ``S`` inputs.

    ``W_batch`` has shape ``(S, n_params)`` and ``X`` shape ``(S, n_in)``.
    """
    X = np.asarray(X, dtype=float)
    W_batch = _check_weights(arch, W_batch)
    if X.shape[-1] != arch.n_in:
        raise ValueError(f"input has width {X.shape[-1]}, network expects {arch.n_in}")
    h = X
    layers = unflatten(arch, W_batch)
    for li, (W, b) in enumerate(layers):
        h = np.einsum("soi,si->so", W, h) + b
        if li < len(layers) - 1:
            h = _act(arch.activations[li], h)
    return h


def gradient(arch: MLPArchitecture, w, x, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode gradients of ``<upstream, forward(arch, w, x)>``.

    With a batch of inputs ``x`` of shape ``(B, n_in)`` and ``upstream`` of shape
    ``(B, n_out)`` the weight gradient is summed over the batch and the input
    gradient is returned per row.
    """
    w = _check_weights(arch, w)
    x = np.asarray(x, dtype=float)
    g = np.asarray(upstream, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        g = g[None, :]
    if x.shape[-1] != arch.n_in:
        raise ValueError(f"input has width {x.shape[-1]}, network expects {arch.n_in}")
    if g.shape != (x.shape[0], arch.n_out):
        raise ValueError(f"upstream has shape {g.shape}, expected {(x.shape[0], arch.n_out)}")

    layers = unflatten(arch, w)
    pre, post = [], [x]
    h = x
    for li, (W, b) in enumerate(layers):
        z = h @ W.T + b
        if li < len(layers) - 1:
            h = _act(arch.activations[li], z)
        else:
            h = z
        pre.append(z)
        post.append(h)

    dw = np.zeros(arch.n_params)
    slices = arch.slices()
    delta = g
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        if li < len(layers) - 1:
            delta = delta * _act_grad(arch.activations[li], pre[li], post[li + 1])
        ws, bs = slices[li]
        dw[ws] = (delta.T @ post[li]).reshape(-1)
        dw[bs] = delta.sum(axis=0)
        delta = delta @ W
    dx = delta
    if single:
        dx = dx[0]
    return dw, dx


def init_weights(arch: MLPArchitecture, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Glorot-style initial weights, zero biases."""
    w = np.zeros(arch.n_params)
    for (o, i), (ws, _) in zip(arch.layer_shapes(), arch.slices()):
        w[ws] = rng.normal(0.0, scale * np.sqrt(2.0 / (i + o)), size=o * i)
    return w


@dataclass(frozen=True)
class Network:
    """A deterministic network: architecture plus point weights."""

    arch: MLPArchitecture
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        _check_weights(self.arch, w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __call__(self, x) -> np.ndarray:
        return forward(self.arch, self.weights, x)

    def with_weights(self, w) -> "Network":
        return Network(self.arch, np.asarray(w, dtype=float))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "network",
            "architecture": self.arch.to_dict(),
            "weights": [float(v) for v in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("kind") != "network":
            raise ValueError("document is not a network file")
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format version {d.get('format_version')!r}")
        return cls(MLPArchitecture.from_dict(d["architecture"]), np.array(d["weights"], dtype=float))


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1) + "\n")


def load_network(path) -> Network:
    return Network.from_dict(json.loads(Path(path).read_text()))


def fit_regression(
    arch: MLPArchitecture,
    X,
    Y,
    rng: np.random.Generator,
    epochs: int = 2000,
    lr: float = 0.01,
    batch_size: int | None = None,
) -> tuple[Network, list[float]]:
    """Least-squares fit of a point network with Adam (used for behaviour cloning).

    Returns the network and the full-data mean squared error after each epoch.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] != Y.shape[0] or X.shape[1] != arch.n_in or Y.shape[1] != arch.n_out:
        raise ValueError(f"data shapes {X.shape}, {Y.shape} do not match architecture {arch.layer_sizes}")
    if epochs < 0 or not lr > 0.0:
        raise ValueError("epochs must be >= 0 and lr positive")
    n = X.shape[0]
    bs = n if batch_size is None else max(1, min(batch_size, n))
    w = init_weights(arch, rng)
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    b1, b2 = 0.9, 0.999
    curve = []
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for a in range(0, n, bs):
            idx = order[a : a + bs]
            r = forward(arch, w, X[idx]) - Y[idx]
            g, _ = gradient(arch, w, X[idx], 2.0 * r / (idx.size * arch.n_out))
            t += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + 1e-8)
        curve.append(float(np.mean((forward(arch, w, X) - Y) ** 2)))
    return Network(arch, w), curve
