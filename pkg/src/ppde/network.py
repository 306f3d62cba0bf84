"""Fully connected networks as explicit sequences of (matrix, bias) pairs.

Hidden layers use the leaky ReLU ``t -> max(t, alpha * t)``; the last layer is
affine.  Conversions between ReLU and leaky-ReLU networks follow the
coordinate-doubling construction: ``P_n`` stacks ``(x, -x)`` and the
recombination matrices ``Q_{n,alpha}``/``T_{n,alpha}`` merge the pairs back.
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"PNET"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def leaky_relu(t, alpha):
    return np.maximum(t, alpha * t)


@dataclass
class NetworkCounts:
    weights: int
    neurons: int
    layers: int


class Network:
    """A network ``((A_1, b_1), ..., (A_L, b_L))`` with slope ``alpha``."""

    def __init__(self, layers, alpha: float = 0.0):
        if len(layers) < 1:
            raise ValueError("a network needs at least one layer")
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        self.layers = [
            (np.array(A, dtype=float, ndmin=2), np.array(b, dtype=float).reshape(-1))
            for A, b in layers
        ]
        for l, (A, b) in enumerate(self.layers):
            if A.shape[0] != b.shape[0]:
                raise ValueError(f"layer {l + 1}: matrix {A.shape} vs bias {b.shape}")
            if l and A.shape[1] != self.layers[l - 1][0].shape[0]:
                raise ValueError(f"layer {l + 1}: input width does not chain")
        self.alpha = float(alpha)

    @property
    def architecture(self) -> tuple:
        return (self.layers[0][0].shape[1],) + tuple(A.shape[0] for A, _ in self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.architecture[0]

    @property
    def output_dim(self) -> int:
        return self.architecture[-1]

    def parameters(self) -> list:
        """Flat list [A_1, b_1, ..., A_L, b_L] of the underlying arrays."""
        return [arr for layer in self.layers for arr in layer]

    def copy(self) -> "Network":
        return Network([(A.copy(), b.copy()) for A, b in self.layers], self.alpha)

    def __call__(self, x):
        return realize(self, x)

    def __repr__(self):
        return f"Network(architecture={self.architecture}, alpha={self.alpha})"


def init_network(architecture, std: float = 0.1, seed: int = 0, alpha: float = 0.2) -> Network:
    architecture = list(architecture)
    if len(architecture) < 2 or min(architecture) < 1:
        raise ValueError(f"architecture needs >= 2 positive widths, got {architecture}")
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out in zip(architecture[:-1], architecture[1:]):
        A = rng.normal(0.0, std, size=(n_out, n_in)) if std > 0 else np.zeros((n_out, n_in))
        b = rng.normal(0.0, std, size=n_out) if std > 0 else np.zeros(n_out)
        layers.append((A, b))
    return Network(layers, alpha)


def _as_batch(net: Network, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"input of shape {x.shape} does not match input width {net.input_dim}")
    return X, single


def realize(net: Network, x, alpha=None):
    """Evaluate the network on one input or a batch of row inputs.

    ``alpha`` overrides the network's own slope (used to compare one set of
    weights under different activations).
    """
    alpha = net.alpha if alpha is None else alpha
    X, single = _as_batch(net, x)
    out = realize_columns(net, np.ascontiguousarray(X.T), alpha).T
    return out[0] if single else out


def realize_columns(net: Network, X, alpha=None):
    """Forward pass on a (N_0, batch) array whose columns are inputs."""
    alpha = net.alpha if alpha is None else alpha
    for A, b in net.layers[:-1]:
        Z = A @ X
        Z += b[:, None]
        X = np.maximum(Z, alpha * Z, out=Z)
    A, b = net.layers[-1]
    out = A @ X
    out += b[:, None]
    return out


def forward_trace(net: Network, X):
    """Column-layout forward pass keeping each layer's input and pre-activation.

    ``X`` has shape (N_0, batch).
    """
    inputs, pre = [], []
    for l, (A, b) in enumerate(net.layers):
        inputs.append(X)
        Z = A @ X
        Z += b[:, None]
        pre.append(Z)
        X = leaky_relu(Z, net.alpha) if l < net.depth - 1 else Z
    return X, inputs, pre


def backprop(net: Network, inputs, pre, upstream):
    """Reverse pass for a recorded column batch.

    Returns [dA_1, db_1, ..., dA_L, db_L] summed over the batch columns.  The
    derivative at a kink is taken as ``alpha``.
    """
    grads = [None] * (2 * net.depth)
    delta = upstream
    for l in range(net.depth - 1, -1, -1):
        A, _ = net.layers[l]
        grads[2 * l] = delta @ inputs[l].T
        grads[2 * l + 1] = delta.sum(axis=1)
        if l:
            delta = A.T @ delta
            delta *= np.where(pre[l - 1] > 0, 1.0, net.alpha)
    return grads


def backward(net: Network, x, upstream_grad):
    """Gradients of ``<upstream_grad, realize(net, x)>`` w.r.t. every A_l, b_l.

    ``x`` and ``upstream_grad`` may be single vectors or row batches; batch
    gradients are summed.
    """
    X, _ = _as_batch(net, x)
    G = np.atleast_2d(np.asarray(upstream_grad, dtype=float))
    if G.shape != (X.shape[0], net.output_dim):
        raise ValueError(f"upstream gradient shape {np.shape(upstream_grad)} does not match output")
    _, inputs, pre = forward_trace(net, np.ascontiguousarray(X.T))
    return backprop(net, inputs, pre, np.ascontiguousarray(G.T))


def counts(net: Network) -> NetworkCounts:
    M = sum(int(np.count_nonzero(A)) + int(np.count_nonzero(b)) for A, b in net.layers)
    return NetworkCounts(weights=M, neurons=int(sum(net.architecture)), layers=net.depth)


def duplication_matrix(n: int) -> np.ndarray:
    """P_n: x -> (x_1, -x_1, ..., x_n, -x_n)."""
    P = np.zeros((2 * n, n))
    P[0::2, :] = np.eye(n)
    P[1::2, :] = -np.eye(n)
    return P


def _pair_matrix(n: int, second: float, scale: float = 1.0) -> np.ndarray:
    M = np.zeros((n, 2 * n))
    idx = np.arange(n)
    M[idx, 2 * idx] = scale
    M[idx, 2 * idx + 1] = scale * second
    return M


def merge_matrix_q(n: int, alpha: float) -> np.ndarray:
    """Q_{n,alpha}: pairs (u, v) -> u - alpha v."""
    return _pair_matrix(n, -alpha)


def merge_matrix_t(n: int, alpha: float) -> np.ndarray:
    """T_{n,alpha}: pairs (u, v) -> (u + alpha v) / (1 - alpha^2)."""
    return _pair_matrix(n, alpha, 1.0 / (1.0 - alpha**2))


def _doubled(net: Network, merge, alpha_out: float) -> Network:
    if net.depth == 1:
        return Network([(A.copy(), b.copy()) for A, b in net.layers], alpha_out)
    widths = net.architecture
    layers = []
    for l, (A, b) in enumerate(net.layers, start=1):
        if l > 1:
            A = A @ merge(widths[l - 1])
        if l < net.depth:
            P = duplication_matrix(widths[l])
            A, b = P @ A, P @ b
        layers.append((A, b))
    return Network(layers, alpha_out)


def _check_slope(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"conversion slope must lie in (0, 1), got {alpha}")


def lrelu_to_relu(net: Network) -> Network:
    """ReLU network whose realization equals that of the alpha-LReLU ``net``."""
    _check_slope(net.alpha)
    return _doubled(net, lambda n: merge_matrix_q(n, net.alpha), 0.0)


def relu_to_lrelu(net: Network, alpha: float) -> Network:
    """alpha-LReLU network whose realization equals that of the ReLU ``net``.

    ``net`` is interpreted under the plain ReLU whatever its stored slope.
    """
    _check_slope(alpha)
    return _doubled(net, lambda n: merge_matrix_t(n, alpha), alpha)


def save_checkpoint(net: Network, path) -> None:
    arch = net.architecture
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIdI", MAGIC, VERSION, net.alpha, net.depth))
        fh.write(struct.pack(f"<{len(arch)}I", *arch))
        for A, b in net.layers:
            fh.write(A.astype("<f8").tobytes(order="C"))
            fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.calcsize("<4sIdI")
    if len(raw) < head:
        raise CheckpointFormatError(f"truncated checkpoint header at byte {len(raw)}")
    magic, version, alpha, L = struct.unpack_from("<4sIdI", raw)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version} at byte 4")
    arch_end = head + 4 * (L + 1)
    if L < 1 or len(raw) < arch_end:
        raise CheckpointFormatError(f"truncated architecture at byte {len(raw)}")
    arch = struct.unpack_from(f"<{L + 1}I", raw, head)
    expected = arch_end + 8 * sum(o * (i + 1) for i, o in zip(arch[:-1], arch[1:]))
    if len(raw) != expected:
        raise CheckpointFormatError(f"expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=arch_end).astype(np.float64)
    layers, pos = [], 0
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        A = data[pos : pos + n_in * n_out].reshape(n_out, n_in).copy()
        pos += n_in * n_out
        b = data[pos : pos + n_out].copy()
        pos += n_out
        layers.append((A, b))
    return Network(layers, alpha)
