"""Mean relative Gram-norm loss, ADAM, and the epoch loop."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .network import Network, backprop, forward_trace, realize_columns

logger = logging.getLogger(__name__)


class DegenerateReferenceError(ZeroDivisionError):
    pass


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 40_000
    seed: int = 0
    init_std: float = 0.1
    # Test error is recorded every `eval_every` epochs and after the last one.
    eval_every: int = 50

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected ADAM update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class TrainHistory:
    train_error: list = field(default_factory=list)
    test_epochs: list = field(default_factory=list)
    test_error: list = field(default_factory=list)

    def rows(self):
        tests = dict(zip(self.test_epochs, self.test_error))
        for epoch, err in enumerate(self.train_error, start=1):
            yield epoch, err, tests.get(epoch)

    def write_csv(self, stream) -> None:
        writer = csv.writer(stream)
        writer.writerow(["epoch", "mean_rel_train", "mean_rel_test"])
        for epoch, train, test in self.rows():
            writer.writerow([epoch, repr(train), "" if test is None else repr(test)])


def gram_norms(V, gram) -> np.ndarray:
    """Row-wise |v|_G for a (batch, D) array."""
    return column_gram_norms(np.ascontiguousarray(V.T), gram)


def column_gram_norms(Vt, gram) -> np.ndarray:
    """Column-wise |v|_G for a (D, batch) array."""
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", Vt, gram @ Vt), 0.0))


def _reference_norms(Ut, gram):
    norms = column_gram_norms(Ut, gram)
    if np.any(norms == 0.0):
        raise DegenerateReferenceError(
            f"record {int(np.flatnonzero(norms == 0.0)[0])} has zero Gram norm"
        )
    return norms


def _columns(a):
    return np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=float)).T)


def loss_and_grad(net: Network, Y, U, gram, u_norms=None):
    """Mean relative G-norm error over a batch of rows and its parameter gradients.

    Uses d|v|_G/dv = Gv / |v|_G; a sample with zero residual contributes a
    zero gradient.
    """
    return _loss_and_grad_columns(net, _columns(Y), _columns(U), gram, u_norms)


def _loss_and_grad_columns(net, Yt, Ut, gram, u_norms=None):
    n = Yt.shape[1]
    if n == 0:
        raise ValueError("empty batch")
    if u_norms is None:
        u_norms = _reference_norms(Ut, gram)
    out, inputs, pre = forward_trace(net, Yt)
    out -= Ut
    GR = gram @ out
    r_norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", out, GR), 0.0))
    loss = float(np.mean(r_norms / u_norms))
    scale = np.divide(1.0, r_norms * u_norms * n, out=np.zeros(n), where=r_norms > 0)
    GR *= scale
    return loss, backprop(net, inputs, pre, GR)


def relative_errors(net: Network, Y, U, gram, u_norms=None, chunk: int = 4096) -> np.ndarray:
    """Per-record |R(net)(y) - u|_G / |u|_G for row arrays ``Y``, ``U``."""
    return _relative_errors_columns(net, _columns(Y), _columns(U), gram, u_norms, chunk)


def _relative_errors_columns(net, Yt, Ut, gram, u_norms=None, chunk=4096):
    if u_norms is None:
        u_norms = _reference_norms(Ut, gram)
    errs = np.empty(Yt.shape[1])
    for start in range(0, Yt.shape[1], chunk):
        sl = slice(start, start + chunk)
        R = realize_columns(net, Yt[:, sl])
        R -= Ut[:, sl]
        errs[sl] = column_gram_norms(R, gram) / u_norms[sl]
    return errs


def evaluate(net: Network, dataset, gram):
    """(mean, max) relative G-norm error of ``net`` over a dataset."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    errs = relative_errors(net, dataset.parameters, dataset.solutions, gram)
    return float(errs.mean()), float(errs.max())


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(net: Network, train_data, gram, config: TrainConfig, test_data=None,
          history_stream=None, progress_every: int = 0):
    """Run ``config.epochs`` full passes of mini-batch ADAM.

    Returns a trained copy of ``net`` and its :class:`TrainHistory`.  The
    training error of every epoch is a full pass over ``train_data`` after
    that epoch's updates.
    """
    # Rows are gathered per batch and used through transposed views.
    Y = np.asarray(train_data.parameters, dtype=float)
    U = np.asarray(train_data.solutions, dtype=float)
    Yt, Ut = _columns(Y), _columns(U)
    if Yt.shape[0] != net.input_dim or Ut.shape[0] != net.output_dim:
        raise ValueError(
            f"dataset dims (p={Yt.shape[0]}, D={Ut.shape[0]}) do not match "
            f"network {net.architecture}"
        )
    gram = gram.tocsc()
    net = net.copy()
    params = net.parameters()
    state = AdamState.zeros_like(params)
    u_norms = _reference_norms(Ut, gram)
    if test_data is not None:
        test_Yt, test_Ut = _columns(test_data.parameters), _columns(test_data.solutions)
        test_norms = _reference_norms(test_Ut, gram)
    history = TrainHistory()
    writer = None
    if history_stream is not None:
        writer = csv.writer(history_stream)
        writer.writerow(["epoch", "mean_rel_train", "mean_rel_test"])

    n, bs = Yt.shape[1], config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = epoch_permutation(n, config.seed, epoch)
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            loss, grads = _loss_and_grad_columns(net, Y[idx].T, U[idx].T, gram, u_norms[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b)
            adam_step(params, grads, state, config.lr, config.beta1, config.beta2, config.eps)
        train_err = float(_relative_errors_columns(net, Yt, Ut, gram, u_norms).mean())
        if not np.isfinite(train_err):
            raise DivergenceError(epoch, -1)
        history.train_error.append(train_err)
        test_err = None
        if test_data is not None and (epoch % config.eval_every == 0 or epoch == config.epochs):
            test_err = float(
                _relative_errors_columns(net, test_Yt, test_Ut, gram, test_norms).mean()
            )
            history.test_epochs.append(epoch)
            history.test_error.append(test_err)
        if writer is not None:
            writer.writerow([epoch, repr(train_err), "" if test_err is None else repr(test_err)])
        if progress_every and epoch % progress_every == 0:
            logger.info("epoch %d train %.4e test %s", epoch, train_err, test_err)
    return net, history
