"""Supervised training of the message-passing decoder.

The loss on one sample is

    cross_entropy + lambda * (comm_X + comm_Z)

where ``cross_entropy`` is the mean per-qubit negative log probability of the
true Pauli class and ``comm_T`` scores the residual error of type ``T``
against the orthogonal complement ``K_T = kernel_basis(H_T)``. The predicted
component is softened to ``q = P(T) + P(Y)``, combined with the true bit by
the relaxed XOR ``a + q - 2 a q`` and every row of ``K_T`` contributes
``|sin(pi/2 * <row, residual>)|``, averaged over rows. The term vanishes
exactly when the residual lies in ``rowspace(H_T)``, i.e. when the
prediction is stabiliser-equivalent to the truth.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import gf2, gnn, noise
from .codes import CssCode

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, last_good: gnn.GnnModel, history: list[dict]):
        super().__init__(message)
        self.last_good = last_good
        self.history = history


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    dropout: float = 0.05
    epochs: int = 10
    batch_size: int = 64
    samples_per_epoch: int = 100_000
    p_max: float = 0.15
    test_p: float = 0.05
    test_size: int = 10_000
    loss_weight_lambda: float = 1.0
    seed: int = 0
    iterations: int = 30
    node_dim: int = 64
    msg_hidden: int = 128
    edge_dim: int = 64
    # stop when test LER < stop_ler_factor * test_p and, with
    # stop_rule="both", the relative test-loss change is below loss_tol
    stop_rule: str = "both"
    stop_ler_factor: float = 0.5
    loss_tol: float = 0.02
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.loss_weight_lambda < 0:
            raise ValueError("loss_weight_lambda must be >= 0")
        if self.stop_rule not in ("both", "ler", "none"):
            raise ValueError(f"unknown stop_rule {self.stop_rule!r}")
        self.adam_betas = tuple(self.adam_betas)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["adam_betas"] = list(self.adam_betas)
        return out


@dataclass
class LossParts:
    cross_entropy: float
    commutation: float
    total: float


def sine_relaxation(x):
    """Smooth stand-in for ``x mod 2`` on integers: ``|sin(pi x / 2)|``.

    The argument is reduced mod 2 first (the function has period 2), so even
    integers give exactly 0 and odd integers exactly 1.
    """
    return np.abs(np.sin(0.5 * np.pi * np.mod(np.asarray(x, dtype=np.float64), 2.0)))


@functools.lru_cache(maxsize=64)
def complement_bases(code: CssCode) -> tuple[np.ndarray, np.ndarray]:
    """``(K_X, K_Z)``: kernel bases of ``H_X`` and ``H_Z``."""
    return gf2.kernel_basis(code.h_x), gf2.kernel_basis(code.h_z)


def _comm_terms(a: np.ndarray, q: np.ndarray, k: np.ndarray):
    # a: true bits (B, n), q: soft predicted bits (B, n), k: (r, n)
    et = a + q - 2.0 * a * q
    s = np.mod(et @ k.T, 2.0)
    return s, np.abs(np.sin(0.5 * np.pi * s))


def commutation_loss(code: CssCode, e_actual, class_probs) -> float:
    """Relaxed ``K_T e_total = 0 (mod 2)`` penalty summed over T in {X, Z}."""
    kx, kz = complement_bases(code)
    probs = np.asarray(class_probs, dtype=np.float64)
    e = np.asarray(e_actual)
    total = 0.0
    for k, a, q in ((kx, noise.x_part(e), probs[..., 1] + probs[..., 3]),
                    (kz, noise.z_part(e), probs[..., 2] + probs[..., 3])):
        if k.shape[0]:
            total += float(_comm_terms(a.astype(np.float64), q, k.astype(np.float64))[1].mean())
    return total


def total_loss(code: CssCode, sample: noise.Sample, class_probs, lam: float = 1.0) -> LossParts:
    probs = np.asarray(class_probs, dtype=np.float64)
    e = np.asarray(sample.error, dtype=np.int64)
    p_true = np.take_along_axis(probs, e[:, None], axis=-1)[:, 0]
    ce = float(-np.log(np.maximum(p_true, 1e-300)).mean())
    comm = commutation_loss(code, e, probs)
    return LossParts(ce, comm, ce + lam * comm)


def batch_loss(logits: np.ndarray, errors: np.ndarray, kx: np.ndarray, kz: np.ndarray,
               lam: float) -> tuple[LossParts, np.ndarray]:
    """Mean loss over a batch and its gradient w.r.t. the logits.

    ``logits`` has shape ``(B, n, 4)``; ``errors`` holds the true classes.
    """
    bsz, n, _ = logits.shape
    dt = logits.dtype
    z = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    probs = np.exp(logp)
    onehot = np.eye(gnn.NUM_CLASSES, dtype=dt)[errors]
    ce = -(logp * onehot).sum(axis=-1).mean()
    d_logits = (probs - onehot) / (bsz * n)

    comm = 0.0
    if lam > 0:
        d_probs = np.zeros_like(probs)
        for k, a, t in ((kx, noise.x_part(errors), 1), (kz, noise.z_part(errors), 2)):
            if k.shape[0] == 0:
                continue
            a = a.astype(dt)
            q = probs[..., t] + probs[..., 3]
            s, val = _comm_terms(a, q, k.astype(dt))  # s already reduced mod 2
            comm += val.mean(axis=1).mean()
            half = 0.5 * np.pi * s
            ds = 0.5 * np.pi * np.cos(half) * np.sign(np.sin(half)) / (k.shape[0] * bsz)
            dq = (ds @ k.astype(dt)) * (1.0 - 2.0 * a)
            d_probs[..., t] += dq
            d_probs[..., 3] += dq
        d_logits = d_logits + lam * probs * (d_probs - (probs * d_probs).sum(axis=-1, keepdims=True))
    ce, comm = float(ce), float(comm)
    return LossParts(ce, comm, ce + lam * comm), d_logits.astype(dt)


def gradient(model: gnn.GnnModel, gi: gnn.GraphIndex, code: CssCode, syndromes, errors,
             lam: float = 1.0, iterations: int = 30, dropout: float = 0.0, rng=None):
    """Exact gradients of the mean batch loss after ``iterations`` unrolled steps.

    Returns ``(grads, LossParts)``. Raises :class:`NonFiniteLossError` when
    the loss is not finite.
    """
    kx, kz = complement_bases(code)
    logits, tape = gnn.forward_train(model, gi, syndromes, iterations, dropout, rng)
    parts, d_logits = batch_loss(logits, np.asarray(errors), kx, kz, lam)
    if not math.isfinite(parts.total):
        raise NonFiniteLossError(f"loss is {parts.total}")
    return gnn.backward(model, gi, tape, d_logits), parts


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)


def evaluate(model: gnn.GnnModel, gi: gnn.GraphIndex, code: CssCode, ds: noise.Dataset,
             iterations: int, lam: float = 1.0, batch_size: int = 512) -> tuple[float, float]:
    """``(test_loss, test_ler)`` on a dataset.

    The loss uses the final-iteration readout; the LER uses the decoder with
    early stopping and counts unsatisfied syndromes as failures.
    """
    from .bench import decoding_failures

    kx, kz = complement_bases(code)
    loss_sum, fails = 0.0, 0
    for lo in range(0, len(ds), batch_size):
        syn = ds.syndromes[lo:lo + batch_size]
        err = ds.errors[lo:lo + batch_size]
        logits, _ = gnn.forward_train(model, gi, syn, iterations)
        parts, _ = batch_loss(logits, err, kx, kz, lam)
        loss_sum += parts.total * len(syn)
        out = gnn.decode_batch(model, gi, syn, iterations)
        fails += int(decoding_failures(code, err, out.hard_error).sum())
    return loss_sum / len(ds), fails / len(ds)


def _epoch_seed(seed: int, epoch: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, stream]).generate_state(1)[0])


LOG_FIELDS = ("epoch", "train_loss", "test_loss", "test_ler", "wallclock")


def train(model: gnn.GnnModel, code: CssCode, config: TrainConfig, log_path=None,
          checkpoint_path=None, progress=None) -> tuple[gnn.GnnModel, list[dict]]:
    """Train ``model`` (a copy is updated) on fresh data every epoch.

    Each epoch draws a new training set with ``p ~ U(0, p_max)`` and a new
    fixed-``p`` test set, runs minibatch Adam steps and records the test
    loss and LER. Training stops after ``config.epochs`` or once the stop
    rule holds. Returns the trained model and the per-epoch log.
    """
    model = model.copy()
    if (model.node_dim, model.msg_hidden, model.edge_dim) != (config.node_dim, config.msg_hidden, config.edge_dim):
        raise ValueError("model feature sizes do not match the training config")
    gi = gnn.GraphIndex.from_code(code)
    opt = Adam(model.params, config.learning_rate, config.adam_betas, config.adam_eps)
    drop_rng = noise.make_rng([config.seed, 2**31 - 1])
    history: list[dict] = []
    start = time.perf_counter()
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS + ("criterion_met",))
        writer.writeheader()
    last_good = model.copy()
    prev_test_loss = None
    try:
        for epoch in range(1, config.epochs + 1):
            train_ds = noise.generate_dataset(code, config.p_max, config.samples_per_epoch,
                                              seed=_epoch_seed(config.seed, epoch, 0))
            test_ds = noise.generate_dataset(code, config.test_p, config.test_size,
                                             seed=_epoch_seed(config.seed, epoch, 1), fixed_p=True)
            losses = []
            for lo in range(0, len(train_ds), config.batch_size):
                batch = train_ds[lo:lo + config.batch_size]
                try:
                    grads, parts = gradient(model, gi, code, batch.syndromes, batch.errors,
                                            config.loss_weight_lambda, config.iterations,
                                            config.dropout, drop_rng)
                except NonFiniteLossError as exc:
                    log.warning("epoch %d batch at %d skipped: %s", epoch, lo, exc)
                    continue
                opt.step(model.params, grads)
                losses.append(parts.total)
            test_loss, test_ler = evaluate(model, gi, code, test_ds, config.iterations,
                                           config.loss_weight_lambda)
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)) if losses else float("nan"),
                "test_loss": test_loss,
                "test_ler": test_ler,
                "wallclock": time.perf_counter() - start,
            }
            if not math.isfinite(test_loss):
                raise TrainingDivergedError(f"test loss became {test_loss} in epoch {epoch}", last_good, history)
            last_good = model.copy()
            ler_ok = test_ler < config.stop_ler_factor * config.test_p
            loss_ok = prev_test_loss is not None and abs(prev_test_loss - test_loss) <= config.loss_tol * prev_test_loss
            row["criterion_met"] = bool(ler_ok)
            history.append(row)
            prev_test_loss = test_loss
            log.info("epoch %d: train %.4f test %.4f ler %.4f (%.0fs)", epoch, row["train_loss"],
                     test_loss, test_ler, row["wallclock"])
            if writer is not None:
                writer.writerow(row)
                fh.flush()
            if progress is not None:
                progress(row)
            if checkpoint_path is not None:
                _stamp(model, code, config, epoch)
                gnn.save_model(model, checkpoint_path)
            if config.stop_rule == "ler" and ler_ok:
                break
            if config.stop_rule == "both" and ler_ok and loss_ok:
                break
    finally:
        if fh is not None:
            fh.close()
    _stamp(model, code, config, len(history))
    return model, history


def _stamp(model: gnn.GnnModel, code: CssCode, config: TrainConfig, epochs_done: int) -> None:
    model.meta.update({
        "code": code.name,
        "code_definition": code.definition,
        "distance": code.d,
        "epochs": epochs_done,
        "seed": config.seed,
        "config": config.to_dict(),
    })


def warm_start(pretrained: gnn.GnnModel, larger_code: CssCode, config: TrainConfig, **kwargs):
    """Continue training a model from a smaller code on ``larger_code``."""
    dims = (pretrained.node_dim, pretrained.msg_hidden, pretrained.edge_dim)
    if dims != (config.node_dim, config.msg_hidden, config.edge_dim):
        raise ValueError(f"checkpoint feature sizes {dims} do not match the config")
    start = pretrained.copy()
    start.meta = dict(pretrained.meta)
    start.meta["warm_start_from"] = pretrained.meta.get("code", "")
    return train(start, larger_code, config, **kwargs)


def save_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS + ("criterion_met",))
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def load_config(path) -> TrainConfig:
    import json

    return TrainConfig.from_dict(json.loads(Path(path).read_text()))
