"""Cross-entropy training with AdamW, OneCycle scheduling and best-epoch
checkpoint selection.

Determinism contract: given the same data, config and seed, two runs
produce identical parameter trajectories on one platform. Epoch shuffles
and dropout streams are derived from the run seed, never from global
state.
"""

import dataclasses
import math

import numpy as np

from . import backend as K
from . import metrics
from . import tensor as tt
from .errors import ConfigError, DataError, TrainingAbort
from .rng import DropoutRng, derive_seed
from .tensor import Tape, Tensor

# canonical seed list; the first entry of SEEDS is seed one of five
MASTER_SEED = 42
SEEDS = (654, 114, 25, 759, 281)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under the logits.

    Computed through log-sum-exp, never through explicit probabilities,
    so extreme logits stay finite. Accepts [B, n] with labels [B], or a
    single [n] row with a scalar label.
    """
    single = logits.ndim == 1
    ld = logits.data.reshape(1, -1) if single else logits.data
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    b, n = ld.shape
    if y.shape[0] != b:
        raise DataError(f"{b} logit rows but {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= n):
        bad = int(y[(y < 0) | (y >= n)][0])
        raise DataError(f"class index {bad} outside [0, {n})")
    m = ld.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(ld - m).sum(axis=1))
    val = np.asarray((lse - ld[np.arange(b), y]).mean(), dtype=ld.dtype)

    def grad_fn(out):
        def bwd():
            p = K.softmax_fwd(np.ascontiguousarray(ld))
            p[np.arange(b), y] -= 1.0
            g = p * (out.grad / b)
            tt._accum(logits, g.reshape(logits.data.shape))
        return bwd

    return tt._make(val, (logits,), grad_fn)


class OneCycle:
    """One warmup-then-anneal learning-rate cycle, cosine in both phases."""

    def __init__(self, total_steps, initial_lr=5e-5, max_lr=3e-4,
                 pct_start=0.3, final_div=1e4):
        if total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {total_steps}")
        if not 0.0 < pct_start < 1.0:
            raise ConfigError(f"pct_start must be in (0, 1), got {pct_start}")
        self.total_steps = int(total_steps)
        self.initial_lr = float(initial_lr)
        self.max_lr = float(max_lr)
        self.pct_start = float(pct_start)
        self.final_lr = float(initial_lr) / float(final_div)

    @staticmethod
    def _cos(start, end, pct):
        return end + (start - end) / 2.0 * (math.cos(math.pi * pct) + 1.0)

    def lr(self, step):
        if not 0 <= step <= self.total_steps:
            raise ConfigError(f"step {step} outside [0, {self.total_steps}]")
        up = self.pct_start * self.total_steps
        if step <= up:
            return self._cos(self.initial_lr, self.max_lr, step / up)
        return self._cos(self.max_lr, self.final_lr, (step - up) / (self.total_steps - up))


class AdamW:
    """AdamW with decoupled weight decay and bias-corrected moments."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.05):
        self.params = params
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr):
        # validate every gradient before touching any table, so an abort
        # never leaves the parameters half-updated
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise TrainingAbort(
                    f"non-finite gradient in table {name!r} at step {self.t + 1}"
                )
        self.t += 1
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            K.adamw_update(
                p.data, g, self.m[name], self.v[name], self.t,
                lr, self.betas[0], self.betas[1], self.eps, self.weight_decay,
            )


@dataclasses.dataclass
class TrainState:
    seed: int
    epochs_run: int
    monitor_name: str
    best_monitor: float
    best_epoch: int
    best_params: dict
    log: list
    aborted: str = None


def _split_arrays(split, name):
    x, y = (split.embeddings, split.labels) if hasattr(split, "embeddings") else split
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if x.shape[0] == 0:
        raise DataError(f"{name} split is empty")
    if x.shape[0] != y.shape[0]:
        raise DataError(f"{name} split: {x.shape[0]} grids but {y.shape[0]} labels")
    return x, y


def predict_probs(model, x, batch_size=256):
    """Class probabilities for a stack of grids, computed without a tape."""
    x = np.asarray(x)
    out = [model.forward(x[i:i + batch_size]).data for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def _format_record(rec):
    parts = [f"epoch={rec['epoch']}", f"step={rec['step']}",
             f"lr={rec['lr']:.6e}", f"loss={rec['loss']:.6f}"]
    parts += [f"{k}={v:.6f}" for k, v in rec.items()
              if k not in ("epoch", "step", "lr", "loss")]
    return " ".join(parts)


def fit(model, train, val, *, seed=MASTER_SEED, epochs=50, batch_size=64,
        initial_lr=5e-5, max_lr=3e-4, pct_start=0.3, weight_decay=0.05,
        betas=(0.9, 0.999), eps=1e-8, log_fn=None, eval_batch_size=256):
    """Train in place; afterwards the model holds the best-epoch parameters.

    The validation monitor (AUROC for binary, Cohen's kappa otherwise) is
    evaluated after every epoch; the best-scoring snapshot wins, never the
    final epoch. A non-finite loss or gradient aborts the run with the
    best snapshot restored and the abort reason recorded.
    """
    x_tr, y_tr = _split_arrays(train, "train")
    x_va, y_va = _split_arrays(val, "val")
    n = x_tr.shape[0]
    steps_per_epoch = math.ceil(n / batch_size)
    sched = OneCycle(max(1, epochs * steps_per_epoch), initial_lr, max_lr, pct_start)
    opt = AdamW(model.params, betas=betas, eps=eps, weight_decay=weight_decay)
    drop = DropoutRng(derive_seed(seed, "dropout"))

    state = TrainState(
        seed=seed, epochs_run=0, monitor_name="", best_monitor=-math.inf,
        best_epoch=-1, best_params={k: p.data.copy() for k, p in model.params.items()},
        log=[],
    )
    step = 0
    for epoch in range(epochs):
        perm = np.random.default_rng(derive_seed(seed, "shuffle", epoch)).permutation(n)
        losses = []
        try:
            for b in range(steps_per_epoch):
                idx = perm[b * batch_size:(b + 1) * batch_size]
                drop.begin_step(epoch, b)
                lr = sched.lr(step)
                opt.zero_grad()
                with Tape() as tape:
                    logits = model.forward_logits(
                        Tensor(x_tr[idx], dtype=model.params["out_w"].dtype),
                        training=True, rng=drop,
                    )
                    loss = cross_entropy(logits, y_tr[idx])
                    value = loss.item()
                    if not math.isfinite(value):
                        raise TrainingAbort(
                            f"non-finite loss at epoch {epoch} step {step}"
                        )
                    tape.backward(loss)
                opt.step(lr)
                losses.append(value)
                step += 1
        except TrainingAbort as abort:
            state.aborted = str(abort)
            if log_fn:
                log_fn(f"abort: {abort}")
            break
        probs = predict_probs(model, x_va, eval_batch_size)
        name, value = metrics.monitor_metric(y_va, probs)
        state.monitor_name = name
        state.epochs_run = epoch + 1
        rec = {"epoch": epoch, "step": step, "lr": lr,
               "loss": float(np.mean(losses)), f"val_{name}": value}
        state.log.append(rec)
        if log_fn:
            log_fn(_format_record(rec))
        if value > state.best_monitor:
            state.best_monitor = value
            state.best_epoch = epoch
            state.best_params = {k: p.data.copy() for k, p in model.params.items()}
    for k, p in model.params.items():
        p.data = state.best_params[k].copy()
    return state
