"""End-to-end gradient verification against central finite differences.

Runs a float64 copy of the model in evaluation mode (no dropout, so the
loss is a deterministic function of the parameters), backpropagates one
batch, then perturbs every parameter coordinate by ±step and compares.
Relative error uses max(|analytic|, |numeric|, floor) in the denominator
so coordinates with true-zero gradient do not divide by noise.
"""

import dataclasses
import time

import numpy as np

from .errors import ConfigError
from .model import StampConfig, StampModel
from .tensor import Tape, Tensor
from .training import cross_entropy

TINY_CONFIG = StampConfig(
    S=3, T=2, ell=8, n_classes=2, D=8, L=2, h=4, A=2, Q=2,
    pe_mode="NST", mixer="cc_gmlp", aggregator="mhap", dropout=0.0,
)


@dataclasses.dataclass
class GradcheckReport:
    passed: bool
    tol: float
    worst_rel: float
    worst_table: str
    worst_index: tuple
    n_coords: int
    elapsed_s: float
    per_table: dict

    def to_text(self):
        lines = [
            f"passed={self.passed}",
            f"tol={self.tol:.3e}",
            f"worst_rel={self.worst_rel:.3e}",
            f"worst_table={self.worst_table}",
            f"worst_index={list(self.worst_index)}",
            f"n_coords={self.n_coords}",
            f"elapsed_s={self.elapsed_s:.2f}",
        ]
        lines += [f"table.{k}={v:.3e}" for k, v in self.per_table.items()]
        return "\n".join(lines)


def gradcheck_model(config=None, seed=0, batch=2, step=1e-5, tol=1e-4,
                    floor=1e-6):
    """Check every parameter coordinate of a (small) model configuration."""
    config = TINY_CONFIG if config is None else config
    if config.dropout != 0.0:
        raise ConfigError("gradcheck needs dropout=0 (loss must be deterministic)")
    model = StampModel(config, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(batch, config.S, config.T, config.ell)))
    y = rng.integers(0, config.n_classes, batch)

    def loss_value():
        return cross_entropy(model.forward_logits(x), y).item()

    t0 = time.perf_counter()
    for p in model.params.values():
        p.grad = None
    with Tape() as tape:
        loss = cross_entropy(model.forward_logits(x), y)
        tape.backward(loss)

    worst_rel, worst_table, worst_index = -1.0, "", ()
    per_table = {}
    n_coords = 0
    for name, p in model.params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        table_worst = 0.0
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_value()
            flat[i] = keep - step
            down = loss_value()
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            rel = abs(numeric - a) / max(abs(numeric), abs(a), floor)
            n_coords += 1
            if rel > table_worst:
                table_worst = rel
            if rel > worst_rel:
                worst_rel = rel
                worst_table = name
                worst_index = np.unravel_index(i, p.data.shape)
        per_table[name] = table_worst
    return GradcheckReport(
        passed=worst_rel < tol, tol=tol, worst_rel=worst_rel,
        worst_table=worst_table, worst_index=worst_index,
        n_coords=n_coords, elapsed_s=time.perf_counter() - t0,
        per_table=per_table,
    )
