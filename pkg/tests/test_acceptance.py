"""Acceptance gate: the binding end-to-end checks for this package.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output) and asserts the same condition, so the suite doubles as
a human-readable scorecard.
"""

import dataclasses
import json
import math
import time

import numpy as np
import pytest

from _oracles import (
    auc_pr_oracle,
    auroc_oracle,
    balanced_accuracy_oracle,
    kappa_oracle,
    random_binary_instance,
    random_multiclass_instance,
    weighted_f1_oracle,
)
from stamp import metrics as M
from stamp.cli import main
from stamp.data import generate_interaction_dataset
from stamp.gradcheck import TINY_CONFIG, gradcheck_model
from stamp.model import StampConfig, StampModel, mhap, param_count
from stamp.tensor import Tensor
from stamp.training import cross_entropy, fit, predict_probs

ABLATION_SEEDS = (654, 114, 25)


def report(name, ok, detail):
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


class TestGradientFidelity:
    def test_all_tables_within_tolerance(self):
        start = time.perf_counter()
        rep = gradcheck_model(TINY_CONFIG, seed=0, step=1e-5, tol=1e-4)
        elapsed = time.perf_counter() - start
        report(
            "gradient fidelity", rep.passed and elapsed < 60.0,
            f"worst rel err {rep.worst_rel:.3e} in "
            f"{rep.worst_table}{list(rep.worst_index)}, {elapsed:.1f}s",
        )


class TestParameterCountAnchors:
    def test_published_model_sizes(self):
        a = param_count(StampConfig(S=22, T=4, ell=1024, n_classes=4))
        b = param_count(StampConfig(S=64, T=4, ell=1024, n_classes=4))
        ok_a = abs(a - 720_000) <= 0.05 * 720_000
        ok_b = abs(b - 780_000) <= 0.05 * 780_000
        report(
            "parameter-count anchors", ok_a and ok_b,
            f"22-channel config {a} vs 720k, 64-channel config {b} vs 780k",
        )


class TestMhapDegeneracy:
    def test_zero_queries_equal_mean_pooling(self):
        cfg = StampConfig(S=6, T=4, ell=16, n_classes=4, D=32, L=1, h=8,
                          A=4, Q=8)
        model = StampModel(cfg, seed=0)
        heads = model._heads()
        for _, _, q in heads:
            q.data[:] = 0.0
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(100):
            x = Tensor(rng.normal(size=(6, 4, 32)).astype(np.float32))
            got = mhap(x, heads).data
            tokens = x.data.reshape(24, 32)
            want = np.concatenate(
                [(tokens @ w.data + b.data).mean(axis=0) for w, b, _ in heads]
            )
            worst = max(worst, float(np.abs(got - want).max()))
        report("MHAP degeneracy", worst <= 1e-6,
               f"max elementwise deviation {worst:.2e} over 100 grids")


@pytest.fixture(scope="module")
def ablation_results():
    # each seed is a full replication: fresh data draw, fresh init, fresh run
    arms = {
        "full": ("NST", "cc_gmlp", "mhap"),
        "blind": ("none", "none", "mean"),
        "pe_on": ("NST", "none", "mhap"),
        "pe_off": ("none", "none", "mhap"),
        "mean_agg": ("NST", "none", "mean"),
    }
    start = time.perf_counter()
    accs = {name: [] for name in arms}
    for seed in ABLATION_SEEDS:
        dataset, manifest = generate_interaction_dataset(
            S=8, T=4, ell=32, n_classes=4, n_samples=2000,
            noise=0.25, amplitude=1.5, seed=seed,
        )
        train, val, test = manifest.apply(dataset)
        for name, (pe, mixer, agg) in arms.items():
            cfg = StampConfig(S=8, T=4, ell=32, n_classes=4, D=32, L=2, h=64,
                              A=4, Q=8, pe_mode=pe, mixer=mixer,
                              aggregator=agg, dropout=0.1)
            model = StampModel(cfg, seed=seed)
            fit(model, train, val, seed=seed, epochs=40, batch_size=64,
                max_lr=2e-3)
            probs = predict_probs(model, test.embeddings)
            accs[name].append(M.balanced_accuracy(test.labels,
                                                  M.labels_from_probs(probs)))
    means = {name: float(np.mean(v)) for name, v in accs.items()}
    return means, time.perf_counter() - start


class TestAblationOrdering:
    def test_position_information_drives_accuracy(self, ablation_results):
        means, elapsed = ablation_results
        full, blind = means["full"], means["blind"]
        pe_gap = means["pe_on"] - means["pe_off"]
        agg_gap = means["pe_on"] - means["mean_agg"]
        checks = [
            ("(a) full model", full >= 0.90, f"mean balanced accuracy {full:.3f} >= 0.90"),
            ("(b) position-blind model", blind <= 0.35,
             f"mean balanced accuracy {blind:.3f} <= chance+0.10"),
            ("(c) positional-table gap", pe_gap >= 0.20,
             f"{means['pe_on']:.3f} - {means['pe_off']:.3f} = {pe_gap:.3f} >= 0.20"),
            ("(d) attention-pooling gap", agg_gap >= 0.10,
             f"{means['pe_on']:.3f} - {means['mean_agg']:.3f} = {agg_gap:.3f} >= 0.10"),
            ("(e) runtime budget", elapsed <= 300.0, f"{elapsed:.1f}s <= 300s"),
        ]
        for name, ok, detail in checks:
            print(f"[ACCEPTANCE] ablation ordering {name}: "
                  f"{'PASS' if ok else 'FAIL'} ({detail})")
        assert all(ok for _, ok, _ in checks), checks


class TestMetricOracleEquivalence:
    def test_thousand_random_instances(self):
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(500):
            y, s = random_binary_instance(rng)
            worst = max(worst, abs(M.auroc(y, s) - auroc_oracle(y, s)))
            worst = max(worst, abs(M.auc_pr(y, s) - auc_pr_oracle(y, s)))
        for _ in range(500):
            y, p = random_multiclass_instance(rng)
            worst = max(worst,
                        abs(M.balanced_accuracy(y, p) - balanced_accuracy_oracle(y, p)))
            worst = max(worst, abs(M.cohens_kappa(y, p) - kappa_oracle(y, p)))
            worst = max(worst, abs(M.weighted_f1(y, p) - weighted_f1_oracle(y, p)))
        report("metric oracle equivalence", worst <= 1e-9,
               f"worst |difference| {worst:.2e} over 1000 instances")


class TestTrainingDeterminism:
    def test_identical_runs_identical_reports(self, tmp_path):
        data = str(tmp_path / "toy.steb")
        assert main(["generate-synthetic", "--kind", "separable", "--out", data,
                     "--S", "3", "--T", "2", "--ell", "8", "--classes", "2",
                     "--samples", "60", "--seed", "5"]) == 0
        blobs = []
        for sub in ("one", "two"):
            out = str(tmp_path / sub)
            code = main(["train", "--dataset", data, "--out", out,
                         "--seeds", "654 114", "--epochs", "2",
                         "--batch-size", "16", "--D", "8", "--L", "1",
                         "--h", "4", "--A", "2", "--Q", "2",
                         "--dropout", "0.1", "--max-lr", "2e-3"])
            assert code == 0
            blobs.append(open(out + "/aggregate.json", "rb").read())
        report("training determinism", blobs[0] == blobs[1],
               "two identical runs produced byte-identical aggregate reports")


class TestInitialLoss:
    def test_first_batch_near_log_n_classes(self):
        cfg = StampConfig(S=8, T=4, ell=32, n_classes=4, D=32, L=2, h=64,
                          A=4, Q=8)
        model = StampModel(cfg, seed=0)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(64, 8, 4, 32)).astype(np.float32)
        y = rng.integers(0, 4, size=64)
        loss = cross_entropy(model.forward_logits(x), y).item()
        target = math.log(4.0)
        ok = abs(loss - target) <= 0.1 * target
        report("initial loss", ok,
               f"first-batch cross-entropy {loss:.4f} vs log(4) = {target:.4f}")
