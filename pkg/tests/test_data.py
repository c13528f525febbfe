"""Dataset container, binary formats, split manifests, synthetic generators."""

import json
import struct

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from stamp.data import (
    Dataset,
    SplitManifest,
    generate_interaction_dataset,
    generate_separable_dataset,
    iter_dataset,
    read_dataset,
    write_dataset,
    zscore_grids,
)
from stamp.errors import DataError, FormatError

HEADER = struct.Struct("<4sIIIIIIBI")


def small_dataset(n=10, s=3, t=2, ell=8, n_classes=4, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        rng.normal(size=(n, s, t, ell)).astype(np.float32),
        rng.integers(0, n_classes, size=n),
        n_classes,
        [f"rec{i:03d}" for i in range(n)],
        meta={"source": "unit"},
    )


def pooled_lr_accuracy(dataset, manifest):
    train, _, test = manifest.apply(dataset)
    clf = LogisticRegression(max_iter=2000)
    clf.fit(train.embeddings.mean(axis=(1, 2)), train.labels)
    return float(
        (clf.predict(test.embeddings.mean(axis=(1, 2))) == test.labels).mean()
    )


class TestDatasetContainer:
    def test_validation_errors(self):
        good = small_dataset()
        with pytest.raises(DataError, match=r"\[N,S,T,ell\]"):
            Dataset(np.zeros((4, 3, 2)), np.zeros(4), 2, None)
        with pytest.raises(DataError, match="labels"):
            Dataset(good.embeddings, good.labels[:-1], 4, None)
        with pytest.raises(DataError, match="sample ids"):
            Dataset(good.embeddings, good.labels, 4, ["only-one"])
        with pytest.raises(DataError, match="outside"):
            Dataset(good.embeddings, good.labels + 10, 4, None)

    def test_default_ids_are_indices(self):
        d = Dataset(np.zeros((3, 1, 1, 2), dtype=np.float32), [0, 1, 0], 2, None)
        assert d.sample_ids == ["0", "1", "2"]

    def test_subset_preserves_requested_order(self):
        d = small_dataset()
        sub = d.subset(["rec004", "rec001"])
        assert sub.sample_ids == ["rec004", "rec001"]
        np.testing.assert_array_equal(sub.embeddings[0], d.embeddings[4])
        np.testing.assert_array_equal(sub.labels, d.labels[[4, 1]])

    def test_subset_unknown_id(self):
        with pytest.raises(DataError, match="unknown sample ids"):
            small_dataset().subset(["nope"])

    def test_zscore_normalizes_each_grid(self):
        x = np.random.default_rng(1).normal(3.0, 5.0, size=(4, 3, 2, 8))
        z = zscore_grids(x)
        np.testing.assert_allclose(z.mean(axis=(1, 2, 3)), 0.0, atol=1e-5)
        np.testing.assert_allclose(z.std(axis=(1, 2, 3)), 1.0, atol=1e-4)


class TestBinaryFormat:
    def test_roundtrip_bit_identical(self, tmp_path):
        d = small_dataset()
        path = tmp_path / "d.steb"
        write_dataset(d, path)
        back = read_dataset(path)
        np.testing.assert_array_equal(back.embeddings, d.embeddings)
        np.testing.assert_array_equal(back.labels, d.labels)
        assert back.sample_ids == d.sample_ids
        assert back.n_classes == d.n_classes
        assert back.meta["source"] == "unit"
        assert "sample_ids" not in back.meta

    def test_payload_size_arithmetic(self, tmp_path):
        d = small_dataset(n=10, s=3, t=2, ell=8)
        path = tmp_path / "d.steb"
        write_dataset(d, path)
        raw = path.read_bytes()
        fields = HEADER.unpack(raw[: HEADER.size])
        assert fields[0] == b"STEB" and fields[1] == 1
        assert fields[2:7] == (10, 3, 2, 8, 4)
        meta_len = fields[8]
        assert len(raw) == HEADER.size + meta_len + 10 * (3 * 2 * 8 * 4 + 4)
        assert len(raw) - HEADER.size - meta_len == 1960

    def test_write_is_deterministic(self, tmp_path):
        d = small_dataset()
        write_dataset(d, tmp_path / "a.steb")
        write_dataset(d, tmp_path / "b.steb")
        assert (tmp_path / "a.steb").read_bytes() == (tmp_path / "b.steb").read_bytes()

    def test_streaming_matches_eager(self, tmp_path):
        d = small_dataset()
        path = tmp_path / "d.steb"
        write_dataset(d, path)
        eager = read_dataset(path)
        for i, (sid, grid, label) in enumerate(iter_dataset(path)):
            assert sid == eager.sample_ids[i]
            np.testing.assert_array_equal(grid, eager.embeddings[i])
            assert label == eager.labels[i]
        assert i == len(d) - 1

    def test_rejects_non_finite(self, tmp_path):
        d = small_dataset()
        d.embeddings[2, 0, 0, 0] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            write_dataset(d, tmp_path / "bad.steb")

    def test_zscore_on_read(self, tmp_path):
        d = small_dataset()
        path = tmp_path / "d.steb"
        write_dataset(d, path)
        z = read_dataset(path, zscore=True)
        np.testing.assert_allclose(z.embeddings.mean(axis=(1, 2, 3)), 0.0, atol=1e-5)


class TestMalformedFiles:
    def _valid_bytes(self, tmp_path):
        path = tmp_path / "d.steb"
        write_dataset(small_dataset(), path)
        return path, path.read_bytes()

    def test_truncated_payload_names_sizes(self, tmp_path):
        path, raw = self._valid_bytes(tmp_path)
        cut = tmp_path / "cut.steb"
        cut.write_bytes(raw[:-7])
        with pytest.raises(FormatError, match=r"expected 1960 bytes.*found 1953"):
            read_dataset(cut)
        with pytest.raises(FormatError, match="sample 9 truncated"):
            list(iter_dataset(cut))

    def test_oversized_payload(self, tmp_path):
        path, raw = self._valid_bytes(tmp_path)
        fat = tmp_path / "fat.steb"
        fat.write_bytes(raw + b"\x00" * 3)
        with pytest.raises(FormatError, match="oversized"):
            read_dataset(fat)

    def test_bad_magic(self, tmp_path):
        path, raw = self._valid_bytes(tmp_path)
        bad = tmp_path / "bad.steb"
        bad.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(FormatError, match="bad magic"):
            read_dataset(bad)

    def test_bad_version_and_dtype(self, tmp_path):
        path, raw = self._valid_bytes(tmp_path)
        fields = list(HEADER.unpack(raw[: HEADER.size]))
        fields[1] = 9
        (tmp_path / "v.steb").write_bytes(HEADER.pack(*fields) + raw[HEADER.size:])
        with pytest.raises(FormatError, match="version 9"):
            read_dataset(tmp_path / "v.steb")
        fields[1], fields[7] = 1, 5
        (tmp_path / "t.steb").write_bytes(HEADER.pack(*fields) + raw[HEADER.size:])
        with pytest.raises(FormatError, match="dtype code 5"):
            read_dataset(tmp_path / "t.steb")

    def test_label_out_of_range_in_payload(self, tmp_path):
        path, raw = self._valid_bytes(tmp_path)
        meta_len = HEADER.unpack(raw[: HEADER.size])[8]
        first_label_at = HEADER.size + meta_len + 3 * 2 * 8 * 4
        patched = (raw[:first_label_at] + struct.pack("<I", 99)
                   + raw[first_label_at + 4:])
        bad = tmp_path / "lab.steb"
        bad.write_bytes(patched)
        with pytest.raises(FormatError, match="label 99"):
            read_dataset(bad)
        with pytest.raises(FormatError, match="sample 0 label 99"):
            list(iter_dataset(bad))

    def test_header_truncated(self, tmp_path):
        path, raw = self._valid_bytes(tmp_path)
        stub = tmp_path / "stub.steb"
        stub.write_bytes(raw[:10])
        with pytest.raises(FormatError, match="header truncated"):
            read_dataset(stub)


class TestSplitManifest:
    def test_apply_partitions(self):
        d = small_dataset()
        m = SplitManifest(train=["rec000", "rec003"], val=["rec001"], test=["rec002"])
        train, val, test = m.apply(d)
        assert train.sample_ids == ["rec000", "rec003"]
        assert val.sample_ids == ["rec001"]
        assert test.sample_ids == ["rec002"]

    def test_overlap_rejected(self):
        m = SplitManifest(train=["rec000"], val=["rec000"], test=[])
        with pytest.raises(DataError, match="overlapping"):
            m.validate(small_dataset())

    def test_unknown_ids_rejected(self):
        m = SplitManifest(train=["ghost"], val=[], test=[])
        with pytest.raises(DataError, match="missing from dataset"):
            m.validate(small_dataset())

    def test_save_load_roundtrip(self, tmp_path):
        m = SplitManifest(train=["a", "b"], val=["c"], test=["d"])
        m.save(tmp_path / "m.json")
        back = SplitManifest.load(tmp_path / "m.json")
        assert (back.train, back.val, back.test) == (m.train, m.val, m.test)

    def test_bad_version(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"version": 2, "train": [],
                                                     "val": [], "test": []}))
        with pytest.raises(FormatError, match="version"):
            SplitManifest.load(tmp_path / "m.json")


class TestInteractionGenerator:
    def test_shapes_meta_and_balance(self):
        d, m = generate_interaction_dataset(n_samples=400, seed=3)
        assert d.embeddings.shape == (400, 8, 4, 32)
        assert d.embeddings.dtype == np.float32
        counts = np.bincount(d.labels, minlength=4)
        assert counts.tolist() == [100, 100, 100, 100]
        assert d.meta["generator"] == "interaction"
        assert len(d.meta["homes"]) == 4
        rows = [h[0] for h in d.meta["homes"]]
        cols = [h[1] for h in d.meta["homes"]]
        assert len(set(rows)) == 4 and len(set(cols)) == 4

    def test_manifest_partitions_and_stratifies(self):
        d, m = generate_interaction_dataset(n_samples=400, seed=3)
        all_ids = m.train + m.val + m.test
        assert sorted(all_ids) == sorted(d.sample_ids)
        assert len(set(all_ids)) == len(all_ids)
        assert len(m.train) == 240 and len(m.val) == 80 and len(m.test) == 80
        train, val, test = m.apply(d)
        for split in (train, val, test):
            assert set(split.labels.tolist()) == {0, 1, 2, 3}

    def test_same_seed_reproduces_bytes(self, tmp_path):
        d1, m1 = generate_interaction_dataset(n_samples=50, seed=9)
        d2, m2 = generate_interaction_dataset(n_samples=50, seed=9)
        np.testing.assert_array_equal(d1.embeddings, d2.embeddings)
        np.testing.assert_array_equal(d1.labels, d2.labels)
        assert m1.train == m2.train
        d3, _ = generate_interaction_dataset(n_samples=50, seed=10)
        assert not np.array_equal(d1.embeddings, d3.embeddings)

    def test_mean_pooling_is_uninformative(self):
        d, m = generate_interaction_dataset(n_samples=1200, noise=0.25,
                                            amplitude=1.5, seed=4)
        acc = pooled_lr_accuracy(d, m)
        assert abs(acc - 0.25) < 0.08

    def test_home_cells_decide_labels_noiselessly(self):
        d, _ = generate_interaction_dataset(n_samples=200, noise=0.0, seed=5)
        homes = d.meta["homes"]
        energy = np.stack(
            [np.linalg.norm(d.embeddings[:, hs, ht, :], axis=1) for hs, ht in homes],
            axis=1,
        )
        assert (energy.argmax(axis=1) == d.labels).mean() == 1.0

    def test_too_many_classes_rejected(self):
        with pytest.raises(DataError, match="exceeds grid size"):
            generate_interaction_dataset(S=2, T=2, n_classes=5)


class TestSeparableGenerator:
    def test_mean_pooling_suffices(self):
        d, m = generate_separable_dataset(n_samples=600, noise=0.3, seed=6)
        assert pooled_lr_accuracy(d, m) > 0.95

    def test_accuracy_degrades_with_noise(self):
        accs = [
            pooled_lr_accuracy(*generate_separable_dataset(n_samples=600,
                                                           noise=s, seed=7))
            for s in (0.25, 2.0, 8.0)
        ]
        assert accs[0] > 0.99
        assert accs[0] >= accs[1] >= accs[2]
        assert accs[2] < 0.9
