import struct

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from xermlab.datasets import (DecayProfile, FEW, MANY, MEDIUM, LongTailDataset, decay_counts,
                              load_tabular, partition_subsets, save_tabular, standardize,
                              subsample_indices, subsample_longtail, synth_gaussian_longtail)
from xermlab.errors import (InsufficientSamples, InvalidProfile, InvalidThresholds,
                            NonContiguousLabels, ParseError)


def exact_decay(N, C, mu):
    # 60-digit reference; agrees with double precision away from integer boundaries
    with mpmath.workdps(60):
        mu = mpmath.mpf(mu)
        return [max(1, int(mpmath.floor(N * mu ** (mpmath.mpf(i - 1) / (C - 1)))))
                for i in range(1, C + 1)]


def balanced(C, per_class, dims=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(C), per_class)
    return LongTailDataset.from_arrays(rng.standard_normal((len(y), dims)), y, C)


class TestDecayCounts:
    def test_cifar_like_profile(self):
        counts = decay_counts(DecayProfile(100, 100, 0.01))
        assert counts[0] == 100 and counts[-1] == 1
        assert counts == exact_decay(100, 100, 0.01)

    def test_balanced_profile(self):
        assert decay_counts(DecayProfile(50, 3, 1.0)) == [50, 50, 50]

    def test_hand_evaluated(self):
        assert decay_counts(DecayProfile(50, 3, 0.25)) == [50, 25, 12]
        assert exact_decay(50, 3, 0.25) == [50, 25, 12]

    def test_train_profile_ratio(self):
        counts = decay_counts(DecayProfile(500, 10, 0.01))
        assert counts[0] / counts[-1] == 100

    @pytest.mark.parametrize("profile", [DecayProfile(10, 1, 0.5), DecayProfile(10, 3, 0.0),
                                         DecayProfile(10, 3, 1.5), DecayProfile(0, 3, 0.5)])
    def test_invalid(self, profile):
        with pytest.raises(InvalidProfile):
            decay_counts(profile)

    @given(st.integers(1, 5000), st.integers(2, 200), st.floats(1e-4, 1.0))
    def test_non_increasing_from_head(self, N, C, mu):
        counts = decay_counts(DecayProfile(N, C, mu))
        assert counts[0] == N
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        assert min(counts) >= 1

    @given(st.integers(1, 5000), st.integers(2, 50), st.floats(1e-3, 1.0))
    def test_realized_ratio(self, N, C, mu):
        counts = decay_counts(DecayProfile(N, C, mu))
        assert counts[0] / counts[-1] == N / max(1, int(np.floor(N * mu)))
        if N * mu < 1:
            # clamping the tail to one sample can only lower the ratio
            assert counts[0] / counts[-1] <= 1 / mu
        if float(N * mu).is_integer():
            assert counts[0] / counts[-1] == pytest.approx(1 / mu)


class TestSubsample:
    def test_counts_follow_profile(self):
        pool = balanced(100, 100)
        profile = DecayProfile(100, 100, 0.01)
        out = subsample_longtail(pool, profile, seed=3)
        assert out.class_counts.tolist() == decay_counts(profile)

    def test_order_follows_train_frequency(self):
        pool = balanced(3, 10)
        out = subsample_longtail(pool, DecayProfile(10, 3, 0.25), 0, train_counts=[5, 40, 20])
        # class 1 is largest in training, then class 2, then class 0
        assert out.class_counts.tolist() == [2, 10, 5]

    def test_ties_break_by_class_id(self):
        pool = balanced(3, 10)
        out = subsample_longtail(pool, DecayProfile(10, 3, 0.25), 0, train_counts=[7, 7, 9])
        assert out.class_counts.tolist() == [5, 2, 10]

    def test_mu_one_keeps_everything(self):
        pool = balanced(4, 6)
        out = subsample_longtail(pool, DecayProfile(6, 4, 1.0), 1)
        assert np.array_equal(out.class_counts, pool.class_counts)
        assert sorted(map(tuple, out.features)) == sorted(map(tuple, pool.features))

    def test_deterministic(self):
        pool = balanced(5, 30)
        profile = DecayProfile(30, 5, 0.1)
        a = subsample_indices(pool, profile, 9)
        assert np.array_equal(a, subsample_indices(pool, profile, 9))
        assert not np.array_equal(a, subsample_indices(pool, profile, 10))

    def test_insufficient_samples(self):
        pool = balanced(3, 5)
        with pytest.raises(InsufficientSamples, match="class 0"):
            subsample_longtail(pool, DecayProfile(6, 3, 0.5), 0)


class TestSynthetic:
    def test_balanced_profile(self):
        train, test = synth_gaussian_longtail(4, 3, DecayProfile(20, 4, 1.0), 2.0, 1.0, 0)
        assert set(train.class_counts.tolist()) == {20}
        assert set(test.class_counts.tolist()) == {100}

    def test_imbalance_ratio(self):
        train, _ = synth_gaussian_longtail(10, 8, DecayProfile(500, 10, 0.01), 2.0, 1.0, 0)
        assert train.imbalance_ratio == 100
        assert train.class_counts[0] == 500 and train.class_counts[-1] == 5

    def test_seeds(self):
        profile = DecayProfile(50, 5, 0.1)
        a, _ = synth_gaussian_longtail(5, 4, profile, 2.0, 1.0, 0)
        b, _ = synth_gaussian_longtail(5, 4, profile, 2.0, 1.0, 1)
        c, _ = synth_gaussian_longtail(5, 4, profile, 2.0, 1.0, 0)
        assert np.array_equal(a.class_counts, b.class_counts)
        assert not np.array_equal(a.features, b.features)
        assert np.array_equal(a.features, c.features)

    def test_bad_arguments(self):
        with pytest.raises(InvalidProfile):
            synth_gaussian_longtail(5, 1, DecayProfile(5, 5, 0.5), 1.0, 1.0, 0)
        with pytest.raises(InvalidProfile):
            synth_gaussian_longtail(5, 3, DecayProfile(5, 5, 0.5), 0.0, 1.0, 0)

    def test_standardize_uses_train_statistics(self):
        train, test = synth_gaussian_longtail(3, 4, DecayProfile(50, 3, 0.5), 3.0, 1.0, 0)
        s_train, s_test = standardize(train, test)
        assert np.allclose(s_train.features.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(s_train.features.std(axis=0), 1)
        mean, sd = train.features.mean(axis=0), train.features.std(axis=0)
        assert np.allclose(s_test.features, (test.features - mean) / sd)


class TestTabular:
    def test_csv_counts(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("0.1,0.2,0\n0.3,0.4,0\n0.5,0.6,1\n")
        d = load_tabular(p)
        assert d.class_counts.tolist() == [2, 1]
        assert d.features.shape == (3, 2)

    def test_csv_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,label\n1,2,1\n3,4,0\n")
        assert load_tabular(p, header=True).class_counts.tolist() == [1, 1]

    def test_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(ParseError):
            load_tabular(p)

    def test_non_contiguous(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("1,0\n2,2\n")
        with pytest.raises(NonContiguousLabels):
            load_tabular(p)

    def test_bad_cell_reports_line(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("1,0\nx,1\n")
        with pytest.raises(ParseError, match="line 2"):
            load_tabular(p)

    def test_raw_layout(self, tmp_path):
        x = np.array([[1.5, -2.0], [0.25, 4.0], [3.0, 3.0]], dtype=np.float32)
        y = np.array([1, 0, 1], dtype=np.uint32)
        blob = struct.pack("<QQQ", 3, 2, 2) + x.astype("<f4").tobytes() + y.astype("<u4").tobytes()
        p = tmp_path / "d.f32"
        p.write_bytes(blob)
        d = load_tabular(p, "raw-f32")
        assert np.array_equal(d.features, x)
        assert d.labels.tolist() == [1, 0, 1]
        assert d.class_counts.tolist() == [1, 2]

    def test_raw_truncated(self, tmp_path):
        p = tmp_path / "t.f32"
        p.write_bytes(struct.pack("<QQQ", 3, 2, 2) + b"\x00" * 10)
        with pytest.raises(ParseError, match="offset"):
            load_tabular(p, "raw-f32")

    @pytest.mark.parametrize("fmt", ["csv", "raw-f32"])
    def test_round_trip(self, tmp_path, fmt):
        train, _ = synth_gaussian_longtail(3, 4, DecayProfile(20, 3, 0.5), 2.0, 1.0, 0)
        p = tmp_path / "rt"
        save_tabular(train, p, fmt)
        back = load_tabular(p, fmt)
        assert np.array_equal(back.labels, train.labels)
        assert np.allclose(back.features, train.features, atol=1e-6)


class TestPartition:
    def test_three_way(self):
        assert partition_subsets([150, 50, 10], 100, 20).assignment == [MANY, MEDIUM, FEW]

    def test_boundary_is_medium(self):
        assert set(partition_subsets([100] * 5, 100, 20).assignment) == {MEDIUM}
        assert partition_subsets([20, 19], 100, 20).assignment == [MEDIUM, FEW]

    def test_invalid(self):
        with pytest.raises(InvalidThresholds):
            partition_subsets([1, 2], 10, 20)
        with pytest.raises(InvalidThresholds):
            partition_subsets([1, 2], 10, 0)

    @given(st.lists(st.integers(1, 1000), min_size=1, max_size=50),
           st.integers(1, 200), st.integers(0, 200))
    def test_is_partition(self, counts, few, extra):
        part = partition_subsets(counts, few + extra, few)
        groups = [part.classes(s) for s in (MANY, MEDIUM, FEW)]
        assert sorted(sum(groups, [])) == list(range(len(counts)))
