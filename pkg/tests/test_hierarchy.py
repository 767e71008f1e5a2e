import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import pdist, squareform

from clustered_sampling.errors import LeafOverCapacity
from clustered_sampling.hierarchy import cut_tree, ward_tree
from oracles import centroid_ward_cost, naive_ward


def _euclid(points):
    return squareform(pdist(np.asarray(points, float).reshape(len(points), -1)))


class TestWard:
    def test_two_leaves(self):
        t = ward_tree([[0.0, 3.0], [3.0, 0.0]])
        assert len(t.merges) == 1
        assert (t.merges[0].left, t.merges[0].right) == (0, 1)
        assert t.merges[0].height == pytest.approx(4.5)  # 1*1/2 * 3^2

    def test_three_points_on_a_line(self):
        t = ward_tree(_euclid([0, 1, 5]))
        seq = t.merge_sequence()
        assert seq[0] == ((0,), (1,), pytest.approx(0.5))
        assert seq[1] == ((2,), (0, 1), pytest.approx(13.5))
        assert seq[1][2] == pytest.approx(centroid_ward_cost([[0], [1]], [[5]]))
        assert t.to_text() == "(2,(0,1):0.5):13.5"

    def test_single_leaf(self):
        t = ward_tree([[0.0]])
        assert t.merges == [] and t.root == 0 and t.leaves(0) == [0]

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(200):
            n = int(rng.integers(2, 13))
            pts = rng.normal(size=(n, int(rng.integers(1, 5))))
            if trial % 4 == 0:
                pts = np.round(pts)  # provoke tied costs
            d = _euclid(pts)
            got = ward_tree(d).merge_sequence()
            want = naive_ward(d)
            assert [g[:2] for g in got] == [w[:2] for w in want]
            np.testing.assert_allclose([g[2] for g in got], [w[2] for w in want], rtol=1e-9, atol=1e-12)

    def test_heights_agree_with_scipy(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            pts = rng.normal(size=(int(rng.integers(2, 30)), 3))
            z = linkage(pts, "ward")
            t = ward_tree(_euclid(pts))
            np.testing.assert_allclose([mg.height for mg in t.merges], z[:, 2] ** 2 / 2, rtol=1e-9)

    def test_heights_monotone_for_euclidean_input(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            t = ward_tree(_euclid(rng.normal(size=(15, 4))))
            h = [mg.height for mg in t.merges]
            assert all(b >= a - 1e-12 for a, b in zip(h, h[1:]))

    def test_identical_points_merge_by_id(self):
        t = ward_tree(np.zeros((4, 4)))
        assert [(mg.left, mg.right) for mg in t.merges] == [(0, 1), (2, 3), (4, 5)]
        assert all(mg.height == 0 for mg in t.merges)

    @pytest.mark.parametrize("bad", [
        np.zeros((2, 3)),
        np.array([[0.0, np.nan], [np.nan, 0.0]]),
        np.array([[0.0, -1.0], [-1.0, 0.0]]),
        np.array([[1.0, 1.0], [1.0, 0.0]]),
        np.array([[0.0, 1.0], [2.0, 0.0]]),
    ])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            ward_tree(bad)


class TestCut:
    def test_capacity_equal_to_leaf_gives_singletons(self):
        # n = m equal clients: each residual mass m n_i equals M
        t = ward_tree(_euclid(np.arange(5.0)))
        cut = cut_tree(t, [5] * 5, 5)
        assert cut.K == 5 and sorted(cut.q) == [5] * 5
        assert sorted(g[0] for g in cut.groups) == list(range(5))

    def test_identical_gradients_split_by_capacity(self):
        cut = cut_tree(ward_tree(np.zeros((4, 4))), [2, 2, 2, 2], 4)
        assert cut.groups == [[0, 1], [2, 3]] and cut.q == [4, 4]

    def test_three_equal_clients_two_distributions(self):
        cut = cut_tree(ward_tree(_euclid([0.0, 1.0, 3.0])), [2, 2, 2], 3)
        assert cut.K == 3 and sorted(map(tuple, cut.groups)) == [(0,), (1,), (2,)]

    def test_root_fits(self):
        cut = cut_tree(ward_tree(_euclid([0.0, 1.0, 3.0])), [1, 1, 1], 10)
        assert cut.groups == [[0, 1, 2]] and cut.q == [3]

    def test_leaf_over_capacity(self):
        with pytest.raises(LeafOverCapacity):
            cut_tree(ward_tree(_euclid([0.0, 1.0])), [3, 1], 2)

    def test_groups_partition_leaves(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            n = int(rng.integers(1, 20))
            w = rng.integers(1, 10, size=n)
            cap = int(rng.integers(w.max(), w.sum() + 1))
            cut = cut_tree(ward_tree(_euclid(rng.normal(size=(n, 2)))), w, cap)
            assert sorted(i for g in cut.groups for i in g) == list(range(n))
            assert all(q <= cap for q in cut.q)
            assert [int(w[g].sum()) for g in cut.groups] == cut.q
