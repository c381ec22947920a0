import numpy as np
import pytest

from coupledsmc.neighbours import KdTree, build_kdtree, knn_brute_force, symmetric_knn_support


def _depth(tree, node=0):
    if tree.is_leaf(node):
        return 0
    return 1 + max(_depth(tree, tree._left[node]), _depth(tree, tree._right[node]))


def _audit(tree):
    """Exhaustive structural audit: leaf membership and split ordering."""
    n = tree.points.shape[0]
    seen = []
    for node in range(tree.n_nodes):
        if tree.is_leaf(node):
            seen.extend(tree.leaf_members(node).tolist())
    assert sorted(seen) == list(range(n))
    for node in range(tree.n_nodes):
        if tree.is_leaf(node):
            continue
        ax, split = tree._axis[node], tree._split[node]
        left = tree.points[tree.leaf_members(tree._left[node]), ax]
        right = tree.points[tree.leaf_members(tree._right[node]), ax]
        assert np.all(left <= split)
        assert np.all(right >= split)


class TestBuild:
    def test_single_point(self):
        tree = build_kdtree(np.array([[1.0, 2.0]]))
        assert tree.n_nodes == 1
        assert tree.is_leaf(0)

    def test_sorted_line_is_balanced(self):
        pts = np.arange(16.0)[:, None]
        tree = build_kdtree(pts, leaf_size=1)
        assert _depth(tree) == 4

    def test_odd_count_depth(self):
        tree = build_kdtree(np.arange(11.0)[:, None], leaf_size=1)
        assert _depth(tree) == 4  # ceil(log2(11))

    def test_structural_invariants(self):
        rng = np.random.default_rng(10)
        for d in (1, 2, 5):
            for _ in range(10):
                pts = rng.normal(size=(int(rng.integers(1, 200)), d))
                _audit(build_kdtree(pts, leaf_size=int(rng.integers(1, 8))))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_kdtree(np.empty((0, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            build_kdtree(np.array([[np.inf, 0.0]]))


class TestQuery:
    def test_line_example(self):
        tree = build_kdtree(np.array([0.0, 1.0, 2.0, 3.0])[:, None], leaf_size=1)
        np.testing.assert_array_equal(tree.query([1.4], 2), [1, 2])

    def test_all_points(self):
        pts = np.random.default_rng(11).normal(size=(7, 2))
        tree = build_kdtree(pts)
        assert set(tree.query(pts[0], 7).tolist()) == set(range(7))

    def test_exact_hit(self):
        pts = np.random.default_rng(12).normal(size=(30, 3))
        tree = build_kdtree(pts)
        for i in (0, 13, 29):
            np.testing.assert_array_equal(tree.query(pts[i], 1), [i])

    def test_r_too_large(self):
        tree = build_kdtree(np.zeros((3, 1)))
        with pytest.raises(ValueError):
            tree.query([0.0], 4)

    def test_duplicates_in_index_order(self):
        pts = np.zeros((5, 2))
        tree = build_kdtree(pts, leaf_size=2)
        np.testing.assert_array_equal(tree.query([0.0, 0.0], 3), [0, 1, 2])

    def test_permutation_invariance_up_to_tiebreak(self):
        rng = np.random.default_rng(13)
        pts = rng.normal(size=(64, 2))
        q = rng.normal(size=2)
        base = build_kdtree(pts).query(q, 5)
        perm = rng.permutation(64)
        mapped = build_kdtree(pts[perm]).query(q, 5)
        np.testing.assert_array_equal(perm[mapped], base)


class TestBruteForceOracle:
    def test_single(self):
        np.testing.assert_array_equal(knn_brute_force(np.array([[2.0]]), [0.0], 1), [0])

    def test_line_example(self):
        pts = np.array([0.0, 1.0, 2.0, 3.0])[:, None]
        np.testing.assert_array_equal(knn_brute_force(pts, [1.4], 2), [1, 2])

    def test_matches_tree(self):
        rng = np.random.default_rng(14)
        pts = rng.normal(size=(100, 2))
        tree = build_kdtree(pts, leaf_size=4)
        for _ in range(20):
            q = rng.normal(size=2)
            np.testing.assert_array_equal(tree.query(q, 5), knn_brute_force(pts, q, 5))

    def test_equivalence_battery(self):
        # Randomized tree-vs-scan battery, duplicates included; the full-size
        # version lives in the acceptance suite.
        rng = np.random.default_rng(15)
        for d in (1, 2, 5):
            for _ in range(60):
                n = int(rng.integers(1, 120))
                pts = np.round(rng.normal(size=(n, d)), int(rng.integers(1, 10)))
                tree = build_kdtree(pts, leaf_size=int(rng.integers(1, 20)))
                for _ in range(4):
                    q = rng.normal(size=d)
                    r = int(rng.integers(1, n + 1))
                    np.testing.assert_array_equal(tree.query(q, r), knn_brute_force(pts, q, r))


class TestSymmetricSupport:
    def test_covers_rows_and_cols(self):
        rng = np.random.default_rng(16)
        p1 = rng.normal(size=(40, 2))
        p2 = rng.normal(size=(40, 2)) + 5.0
        rows, cols, _ = symmetric_knn_support(p1, p2, 3)
        assert set(rows.tolist()) == set(range(40))
        assert set(cols.tolist()) == set(range(40))

    def test_matches_brute_union(self):
        rng = np.random.default_rng(17)
        p1 = rng.normal(size=(25, 3))
        p2 = rng.normal(size=(25, 3))
        rows, cols, vals = symmetric_knn_support(p1, p2, 4)
        expected = set()
        for i in range(25):
            for j in knn_brute_force(p2, p1[i], 4):
                expected.add((i, int(j)))
        for j in range(25):
            for i in knn_brute_force(p1, p2[j], 4):
                expected.add((int(i), j))
        assert set(zip(rows.tolist(), cols.tolist())) == expected
        d2 = ((p1[rows] - p2[cols]) ** 2).sum(axis=1)
        np.testing.assert_allclose(vals, d2, atol=1e-12)
        assert np.all(vals >= 0)

    def test_sorted_unique(self):
        rng = np.random.default_rng(18)
        p = rng.normal(size=(30, 2))
        rows, cols, _ = symmetric_knn_support(p, p + 0.01, 5)
        keys = rows * 30 + cols
        assert np.all(np.diff(keys) > 0)

    def test_methods_agree(self):
        rng = np.random.default_rng(19)
        for trial in range(8):
            n = int(rng.integers(10, 400))
            d = int(rng.integers(1, 4))
            p1 = rng.normal(size=(n, d))
            p2 = rng.normal(size=(n, d))
            if trial % 2:  # duplicate-heavy clouds, the degenerate regime
                p1 = p1[rng.integers(0, max(n // 5, 1), size=n)]
                p2 = p2[rng.integers(0, max(n // 5, 1), size=n)]
            r = int(rng.integers(1, 8))
            tree = symmetric_knn_support(p1, p2, r, method="tree")
            brute = symmetric_knn_support(p1, p2, r, method="brute")
            np.testing.assert_array_equal(tree[0], brute[0])
            np.testing.assert_array_equal(tree[1], brute[1])
            np.testing.assert_allclose(tree[2], brute[2], atol=1e-12)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            symmetric_knn_support(np.zeros((3, 1)), np.zeros((3, 1)), 1, method="nope")
