import numpy as np
import pytest

from coupledsmc import (
    DegenerateWeightsError,
    ess,
    independent_coupling,
    maximal_coupling,
    normalize,
    tv_distance,
)
from coupledsmc.transport import SinkhornConfig, sinkhorn


class TestNormalize:
    def test_symmetric(self):
        np.testing.assert_allclose(normalize([2.0, 2.0]), [0.5, 0.5])

    def test_single(self):
        np.testing.assert_allclose(normalize([5.0]), [1.0])

    def test_proportional(self):
        np.testing.assert_allclose(normalize([1.0, 3.0]), [0.25, 0.75])

    @pytest.mark.parametrize("bad", [[0.0, 0.0], [1.0, -0.5], [np.nan, 1.0], []])
    def test_degenerate(self, bad):
        with pytest.raises(DegenerateWeightsError):
            normalize(bad)

    def test_sum_property(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            w = normalize(rng.random(rng.integers(1, 50)))
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w >= 0)


class TestEss:
    def test_uniform(self):
        assert ess(np.full(10, 0.1)) == pytest.approx(10.0)

    def test_point_mass(self):
        assert ess([1.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_formula(self):
        assert ess([0.5, 0.25, 0.25]) == pytest.approx(8.0 / 3.0)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        w = normalize(rng.random(17))
        for _ in range(20):
            assert ess(rng.permutation(w)) == pytest.approx(ess(w), abs=1e-12)


class TestTvDistance:
    def test_identical(self):
        assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_disjoint(self):
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_half_sum(self):
        assert tv_distance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            tv_distance([1.0], [0.5, 0.5])

    def test_min_identity(self):
        # 1 - sum(min(a, b)) is an equivalent formula.
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = rng.integers(2, 40)
            a, b = normalize(rng.random(n)), normalize(rng.random(n))
            assert tv_distance(a, b) == pytest.approx(1.0 - np.minimum(a, b).sum(), abs=1e-12)


class TestIndependentCoupling:
    def test_trivial(self):
        np.testing.assert_allclose(independent_coupling([1.0], [1.0]).toarray(), [[1.0]])

    def test_uniform_product(self):
        c = independent_coupling([0.5, 0.5], [0.5, 0.5])
        np.testing.assert_allclose(c.toarray(), np.full((2, 2), 0.25))

    def test_outer_product(self):
        c = independent_coupling([0.5, 0.5], [0.25, 0.75])
        np.testing.assert_allclose(c.toarray(), [[0.125, 0.375], [0.125, 0.375]])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            independent_coupling([1.0], [0.5, 0.5])


class TestMaximalCoupling:
    def test_identical_marginals(self):
        c = maximal_coupling([0.3, 0.7], [0.3, 0.7])
        np.testing.assert_allclose(c.toarray(), [[0.3, 0.0], [0.0, 0.7]])

    def test_disjoint_gives_product(self):
        c = maximal_coupling([1.0, 0.0], [0.0, 1.0])
        np.testing.assert_allclose(c.toarray(), [[0.0, 1.0], [0.0, 0.0]])

    def test_mixture_formula(self):
        c = maximal_coupling([0.5, 0.5], [0.25, 0.75])
        np.testing.assert_allclose(c.toarray(), [[0.25, 0.25], [0.0, 0.5]])
        assert c.trace() == pytest.approx(0.75)
        np.testing.assert_allclose(c.toarray().sum(axis=1), [0.5, 0.5])
        np.testing.assert_allclose(c.toarray().sum(axis=0), [0.25, 0.75])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            maximal_coupling([1.0], [0.5, 0.5])


def _random_pair(rng):
    n = int(rng.integers(1, 65))
    # occasionally zero out entries to hit sparse-support corners
    a = rng.random(n) * (rng.random(n) < 0.9)
    b = rng.random(n) * (rng.random(n) < 0.9)
    a[rng.integers(0, n)] = 0.5  # keep at least one positive entry
    b[rng.integers(0, n)] = 0.5
    return normalize(a), normalize(b)


class TestCouplingInvariants:
    def test_marginals_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b = _random_pair(rng)
            for c in (independent_coupling(a, b), maximal_coupling(a, b)):
                c.validate(marginal_atol=1e-12, mass_atol=1e-12)

    def test_trace_equals_one_minus_tv(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            a, b = _random_pair(rng)
            c = maximal_coupling(a, b)
            assert c.trace() == pytest.approx(1.0 - tv_distance(a, b), abs=1e-12)

    def test_maximal_trace_dominates(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(2, 12))
            a, b = normalize(rng.random(n) + 1e-3), normalize(rng.random(n) + 1e-3)
            best = maximal_coupling(a, b).trace()
            assert best >= independent_coupling(a, b).trace() - 1e-12
            cost = ((rng.random((n, 1)) - rng.random((1, n))) ** 2)
            ot = sinkhorn(cost, a, b, SinkhornConfig(lam=20.0))
            assert best >= ot.trace() - 1e-10
