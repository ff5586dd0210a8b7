import itertools
import math

import numpy as np
import pytest
from conftest import explicit_kernel, kernels, single_geometric
from hypothesis import given
from hypothesis import strategies as st

from branchlab import genfun
from branchlab.errors import DimensionMismatch, NotConverged, OutOfRange
from branchlab.gallery import moyal1, moyal1_fixed_point, p_values
from branchlab.kernel import Config, Dispersal, ExplicitLaw, Kernel, MultinomialLaw, SiteSpace


def multinomial_as_explicit(k: Kernel) -> Kernel:
    """Expand every multinomial law into its full support."""
    n = k.size
    laws = []
    for law in k.laws:
        row = list(law.dispersal.dense(n)) + [law.dispersal.outside]
        acc = {}
        for total, prob in law.total_pmf:
            for ks in itertools.product(range(total + 1), repeat=n + 1):
                if sum(ks) != total:
                    continue
                coef = math.factorial(total) / math.prod(math.factorial(v) for v in ks)
                w = prob * coef * math.prod(p**v for p, v in zip(row, ks))
                if w > 0:
                    c = Config.from_counts(ks[:n], ks[n])
                    acc[c] = acc.get(c, 0.0) + w
        laws.append(ExplicitLaw(tuple(acc.items())))
    return Kernel(k.space, tuple(laws), k.boundary)


class TestEvalG:
    def test_moyal1_closed_form(self):
        k = moyal1(N=12, boundary="kill").kernel
        p = p_values(None, 12)
        z = np.random.default_rng(1).random(12)
        expected = 1 - p + p * np.append(z[1:], 1.0)
        assert np.allclose(genfun.eval_G(k, z), expected, atol=1e-15)

    def test_multinomial_example(self):
        k = Kernel(
            SiteSpace(("x", "y")),
            (MultinomialLaw(((0, 0.5), (2, 0.5)), Dispersal.from_row([1.0, 0.0])),) * 2,
        )
        assert genfun.eval_G(k, [0.4, 0.77])[0] == pytest.approx(0.58, abs=1e-15)

    def test_outside_reads(self):
        law = ExplicitLaw(((Config((), 1), 1.0),))
        kill = Kernel(SiteSpace(("a",)), (law,), "kill")
        assert genfun.eval_G(kill, [0.3])[0] == 1.0
        assert genfun.eval_G(kill.with_boundary("survive_outside"), [0.3])[0] == 0.0

    @given(kernels())
    def test_one_is_fixed_under_kill(self, k):
        k = k.with_boundary("kill")
        assert np.all(genfun.eval_G(k, np.ones(k.size)) == 1.0)

    @given(kernels(), st.integers(0, 2**32 - 1))
    def test_monotone(self, k, seed):
        rng = np.random.default_rng(seed)
        z = rng.random(k.size)
        v = z + (1 - z) * rng.random(k.size)
        assert np.all(genfun.eval_G(k, z) <= genfun.eval_G(k, v) + 1e-15)

    @given(kernels(kinds=("multinomial",)), st.integers(0, 2**32 - 1))
    def test_multinomial_matches_brute_force(self, k, seed):
        z = np.random.default_rng(seed).random(k.size)
        ex = multinomial_as_explicit(k)
        assert np.allclose(genfun.eval_G(k, z), genfun.eval_G(ex, z), atol=1e-12)

    @given(kernels())
    def test_batch_equals_rows(self, k):
        zs = np.random.default_rng(0).random((4, k.size))
        batch = genfun.eval_G(k, zs)
        for i in range(4):
            assert np.allclose(batch[i], genfun.eval_G(k, zs[i]), atol=1e-15)

    def test_iterate_composes(self):
        k = moyal1(N=8).kernel
        z = np.full(8, 0.3)
        assert np.allclose(genfun.eval_G_iterate(k, z, 3), genfun.eval_G(k, genfun.eval_G(k, genfun.eval_G(k, z))))

    def test_errors(self):
        k = moyal1(N=4).kernel
        with pytest.raises(DimensionMismatch):
            genfun.eval_G(k, np.zeros(3))
        with pytest.raises(OutOfRange):
            genfun.eval_G(k, np.full(4, 1.5))


class TestPhi:
    def test_moyal1(self):
        k = moyal1(N=6).kernel
        p = p_values(None, 6)
        assert genfun.eval_phi(k, "3", 0.25) == pytest.approx(1 - p[3] + p[3] * 0.25, abs=1e-15)
        assert genfun.eval_phi(k, "3", 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_geometric(self):
        assert genfun.eval_phi(single_geometric(2.0), "a", 0.5) == 0.5

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            genfun.eval_phi(single_geometric(2.0), "a", 1.1)

    @given(kernels(), st.floats(0, 1))
    def test_matches_constant_vector_when_nothing_escapes(self, k, t):
        k = k.with_boundary("kill")
        if k.has_outside_mass:
            return
        g = genfun.eval_G(k, np.full(k.size, t))
        for x in range(k.size):
            assert genfun.eval_phi(k, x, t) == pytest.approx(g[x], abs=1e-12)


class TestIterate:
    def test_from_one(self, geo2):
        r = genfun.iterate(geo2, [1.0])
        assert r.iterations == 1 and r.converged and r.vector[0] == 1.0

    def test_geometric_root(self, geo2):
        r = genfun.q_global(geo2)
        # smallest root of m q^2 - (m+1) q + 1 with m = 2
        assert r.vector[0] == pytest.approx(0.5, abs=1e-10)
        assert r.monotone_direction is genfun.Direction.UP

    def test_subcritical(self):
        assert genfun.q_global(single_geometric(0.5)).vector[0] == pytest.approx(1.0, abs=1e-10)

    def test_trace_monotone_from_zero(self):
        r = genfun.iterate(moyal1(N=10).kernel, np.zeros(10), keep_trace=True)
        diffs = np.diff(np.array(r.trace), axis=0)
        assert np.all(diffs >= 0)

    def test_from_upper_set_decreases(self, geo2):
        r = genfun.iterate(geo2, [0.8], keep_trace=True)
        assert r.monotone_direction is genfun.Direction.DOWN
        assert np.all(np.diff(np.array(r.trace)[:, 0]) <= 0)
        assert r.vector[0] >= 0.5 - 1e-10

    def test_not_converged_carries_partial(self):
        k = single_geometric(1.0)  # critical: slow
        with pytest.raises(NotConverged) as e:
            genfun.iterate(k, [0.0], max_iter=5)
        assert e.value.result.iterations == 5
        assert 0 < e.value.result.vector[0] < 1

    def test_tol_must_be_positive(self, geo2):
        with pytest.raises(ValueError):
            genfun.iterate(geo2, [0.0], tol=0)

    @given(kernels())
    def test_q_global_residual(self, k):
        try:
            r = genfun.q_global(k, tol=1e-12, max_iter=20_000)
        except NotConverged:
            return  # near-critical draw
        assert r.residual <= 1e-11
        assert np.all((r.vector >= 0) & (r.vector <= 1))

    def test_moyal1_global_oracle(self):
        b = moyal1(N=40)
        q = genfun.q_global(b.kernel).vector
        assert q[0] == pytest.approx(0.5, abs=1e-10)
        n = np.arange(40)
        assert np.allclose(q, 1 - 2.0 ** (-(2.0 ** (-n))), atol=1e-10)
        assert np.allclose(q, b.oracle("q_global"), atol=1e-12)


class TestAvoidance:
    def test_members_zero(self):
        k = moyal1(N=10).kernel
        h = genfun.avoidance_vector(k, ["2", "7"])
        assert h[2] == 0 and h[7] == 0

    @pytest.mark.parametrize("target", [0, 3, 9])
    def test_moyal1_product(self, target):
        k = moyal1(N=12).kernel
        p = p_values(None, 12)
        h = genfun.avoidance_vector(k, [str(target)])
        for n in range(12):
            if n > target:
                assert h[n] == pytest.approx(1.0, abs=1e-15)
            elif n < target:
                assert h[n] == pytest.approx(1 - np.prod(p[n:target]), abs=1e-13)

    def test_single_type(self, geo2):
        assert genfun.avoidance_vector(geo2, ["a"])[0] == 0


class TestLocal:
    def test_whole_space_is_global(self):
        b = moyal1(N=40)
        ql = genfun.q_local(b.kernel, b.kernel.labels).q_local
        assert np.allclose(ql, genfun.q_global(b.kernel).vector, atol=1e-10)

    @pytest.mark.parametrize("A", [["5"], ["0", "1", "2", "3", "4", "5"], ["39"]])
    def test_moyal1_finite_set(self, A):
        b = moyal1(N=40)
        assert np.allclose(genfun.q_local(b.kernel, A).q_local, 1.0, atol=1e-10)

    def test_bracket_orders(self):
        b = moyal1(N=20)
        r = genfun.q_local(b.kernel, ["3"])
        lo, hi = r.bracket
        assert np.all(lo <= hi + 1e-12)

    def test_space_time_route_agrees(self):
        b = moyal1(N=15)
        for A in (["4"], list(b.kernel.labels)):
            direct = genfun.q_local(b.kernel, A).q_local
            st_route = genfun.q_local_spacetime(b.kernel, A, k=40, horizon=80)
            assert np.max(np.abs(direct - st_route)) <= 1e-8

    def test_space_time_geometric_two_site(self):
        k = Kernel(
            SiteSpace(("a", "b")),
            (MultinomialLaw(((0, 0.3), (3, 0.7)), Dispersal.from_row([0.2, 0.8])),
             MultinomialLaw(((0, 0.6), (1, 0.4)), Dispersal.from_row([0.0, 1.0]))),
        )
        direct = genfun.q_local(k, ["a"]).q_local
        st_route = genfun.q_local_spacetime(k, ["a"], k=150, horizon=300)
        assert np.max(np.abs(direct - st_route)) <= 1e-8

    @given(kernels(max_sites=3), st.integers(0, 2**32 - 1))
    def test_monotone_in_set_and_above_global(self, k, seed):
        rng = np.random.default_rng(seed)
        labels = list(k.labels)
        small = [labels[int(rng.integers(len(labels)))]]
        big = sorted(set(small) | {lab for lab in labels if rng.random() < 0.5})
        k = k.with_boundary("kill")
        try:
            qg = genfun.q_global(k, max_iter=20_000).vector
            qs = genfun.q_local(k, small, k_max=20_000)
            qb = genfun.q_local(k, big, k_max=20_000)
        except NotConverged:
            return
        assert np.all(qb.q_local <= qs.q_local + 1e-9)
        assert np.all(qg <= qb.q_local + 1e-9)
        assert np.all(qs.q_local <= 1 + 1e-15)
        assert qs.residual <= 1e-11 and qb.residual <= 1e-11

    def test_empty_set_rejected(self, geo2):
        with pytest.raises(ValueError):
            genfun.q_local(geo2, [])

    def test_moyal2_style_local_equals_global(self):
        # bounded q away from 0 and a recurrent site: q(A) = q(X)
        k = Kernel(
            SiteSpace(("a", "b")),
            (MultinomialLaw(((0, 0.2), (2, 0.8)), Dispersal.from_row([0.5, 0.5])),) * 2,
        )
        qg = genfun.q_global(k).vector
        ql = genfun.q_local(k, ["a"]).q_local
        assert qg.min() > 0.1 and ql.max() < 1
        assert np.allclose(ql, qg, atol=1e-9)


class TestDelta:
    def test_geometric_half(self, geo2):
        r = genfun.check_delta_condition(geo2, 0.5)
        assert r.holds and r.n == 1 and r.sup_bound == 0.5

    def test_zero_with_death(self):
        k = explicit_kernel([[({0: 2}, 0.7), ({}, 0.3)]])
        assert not genfun.check_delta_condition(k, 0.0).holds

    def test_homogeneous_at_root(self):
        k = Kernel(
            SiteSpace(("a", "b", "c")),
            (MultinomialLaw(((0, 0.25), (2, 0.75)), Dispersal.from_row([0.2, 0.3, 0.5])),) * 3,
        )
        # 0.75 t^2 - t + 0.25 = 0 has smallest root 1/3
        assert genfun.check_delta_condition(k, 1 / 3).holds

    def test_range(self, geo2):
        with pytest.raises(OutOfRange):
            genfun.check_delta_condition(geo2, 1.0)


class TestResidual:
    def test_one(self, geo2):
        assert genfun.residual(geo2, [1.0]) == 0

    def test_moyal1_fixed_point_family(self):
        z = moyal1_fixed_point(None, 0.9, 40)
        k = moyal1(N=40).kernel
        g = genfun.eval_G(k, z)
        # the last coordinate needs z(40), which lies past the truncation
        assert np.max(np.abs(g - z)[:-1]) <= 1e-12

    def test_death_mass(self):
        k = explicit_kernel([[({0: 1}, 0.7), ({}, 0.3)]])
        assert genfun.residual(k, [0.0]) >= 0.3
