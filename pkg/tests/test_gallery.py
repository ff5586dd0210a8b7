import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchlab import gallery, orders
from branchlab.errors import ConstraintViolated, DivergentTail, OutOfBasin
from branchlab.genfun import eval_G, q_global, q_local, residual
from branchlab.kernel import kernel_to_dict, validate


def tail_prod_0(spec):
    return gallery.tail_product(spec, 0)


class TestMoyal1:
    def test_default_root(self):
        b = gallery.moyal1()
        assert b.oracle("q_global")[0] == pytest.approx(0.5, abs=1e-15)
        assert validate(b.kernel).ok

    def test_oracle_closed_form(self):
        q = gallery.moyal1(N=30).oracle("q_global")
        n = np.arange(30)
        assert np.allclose(q, -np.expm1(-math.log(2) * 2.0 ** (-n)), rtol=1e-12, atol=0)
        assert np.all(np.diff(q) < 0) and q[-1] > 0

    def test_oracle_is_fixed_point(self):
        b = gallery.moyal1(N=40)
        q = b.oracle("q_global")
        assert np.max(np.abs(eval_G(b.kernel, q) - q)) <= 1e-12

    def test_power_form(self):
        spec = {"form": "power", "c": 0.3, "a": 2.0}
        b = gallery.moyal1(spec, N=40)
        q = q_global(b.kernel).vector
        # the truncation only sees p_0 .. p_39; the particle past them survives
        head = 1 - np.prod(gallery.p_values(spec, 40))
        assert q[0] == pytest.approx(head, abs=1e-12)
        tail = gallery.tail_product(spec, 40)
        assert 1 - b.oracle("q_global")[0] == pytest.approx((1 - head) * tail, rel=1e-9)
        # direct product over many terms agrees with the tail approximation
        direct = np.exp(np.sum(np.log(gallery.p_values(spec, 2 * 10**6))))
        assert tail_prod_0(spec) == pytest.approx(direct, rel=1e-6)

    def test_divergent(self):
        with pytest.raises(DivergentTail):
            gallery.moyal1({"form": "power", "c": 0.3, "a": 1.0})

    def test_list_form(self):
        b = gallery.moyal1([0.5, 0.5], N=4)
        assert b.oracle("q_global").tolist() == [0.75, 0.5, 0.0, 0.0]

    def test_finite_sets_local(self):
        b = gallery.moyal1(N=40)
        for A in (["0"], ["10", "20"]):
            assert np.allclose(q_local(b.kernel, A).q_local, b.oracle("q_local_finite"), atol=1e-10)


class TestMoyal1FixedPoint:
    def test_z1_value(self):
        z = gallery.moyal1_fixed_point(None, 0.75)
        assert z[1] == pytest.approx(0.6464466094067262, abs=1e-15)
        assert z[1] == pytest.approx(1 - 0.25 / 2**-0.5, abs=1e-15)

    def test_one(self):
        assert np.all(gallery.moyal1_fixed_point(None, 1.0) == 1.0)

    def test_out_of_basin(self):
        with pytest.raises(OutOfBasin):
            gallery.moyal1_fixed_point(None, 0.4)

    @given(st.floats(0.5 + 1e-6, 1 - 1e-9))
    def test_family_between_q_and_one(self, z0):
        z = gallery.moyal1_fixed_point(None, z0, 40)
        q = gallery.moyal1(N=40).oracle("q_global")
        assert np.all(z > q) and np.all(z < 1)
        d = np.diff(z)
        assert np.all(d <= 0) and np.all(d[: np.argmax(d > -1e-15) or len(d)] < 0)
        assert z.max() == z[0]
        k = gallery.moyal1(N=40).kernel
        assert np.max(np.abs(eval_G(k, z) - z)[:-1]) <= 1e-12


class TestMoyal2:
    def test_zero_r_is_moyal1(self):
        a = gallery.moyal2(r=[0.0] * 20, N=20).kernel
        b = gallery.moyal1(N=20).kernel
        assert kernel_to_dict(a) == kernel_to_dict(b)

    def test_constraint(self):
        with pytest.raises(ConstraintViolated):
            gallery.moyal2(r=[0.0, 0.5, 0.5], N=3)
        with pytest.raises(ConstraintViolated):
            gallery.moyal2(r=[0.1, 0.0], N=3)

    def test_bound(self):
        b = gallery.moyal2(r={"form": "fraction", "s": 0.5}, N=40)
        q = q_global(b.kernel).vector
        assert np.all(q <= b.oracle("q_global_upper") + 1e-12)
        assert np.all(q <= gallery.moyal1(N=40).oracle("q_global") + 1e-12)

    def test_fixed_point_recursion(self):
        r = {"form": "fraction", "s": 0.3}
        b = gallery.moyal2(r=r, N=25)
        z = gallery.moyal2_fixed_point(None, r, 0.95, 25)
        assert np.max(np.abs(eval_G(b.kernel, z) - z)[:-1]) <= 1e-12
        assert np.all((z >= 0) & (z <= 1))


class TestGeometric:
    def test_single_types(self):
        assert gallery.geometric_kernel([2.0]).oracle("q_global")[0] == 0.5
        assert gallery.geometric_kernel([1.0]).oracle("q_global")[0] == 1.0
        assert q_global(gallery.geometric_kernel([2.0]).kernel).vector[0] == pytest.approx(0.5, abs=1e-10)

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_closed_form_vs_truncated_series(self, seed):
        rng = np.random.default_rng(seed)
        k = gallery.geometric_kernel(list(rng.uniform(0.2, 3.0, 3)), rng.dirichlet(np.ones(3), size=3)).kernel
        trunc = gallery.multinomial_from_geometric(k, 1 - 1e-12)
        z = rng.random((5, 3))
        assert np.allclose(eval_G(k, z), eval_G(trunc, z), atol=1e-9)

    def test_order_equivalence_on_perturbations(self):
        rng = np.random.default_rng(3)
        P = [[0.5, 0.5], [0.1, 0.9]]
        for _ in range(10):
            m = rng.uniform(0.5, 2.5, 2)
            r = orders.geometric_order_equivalence(
                gallery.geometric_kernel(list(m * rng.uniform(0.9, 1.1, 2)), P).kernel,
                gallery.geometric_kernel(list(m), P).kernel,
            )
            assert r["consistent"]


class TestIncomparable:
    def test_pgfs(self):
        mu, nu = gallery.incomparable_pair()
        rng = np.random.default_rng(0)
        for z1, z2 in rng.random((20, 2)):
            assert eval_G(mu, [z1, z2])[0] == pytest.approx(5 / 6 * z1 * z2 + 1 / 6, abs=1e-15)
            assert eval_G(nu, [z1, z2])[1] == pytest.approx(0.8 * ((5 * z1 + z2) / 6) ** 2 + 0.2, abs=1e-15)

    def test_edge_values(self):
        mu, nu = gallery.incomparable_pair()
        assert eval_G(mu, [0.5, 1.0])[0] == pytest.approx(0.5833333333333334, abs=1e-12)
        assert eval_G(nu, [0.5, 1.0])[0] == pytest.approx(0.4722222222222222, abs=1e-12)

    @pytest.mark.parametrize("delta", [0.0, 0.3, 0.6, 0.85])
    def test_falsified_both_ways(self, delta):
        mu, nu = gallery.incomparable_pair()
        assert orders.order_check_grid(mu, nu, delta).falsified
        assert orders.order_check_grid(nu, mu, delta).falsified


def test_builders_registry():
    for name, build in gallery.BUILDERS.items():
        for b in build():
            assert validate(b.kernel).ok
            d = b.oracles_to_dict()
            assert d["example"] == b.name and d["oracles"]
            for entry in d["oracles"].values():
                assert entry["kind"] in ("exact", "upper_bound", "parameter")


def test_moyal1_residual_oracle():
    b = gallery.moyal1(N=40)
    assert residual(b.kernel, b.oracle("q_global")) <= 1e-12
    assert math.isclose(gallery.tail_product(None, 3), math.exp(-math.log(2) / 8))
