"""Tests for the dense networks: parameter packing, the tape/numpy twin
forward passes, analytic input derivatives against finite differences, and
the two network roles."""

import numpy as np
import pytest

from probeflow import ConfigError, Standardizer
from probeflow import autodiff as ad
from probeflow.networks import (DenseNetwork, DensityNet, TrajectoryNet,
                                density_derivs, density_values,
                                glorot_uniform, he_uniform, np_dense_derivs,
                                np_dense_value, tape_dense_derivs,
                                tape_dense_value, tape_layers,
                                trajectory_state)

STD = Standardizer(4.0, 0.0, 10.0)


def make_net(sizes, act, seed=0, final_act="linear"):
    return DenseNetwork.create(sizes, act, np.random.default_rng(seed),
                               final_act=final_act)


class TestDenseNetwork:
    def test_pack_with_params_roundtrip(self):
        net = make_net([2, 5, 5, 1], "tanh", seed=1)
        flat = net.pack()
        again = net.with_params(flat)
        for w1, w2 in zip(net.weights, again.weights):
            np.testing.assert_array_equal(w1, w2)
        for b1, b2 in zip(net.biases, again.biases):
            np.testing.assert_array_equal(b1, b2)

    def test_with_params_installs_new_vector(self):
        net = make_net([1, 3, 2], "relu", seed=2)
        rng = np.random.default_rng(3)
        flat = rng.standard_normal(net.n_params)
        out = net.with_params(flat)
        np.testing.assert_array_equal(out.pack(), flat)
        # original untouched
        assert not np.array_equal(net.pack(), flat)

    def test_with_params_wrong_length(self):
        net = make_net([2, 3, 1], "tanh")
        with pytest.raises(ConfigError):
            net.with_params(np.zeros(net.n_params + 1))

    def test_sizes_and_param_count(self):
        net = make_net([2, 7, 4, 1], "tanh")
        assert net.sizes == [2, 7, 4, 1]
        assert net.n_params == (2 * 7 + 7) + (7 * 4 + 4) + (4 * 1 + 1)

    def test_init_distributions(self):
        rng = np.random.default_rng(0)
        g = glorot_uniform(20, 30, rng)
        assert np.max(np.abs(g)) <= np.sqrt(6.0 / 50.0)
        h = he_uniform(20, 30, rng)
        assert np.max(np.abs(h)) <= np.sqrt(6.0 / 20.0)
        net = make_net([2, 40, 1], "tanh", seed=5)
        for b in net.biases:
            assert np.all(b == 0.0)

    def test_seeded_init_deterministic(self):
        a = make_net([2, 8, 8, 1], "tanh", seed=9)
        b = make_net([2, 8, 8, 1], "tanh", seed=9)
        np.testing.assert_array_equal(a.pack(), b.pack())

    def test_validation(self):
        w = [np.zeros((2, 3)), np.zeros((3, 1))]
        b = [np.zeros(3), np.zeros(1)]
        with pytest.raises(ConfigError):
            DenseNetwork(w, b, ["tanh"])          # length mismatch
        with pytest.raises(ConfigError):
            DenseNetwork(w, b, ["tanh", "sigmoid"])  # unknown activation
        with pytest.raises(ConfigError):
            DenseNetwork(w, [np.zeros(2), np.zeros(1)], ["tanh", "linear"])
        with pytest.raises(ConfigError):
            DenseNetwork([np.zeros((2, 3)), np.zeros((4, 1))], b,
                         ["tanh", "linear"])      # width mismatch


class TestTapeNumpyConsistency:
    @pytest.mark.parametrize("act", ["tanh", "relu"])
    def test_value_paths_agree(self, act):
        net = make_net([2, 6, 6, 1], act, seed=11)
        rng = np.random.default_rng(12)
        x = rng.uniform(-1, 1, (9, 2))
        root = ad.leaf(net.pack())
        layers, _ = tape_layers(root, net, 0)
        tape_out = tape_dense_value(layers, ad.const(x))
        np.testing.assert_array_equal(tape_out.value, np_dense_value(net, x))

    @pytest.mark.parametrize("act", ["tanh", "relu"])
    def test_derivative_paths_agree(self, act):
        net = make_net([2, 6, 6, 1], act, seed=13)
        rng = np.random.default_rng(14)
        x = rng.uniform(-1, 1, (9, 2))
        seeds_np = [np.tile([1.0, 0.0], (9, 1)), np.tile([0.0, 1.0], (9, 1))]
        root = ad.leaf(net.pack())
        layers, _ = tape_layers(root, net, 0)
        tv, tds, td2 = tape_dense_derivs(
            layers, ad.const(x), [ad.const(s) for s in seeds_np], 1)
        nv, nds, nd2 = np_dense_derivs(net, x, seeds_np, 1)
        np.testing.assert_array_equal(tv.value, nv)
        for td, nd in zip(tds, nds):
            np.testing.assert_array_equal(td.value, nd)
        np.testing.assert_allclose(td2.value, nd2, rtol=1e-13, atol=1e-15)

    def test_tape_layers_offset(self):
        net_a = make_net([2, 3, 1], "tanh", seed=15)
        net_b = make_net([1, 2, 1], "tanh", seed=16)
        flat = np.concatenate([net_a.pack(), net_b.pack()])
        root = ad.leaf(flat)
        layers_a, k = tape_layers(root, net_a, 0)
        layers_b, k2 = tape_layers(root, net_b, k)
        assert k == net_a.n_params and k2 == flat.size
        x = np.array([[0.3]])
        out = tape_dense_value(layers_b, ad.const(x))
        np.testing.assert_array_equal(out.value, np_dense_value(net_b, x))


class TestDensityNet:
    def test_single_tanh_neuron_analytic(self):
        # One hidden tanh neuron reading the standardized x channel and a
        # pass-through output: value tanh(x_std), with the affine-map chain
        # factor 2/L on each physical x-derivative.
        net = DenseNetwork(
            [np.array([[0.0], [1.0]]), np.array([[1.0]])],
            [np.zeros(1), np.zeros(1)],
            ["tanh", "linear"])
        dnet = DensityNet(net)
        L = STD.x_max - STD.x_min
        for x in [1.0, 3.3, 7.5]:
            xs = STD.map_x(x)
            th = np.tanh(xs)
            val, ddt, ddx, ddxx = density_derivs(dnet, STD, 2.0, x)
            assert val == pytest.approx(th, rel=1e-15)
            assert ddt == 0.0
            assert ddx == pytest.approx((1 - th * th) * (2 / L), rel=1e-14)
            assert ddxx == pytest.approx(-2 * th * (1 - th * th) * (2 / L) ** 2,
                                         rel=1e-13)

    def test_derivatives_match_finite_differences(self):
        dnet = DensityNet.create(10, 4, np.random.default_rng(17))
        rng = np.random.default_rng(18)
        ts = rng.uniform(0.2, 3.8, 6)
        xs = rng.uniform(0.5, 9.5, 6)
        val, ddt, ddx, ddxx = density_derivs(dnet, STD, ts, xs)
        eps = 1e-5
        fd_t = (density_values(dnet, STD, ts + eps, xs)
                - density_values(dnet, STD, ts - eps, xs)) / (2 * eps)
        fd_x = (density_values(dnet, STD, ts, xs + eps)
                - density_values(dnet, STD, ts, xs - eps)) / (2 * eps)
        e2 = 1e-4
        fd_xx = (density_values(dnet, STD, ts, xs + e2) - 2 * val
                 + density_values(dnet, STD, ts, xs - e2)) / e2 ** 2
        np.testing.assert_allclose(ddt, fd_t, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(ddx, fd_x, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(ddxx, fd_xx, rtol=1e-4, atol=1e-6)

    def test_scalar_and_array_shapes(self):
        dnet = DensityNet.create(6, 2, np.random.default_rng(19))
        out = density_derivs(dnet, STD, 1.0, 2.0)
        assert all(isinstance(o, float) for o in out)
        val = density_values(dnet, STD, np.zeros((2, 3)), np.ones((2, 3)))
        assert val.shape == (2, 3)
        single = density_values(dnet, STD, 1.0, 2.0)
        assert single.shape == ()

    def test_default_shape_rule(self):
        assert DensityNet.default_shape(4.0, 10.0) == (4, 20)     # clamped up
        assert DensityNet.default_shape(200.0, 50000.0) == (12, 64)  # clamped down
        assert DensityNet.default_shape(75.0, 10500.0) == (6, 30)  # interior

    def test_shape_validation(self):
        with pytest.raises(ConfigError):
            DensityNet(make_net([1, 4, 1], "tanh"))
        with pytest.raises(ConfigError):
            DensityNet(make_net([2, 4, 2], "tanh"))
        with pytest.raises(ConfigError):
            DensityNet.create(0, 3, np.random.default_rng(0))


class TestTrajectoryNet:
    def test_all_zero_params_give_midpoint_rest(self):
        tnet = TrajectoryNet.create(3, np.random.default_rng(20))
        zeroed = TrajectoryNet(
            tnet.tanh_net.with_params(np.zeros(tnet.tanh_net.n_params)),
            tnet.relu_net.with_params(np.zeros(tnet.relu_net.n_params)),
            np.array([0.5, 0.5]), 3)
        pos, vel = trajectory_state(zeroed, STD, np.array([0.0, 1.7, 4.0]))
        np.testing.assert_allclose(pos, 5.0, atol=1e-15)   # domain midpoint
        np.testing.assert_allclose(vel, 0.0, atol=1e-15)

    def test_relu_identity_branch_piecewise(self):
        # tanh branch zeroed; relu branch wired to emit relu(t_std):
        # positions flat at the midpoint for t < T/2 then linear; velocity
        # a two-level step function.
        n = 1
        relu_net = DenseNetwork(
            [np.array([[1.0, 0.0]]), np.eye(2), np.eye(2),
             np.array([[1.0], [0.0]])],
            [np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(1)],
            ["relu", "relu", "relu", "linear"])
        tanh_net = DenseNetwork.create([1, 2, 2, 2, 1], "tanh",
                                       np.random.default_rng(0))
        tanh_net = tanh_net.with_params(np.zeros(tanh_net.n_params))
        tnet = TrajectoryNet(tanh_net, relu_net, np.array([0.0, 1.0]), n)

        t_lo = np.array([0.2, 1.0, 1.8])       # t_std < 0
        t_hi = np.array([2.2, 3.0, 3.8])       # t_std > 0
        pos_lo, vel_lo = trajectory_state(tnet, STD, t_lo)
        pos_hi, vel_hi = trajectory_state(tnet, STD, t_hi)
        np.testing.assert_allclose(pos_lo, 5.0, atol=1e-15)
        np.testing.assert_allclose(vel_lo, 0.0, atol=1e-15)
        # raw = t_std rises with slope t_scale; position slope half_len*t_scale.
        half_len, t_scale = 5.0, STD.t_scale
        expect = 5.0 + half_len * STD.map_t(t_hi)
        np.testing.assert_allclose(pos_hi[:, 0], expect, atol=1e-14)
        np.testing.assert_allclose(vel_hi, half_len * t_scale, atol=1e-15)

    def test_velocities_match_finite_differences_away_from_kinks(self):
        tnet = TrajectoryNet.create(4, np.random.default_rng(21))
        rng = np.random.default_rng(22)
        ts = rng.uniform(0.2, 3.8, 40)
        pos, vel = trajectory_state(tnet, STD, ts)
        eps = 1e-6
        pos_p, _ = trajectory_state(tnet, STD, ts + eps)
        pos_m, _ = trajectory_state(tnet, STD, ts - eps)
        fd = (pos_p - pos_m) / (2 * eps)
        # Exclude instants whose relu pre-activations sit near a kink.
        xin = STD.map_t(ts)[:, None]
        _, _, _, preacts = np_dense_derivs(
            tnet.relu_net, xin, [np.ones((ts.size, 1))], None,
            return_preacts=True)
        near_kink = np.zeros(ts.size, dtype=bool)
        for z, act in zip(preacts, tnet.relu_net.activations):
            if act == "relu":
                near_kink |= np.any(np.abs(z) < 1e-3, axis=1)
        assert not np.all(near_kink)
        np.testing.assert_allclose(vel[~near_kink], fd[~near_kink],
                                   rtol=1e-5, atol=1e-8)

    def test_create_shape_and_param_count(self):
        tnet = TrajectoryNet.create(5, np.random.default_rng(23))
        assert tnet.tanh_net.sizes == [1, 10, 10, 10, 5]
        assert tnet.relu_net.sizes == [1, 10, 10, 10, 5]
        assert tnet.n_params == tnet.tanh_net.n_params + tnet.relu_net.n_params + 2

    def test_scalar_time(self):
        tnet = TrajectoryNet.create(2, np.random.default_rng(24))
        pos, vel = trajectory_state(tnet, STD, 1.5)
        assert pos.shape == (2,) and vel.shape == (2,)

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrajectoryNet.create(0, np.random.default_rng(0))
        good = TrajectoryNet.create(2, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            TrajectoryNet(good.tanh_net, good.relu_net, np.zeros(3), 2)
        bad_branch = DenseNetwork.create([1, 4, 3], "tanh",
                                         np.random.default_rng(0))
        with pytest.raises(ConfigError):
            TrajectoryNet(bad_branch, good.relu_net, np.array([0.5, 0.5]), 2)
