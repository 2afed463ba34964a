"""Tests for probe-vehicle integration: Euler stepping, ordering, speed
sampling conventions, and the vehicle-count conservation diagnostic."""

import numpy as np
import pytest

from probeflow import (
    AgentTrajectories,
    ConfigError,
    DensityField,
    Domain,
    DomainError,
    Greenshields,
    ScenarioSpec,
    advance_agents,
    integrate_trajectories,
    simulate,
    vehicle_count,
)

MODEL = Greenshields(1.0)


def uniform_field(value, t_max=2.0, x_min=0.0, x_max=10.0, n_cells=50,
                  n_steps=20, v_f=1.0):
    dom = Domain(t_max, x_min, x_max, n_cells, n_steps)
    values = np.full((n_steps + 1, n_cells), float(value))
    return DensityField(dom, values, np.zeros(n_steps), np.zeros(n_steps), v_f=v_f)


def static_field(row, t_max=2.0, x_min=-1.0, x_max=1.0, n_steps=20, v_f=1.0):
    """Field whose rows are all equal to `row` (frozen in time)."""
    row = np.asarray(row, dtype=float)
    dom = Domain(t_max, x_min, x_max, row.size, n_steps)
    values = np.tile(row, (n_steps + 1, 1))
    return DensityField(dom, values, np.zeros(n_steps), np.zeros(n_steps), v_f=v_f)


class TestAdvanceAgents:
    def test_free_flow_moves_at_v_f(self):
        field = uniform_field(0.0)
        pos = np.array([1.0, 4.0, 7.0])
        new, speeds = advance_agents(MODEL, field, pos, t=0.0, dt=0.1)
        assert np.allclose(new, pos + 0.1, atol=1e-15)
        assert np.allclose(speeds, 1.0)

    def test_jam_freezes_positions(self):
        field = uniform_field(1.0)
        pos = np.array([1.0, 4.0])
        new, speeds = advance_agents(MODEL, field, pos, t=0.0, dt=0.1)
        assert np.array_equal(new, pos)
        assert np.allclose(speeds, 0.0)

    def test_half_density_halves_speed(self):
        field = uniform_field(0.5)
        pos = np.array([2.0])
        new, _ = advance_agents(MODEL, field, pos, t=0.0, dt=0.2)
        assert new[0] == pytest.approx(2.1, abs=1e-15)

    def test_right_edge_clamp(self):
        field = uniform_field(0.0)
        pos = np.array([9.95])
        new, _ = advance_agents(MODEL, field, pos, t=0.0, dt=0.1)
        assert new[0] == 10.0

    def test_overtake_prevented_by_nudge(self):
        # Left probe in free flow, right probe in congestion: Euler would
        # swap them; the trailing probe must give way instead.
        row = np.where(np.linspace(-1, 1, 50) < 0.0, 0.1, 0.9)
        field = static_field(row)
        pos = np.array([-0.05, 0.01])
        new, _ = advance_agents(MODEL, field, pos, t=0.0, dt=0.2)
        assert new[0] < new[1]


class TestIntegrateTrajectories:
    def test_uniform_field_straight_lines(self):
        for c in (0.0, 0.3, 0.5, 0.8):
            field = uniform_field(c, t_max=2.0, n_steps=40)
            traj = integrate_trajectories(MODEL, field, np.array([1.0, 3.0]))
            slope = 1.0 * (1.0 - c)
            expected = 1.0 + slope * traj.times
            np.testing.assert_allclose(traj.positions[:, 0], expected, atol=1e-12)

    def test_uniform_field_preserves_gap(self):
        field = uniform_field(0.4, t_max=2.0, n_steps=40)
        traj = integrate_trajectories(MODEL, field, np.array([1.0, 2.5]))
        gaps = traj.positions[:, 1] - traj.positions[:, 0]
        np.testing.assert_allclose(gaps, 1.5, atol=1e-12)

    def test_shock_crossing_slows_probe(self):
        # Stationary jump 0.2 | 0.8 at x = 0: the probe approaches at
        # V(0.2) = 0.8 and crawls at V(0.8) = 0.2 after crossing.
        row = np.where(np.linspace(-1, 1, 64, endpoint=False) + 1.0 / 64 < 0.0,
                       0.2, 0.8)
        field = static_field(row, t_max=2.0, n_steps=40)
        traj = integrate_trajectories(MODEL, field, np.array([-0.5]))
        assert traj.speeds[0, 0] == pytest.approx(0.8, abs=1e-12)
        assert traj.speeds[-1, 0] == pytest.approx(0.2, abs=1e-12)
        assert traj.positions[-1, 0] > 0.0  # it did cross

    def test_ordering_preserved_fuzz(self):
        # Property from the module contract: ordering holds for any field
        # the solver produces (100 random scenarios).
        dom = Domain.from_cfl(2.0, 0.0, 5.0, 50, v_max=1.0)
        for seed in range(100):
            field = simulate(ScenarioSpec(seed=seed), dom)
            rng = np.random.default_rng(seed + 1000)
            y0 = np.sort(rng.uniform(0.2, 4.8, size=4))
            if np.any(np.diff(y0) <= 0):
                continue
            traj = integrate_trajectories(MODEL, field, y0)
            assert np.all(np.diff(traj.positions, axis=1) > 0.0)

    def test_step_increments_bounded_by_free_flow(self):
        dom = Domain.from_cfl(4.0, 0.0, 10.0, 100, v_max=1.0)
        field = simulate(ScenarioSpec(seed=42), dom)
        traj = integrate_trajectories(MODEL, field,
                                      np.array([0.5, 1.75, 3.0, 4.25, 5.5]))
        steps = np.abs(np.diff(traj.positions, axis=0))
        assert np.all(steps <= 1.0 * dom.dt + 1e-12)

    def test_truncation_flag(self):
        field = uniform_field(0.0, t_max=2.0, n_steps=20)
        traj = integrate_trajectories(MODEL, field, np.array([5.0, 9.5]))
        assert bool(traj.truncated[1]) is True
        assert bool(traj.truncated[0]) is False
        assert traj.positions[-1, 1] == 10.0
        # Ordering still strict after the clamp.
        assert np.all(np.diff(traj.positions, axis=1) > 0.0)

    def test_input_validation(self):
        field = uniform_field(0.5)
        with pytest.raises(ConfigError):
            integrate_trajectories(MODEL, field, np.array([3.0, 1.0]))
        with pytest.raises(ConfigError):
            integrate_trajectories(MODEL, field, np.array([0.0, 5.0]))
        with pytest.raises(ConfigError):
            integrate_trajectories(MODEL, field, np.array([5.0, 10.0]))
        with pytest.raises(ConfigError):
            integrate_trajectories(MODEL, field, np.array([]))


class TestTrajectoriesContainer:
    def make(self):
        field = uniform_field(0.5, t_max=2.0, n_steps=20)
        return integrate_trajectories(MODEL, field, np.array([1.0, 2.0]))

    def test_positions_at_grid_times(self):
        traj = self.make()
        out = traj.positions_at(traj.times)
        np.testing.assert_allclose(out, traj.positions, atol=1e-14)

    def test_positions_at_interpolates(self):
        traj = self.make()
        t_mid = 0.5 * (traj.times[3] + traj.times[4])
        out = traj.positions_at(t_mid)
        mid = 0.5 * (traj.positions[3] + traj.positions[4])
        np.testing.assert_allclose(out, mid, atol=1e-14)

    def test_positions_at_out_of_range(self):
        traj = self.make()
        with pytest.raises(DomainError):
            traj.positions_at(-0.5)
        with pytest.raises(DomainError):
            traj.positions_at(2.5)

    def test_csv_roundtrip(self, tmp_path):
        traj = self.make()
        path = tmp_path / "traj.csv"
        traj.to_csv(str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,y1,y2"
        assert len(lines) == 1 + traj.times.size
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.array_equal(data[:, 0], traj.times)
        assert np.array_equal(data[:, 1:], traj.positions)

    def test_n_agents(self):
        assert self.make().n_agents == 2


class TestVehicleCount:
    def test_uniform_half_density(self):
        field = uniform_field(0.5, n_cells=100)
        assert vehicle_count(field, 0.0, 0.0, 10.0) == pytest.approx(5.0, abs=1e-12)

    def test_empty_interval(self):
        field = uniform_field(0.5)
        assert vehicle_count(field, 0.0, 3.0, 3.0) == 0.0

    def test_partial_cells(self):
        field = uniform_field(0.5, n_cells=100)  # dx = 0.1
        assert vehicle_count(field, 0.0, 0.05, 0.15) == pytest.approx(0.05, abs=1e-12)

    def test_additivity(self):
        dom = Domain.from_cfl(1.0, 0.0, 5.0, 50, v_max=1.0)
        field = simulate(ScenarioSpec(seed=11), dom)
        total = vehicle_count(field, 0.5, 0.3, 4.2)
        split = (vehicle_count(field, 0.5, 0.3, 2.0)
                 + vehicle_count(field, 0.5, 2.0, 4.2))
        assert total == pytest.approx(split, abs=1e-12)

    def test_errors(self):
        field = uniform_field(0.5)
        with pytest.raises(DomainError):
            vehicle_count(field, 0.0, 4.0, 3.0)
        with pytest.raises(DomainError):
            vehicle_count(field, 0.0, -1.0, 3.0)
        with pytest.raises(DomainError):
            vehicle_count(field, 0.0, 3.0, 11.0)

    def test_envelope_count_nearly_conserved_on_fixture(self):
        # Probes are flow particles, so the vehicle count between the first
        # and last probe is conserved in the continuum; the discretization
        # drifts by O(dx + dt).
        dom = Domain.from_cfl(4.0, 0.0, 10.0, 100, v_max=1.0)
        field = simulate(ScenarioSpec(seed=42), dom)
        traj = integrate_trajectories(MODEL, field,
                                      np.array([0.5, 1.75, 3.0, 4.25, 5.5]))
        counts = np.array([
            vehicle_count(field, t, traj.positions[m, 0], traj.positions[m, -1])
            for m, t in enumerate(traj.times)
        ])
        drift = np.max(np.abs(counts - counts[0])) / counts[0]
        assert drift < 0.02
