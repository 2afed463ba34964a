"""Flux law: values, domain checks, and structural identities."""

import numpy as np
import pytest

from probeflow.errors import ConfigError, DomainError
from probeflow.flux import DOMAIN_TOL, FluxTriple, Greenshields, greenshields_triple


@pytest.fixture
def unit():
    return Greenshields(1.0)


class TestFluxValues:
    def test_flux_zero_at_empty_road(self, unit):
        assert unit.flux(0.0) == 0.0

    def test_flux_zero_at_jam(self, unit):
        assert unit.flux(1.0) == 0.0

    def test_flux_peak_at_critical_density(self, unit):
        assert unit.flux(0.5) == 0.25

    def test_flux_scales_with_speed_limit(self):
        assert Greenshields(2.0).flux(0.5) == 0.5

    def test_max_flux_property(self, unit):
        assert unit.max_flux == 0.25
        assert unit.critical_density == 0.5


class TestCharacteristicSpeed:
    def test_at_zero(self, unit):
        assert unit.characteristic_speed(0.0) == 1.0

    def test_at_critical(self, unit):
        assert unit.characteristic_speed(0.5) == 0.0

    def test_at_jam(self, unit):
        assert unit.characteristic_speed(1.0) == -1.0


class TestAgentSpeed:
    def test_free_flow(self):
        assert Greenshields(3.0).agent_speed(0.0) == 3.0

    def test_jam(self, unit):
        assert unit.agent_speed(1.0) == 0.0

    def test_quarter_density(self, unit):
        assert unit.agent_speed(0.25) == 0.75


class TestDomainChecks:
    @pytest.mark.parametrize("bad", [-0.1, 1.1, 1.0 + 1e-8, -1e-8])
    def test_out_of_range_rejected(self, unit, bad):
        with pytest.raises(DomainError):
            unit.flux(bad)
        with pytest.raises(DomainError):
            unit.characteristic_speed(bad)
        with pytest.raises(DomainError):
            unit.agent_speed(bad)

    def test_nan_rejected(self, unit):
        with pytest.raises(DomainError):
            unit.flux(float("nan"))

    def test_tiny_drift_clamped(self, unit):
        assert unit.flux(-DOMAIN_TOL / 2) == 0.0
        assert unit.flux(1.0 + DOMAIN_TOL / 2) == 0.0
        assert unit.agent_speed(-DOMAIN_TOL / 2) == 1.0

    def test_arrays_supported(self, unit):
        vals = unit.flux(np.array([0.0, 0.5, 1.0]))
        np.testing.assert_array_equal(vals, [0.0, 0.25, 0.0])

    def test_array_with_one_bad_value_rejected(self, unit):
        with pytest.raises(DomainError):
            unit.flux(np.array([0.2, 1.2]))

    @pytest.mark.parametrize("vf", [0.0, -1.0, float("nan"), float("inf")])
    def test_bad_speed_limit_rejected(self, vf):
        with pytest.raises(ConfigError):
            Greenshields(vf)


class TestIdentities:
    def test_speed_times_density_equals_flux_exactly(self):
        model = Greenshields(1.3)
        rho = np.linspace(1e-6, 1.0, 1001)
        np.testing.assert_array_equal(model.agent_speed(rho) * rho,
                                      model.flux(rho))

    def test_characteristics_never_outrun_probes(self, unit):
        rho = np.linspace(0.0, 1.0, 1000)
        assert np.all(unit.characteristic_speed(rho) <= unit.agent_speed(rho))

    def test_concavity_by_midpoint_sampling(self, unit):
        rho = np.linspace(0.0, 1.0, 41)
        a, b = np.meshgrid(rho, rho)
        mid = unit.flux((a + b) / 2)
        chord = (unit.flux(a) + unit.flux(b)) / 2
        assert np.all(mid >= chord - 1e-15)

    @pytest.mark.parametrize("rho", [1e-3, 1e-6])
    def test_slope_at_origin_approaches_free_flow_speed(self, unit, rho):
        assert abs(unit.flux(rho) / rho - 1.0) <= 2 * rho

    def test_agent_speed_non_increasing(self, unit):
        rho = np.linspace(0.0, 1.0, 1000)
        assert np.all(np.diff(unit.agent_speed(rho)) <= 0)


class TestFluxTriple:
    def test_matches_concrete_model(self):
        g = Greenshields(2.0)
        triple = greenshields_triple(2.0)
        rho = np.linspace(0, 1, 101)
        np.testing.assert_array_equal(triple.flux(rho), g.flux(rho))
        np.testing.assert_array_equal(triple.flux_derivative(rho),
                                      g.characteristic_speed(rho))
        np.testing.assert_array_equal(triple.speed(rho), g.agent_speed(rho))
        assert triple.critical_density == 0.5
        assert triple.v_max == 2.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            FluxTriple(lambda r: r, lambda r: r, lambda r: r,
                       critical_density=0.0, v_max=1.0)
        with pytest.raises(ConfigError):
            FluxTriple(lambda r: r, lambda r: r, lambda r: r,
                       critical_density=0.5, v_max=0.0)
