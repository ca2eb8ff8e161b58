import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from floquet_metrology import config
from floquet_metrology.dynamics import (MIN_STEPS_PER_PERIOD, ControlTable,
                                        GeneratorSpectrum, HamiltonianSchedule,
                                        evolve_periodic, generator,
                                        generator_by_derivative, ghz_state,
                                        optimal_initial_state, propagate, qfi,
                                        qfi_ratio)
from floquet_metrology.errors import (DegenerateGeneratorError,
                                      UndersampledDriveError, ValidationError)
from floquet_metrology.floquet import (FloquetValidityWarning,
                                       afm_frequency_qubit,
                                       effective_generator,
                                       effective_hamiltonian, qubit_drive)
from floquet_metrology.pauli import PauliOperator, chain_sum

X, Y, Z = (PauliOperator.from_label(s, 1) for s in ("X0", "Y0", "Z0"))
PLUS = np.array([1, 1]) / np.sqrt(2)


def qubit(lam=1.0, Delta=1.0, drive=None):
    return HamiltonianSchedule(1, 0.5 * Delta * X, lam_terms=[(0.5 * Z, None)], lam=lam, drive=drive)


def five_harmonic_drive():
    w = afm_frequency_qubit([10] * 5, [-10j] * 5, 1.0)
    return qubit_drive([10] * 5, [10] * 5, w)


class TestPropagate:
    def test_constant_z(self):
        r = propagate(qubit(Delta=0.0), np.pi, 7)
        np.testing.assert_allclose(r.final, np.diag([np.exp(-0.5j * np.pi), np.exp(0.5j * np.pi)]), atol=1e-14)

    def test_zero_hamiltonian(self):
        s = HamiltonianSchedule(2, PauliOperator.zero(2))
        r = propagate(s, 3.0, 5)
        assert np.abs(r.unitaries - np.eye(4)).max() == 0

    def test_initial_and_unitary(self):
        r = propagate(qubit(drive=qubit_drive([3.0], [2.0], 50.0)), 1.0, 4000)
        np.testing.assert_array_equal(r.unitaries[0], np.eye(2))
        assert r.unitarity_error() <= 1e-9

    def test_one_period_self_convergence(self):
        s = qubit(drive=five_harmonic_drive())
        T = s.drive.period
        coarse = propagate(s, T, MIN_STEPS_PER_PERIOD * 5, store=False)
        fine = propagate(s, T, MIN_STEPS_PER_PERIOD * 50, store=False)
        assert np.abs(coarse.final - fine.final).max() <= 1e-6

    def test_undersampled(self):
        s = qubit(drive=five_harmonic_drive())
        with pytest.raises(UndersampledDriveError):
            propagate(s, s.drive.period, 10)
        r = propagate(s, s.drive.period, 10, allow_undersampled=True)
        assert r.steps_per_fastest_period == pytest.approx(2.0)

    def test_periodic_matches_direct(self):
        s = qubit(drive=five_harmonic_drive())
        t_f = 7.3 * s.drive.period
        spp = MIN_STEPS_PER_PERIOD * 5
        direct = propagate(s, 7 * s.drive.period + 0.3 * s.drive.period, 7 * spp + 60, store=False)
        periodic = evolve_periodic(s, t_f, spp)
        np.testing.assert_allclose(periodic.final, direct.final, atol=1e-12)
        np.testing.assert_allclose(periodic.generator_final, direct.generator_final, atol=1e-11)

    def test_kick_off_grid(self):
        s = HamiltonianSchedule(1, 0.5 * X, kicks=[(0.33, Z.to_dense())])
        with pytest.raises(ValidationError):
            propagate(s, 1.0, 10)

    def test_control_table_interpolates(self):
        table = ControlTable((Y,), np.array([[0.0, 2.0]]), 1.0)
        assert table.at(0.25)[0] == pytest.approx(0.5)


class TestGenerator:
    def test_commuting_qubit(self):
        s = qubit(Delta=0.0)
        spec = generator(propagate(s, 2.0, 4), s)
        np.testing.assert_allclose(spec.G, Z.to_dense(), atol=1e-14)
        assert (spec.mu_plus, spec.mu_minus) == pytest.approx((1.0, -1.0))

    def test_zero_time(self):
        spec = GeneratorSpectrum.from_matrix(np.zeros((2, 2)))
        assert spec.mu_plus == spec.mu_minus == 0

    def test_two_site_field(self):
        s = HamiltonianSchedule(2, PauliOperator.zero(2), lam_terms=[(chain_sum("Z", 2, 0.5), None)], lam=1.0)
        spec = generator(propagate(s, 1.0, 3), s)
        np.testing.assert_allclose(spec.G, chain_sum("Z", 2, 0.5).to_dense(), atol=1e-14)
        assert spec.spread == pytest.approx(2.0)

    def test_wrong_schedule(self):
        s = qubit()
        r = propagate(s, 1.0, 10)
        with pytest.raises(ValidationError):
            generator(r, qubit(Delta=0.5))

    def test_derivative_form(self):
        s = qubit(Delta=0.0)
        G = generator_by_derivative(s, 2.0, 4, 1e-5)
        np.testing.assert_allclose(G, Z.to_dense(), atol=1e-8)

    def test_derivative_of_lambda_free(self):
        s = HamiltonianSchedule(1, 0.5 * X + 0.2 * Y)
        assert np.abs(generator_by_derivative(s, 2.0, 10)).max() == 0

    def test_derivative_agrees_on_driven_qubit(self):
        s = qubit(drive=five_harmonic_drive())
        t_f = 20 * s.drive.period
        G1 = evolve_periodic(s, t_f).generator_final
        G2 = generator_by_derivative(s, t_f, periodic=True)
        assert np.abs(G1 - G2).max() <= 1e-5

    @pytest.mark.parametrize("quadrature", ["exact", "midpoint"])
    def test_quadratures_agree(self, quadrature):
        s = qubit(drive=qubit_drive([2.0], [1.0], 30.0))
        ref = propagate(s, 1.0, 20000, store=False).generator_final
        G = propagate(s, 1.0, 4000, store=False, quadrature=quadrature).generator_final
        assert np.abs(G - ref).max() < 1e-5


class TestQFI:
    def test_plus_state(self):
        assert qfi(GeneratorSpectrum.from_matrix(Z.to_dense()), PLUS) == pytest.approx(1.0)

    def test_eigenstate(self):
        assert qfi(GeneratorSpectrum.from_matrix(Z.to_dense()), np.array([1.0, 0.0])) == 0.0

    def test_four_var(self):
        spec = GeneratorSpectrum.from_matrix(Z.to_dense(), "four_var")
        assert qfi(spec, PLUS) == pytest.approx(4.0)
        assert spec.max_qfi == pytest.approx(4.0)

    def test_not_normalized(self):
        with pytest.raises(ValidationError):
            qfi(GeneratorSpectrum.from_matrix(Z.to_dense()), np.array([1.0, 1.0]))

    def test_diagonal_optimum(self):
        psi, value = optimal_initial_state(GeneratorSpectrum.from_matrix(np.diag([3.0, 1.0, -2.0])))
        np.testing.assert_allclose(np.abs(psi), [1 / np.sqrt(2), 0, 1 / np.sqrt(2)], atol=1e-15)
        assert value == pytest.approx(25 / 4)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_collective_optimum_is_ghz(self, n):
        t = 1.7
        spec = GeneratorSpectrum.from_matrix(t * chain_sum("Z", n, 0.5).to_dense())
        psi, value = optimal_initial_state(spec)
        assert abs(np.vdot(ghz_state(n), psi)) == pytest.approx(1.0)
        assert value == pytest.approx(n ** 2 * t ** 2 / 4)
        assert qfi(spec, ghz_state(n)) == pytest.approx(value)

    def test_degenerate(self):
        with pytest.raises(DegenerateGeneratorError):
            optimal_initial_state(GeneratorSpectrum.from_matrix(np.zeros((2, 2))))

    def test_ratio_of_zero_bound(self):
        assert qfi_ratio(0.0, 0.0) == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(1, 3))
    def test_optimum_bounds_every_state(self, seed, n):
        rng = np.random.default_rng(seed)
        d = 2 ** n
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        spec = GeneratorSpectrum.from_matrix((a + a.conj().T) / 2)
        psi = rng.normal(size=d) + 1j * rng.normal(size=d)
        psi /= np.linalg.norm(psi)
        opt, value = optimal_initial_state(spec)
        assert qfi(spec, psi) <= value + 1e-9
        assert qfi(spec, opt) == pytest.approx(value, abs=1e-9)
        assert value == pytest.approx((spec.mu_plus - spec.mu_minus) ** 2 / 4)


BUNDLED_PROPAGATED = ["chain_field_only", "chain_floquet_n_sweep", "chain_floquet_time",
                      "chain_floquet_two_harmonics", "qubit_floquet_desk", "qubit_floquet_full_scale",
                      "qubit_floquet_two_harmonics", "qubit_uncontrolled"]


@pytest.mark.parametrize("name", BUNDLED_PROPAGATED)
def test_step_halving_is_second_order(name):
    sc = config.load_scenario(name)
    model = config.build_model(sc, 4 if sc.system.kind == "chain" else None)
    s, drive = model.schedule, model.drive
    if drive is None:
        q = [generator(propagate(s, 1.0, 20 * k, store=False), s).max_qfi for k in (1, 2, 4)]
    else:
        t_f = round(1.0 / drive.period) * drive.period
        spp = MIN_STEPS_PER_PERIOD * drive.l_max
        q = [generator(evolve_periodic(s, t_f, spp * k), s).max_qfi for k in (1, 2, 4)]
    d1, d2 = abs(q[1] - q[0]), abs(q[2] - q[1])
    if s.drive is None and s.controls is None:
        # a static Hamiltonian is integrated exactly
        assert max(d1, d2) < 1e-12
    else:
        assert 3.0 <= d1 / d2 <= 5.0


@pytest.mark.parametrize("name", ["qubit_floquet_desk", "chain_floquet_time"])
def test_rotating_frame_qfi_matches_lab_frame(name):
    """Lab-frame QFI against the generator of exp(-i H_F t) at stroboscopic times."""
    gaps = []
    for omega in (500.0, 1000.0, 2000.0):
        model = config.build_model(config.load_scenario(name, [f"control.omega={omega}"]))
        s = model.schedule
        t_f = round(1.0 / s.drive.period) * s.drive.period
        lab = GeneratorSpectrum.from_matrix(evolve_periodic(s, t_f).generator_final)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FloquetValidityWarning)
            H_F = effective_hamiltonian(s.static_hamiltonian(), s.drive).H_F
        rot = GeneratorSpectrum.from_matrix(effective_generator(H_F, s.dlam_dense(0.0), t_f))
        gaps.append(abs(lab.max_qfi - rot.max_qfi) / rot.max_qfi)
    assert gaps[0] < 1e-2
    assert gaps[1] <= 0.55 * gaps[0] and gaps[2] <= 0.55 * gaps[1]


def test_expm_reference_for_static_qubit():
    s = qubit()
    r = propagate(s, 2.3, 3)
    H = (0.5 * X + 0.5 * Z).to_dense()
    np.testing.assert_allclose(r.final, expm(-1j * H * 2.3), atol=1e-13)
