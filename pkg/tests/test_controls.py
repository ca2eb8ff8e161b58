import numpy as np
import pytest

from floquet_metrology.controls import (ControlBasis, ControlProblem,
                                        adjoint_trajectory, gradient_check,
                                        optimality_residual,
                                        pang_jordan_control, qfi_gradient,
                                        variational_optimize)
from floquet_metrology.dynamics import (GeneratorSpectrum,
                                        HamiltonianSchedule, generator,
                                        propagate)
from floquet_metrology.errors import ValidationError
from floquet_metrology.pauli import (PauliOperator, build_spin_chain,
                                     chain_sum, pauli_decompose,
                                     spin_chain_parts)

X, Y, Z = (PauliOperator.from_label(s, 1) for s in ("X0", "Y0", "Z0"))


def qubit(lam=1.0, Delta=1.0):
    return HamiltonianSchedule(1, 0.5 * Delta * X, lam_terms=[(0.5 * Z, None)], lam=lam)


def chain(n, J=1.0, Delta=1.0):
    static, dlam = spin_chain_parts(n, J, Delta)
    return HamiltonianSchedule(n, static, lam_terms=[(dlam, None)], lam=1.0)


def evolve_with(schedule, pj, t_f, steps):
    s = pj.to_schedule(schedule)
    return s, propagate(s, t_f, steps)


class TestBasis:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError):
            ControlBasis((1j * X,))

    def test_rejects_identity(self):
        with pytest.raises(ValidationError):
            ControlBasis((PauliOperator.identity(1),))

    def test_rejects_dependent(self):
        with pytest.raises(ValidationError):
            ControlBasis((X, 2 * X))

    def test_full_basis_is_orthonormal(self):
        b = ControlBasis.full(2)
        assert len(b) == 15
        assert b.condition_number() == pytest.approx(1.0)

    def test_local_chain(self):
        assert len(ControlBasis.local_chain(4, two_body=["XX", "YY", "ZZ"])) == 12 + 12


class TestPangJordan:
    def test_qubit_constant_control(self):
        pj = pang_jordan_control(qubit(), 5.0, 50)
        np.testing.assert_allclose(pj.controls, np.broadcast_to(-0.5 * X.to_dense(), pj.controls.shape),
                                   atol=1e-12)
        assert not pj.events

    def test_commuting_needs_nothing(self):
        pj = pang_jordan_control(qubit(Delta=0.0), 2.0, 20)
        assert np.abs(pj.controls).max() < 1e-12

    def test_chain_minimal_control(self):
        n = 4
        pj = pang_jordan_control(chain(n), 1.0, 4)
        expected = -(chain_sum("XX", n, 0.5) + chain_sum("XXX", n, 0.5))
        for Hc in pj.controls:
            assert pauli_decompose(Hc, tol=1e-12).equals(expected, tol=1e-12)
        H = build_spin_chain(n, 1.0, 1.0, 1.0)
        assert pauli_decompose(H.to_dense() + pj.controls[0]).equals(chain_sum("Z", n, 0.5), tol=1e-12)

    def test_crossing_emits_pulse(self):
        s = HamiltonianSchedule(1, PauliOperator.zero(1), lam_terms=[(0.5 * Z, np.cos)], lam=1.0)
        t_f, steps = np.pi, 400
        pj = pang_jordan_control(s, t_f, steps)
        assert len(pj.events) == 1
        event = pj.events[0]
        assert abs(event.time - np.pi / 2) <= 1.01 * t_f / steps
        assert event.strength == pytest.approx(np.pi)
        s2, r = evolve_with(s, pj, t_f, steps)
        # int_0^pi |cos t| dt = 2
        assert generator(r, s2).spread == pytest.approx(2.0, abs=1e-3)
        assert generator(propagate(s, t_f, steps), s).spread < 1e-2

    def test_rotating_derivative(self):
        def c(t):
            return np.cos(0.7 * t)

        def sn(t):
            return np.sin(0.7 * t)
        s = HamiltonianSchedule(1, 0.3 * Y, lam_terms=[(0.5 * Z, c), (0.5 * X, sn)], lam=1.0)
        t_f, steps = 3.0, 600
        pj = pang_jordan_control(s, t_f, steps)
        s2, r = evolve_with(s, pj, t_f, steps)
        assert generator(r, s2).spread == pytest.approx(t_f, rel=1e-4)

    def test_rejects_controlled_schedule(self):
        p = ControlProblem.zeros(qubit(), ControlBasis((Y,)), 1.0, 4)
        with pytest.raises(ValidationError):
            pang_jordan_control(p.controlled_schedule(), 1.0, 4)


class TestAdjoint:
    def test_unrestricted_fixed_point(self):
        s = qubit()
        pj = pang_jordan_control(s, 5.0, 100)
        s2, r = evolve_with(s, pj, 5.0, 100)
        spec = generator(r, s2)
        adj = adjoint_trajectory(r, spec)
        assert adj.norms().max() <= 1e-6
        assert optimality_residual(ControlBasis.full(1), adj).summary <= 1e-6
        assert spec.max_qfi == pytest.approx(5.0 ** 2 / 4, rel=1e-3)

    def test_uncontrolled_is_suboptimal(self):
        s = qubit()
        r = propagate(s, 5.0, 200)
        adj = adjoint_trajectory(r, generator(r, s))
        assert adj.norms()[len(adj.norms()) // 2] > 0.1
        assert adj.norms()[-1] <= 1e-8

    def test_zero_hamiltonian_residuals(self):
        s = HamiltonianSchedule(1, PauliOperator.zero(1))
        r = propagate(s, 1.0, 10)
        adj = adjoint_trajectory(r, generator(r, s), delta_rho=Z.to_dense())
        assert optimality_residual(ControlBasis.full(1), adj).summary == 0

    @pytest.mark.parametrize("which", ["qubit", "chain3"])
    def test_lambda_derivative_identity(self, which):
        if which == "qubit":
            s, basis = qubit(), ControlBasis((Y, Z))
        else:
            s = chain(3, J=0.7)
            basis = ControlBasis.local_chain(3, two_body=["YY"])
        t_f, steps, dlam = 1.5, 60, 1e-5
        p = ControlProblem.random(s, basis, t_f, steps, 0.5, seed=3)
        sc = p.controlled_schedule()
        r = propagate(sc, t_f, steps)
        spec = generator(r, sc)
        adj = adjoint_trajectory(r, spec)
        dr = spec.delta_rho()
        up = propagate(sc.with_lambda(1 + dlam / 2), t_f, steps).unitaries
        um = propagate(sc.with_lambda(1 - dlam / 2), t_f, steps).unitaries
        rho_p = up @ dr @ up.conj().transpose(0, 2, 1)
        rho_m = um @ dr @ um.conj().transpose(0, 2, 1)
        fd = -(rho_p - rho_m) / dlam
        assert np.abs(adj.Lambda - fd).max() <= max(1e-6, 10 * dlam ** 2)
        assert np.abs(adj.Lambda - adj.Lambda.conj().transpose(0, 2, 1)).max() <= 1e-12


class TestGradient:
    def test_qubit(self):
        p = ControlProblem.random(qubit(), ControlBasis((Y, Z)), 2.0, 40, 0.5, seed=1)
        assert gradient_check(p, samples=20) <= 1e-4

    def test_qubit_fixed_state(self):
        p = ControlProblem.random(qubit(), ControlBasis((Y, Z)), 2.0, 40, 0.5, seed=2,
                                  initial_state=np.array([1, 1j]) / np.sqrt(2))
        assert gradient_check(p, samples=20) <= 1e-4

    def test_chain(self):
        basis = ControlBasis.local_chain(4, two_body=["XX", "YY", "ZZ"])
        p = ControlProblem.random(chain(4), basis, 1.0, 20, 0.3, seed=4)
        assert gradient_check(p, samples=20) <= 1e-3

    def test_commuting_direction(self):
        p = ControlProblem.random(qubit(Delta=0.0), ControlBasis((Z,)), 1.0, 10, 0.5, seed=0)
        grad, _, _ = qfi_gradient(p)
        assert np.abs(grad).max() < 1e-12
        assert gradient_check(p) <= 1e-4

    def test_perturbation_range(self):
        p = ControlProblem.zeros(qubit(), ControlBasis((Y,)), 1.0, 4)
        with pytest.raises(ValidationError):
            gradient_check(p, eps=1e-2)


class TestOptimizer:
    t_f, steps = 5.0, 100

    def baseline(self):
        r = propagate(qubit(), self.t_f, self.steps, store=False)
        return generator(r, qubit()).max_qfi

    def test_restricted_beats_uncontrolled(self):
        p = ControlProblem.zeros(qubit(), ControlBasis((Y, Z)), self.t_f, self.steps)
        res = variational_optimize(p, 40)
        assert res.qfi >= self.baseline()
        assert np.all(np.diff(res.history) >= -1e-9)

    @pytest.mark.parametrize("method", ["gradient", "lbfgs"])
    def test_full_basis_reaches_unrestricted(self, method):
        p = ControlProblem.zeros(qubit(), ControlBasis.full(1), self.t_f, self.steps)
        res = variational_optimize(p, 150, method=method)
        assert res.qfi >= 0.98 * self.t_f ** 2 / 4
        assert res.qfi <= self.t_f ** 2 / 4 * (1 + 1e-9)
        assert np.all(np.diff(res.history) >= -1e-9)

    def test_zero_iterations(self):
        p = ControlProblem.zeros(qubit(), ControlBasis((Y, Z)), self.t_f, self.steps)
        res = variational_optimize(p, 0)
        assert res.qfi == pytest.approx(self.baseline(), rel=1e-12)
        np.testing.assert_array_equal(res.coefficients, p.coefficients)

    def test_commuting_controls_do_nothing(self):
        p = ControlProblem.random(qubit(Delta=0.0), ControlBasis((Z,)), 1.0, 10, 0.5, seed=0)
        res = variational_optimize(p, 20)
        np.testing.assert_array_equal(res.coefficients, p.coefficients)
        assert res.converged

    def test_bound_is_respected(self):
        p = ControlProblem.zeros(qubit(), ControlBasis((Y, Z)), self.t_f, self.steps)
        res = variational_optimize(p, 30, method="lbfgs", bound=0.2)
        assert np.abs(res.coefficients).max() <= 0.2 + 1e-12


def test_spectrum_delta_rho_is_projector_difference():
    spec = GeneratorSpectrum.from_matrix(np.diag([2.0, 0.0, -1.0]))
    np.testing.assert_allclose(spec.delta_rho(), np.diag([1.0, 0.0, -1.0]), atol=1e-15)
