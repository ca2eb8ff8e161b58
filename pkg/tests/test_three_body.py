import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_metrology.errors import ConstraintError, UnsupportedPatternError
from floquet_metrology.floquet import effective_hamiltonian
from floquet_metrology.pauli import PauliOperator, chain_sum, pauli_decompose
from floquet_metrology.three_body import (cancelling_drive, classify,
                                          common_ratio_coefficients,
                                          common_ratio_violation, staircase_profile,
                                          three_body_drive)

AMPLITUDE = 10.0
# hand-derived from the single-site product sigma^b sigma^c = i eps_bcg sigma^g at the shared site,
# for the default schemes at amplitude a: coefficient of each target string
EXPECTED = {
    "XXX": {"XXX": -4 * AMPLITUDE ** 2},
    "XZX": {"XZX": 4 * AMPLITUDE ** 2},
    "XZY": {"XZY": 4 * AMPLITUDE ** 2},
    "XXZ+YYZ": {"XXZ": 4 * AMPLITUDE ** 2, "YYZ": 4 * AMPLITUDE ** 2},
}


def dense_commutator(H):
    a, b = H.H_plus.to_dense(), H.H_minus.to_dense()
    return a @ b - b @ a


class TestSynthesis:
    @pytest.mark.parametrize("n", [4, 5, 6])
    @pytest.mark.parametrize("pattern", list(EXPECTED))
    def test_against_dense_and_hand_coefficient(self, pattern, n):
        tb = three_body_drive(pattern, n, amplitude=AMPLITUDE)
        assert np.abs(tb.commutator.to_dense() - dense_commutator(tb)).max() <= 1e-10
        from_dense = pauli_decompose(dense_commutator(tb), tol=1e-9).restrict_weight(3)
        target = PauliOperator.zero(n)
        for label, coeff in EXPECTED[pattern].items():
            target = target + chain_sum(label, n, coeff)
        assert from_dense.equals(target, tol=1e-9)
        assert tb.three_body.equals(target, tol=1e-9)
        assert tb.predicted.equals(target, tol=1e-9)

    @pytest.mark.parametrize("pattern", list(EXPECTED))
    def test_drive_is_two_body_and_residue_at_most_two_body(self, pattern):
        tb = three_body_drive(pattern, 5)
        assert tb.H_plus.max_weight == 2
        assert tb.H_minus.equals(tb.H_plus.adjoint(), tol=0)
        assert tb.residual.max_weight <= 2

    def test_real_families_give_nothing(self):
        tb = three_body_drive("XXX", 4, {"XY": 10.0, "ZX": 10.0})
        assert not tb.three_body

    def test_staircase_on_five_sites(self):
        c = staircase_profile(5, 1.0)
        assert common_ratio_violation(c) > 0.5
        im = np.imag(c * np.conj(np.roll(c, -1)))
        np.testing.assert_allclose(im, 1.0, atol=1e-12)
        tb = three_body_drive("XZY", 5, {"XY": c})
        assert tb.three_body.equals(chain_sum("XZY", 5, 4.0), tol=1e-12)


class TestErrors:
    def test_single_pair_pattern(self):
        with pytest.raises(UnsupportedPatternError):
            classify("XXZ")

    def test_malformed(self):
        with pytest.raises(UnsupportedPatternError):
            classify("XQ")

    def test_ratio_violation(self):
        z = np.array([1.0, 1j, 1.0, 1j])
        with pytest.raises(ConstraintError):
            three_body_drive("XXX", 4, {"XY": z, "ZX": -1j})

    def test_case3_common_ratio_rejected(self):
        with pytest.raises(ConstraintError):
            three_body_drive("XZY", 4, {"XY": 1 + 1j})

    def test_case_numbers(self):
        assert [classify(p)[0] for p in EXPECTED] == [1, 2, 3, 4]


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.lists(st.floats(-5, 5), min_size=3, max_size=8))
def test_common_ratio_round_trip(alpha, v):
    z = common_ratio_coefficients(alpha, v)
    scale = max(1.0, max(abs(x) for x in v)) ** 2 * max(1.0, abs(alpha))
    assert common_ratio_violation(z) <= 1e-12 * scale


@pytest.mark.parametrize("pattern", list(EXPECTED))
def test_cancelling_drive_removes_target(pattern):
    n, J, omega = 5, 1.0, 2000.0
    target = PauliOperator.zero(n)
    for label in EXPECTED[pattern]:
        target = target + chain_sum(label, n, J / 2)
    drive, static = cancelling_drive(pattern, J, n, omega)
    H_F = effective_hamiltonian(target + static, drive).H_F
    assert H_F.equals(PauliOperator.zero(n), tol=1e-10)
