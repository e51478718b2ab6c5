"""Statevector simulator: gate kernels checked against dense-matrix oracles."""

import math

import numpy as np
import pytest

from qcnnkit import qsim
from qcnnkit.errors import ConfigurationError

from conftest import random_state


class TestStatevector:
    def test_ground_state(self):
        s = qsim.new_statevector(3)
        assert s.amplitudes.shape == (8,)
        assert s.amplitudes[0] == 1.0
        assert np.count_nonzero(s.amplitudes) == 1

    @pytest.mark.parametrize("n", [0, -1, 25])
    def test_rejects_bad_qubit_count(self, n):
        with pytest.raises(ConfigurationError):
            qsim.new_statevector(n)

    def test_rejects_wrong_amplitude_length(self):
        with pytest.raises(ConfigurationError):
            qsim.Statevector(2, np.zeros(3))

    def test_copy_is_independent(self):
        s = qsim.new_statevector(2)
        c = s.copy()
        c.amplitudes[0] = 0.0
        assert s.amplitudes[0] == 1.0


class TestMakeRotation:
    def test_ry_pi_is_antisymmetric_flip(self):
        # R_y(pi) = [[0, -1], [1, 0]]
        m = qsim.make_rotation("y", math.pi)
        assert np.allclose(m, [[0, -1], [1, 0]], atol=1e-15)

    def test_rz_zero_is_identity(self):
        assert np.allclose(qsim.make_rotation("z", 0.0), np.eye(2))

    def test_rx_half_angle_convention(self):
        # half-angle convention: R_x(pi/2) has cos(pi/4) on the diagonal
        m = qsim.make_rotation("x", math.pi / 2)
        c = math.cos(math.pi / 4)
        assert np.allclose(np.diag(m), [c, c])
        assert np.allclose(m[0, 1], -1j * c)

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_matches_matrix_exponential(self, axis, rng):
        # independent oracle: eigendecomposition-based expm of -i*theta*P/2
        from scipy.linalg import expm
        for theta in rng.uniform(-2 * math.pi, 2 * math.pi, 10):
            expected = expm(-0.5j * theta * qsim._PAULI[axis])
            assert np.allclose(qsim.make_rotation(axis, theta), expected, atol=1e-12)

    def test_unitary(self, rng):
        for theta in rng.uniform(-10, 10, 20):
            for axis in "xyz":
                m = qsim.make_rotation(axis, theta)
                assert np.allclose(m.conj().T @ m, np.eye(2), atol=1e-14)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite_angle(self, bad):
        with pytest.raises(ValueError):
            qsim.make_rotation("x", bad)

    def test_rejects_unknown_axis(self):
        with pytest.raises(ValueError):
            qsim.make_rotation("w", 0.1)


class TestMakeU3:
    def test_all_zero_is_identity_up_to_phase(self):
        m = qsim.make_u3(0.0, 0.0, 0.0)
        assert abs(abs(np.trace(m)) - 2.0) < 1e-12

    def test_factor_product_oracle(self, rng):
        # recompute the five-factor product independently of make_u3
        for theta, phi, lam in rng.uniform(-math.pi, math.pi, (20, 3)):
            expected = (
                qsim.make_rotation("z", phi)
                @ qsim.make_rotation("x", -math.pi / 2)
                @ qsim.make_rotation("z", theta)
                @ qsim.make_rotation("x", math.pi / 2)
                @ qsim.make_rotation("z", lam)
            )
            assert np.allclose(qsim.make_u3(theta, phi, lam), expected, atol=1e-14)

    def test_theta_pi_swaps_basis_weights(self):
        # U3(pi, 0, 0)|0> puts all probability on |1>
        m = qsim.make_u3(math.pi, 0.0, 0.0)
        out = m @ np.array([1.0, 0.0])
        assert abs(out[0]) < 1e-12
        assert abs(abs(out[1]) - 1.0) < 1e-12

    def test_unitary(self, rng):
        for angles in rng.uniform(-6, 6, (20, 3)):
            m = qsim.make_u3(*angles)
            assert np.allclose(m.conj().T @ m, np.eye(2), atol=1e-13)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            qsim.make_u3(0.0, np.nan, 0.0)


class TestApplySingle:
    def test_ry_pi_flips_wire_zero(self):
        s = qsim.new_statevector(2)
        qsim.apply_single(s, qsim.make_rotation("y", math.pi), 0)
        assert np.allclose(s.amplitudes, [0, 1, 0, 0], atol=1e-15)

    def test_ry_pi_flips_wire_one(self):
        s = qsim.new_statevector(2)
        qsim.apply_single(s, qsim.make_rotation("y", math.pi), 1)
        assert np.allclose(s.amplitudes, [0, 0, 1, 0], atol=1e-15)

    def test_identity_is_noop(self, rng):
        s = qsim.Statevector(3, random_state(3, rng))
        before = s.amplitudes.copy()
        qsim.apply_single(s, np.eye(2), 1)
        assert np.allclose(s.amplitudes, before, atol=1e-15)

    def test_equal_superposition(self):
        s = qsim.new_statevector(1)
        qsim.apply_single(s, qsim.make_rotation("y", math.pi / 2), 0)
        r = 1 / math.sqrt(2)
        assert np.allclose(s.amplitudes, [r, r], atol=1e-15)

    def test_wire_out_of_range(self):
        s = qsim.new_statevector(2)
        with pytest.raises(IndexError):
            qsim.apply_single(s, np.eye(2), 2)

    def test_rejects_wrong_gate_shape(self):
        s = qsim.new_statevector(2)
        with pytest.raises(ValueError):
            qsim.apply_single(s, np.eye(3), 0)

    def test_matches_dense_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 6))
            wire = int(rng.integers(0, n))
            gate = qsim.make_u3(*rng.uniform(-math.pi, math.pi, 3))
            amp = random_state(n, rng)
            s1 = qsim.Statevector(n, amp.copy())
            s2 = qsim.Statevector(n, amp.copy())
            qsim.apply_single(s1, gate, wire)
            qsim.apply_dense_oracle(s2, qsim.embed_1q(gate, wire, n))
            assert np.allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)


class TestApplyControlled:
    def test_cnot_control_set(self):
        # |q1=1, q0=0> is index 2; CNOT(1 -> 0) maps it to index 3
        s = qsim.Statevector(2, np.array([0, 0, 1, 0], dtype=complex))
        qsim.apply_controlled(s, qsim.PAULI_X, 1, 0)
        assert np.allclose(s.amplitudes, [0, 0, 0, 1])

    def test_cnot_control_clear(self):
        s = qsim.new_statevector(2)
        qsim.apply_controlled(s, qsim.PAULI_X, 1, 0)
        assert np.allclose(s.amplitudes, [1, 0, 0, 0])

    def test_crz_phases_only_the_11_component(self):
        amp = np.full(4, 0.5, dtype=complex)
        s = qsim.Statevector(2, amp)
        theta = 0.7
        qsim.apply_controlled(s, qsim.make_rotation("z", theta), 1, 0)
        assert np.allclose(s.amplitudes[0], 0.5)
        assert np.allclose(s.amplitudes[1], 0.5)
        assert np.allclose(s.amplitudes[2], 0.5 * np.exp(-0.5j * theta))
        assert np.allclose(s.amplitudes[3], 0.5 * np.exp(+0.5j * theta))

    def test_control_equals_target(self):
        s = qsim.new_statevector(2)
        with pytest.raises(ValueError):
            qsim.apply_controlled(s, qsim.PAULI_X, 0, 0)

    def test_matches_dense_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 6))
            control, target = rng.permutation(n)[:2]
            gate = qsim.make_u3(*rng.uniform(-math.pi, math.pi, 3))
            amp = random_state(n, rng)
            s1 = qsim.Statevector(n, amp.copy())
            s2 = qsim.Statevector(n, amp.copy())
            qsim.apply_controlled(s1, gate, int(control), int(target))
            qsim.apply_dense_oracle(
                s2, qsim.embed_controlled(gate, int(control), int(target), n))
            assert np.allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)


class TestToffoli:
    def test_both_controls_set(self):
        # |q2=1, q1=1, q0=0> is index 6; controls (2, 1), target 0
        amp = np.zeros(8, dtype=complex)
        amp[6] = 1.0
        s = qsim.Statevector(3, amp)
        qsim.apply_toffoli(s, 2, 1, 0)
        assert np.allclose(s.amplitudes[7], 1.0)

    def test_one_control_clear_is_noop(self):
        amp = np.zeros(8, dtype=complex)
        amp[4] = 1.0  # only q2 set
        s = qsim.Statevector(3, amp)
        qsim.apply_toffoli(s, 2, 1, 0)
        assert np.allclose(s.amplitudes[4], 1.0)

    def test_involution_is_exact(self, rng):
        amp = random_state(4, rng)
        s = qsim.Statevector(4, amp.copy())
        qsim.apply_toffoli(s, 0, 2, 3)
        qsim.apply_toffoli(s, 0, 2, 3)
        assert np.array_equal(s.amplitudes, amp)

    def test_rejects_duplicate_wires(self):
        s = qsim.new_statevector(3)
        with pytest.raises(ValueError):
            qsim.apply_toffoli(s, 0, 0, 1)

    def test_matches_dense_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(3, 6))
            c1, c2, t = (int(w) for w in rng.permutation(n)[:3])
            amp = random_state(n, rng)
            s1 = qsim.Statevector(n, amp.copy())
            s2 = qsim.Statevector(n, amp.copy())
            qsim.apply_toffoli(s1, c1, c2, t)
            qsim.apply_dense_oracle(s2, qsim.embed_toffoli(c1, c2, t, n))
            assert np.allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)


class TestExpectationZ:
    def test_ground_state(self):
        s = qsim.new_statevector(2)
        assert qsim.expectation_z(s, 0) == pytest.approx(1.0)
        assert qsim.expectation_z(s, 1) == pytest.approx(1.0)

    def test_excited_wire(self):
        s = qsim.new_statevector(2)
        qsim.apply_single(s, qsim.PAULI_X, 1)
        assert qsim.expectation_z(s, 1) == pytest.approx(-1.0)
        assert qsim.expectation_z(s, 0) == pytest.approx(1.0)

    def test_equator(self):
        s = qsim.new_statevector(1)
        qsim.apply_single(s, qsim.make_rotation("y", math.pi / 2), 0)
        assert qsim.expectation_z(s, 0) == pytest.approx(0.0, abs=1e-15)

    def test_matches_sign_weighted_sum(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 6))
            wire = int(rng.integers(0, n))
            amp = random_state(n, rng)
            s = qsim.Statevector(n, amp)
            signs = 1.0 - 2.0 * ((np.arange(1 << n) >> wire) & 1)
            expected = float(np.sum(np.abs(amp) ** 2 * signs))
            assert qsim.expectation_z(s, wire) == pytest.approx(expected, abs=1e-13)

    def test_bounded(self, rng):
        for _ in range(50):
            s = qsim.Statevector(3, random_state(3, rng))
            v = qsim.expectation_z(s, int(rng.integers(0, 3)))
            assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12


class TestDenseOracle:
    def test_rejects_large_register(self):
        s = qsim.new_statevector(9)
        with pytest.raises(ConfigurationError):
            qsim.apply_dense_oracle(s, np.eye(512))

    def test_rejects_non_unitary(self):
        s = qsim.new_statevector(1)
        with pytest.raises(ValueError):
            qsim.apply_dense_oracle(s, np.array([[1, 0], [0, 2.0]]))

    def test_rejects_wrong_shape(self):
        s = qsim.new_statevector(2)
        with pytest.raises(ValueError):
            qsim.apply_dense_oracle(s, np.eye(2))

    def test_identity(self, rng):
        amp = random_state(3, rng)
        s = qsim.Statevector(3, amp.copy())
        qsim.apply_dense_oracle(s, np.eye(8))
        assert np.allclose(s.amplitudes, amp)


class TestNormPreservation:
    def test_random_gate_sequences(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 6))
            s = qsim.Statevector(n, random_state(n, rng))
            for _ in range(30):
                kind = rng.integers(0, 3)
                if kind == 0:
                    gate = qsim.make_u3(*rng.uniform(-math.pi, math.pi, 3))
                    qsim.apply_single(s, gate, int(rng.integers(0, n)))
                elif kind == 1:
                    c, t = (int(w) for w in rng.permutation(n)[:2])
                    gate = qsim.make_rotation("xyz"[rng.integers(0, 3)],
                                              float(rng.uniform(-3, 3)))
                    qsim.apply_controlled(s, gate, c, t)
                elif n >= 3:
                    c1, c2, t = (int(w) for w in rng.permutation(n)[:3])
                    qsim.apply_toffoli(s, c1, c2, t)
            assert s.norm() == pytest.approx(1.0, abs=1e-12)

    def test_batched_kernels_match_loop(self, rng):
        # the raw kernels treat leading axes as batch dims
        n, batch = 4, 6
        amps = np.stack([random_state(n, rng) for _ in range(batch)])
        thetas = rng.uniform(-math.pi, math.pi, batch)
        batched = amps.copy()
        qsim._apply_rot(batched, n, "y", thetas, 2)
        for b in range(batch):
            single = amps[b].copy()
            qsim._apply_rot(single, n, "y", float(thetas[b]), 2)
            assert np.allclose(batched[b], single, atol=1e-15)
