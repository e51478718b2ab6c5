"""Dense statevector simulator: gate kernels and Z-expectations.

Conventions (fixed once, used everywhere):
- Wire k is the k-th least-significant bit of the basis-state index.
- R_a(theta) = exp(-i * theta * Pauli_a / 2) (half-angle convention).
- Global phase is never normalized away.

The private ``_apply_*`` kernels operate on raw complex amplitude arrays
whose trailing axis has length 2**n; leading axes are treated as batch
dimensions. The public operations wrap them for a single ``Statevector``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}

MAX_QUBITS = 24


@dataclass
class Statevector:
    """Complex amplitudes over n qubits; length is exactly 2**n_qubits."""

    n_qubits: int
    amplitudes: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.amplitudes is None:
            self.amplitudes = np.zeros(1 << self.n_qubits, dtype=complex)
            self.amplitudes[0] = 1.0
        else:
            self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
            if self.amplitudes.shape != (1 << self.n_qubits,):
                raise ConfigurationError(
                    f"amplitude vector has length {self.amplitudes.size}, "
                    f"expected {1 << self.n_qubits}"
                )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())


def new_statevector(n_qubits: int) -> Statevector:
    """Return |0...0> on n_qubits wires."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    return Statevector(n_qubits)


def make_rotation(axis: str, angle: float) -> np.ndarray:
    """2x2 rotation matrix R_axis(angle) = exp(-i*angle*Pauli_axis/2)."""
    axis = axis.lower()
    if axis not in _PAULI:
        raise ValueError(f"axis must be one of x/y/z, got {axis!r}")
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle}")
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[c - 1j * s, 0], [0, c + 1j * s]])


def make_u3(theta: float, phi: float, lam: float) -> np.ndarray:
    """U3(theta, phi, lam) = Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lam)."""
    for a in (theta, phi, lam):
        if not math.isfinite(a):
            raise ValueError(f"U3 angle must be finite, got {a}")
    half_pi = math.pi / 2.0
    return (
        make_rotation("z", phi)
        @ make_rotation("x", -half_pi)
        @ make_rotation("z", theta)
        @ make_rotation("x", half_pi)
        @ make_rotation("z", lam)
    )


# ---------------------------------------------------------------------------
# Raw-array kernels. ``amp`` has shape (..., 2**n); all mutate in place.
# ---------------------------------------------------------------------------

def _check_wire(n: int, wire: int) -> None:
    if not 0 <= wire < n:
        raise IndexError(f"wire {wire} out of range for {n} qubits")


def _split(amp: np.ndarray, n: int, wire: int) -> np.ndarray:
    # (..., left, 2, right) view where `right` strides over wires < wire
    right = 1 << wire
    left = 1 << (n - 1 - wire)
    return amp.reshape(amp.shape[:-1] + (left, 2, right))


def _apply_mat1(amp: np.ndarray, n: int, mat: np.ndarray, wire: int) -> None:
    v = _split(amp, n, wire)
    a0, a1 = v[..., 0, :], v[..., 1, :]
    t0 = mat[0, 0] * a0 + mat[0, 1] * a1
    v[..., 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1
    v[..., 0, :] = t0


def _apply_rot(amp: np.ndarray, n: int, axis: str, theta, wire: int) -> None:
    """Rotation kernel; `theta` may be scalar or per-batch array of shape (B,)."""
    v = _split(amp, n, wire)
    a0, a1 = v[..., 0, :], v[..., 1, :]
    half = np.asarray(theta) / 2.0
    c, s = np.cos(half), np.sin(half)
    if c.ndim:
        c = c.reshape(c.shape + (1, 1))
        s = s.reshape(s.shape + (1, 1))
    # in-place updates: the strided halves are written once each
    if axis == "z":
        a0 *= c - 1j * s
        a1 *= c + 1j * s
    elif axis == "y":
        t0 = a0.copy()
        a0 *= c
        a0 -= s * a1
        a1 *= c
        a1 += s * t0
    elif axis == "x":
        t0 = a0.copy()
        a0 *= c
        a0 -= (1j * s) * a1
        a1 *= c
        a1 -= (1j * s) * t0
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")


def _tensor(amp: np.ndarray, n: int) -> np.ndarray:
    return amp.reshape(amp.shape[:-1] + (2,) * n)


def _idx(ndim: int, assignments) -> tuple:
    sl = [slice(None)] * ndim
    for wire, val in assignments:
        sl[ndim - 1 - wire] = val
    return tuple(sl)


def _apply_x(amp: np.ndarray, n: int, wire: int) -> None:
    t = _tensor(amp, n)
    i0 = _idx(t.ndim, [(wire, 0)])
    i1 = _idx(t.ndim, [(wire, 1)])
    tmp = t[i0].copy()
    t[i0] = t[i1]
    t[i1] = tmp


def _apply_cnot(amp: np.ndarray, n: int, control: int, target: int) -> None:
    t = _tensor(amp, n)
    i0 = _idx(t.ndim, [(control, 1), (target, 0)])
    i1 = _idx(t.ndim, [(control, 1), (target, 1)])
    tmp = t[i0].copy()
    t[i0] = t[i1]
    t[i1] = tmp


def _apply_toffoli_raw(amp: np.ndarray, n: int, c1: int, c2: int, target: int) -> None:
    t = _tensor(amp, n)
    i0 = _idx(t.ndim, [(c1, 1), (c2, 1), (target, 0)])
    i1 = _idx(t.ndim, [(c1, 1), (c2, 1), (target, 1)])
    tmp = t[i0].copy()
    t[i0] = t[i1]
    t[i1] = tmp


def _apply_cmat(amp: np.ndarray, n: int, mat: np.ndarray, control: int, target: int) -> None:
    t = _tensor(amp, n)
    i0 = _idx(t.ndim, [(control, 1), (target, 0)])
    i1 = _idx(t.ndim, [(control, 1), (target, 1)])
    a0, a1 = t[i0], t[i1]
    t0 = mat[0, 0] * a0 + mat[0, 1] * a1
    t[i1] = mat[1, 0] * a0 + mat[1, 1] * a1
    t[i0] = t0


def _apply_crot(amp: np.ndarray, n: int, axis: str, theta: float, control: int, target: int) -> None:
    _apply_cmat(amp, n, make_rotation(axis, theta), control, target)


def _expect_z(amp: np.ndarray, n: int, wire: int):
    """1 - 2*P(bit wire = 1); returns a scalar or an array over batch dims."""
    t = _tensor(np.abs(amp) ** 2, n)
    i1 = _idx(t.ndim, [(wire, 1)])
    p1 = t[i1].sum(axis=tuple(range(t.ndim - n, t.ndim - 1)))
    return 1.0 - 2.0 * p1


# ---------------------------------------------------------------------------
# Public operations on Statevector
# ---------------------------------------------------------------------------

def apply_single(state: Statevector, gate: np.ndarray, wire: int) -> Statevector:
    """Apply a 2x2 gate to one wire; mutates and returns the state."""
    _check_wire(state.n_qubits, wire)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (2, 2):
        raise ValueError(f"single-qubit gate must be 2x2, got {gate.shape}")
    _apply_mat1(state.amplitudes, state.n_qubits, gate, wire)
    return state


def apply_controlled(state: Statevector, gate: np.ndarray, control: int, target: int) -> Statevector:
    """Apply `gate` to `target` on the subspace where `control` is |1>."""
    if control == target:
        raise ValueError("control and target must differ")
    _check_wire(state.n_qubits, control)
    _check_wire(state.n_qubits, target)
    gate = np.asarray(gate, dtype=complex)
    _apply_cmat(state.amplitudes, state.n_qubits, gate, control, target)
    return state


def apply_toffoli(state: Statevector, c1: int, c2: int, target: int) -> Statevector:
    """Flip `target` on basis states where both controls are |1>."""
    if len({c1, c2, target}) != 3:
        raise ValueError("Toffoli wires must be pairwise distinct")
    for w in (c1, c2, target):
        _check_wire(state.n_qubits, w)
    _apply_toffoli_raw(state.amplitudes, state.n_qubits, c1, c2, target)
    return state


def expectation_z(state: Statevector, wire: int) -> float:
    """<Z> on `wire`: sum over basis states of |amp|^2 * (+1 / -1)."""
    _check_wire(state.n_qubits, wire)
    return float(_expect_z(state.amplitudes, state.n_qubits, wire))


DENSE_ORACLE_MAX_QUBITS = 8


def apply_dense_oracle(state: Statevector, unitary: np.ndarray) -> Statevector:
    """Plain matrix-vector product; test oracle for the specialized kernels."""
    n = state.n_qubits
    if n > DENSE_ORACLE_MAX_QUBITS:
        raise ConfigurationError(
            f"dense oracle limited to {DENSE_ORACLE_MAX_QUBITS} qubits, got {n}"
        )
    unitary = np.asarray(unitary, dtype=complex)
    dim = 1 << n
    if unitary.shape != (dim, dim):
        raise ValueError(f"unitary must be {dim}x{dim}, got {unitary.shape}")
    if not np.allclose(unitary.conj().T @ unitary, np.eye(dim), atol=1e-10):
        raise ValueError("matrix is not unitary within 1e-10")
    state.amplitudes = unitary @ state.amplitudes
    return state


def embed_1q(gate: np.ndarray, wire: int, n: int) -> np.ndarray:
    """Kronecker-embed a 2x2 gate acting on `wire` into the full 2**n space."""
    full = np.array([[1.0 + 0j]])
    for k in range(n - 1, -1, -1):
        full = np.kron(full, gate if k == wire else np.eye(2))
    return full


def embed_controlled(gate: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    """Dense matrix of a controlled 2x2 gate in the full 2**n space."""
    dim = 1 << n
    full = np.eye(dim, dtype=complex)
    for i in range(dim):
        if (i >> control) & 1:
            ti = (i >> target) & 1
            full[i, i] = gate[ti, ti]
            full[i ^ (1 << target), i] = gate[1 - ti, ti]
    return full


def embed_toffoli(c1: int, c2: int, target: int, n: int) -> np.ndarray:
    """Dense permutation matrix of a Toffoli gate in the full 2**n space."""
    dim = 1 << n
    full = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        j = i ^ (1 << target) if ((i >> c1) & 1) and ((i >> c2) & 1) else i
        full[j, i] = 1.0
    return full
