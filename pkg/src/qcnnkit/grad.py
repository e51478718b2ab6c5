"""Gradients of the quantum forward pass.

Three routes, kept deliberately independent:

- ``parameter_shift``: the exact shift rule, applied per gate occurrence
  (shared angles accumulate over their occurrences). Plain rotations use
  the two-term rule; controlled rotations use the four-term rule for
  generator frequencies {1/2, 1}.
- ``finite_difference``: central-difference oracle used to validate the
  shift rule; never shares code with it beyond the forward pass.
- ``adjoint_gradient``: reverse-sweep gradient of the same gate list,
  used by the training loop where the shift rule's cost (two circuit
  evaluations per gate occurrence) is prohibitive. Validated against
  both other routes in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .circuit import QcnnConfig, QcnnParams, build_gate_ops, forward_single

HALF_PI = math.pi / 2.0
# four-term rule coefficients for controlled rotations
_C1 = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_C2 = (math.sqrt(2) - 1) / (4 * math.sqrt(2))


@dataclass
class GradientVector:
    """Gradient aligned with the flattened QcnnParams plus encoding angles."""

    d_params: np.ndarray
    d_latent: np.ndarray


def _contract(z, flat, config, upstream, shifts=None) -> float:
    return float(forward_single(z, flat, config, shifts=shifts) @ upstream)


def parameter_shift(latent: np.ndarray, params: QcnnParams, config: QcnnConfig,
                    upstream: np.ndarray) -> GradientVector:
    """Exact shift-rule gradient, contracted with d(loss)/d(readout)."""
    z = np.asarray(latent, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    flat = params.flatten()
    ops = build_gate_ops(config)
    d_params = np.zeros(flat.size)
    d_latent = np.zeros(z.size)

    if not np.any(upstream):
        return GradientVector(d_params, d_latent)

    def f(i, delta):
        return _contract(z, flat, config, upstream, shifts={i: delta})

    for i, op in enumerate(ops):
        if op.ref is None:
            continue
        kind, k = op.ref
        if op.kind in ("crx", "crz"):
            g = _C1 * (f(i, HALF_PI) - f(i, -HALF_PI)) \
                - _C2 * (f(i, 3 * HALF_PI) - f(i, -3 * HALF_PI))
        else:
            g = 0.5 * (f(i, HALF_PI) - f(i, -HALF_PI))
        if kind == "p":
            d_params[k] += g
        else:
            d_latent[k] += g
    return GradientVector(d_params, d_latent)


def finite_difference(latent: np.ndarray, params: QcnnParams, config: QcnnConfig,
                      upstream: np.ndarray, eps: float = 1e-5) -> GradientVector:
    """Central-difference oracle over every trainable and encoding angle."""
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    z = np.asarray(latent, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    flat = params.flatten()
    d_params = np.zeros(flat.size)
    d_latent = np.zeros(z.size)

    for k in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[k] += eps
        lo[k] -= eps
        d_params[k] = (_contract(z, hi, config, upstream)
                       - _contract(z, lo, config, upstream)) / (2 * eps)
    for j in range(z.size):
        hi, lo = z.copy(), z.copy()
        hi[j] += eps
        lo[j] -= eps
        d_latent[j] = (_contract(hi, flat, config, upstream)
                       - _contract(lo, flat, config, upstream)) / (2 * eps)
    return GradientVector(d_params, d_latent)


# ---------------------------------------------------------------------------
# Adjoint reverse sweep (training fast path)
# ---------------------------------------------------------------------------

def _pauli_inner(phi, psi, n, axis, wire):
    """<phi| P_wire |psi> summed over state axes, batch axes kept."""
    pv = qsim._split(phi, n, wire)
    sv = qsim._split(psi, n, wire)
    p0, p1 = pv[..., 0, :], pv[..., 1, :]
    s0, s1 = sv[..., 0, :], sv[..., 1, :]
    ax = (-2, -1)
    if axis == "x":
        return (p0.conj() * s1 + p1.conj() * s0).sum(axis=ax)
    if axis == "y":
        return (-1j * p0.conj() * s1 + 1j * p1.conj() * s0).sum(axis=ax)
    return (p0.conj() * s0 - p1.conj() * s1).sum(axis=ax)


def _cpauli_inner(phi, psi, n, axis, control, target):
    """<phi| (|1><1|_control x P_target) |psi>, batch axes kept."""
    pt = qsim._tensor(phi, n)
    st = qsim._tensor(psi, n)
    i0 = qsim._idx(pt.ndim, [(control, 1), (target, 0)])
    i1 = qsim._idx(pt.ndim, [(control, 1), (target, 1)])
    p0, p1 = pt[i0], pt[i1]
    s0, s1 = st[i0], st[i1]
    # the indexed views drop two qubit axes, keeping n-2 of them
    ax = tuple(range(p0.ndim - (n - 2), p0.ndim))
    if axis == "x":
        return (p0.conj() * s1 + p1.conj() * s0).sum(axis=ax)
    if axis == "y":
        return (-1j * p0.conj() * s1 + 1j * p1.conj() * s0).sum(axis=ax)
    return (p0.conj() * s0 - p1.conj() * s1).sum(axis=ax)


def _unapply(op, psi, phi, n, flat, enc):
    kind = op.kind
    if kind in ("rx", "ry", "rz"):
        theta = op.angle if op.ref is None else (
            flat[op.ref[1]] if op.ref[0] == "p" else enc[..., op.ref[1]]
        )
        qsim._apply_rot(psi, n, kind[1], -np.asarray(theta), op.wires[0])
        qsim._apply_rot(phi, n, kind[1], -np.asarray(theta), op.wires[0])
    elif kind in ("crx", "crz"):
        theta = op.angle if op.ref is None else flat[op.ref[1]]
        qsim._apply_crot(psi, n, kind[2], -float(theta), op.wires[0], op.wires[1])
        qsim._apply_crot(phi, n, kind[2], -float(theta), op.wires[0], op.wires[1])
    elif kind == "cnot":
        qsim._apply_cnot(psi, n, *op.wires)
        qsim._apply_cnot(phi, n, *op.wires)
    elif kind == "x":
        qsim._apply_x(psi, n, op.wires[0])
        qsim._apply_x(phi, n, op.wires[0])
    elif kind == "toffoli":
        qsim._apply_toffoli_raw(psi, n, *op.wires)
        qsim._apply_toffoli_raw(phi, n, *op.wires)


def adjoint_gradient(latents: np.ndarray, flat: np.ndarray, config: QcnnConfig,
                     upstreams: np.ndarray):
    """Per-sample gradients via one forward and one reverse sweep.

    Returns (d_flat of shape (B, P), d_latent of shape (B, L)).
    """
    z = np.asarray(latents, dtype=float)
    u = np.asarray(upstreams, dtype=float)
    n = config.n_qubits
    dim = 1 << n
    batch = z.shape[0]
    ops = build_gate_ops(config)

    psi = np.zeros((batch, dim), dtype=complex)
    psi[:, 0] = 1.0
    from .circuit import run_ops
    run_ops(psi, n, ops, flat=flat, enc=z)

    # phi = (sum_k u_k Z_{a_k}) psi  -- a diagonal observable per sample
    diag = np.zeros((batch, dim))
    idx = np.arange(dim)
    for k, anc in enumerate(config.ancilla_wires):
        sign = 1.0 - 2.0 * ((idx >> anc) & 1)
        diag += u[:, k:k + 1] * sign[None, :]
    phi = diag * psi

    d_flat = np.zeros((batch, flat.size))
    d_latent = np.zeros((batch, z.shape[1]))

    for i in range(len(ops) - 1, -1, -1):
        op = ops[i]
        if op.ref is not None:
            if op.kind in ("crx", "crz"):
                ip = _cpauli_inner(phi, psi, n, op.kind[2], op.wires[0], op.wires[1])
            else:
                ip = _pauli_inner(phi, psi, n, op.kind[1], op.wires[0])
            g = np.imag(ip)  # 2*Re(<phi|(-i/2)P|psi>)
            kind, k = op.ref
            if kind == "p":
                d_flat[:, k] += g
            else:
                d_latent[:, k] += g
        _unapply(op, psi, phi, n, flat, z)
    return d_flat, d_latent
