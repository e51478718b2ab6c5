"""Layered QCNN construction and execution.

The circuit is represented as a flat list of elementary ``GateOp``s
(rotations, X, CNOT, Toffoli, controlled rotations). Every parameterized
rotation carries a reference either into the flattened trainable-angle
vector (``("p", k)``) or into the encoding angles (``("enc", j)``), so the
same gate list drives the forward pass, the circuit dump, and both
gradient paths. U3 blocks are expanded into their five-factor rotation
decomposition, which keeps every parameterized gate a plain Pauli
rotation.

Flat parameter layout for n_data data wires (m = retained wires after
pooling = n_data // 2):

    conv1 pass 0   15 angles
    conv1 pass 1   15 angles
    pooling         2 angles (phi0, phi1)
    conv2 pass 0   15 angles
    conv2 pass 1   15 angles
    interaction 2  3*m angles (RX block, RY block, RZ block)
    classifier     12 angles (beta, 3 per ancilla)

For n_data=8 this is 30 + 2 + 30 + 12 + 12 = 86 angles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import qsim
from .errors import ConfigurationError

log = logging.getLogger(__name__)

HALF_PI = math.pi / 2.0
ANSATZ_PARAMS = 15
N_CLASSES = 4


@dataclass(frozen=True)
class QcnnConfig:
    """Qubit budget: n_data data wires plus 4 ancillas (one per class)."""

    n_data: int = 8
    n_ancilla: int = 4

    def __post_init__(self):
        if self.n_data not in (4, 8):
            raise ConfigurationError(f"n_data must be 4 or 8, got {self.n_data}")
        if self.n_ancilla != 4:
            raise ConfigurationError(f"n_ancilla is fixed at 4, got {self.n_ancilla}")

    @property
    def n_qubits(self) -> int:
        return self.n_data + self.n_ancilla

    @property
    def latent_dim(self) -> int:
        return self.n_data

    @property
    def n_retained(self) -> int:
        return self.n_data // 2

    @property
    def data_wires(self) -> tuple:
        return tuple(range(self.n_data))

    @property
    def ancilla_wires(self) -> tuple:
        return tuple(range(self.n_data, self.n_data + self.n_ancilla))


@dataclass(frozen=True)
class WirePlan:
    """Active data wires (ordered) plus the ancilla register."""

    active: tuple
    ancillas: tuple

    def conv_pairs(self) -> tuple:
        """Ring pair (first, last), then even-adjacent, then odd-adjacent pairs."""
        w = self.active
        pairs = [(w[0], w[-1])]
        pairs += [(w[i], w[i + 1]) for i in range(0, len(w) - 1, 2)]
        pairs += [(w[i], w[i + 1]) for i in range(1, len(w) - 1, 2)]
        return tuple(pairs)

    def pool_pairs(self) -> tuple:
        """(target, control) pairs: odd-indexed wire controls its even neighbor."""
        if len(self.active) % 2:
            raise ConfigurationError("pooling needs an even number of active wires")
        w = self.active
        return tuple((w[i], w[i + 1]) for i in range(0, len(w), 2))

    def pooled(self) -> "WirePlan":
        return WirePlan(self.active[::2], self.ancillas)

    def conv2_pairs(self) -> tuple:
        """Local pattern (0,3),(0,1),(2,3),(1,2) when 4 wires remain, else all
        ordered local pairs."""
        w = self.active
        if len(w) >= 4:
            local = [(0, 3), (0, 1), (2, 3), (1, 2)]
        else:
            local = [(i, j) for i in range(len(w)) for j in range(i + 1, len(w))]
        return tuple((w[a], w[b]) for a, b in local)


def initial_plan(config: QcnnConfig) -> WirePlan:
    return WirePlan(config.data_wires, config.ancilla_wires)


@dataclass
class QcnnParams:
    """Trainable circuit angles grouped by layer."""

    conv1: np.ndarray  # (2, 15)
    pool: np.ndarray   # (2,)
    conv2: np.ndarray  # (2, 15)
    inter2: np.ndarray  # (3 * n_retained,)
    cls: np.ndarray    # (12,)

    def flatten(self) -> np.ndarray:
        flat = np.concatenate([
            self.conv1.ravel(), self.pool, self.conv2.ravel(), self.inter2, self.cls,
        ])
        if not np.all(np.isfinite(flat)):
            raise ConfigurationError("QcnnParams contains non-finite angles")
        return flat

    @classmethod
    def from_flat(cls, flat: np.ndarray, config: QcnnConfig) -> "QcnnParams":
        flat = np.asarray(flat, dtype=float)
        expected = n_circuit_params(config)
        if flat.shape != (expected,):
            raise ConfigurationError(
                f"expected {expected} circuit angles, got {flat.shape}"
            )
        m3 = 3 * config.n_retained
        return cls(
            conv1=flat[0:30].reshape(2, 15).copy(),
            pool=flat[30:32].copy(),
            conv2=flat[32:62].reshape(2, 15).copy(),
            inter2=flat[62:62 + m3].copy(),
            cls=flat[62 + m3:62 + m3 + 12].copy(),
        )

    @classmethod
    def zeros(cls, config: QcnnConfig) -> "QcnnParams":
        return cls.from_flat(np.zeros(n_circuit_params(config)), config)

    @classmethod
    def random(cls, config: QcnnConfig, rng: np.random.Generator,
               scale: float = 0.1) -> "QcnnParams":
        # near-identity start keeps early gradients informative
        flat = rng.uniform(-scale, scale, n_circuit_params(config))
        return cls.from_flat(flat, config)


def n_circuit_params(config: QcnnConfig) -> int:
    return 30 + 2 + 30 + 3 * config.n_retained + 12


def param_partition(config: QcnnConfig) -> tuple:
    return (30, 2, 30, 3 * config.n_retained, 12)


# ---------------------------------------------------------------------------
# Gate-op construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateOp:
    kind: str              # rx / ry / rz / x / cnot / toffoli / crx / crz
    wires: tuple           # rotations: (wire,); cnot/crot: (control, target)
    ref: tuple = None      # ("p", flat_index) | ("enc", j) | None
    angle: float = 0.0     # fixed angle when ref is None


def _u3_ops(wire: int, ref_theta, ref_phi, ref_lam) -> list:
    """U3 = Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lam), rightmost applied first."""
    return [
        GateOp("rz", (wire,), ref_lam),
        GateOp("rx", (wire,), None, HALF_PI),
        GateOp("rz", (wire,), ref_theta),
        GateOp("rx", (wire,), None, -HALF_PI),
        GateOp("rz", (wire,), ref_phi),
    ]


def ansatz_ops(a: int, b: int, refs) -> list:
    """15-parameter two-qubit convolution block on wires (a, b).

    refs is a sequence of 15 parameter references (("p", k) tuples) or,
    for direct application, 15 concrete angles wrapped by the caller.
    """
    if len(refs) != ANSATZ_PARAMS:
        raise ConfigurationError(f"conv ansatz needs 15 angles, got {len(refs)}")
    if a == b:
        raise ConfigurationError("conv ansatz wires must be distinct")
    p = list(refs)
    ops = []
    ops += _u3_ops(a, p[0], p[1], p[2])
    ops += _u3_ops(b, p[3], p[4], p[5])
    ops.append(GateOp("cnot", (b, a)))
    ops.append(GateOp("rz", (a,), p[6]))
    ops.append(GateOp("ry", (b,), p[7]))
    ops.append(GateOp("cnot", (a, b)))
    ops.append(GateOp("ry", (b,), p[8]))
    ops.append(GateOp("cnot", (b, a)))
    ops += _u3_ops(a, p[9], p[10], p[11])
    ops += _u3_ops(b, p[12], p[13], p[14])
    return ops


def conv_pass_ops(pairs, refs) -> list:
    """One convolution pass: the shared 15-angle ansatz on each pair in order."""
    ops = []
    for a, b in pairs:
        ops += ansatz_ops(a, b, refs)
    return ops


def pool_ops(pairs, ref_phi0, ref_phi1) -> list:
    """CRZ(phi0) - X - CRX(phi1) on each (target, control) pair."""
    ops = []
    for target, control in pairs:
        ops.append(GateOp("crz", (control, target), ref_phi0))
        ops.append(GateOp("x", (control,)))
        ops.append(GateOp("crx", (control, target), ref_phi1))
    return ops


def cascade_ops(active) -> list:
    """Toffoli(w_i, w_{i+1} -> w_{i+2}) for ascending i; parameterless."""
    if len(active) < 3:
        log.warning("interaction cascade skipped: %d active wires (< 3)", len(active))
        return []
    return [
        GateOp("toffoli", (active[i], active[i + 1], active[i + 2]))
        for i in range(len(active) - 2)
    ]


def inter2_ops(active, refs) -> list:
    """Toffoli cascade + RX block, cascade + RY block, cascade + RZ block."""
    m = len(active)
    if len(refs) != 3 * m:
        raise ConfigurationError(
            f"interaction layer 2 needs {3 * m} angles, got {len(refs)}"
        )
    ops = []
    for block, axis in enumerate(("rx", "ry", "rz")):
        ops += cascade_ops(active)
        for i, w in enumerate(active):
            ops.append(GateOp(axis, (w,), refs[block * m + i]))
    return ops


def classifier_ops(active, ancillas, refs) -> list:
    """CNOT ring on active data wires, then per-ancilla CNOT + Rz-Ry-Rz chain."""
    if len(refs) != 3 * len(ancillas):
        raise ConfigurationError(
            f"classifier interaction needs {3 * len(ancillas)} angles, got {len(refs)}"
        )
    w = active
    m = len(w)
    ops = [GateOp("cnot", (w[-1], w[0]))]
    ops += [GateOp("cnot", (w[i], w[i + 1])) for i in range(m - 1)]
    for k, anc in enumerate(ancillas):
        ops.append(GateOp("cnot", (w[k % m], anc)))
        ops.append(GateOp("rz", (anc,), refs[3 * k]))
        ops.append(GateOp("ry", (anc,), refs[3 * k + 1]))
        ops.append(GateOp("rz", (anc,), refs[3 * k + 2]))
    return ops


def encode_ops(config: QcnnConfig) -> list:
    return [GateOp("ry", (j,), ("enc", j)) for j in range(config.n_data)]


@lru_cache(maxsize=8)
def build_gate_ops(config: QcnnConfig) -> tuple:
    """Full forward gate list with symbolic parameter references."""
    p = lambda k: ("p", k)
    plan = initial_plan(config)
    ops = list(encode_ops(config))
    # conv layer 1, two passes with independent shared 15-vectors
    ops += conv_pass_ops(plan.conv_pairs(), [p(k) for k in range(15)])
    ops += conv_pass_ops(plan.conv_pairs(), [p(15 + k) for k in range(15)])
    # pooling
    ops += pool_ops(plan.pool_pairs(), p(30), p(31))
    plan = plan.pooled()
    # interaction layer 1 (parameterless Toffoli cascade)
    ops += cascade_ops(plan.active)
    # conv layer 2, two passes on the local pattern
    ops += conv_pass_ops(plan.conv2_pairs(), [p(32 + k) for k in range(15)])
    ops += conv_pass_ops(plan.conv2_pairs(), [p(47 + k) for k in range(15)])
    # interaction layer 2
    m3 = 3 * len(plan.active)
    ops += inter2_ops(plan.active, [p(62 + k) for k in range(m3)])
    # classifier interaction
    ops += classifier_ops(plan.active, plan.ancillas, [p(62 + m3 + k) for k in range(12)])
    return tuple(ops)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def resolve_angle(op: GateOp, flat, enc, shifts=None, op_index: int = None):
    if op.ref is None:
        return op.angle
    kind, k = op.ref
    theta = flat[k] if kind == "p" else enc[..., k]
    if shifts is not None and op_index in shifts:
        theta = theta + shifts[op_index]
    return theta


def run_ops(amp: np.ndarray, n: int, ops, flat=None, enc=None, shifts=None) -> np.ndarray:
    """Execute a gate list in place on amplitudes of shape (..., 2**n)."""
    for i, op in enumerate(ops):
        kind = op.kind
        if kind in ("rx", "ry", "rz"):
            theta = resolve_angle(op, flat, enc, shifts, i)
            qsim._apply_rot(amp, n, kind[1], theta, op.wires[0])
        elif kind == "cnot":
            qsim._apply_cnot(amp, n, op.wires[0], op.wires[1])
        elif kind == "x":
            qsim._apply_x(amp, n, op.wires[0])
        elif kind == "toffoli":
            qsim._apply_toffoli_raw(amp, n, *op.wires)
        elif kind in ("crx", "crz"):
            theta = resolve_angle(op, flat, enc, shifts, i)
            qsim._apply_crot(amp, n, kind[2], float(theta), op.wires[0], op.wires[1])
        else:
            raise ConfigurationError(f"unknown gate kind {op.kind!r}")
    return amp


@lru_cache(maxsize=8)
def _fusion_plan(config: QcnnConfig) -> tuple:
    """Merge runs of single-qubit gates on the same wire into one matrix.

    Only the grouping is cached; matrices are rebuilt per evaluation from
    the concrete angles. Single-qubit gates on distinct wires commute, so
    deferring a wire's run until a multi-qubit gate touches it is exact.
    """
    ops = build_gate_ops(config)
    plan = []
    pending = {}

    def flush(wire):
        run = pending.pop(wire, None)
        if run:
            plan.append(("mat", wire, tuple(run)))

    for i, op in enumerate(ops):
        if op.kind in ("rx", "ry", "rz", "x"):
            pending.setdefault(op.wires[0], []).append(i)
        else:
            for w in op.wires:
                flush(w)
            plan.append(("op", i, None))
    for w in sorted(pending):
        flush(w)
    return tuple(plan)


def forward_single(latent: np.ndarray, flat: np.ndarray, config: QcnnConfig,
                   shifts=None) -> np.ndarray:
    """One-sample forward through the fused gate plan.

    Matches ``forward`` to simulator precision; used where many scalar
    evaluations are needed (shift rule, finite differences) and the
    per-gate dispatch cost of the unfused list dominates.
    """
    ops = build_gate_ops(config)
    n = config.n_qubits
    z = np.asarray(latent, dtype=float)
    amp = np.zeros(1 << n, dtype=complex)
    amp[0] = 1.0
    for tag, arg, run in _fusion_plan(config):
        if tag == "mat":
            mat = np.eye(2, dtype=complex)
            for i in run:
                op = ops[i]
                if op.kind == "x":
                    mat = qsim.PAULI_X @ mat
                else:
                    theta = resolve_angle(op, flat, z, shifts, i)
                    mat = qsim.make_rotation(op.kind[1], float(theta)) @ mat
            qsim._apply_mat1(amp, n, mat, arg)
        else:
            op = ops[arg]
            if op.kind == "cnot":
                qsim._apply_cnot(amp, n, op.wires[0], op.wires[1])
            elif op.kind == "toffoli":
                qsim._apply_toffoli_raw(amp, n, *op.wires)
            else:
                theta = resolve_angle(op, flat, z, shifts, arg)
                qsim._apply_crot(amp, n, op.kind[2], float(theta),
                                 op.wires[0], op.wires[1])
    return np.array([qsim._expect_z(amp, n, a) for a in config.ancilla_wires])


def _apply_concrete(state: qsim.Statevector, ops, angles) -> qsim.Statevector:
    run_ops(state.amplitudes, state.n_qubits, ops, flat=np.asarray(angles, dtype=float))
    return state


# Public layer operations (concrete angles, single Statevector) -------------

def angle_encode(state: qsim.Statevector, latent: np.ndarray, config: QcnnConfig) -> qsim.Statevector:
    """RY(z_j) on data wire j; ancillas untouched. Angles must lie in [0, pi]."""
    z = np.asarray(latent, dtype=float)
    if z.shape != (config.n_data,):
        raise ConfigurationError(
            f"latent length {z.shape} does not match n_data={config.n_data}"
        )
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("latent angles must be finite")
    run_ops(state.amplitudes, state.n_qubits, encode_ops(config), enc=z)
    return state


def conv_ansatz(state: qsim.Statevector, pair, params15) -> qsim.Statevector:
    a, b = pair
    if len(params15) != ANSATZ_PARAMS:
        raise ConfigurationError(f"conv ansatz needs 15 angles, got {len(params15)}")
    refs = [("p", k) for k in range(15)]
    return _apply_concrete(state, ansatz_ops(a, b, refs), params15)


def conv_layer(state: qsim.Statevector, pairs, params15) -> qsim.Statevector:
    """Shared 15-angle ansatz applied to each pair in order (weight sharing)."""
    for pair in pairs:
        conv_ansatz(state, pair, params15)
    return state


def pool_layer(state: qsim.Statevector, plan: WirePlan, params2):
    """CRZ-X-CRX pooling; returns (state, plan retaining even-indexed wires)."""
    if len(params2) != 2:
        raise ConfigurationError(f"pooling needs 2 angles, got {len(params2)}")
    ops = pool_ops(plan.pool_pairs(), ("p", 0), ("p", 1))
    _apply_concrete(state, ops, params2)
    return state, plan.pooled()


def interaction_cascade(state: qsim.Statevector, plan: WirePlan) -> qsim.Statevector:
    return _apply_concrete(state, cascade_ops(plan.active), [])


def interaction_param(state: qsim.Statevector, plan: WirePlan, angles) -> qsim.Statevector:
    refs = [("p", k) for k in range(len(angles))]
    return _apply_concrete(state, inter2_ops(plan.active, refs), angles)


def classifier_interaction(state: qsim.Statevector, plan: WirePlan, beta) -> qsim.Statevector:
    refs = [("p", k) for k in range(len(beta))]
    return _apply_concrete(state, classifier_ops(plan.active, plan.ancillas, refs), beta)


# Forward passes ------------------------------------------------------------

def forward(latent: np.ndarray, params: QcnnParams, config: QcnnConfig) -> np.ndarray:
    """End-to-end circuit evaluation: 4 ancilla <Z> readouts in [-1, 1]."""
    out = forward_batch(np.asarray(latent, dtype=float)[None, :], params.flatten(), config)
    return out[0]


def forward_batch(latents: np.ndarray, flat: np.ndarray, config: QcnnConfig,
                  shifts=None) -> np.ndarray:
    """Vectorized forward over a batch of encoding-angle vectors (B, L)."""
    z = np.asarray(latents, dtype=float)
    if z.ndim != 2 or z.shape[1] != config.n_data:
        raise ConfigurationError(
            f"latent batch must have shape (B, {config.n_data}), got {z.shape}"
        )
    n = config.n_qubits
    batch = z.shape[0]
    amp = np.zeros((batch, 1 << n), dtype=complex)
    amp[:, 0] = 1.0
    run_ops(amp, n, build_gate_ops(config), flat=flat, enc=z, shifts=shifts)
    return np.stack(
        [qsim._expect_z(amp, n, a) for a in config.ancilla_wires], axis=-1
    )


def describe_circuit(config: QcnnConfig) -> str:
    """Human-readable ordered gate dump with wires and parameter indices."""
    lines = [f"# qcnn circuit: {config.n_data} data + {config.n_ancilla} ancilla wires"]
    for i, op in enumerate(build_gate_ops(config)):
        wires = " ".join(f"q{w}" for w in op.wires)
        if op.ref is None:
            arg = "" if op.kind in ("x", "cnot", "toffoli") else f" angle={op.angle:+.6f}"
        else:
            kind, k = op.ref
            arg = f" p[{k}]" if kind == "p" else f" enc[{k}]"
        lines.append(f"{i:4d}  {op.kind:<7s} {wires}{arg}")
    return "\n".join(lines) + "\n"
