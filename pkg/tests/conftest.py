"""Shared test oracles.

``dense_unitary`` multiplies Kronecker-embedded gate matrices into one
dense unitary, deliberately bypassing the specialized statevector
kernels so the two paths stay independent.
"""

import numpy as np
import pytest

from qcnnkit import qsim
from qcnnkit.circuit import resolve_angle


def op_dense_matrix(op, n, flat=None, enc=None):
    if op.kind in ("rx", "ry", "rz"):
        theta = float(resolve_angle(op, flat, enc))
        return qsim.embed_1q(qsim.make_rotation(op.kind[1], theta), op.wires[0], n)
    if op.kind == "x":
        return qsim.embed_1q(qsim.PAULI_X, op.wires[0], n)
    if op.kind == "cnot":
        return qsim.embed_controlled(qsim.PAULI_X, op.wires[0], op.wires[1], n)
    if op.kind in ("crx", "crz"):
        theta = float(resolve_angle(op, flat, enc))
        gate = qsim.make_rotation(op.kind[2], theta)
        return qsim.embed_controlled(gate, op.wires[0], op.wires[1], n)
    if op.kind == "toffoli":
        return qsim.embed_toffoli(op.wires[0], op.wires[1], op.wires[2], n)
    raise AssertionError(f"unknown op kind {op.kind}")


def dense_unitary(ops, n, flat=None, enc=None):
    u = np.eye(1 << n, dtype=complex)
    for op in ops:
        u = op_dense_matrix(op, n, flat, enc) @ u
    return u


def random_state(n, rng):
    amp = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return amp / np.linalg.norm(amp)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blob_records(rng, n_per_class, dim, sep=10.0, sigma=1.0, prefix="blob"):
    """Well-separated 4-class Gaussian clusters as feature records.

    Class means sit `sep` apart along orthogonal axes, so with the default
    arguments the inter-center distance is sep * sqrt(2) ~ 14 sigma.
    """
    from qcnnkit.data import FeatureRecord

    means = np.zeros((4, dim))
    for c in range(4):
        means[c, c] = sep
    records = []
    for c in range(4):
        for i in range(n_per_class):
            vec = means[c] + rng.normal(0.0, sigma, dim)
            records.append(FeatureRecord(f"{prefix}-{c}-{i}", c,
                                         vec.astype(np.float32)))
    return records


def write_blob_split(tmp_path, seed, dim, n_train, n_val, n_test, sep=10.0):
    """Three feature files (train/val/test) of synthetic blobs."""
    from qcnnkit.data import write_features

    g = np.random.default_rng(seed)
    paths = {}
    for name, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        p = tmp_path / f"{name}.qcnf"
        write_features(p, blob_records(g, n, dim, sep=sep, prefix=name))
        paths[name] = p
    return paths["train"], paths["val"], paths["test"]
