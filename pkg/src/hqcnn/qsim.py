"""Dense statevector simulator for small registers.

Basis convention: qubit 0 is the most significant bit, so for ``n`` qubits the
amplitude at index ``i`` belongs to the basis state whose qubit ``q`` equals
``(i >> (n - 1 - q)) & 1``. Every module in the package relies on this.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EncodingError, ShapeError

MAX_QUBITS = 10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI = {"x": X, "y": Y, "z": Z}

# control = first qubit of the pair (MSB of the 4x4 index)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
# control = second qubit of the pair
CNOT_REV = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


@dataclass(frozen=True)
class StateVector:
    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        n = int(round(np.log2(amps.size))) if amps.size else -1
        if amps.ndim != 1 or n < 1 or 2**n != amps.size or n > MAX_QUBITS:
            raise ShapeError(f"amplitude vector of length {amps.size} is not 2^n, 1<=n<={MAX_QUBITS}")
        object.__setattr__(self, "amps", amps)

    @property
    def num_qubits(self) -> int:
        return int(self.amps.size).bit_length() - 1

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


def amplitude_encode(x) -> StateVector:
    """Load a real vector of length ``2**n`` into the amplitudes, normalised."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2 or x.size & (x.size - 1):
        raise ShapeError(f"amplitude encoding needs a length 2^n vector, got shape {x.shape}")
    norm = np.linalg.norm(x)
    if not np.isfinite(norm) or norm == 0.0:
        raise EncodingError("cannot amplitude-encode a zero-norm (flat) segment")
    return StateVector((x / norm).astype(complex))


def rotation(axis: str, theta: float) -> np.ndarray:
    """exp(-i theta sigma_axis / 2)."""
    try:
        pauli = PAULI[axis]
    except KeyError:
        raise ValueError(f"unknown rotation axis {axis!r}") from None
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * pauli


def rx(theta):
    return rotation("x", theta)


def ry(theta):
    return rotation("y", theta)


def rz(theta):
    return rotation("z", theta)


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    """Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lam), multiplied left to right."""
    return rz(phi) @ rx(-np.pi / 2) @ rz(theta) @ rx(np.pi / 2) @ rz(lam)


def controlled(gate: np.ndarray) -> np.ndarray:
    """4x4 controlled version of a 2x2 gate, control on the first qubit."""
    return np.kron(P0, I2) + np.kron(P1, gate)


def _check_qubits(n: int, *qubits: int) -> None:
    for q in qubits:
        if not 0 <= q < n:
            raise ShapeError(f"qubit index {q} out of range for {n} qubits")
    if len(set(qubits)) != len(qubits):
        raise ShapeError(f"qubit indices must be distinct, got {qubits}")


def apply_1q_array(amps: np.ndarray, gate: np.ndarray, qubit: int, n: int) -> np.ndarray:
    psi = amps.reshape(2**qubit, 2, 2 ** (n - qubit - 1))
    return np.einsum("ab,ibj->iaj", gate, psi).reshape(-1)


def apply_2q_array(amps: np.ndarray, gate: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    psi = np.moveaxis(amps.reshape((2,) * n), (qa, qb), (0, 1))
    shape = psi.shape
    out = (gate @ psi.reshape(4, -1)).reshape(shape)
    return np.moveaxis(out, (0, 1), (qa, qb)).reshape(-1)


def apply_1q(state: StateVector, gate: np.ndarray, qubit: int) -> StateVector:
    n = state.num_qubits
    _check_qubits(n, qubit)
    return StateVector(apply_1q_array(state.amps, np.asarray(gate, dtype=complex), qubit, n))


def apply_2q(state: StateVector, gate: np.ndarray, qubit_a: int, qubit_b: int) -> StateVector:
    """Apply a 4x4 gate; ``qubit_a`` is the more significant index of the gate."""
    n = state.num_qubits
    _check_qubits(n, qubit_a, qubit_b)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (4, 4):
        raise ShapeError(f"two-qubit gate must be 4x4, got {gate.shape}")
    return StateVector(apply_2q_array(state.amps, gate, qubit_a, qubit_b, n))


def apply_controlled_rotation(
    state: StateVector, axis: str, theta: float, control: int, target: int
) -> StateVector:
    return apply_2q(state, controlled(rotation(axis, theta)), control, target)


def marginal_probabilities(state: StateVector, qubit: int) -> tuple[float, float]:
    n = state.num_qubits
    _check_qubits(n, qubit)
    probs = (np.abs(state.amps) ** 2).reshape(2**qubit, 2, -1).sum(axis=(0, 2))
    return float(probs[0]), float(probs[1])


def is_unitary(gate: np.ndarray, atol: float = 1e-12) -> bool:
    gate = np.asarray(gate)
    return bool(np.max(np.abs(gate.conj().T @ gate - np.eye(gate.shape[0]))) <= atol)
