"""Four-qubit QCNN block: SU(4) convolution, controlled-rotation pooling.

The block reads 16 real values, amplitude-encodes them on 4 qubits and runs

    conv(θ_c1) on (0,1) (2,3) (1,2) (3,0)      weight-shared, 15 angles
    pool(θ_p1) on 0->1, 2->3                    2 angles, survivors {1, 3}
    conv(θ_c2) on (1,3)                         15 angles
    pool(θ_p2) on 1->3                          2 angles, survivor {3}

and returns the marginal (p0, p1) of qubit 3. Pooled-away control qubits stay
in the register but are never touched again.

Flat angle layout (34 entries): conv1[0:15] pool1[15:17] conv2[17:32] pool2[32:34].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qsim
from .errors import EncodingError, ShapeError
from .qsim import CNOT, CNOT_REV, I2, StateVector, Z

N_QUBITS = 4
CONV_PARAMS = 15
POOL_PARAMS = 2
N_PARAMS = 2 * CONV_PARAMS + 2 * POOL_PARAMS  # 34
READOUT_QUBIT = 3

CONV1_PAIRS = ((0, 1), (2, 3), (1, 2), (3, 0))
POOL1 = ((0, 1), (2, 3))
CONV2_PAIRS = ((1, 3),)
POOL2 = ((1, 3),)

CONV1 = slice(0, 15)
POOL1_SLICE = slice(15, 17)
CONV2 = slice(17, 32)
POOL2_SLICE = slice(32, 34)

# (kind, first angle index, qubit pair) in application order
CIRCUIT = (
    *(("conv", 0, pair) for pair in CONV1_PAIRS),
    *(("pool", 15, pair) for pair in POOL1),
    *(("conv", 17, pair) for pair in CONV2_PAIRS),
    *(("pool", 32, pair) for pair in POOL2),
)

_RXP = qsim.rx(np.pi / 2)
_RXM = qsim.rx(-np.pi / 2)
_HALF_MINUS_IZ = -0.5j * Z


@dataclass
class QcnnParams:
    conv1: np.ndarray
    pool1: np.ndarray
    conv2: np.ndarray
    pool2: np.ndarray

    def __post_init__(self):
        for name, size in (("conv1", 15), ("pool1", 2), ("conv2", 15), ("pool2", 2)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise ShapeError(f"{name} needs {size} angles, got shape {arr.shape}")
            setattr(self, name, arr)

    @classmethod
    def from_vector(cls, theta) -> "QcnnParams":
        theta = _as_vector(theta)
        return cls(theta[CONV1], theta[POOL1_SLICE], theta[CONV2], theta[POOL2_SLICE])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.conv1, self.pool1, self.conv2, self.pool2])


def _as_vector(params) -> np.ndarray:
    if isinstance(params, QcnnParams):
        return params.to_vector()
    theta = np.asarray(params, dtype=float)
    if theta.shape != (N_PARAMS,):
        raise ShapeError(f"a QCNN block takes {N_PARAMS} angles, got shape {theta.shape}")
    return theta


def init_qcnn_params(rng: np.random.Generator, std: float = 0.1) -> np.ndarray:
    return rng.normal(0.0, std, N_PARAMS)


# ---------------------------------------------------------------- gate builders
# All builders take angle arrays with arbitrary leading batch axes.

_RZ_SIGN = np.array([[-0.5j, 0.0], [0.0, 0.5j]])
_RZ_MASK = np.eye(2)


def _rz_batch(t):
    t = np.asarray(t, dtype=float)
    return np.exp(t[..., None, None] * _RZ_SIGN) * _RZ_MASK


def _ry_batch(t):
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t / 2), np.sin(t / 2)
    out = np.empty(t.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _rx_batch(t):
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t / 2), -1j * np.sin(t / 2)
    out = np.empty(t.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _kron_batch(a, b):
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(out.shape[:-4] + (4, 4))


def _u3_with_grad(angles):
    """angles[..., (theta, phi, lam)] -> U3 (..., 2, 2), dU3 (..., 3, 2, 2)."""
    a = _rz_batch(angles[..., 1])
    c = _rz_batch(angles[..., 0])
    e = _rz_batch(angles[..., 2])
    left = a @ _RXM
    right = _RXP @ e
    u = left @ c @ right
    d_theta = left @ (_HALF_MINUS_IZ @ c) @ right
    d_phi = _HALF_MINUS_IZ @ u
    d_lam = u @ _HALF_MINUS_IZ
    return u, np.stack([d_theta, d_phi, d_lam], axis=-3)


def _entangler_with_grad(angles):
    """angles[..., (a, b, c)] -> ENT (..., 4, 4), dENT (..., 3, 4, 4)."""
    rz_a = _rz_batch(angles[..., 0])
    ry_b = _ry_batch(angles[..., 1])
    ry_c = _ry_batch(angles[..., 2])
    eye = np.broadcast_to(I2, ry_c.shape)
    tail = CNOT @ _kron_batch(eye, ry_c) @ CNOT_REV
    mid = _kron_batch(rz_a, ry_b)
    ent = CNOT_REV @ mid @ tail
    d_a = CNOT_REV @ _kron_batch(_HALF_MINUS_IZ @ rz_a, ry_b) @ tail
    d_b = CNOT_REV @ _kron_batch(rz_a, -0.5j * qsim.Y @ ry_b) @ tail
    d_c = CNOT_REV @ mid @ CNOT @ _kron_batch(eye, -0.5j * qsim.Y @ ry_c) @ CNOT_REV
    return ent, np.stack([d_a, d_b, d_c], axis=-3)


def entangler(a: float, b: float, c: float) -> np.ndarray:
    """CNOT(b->a) . [Rz(a) x Ry(b)] . CNOT(a->b) . [I x Ry(c)] . CNOT(b->a)."""
    return _entangler_with_grad(np.array([a, b, c], dtype=float))[0]


_U3_SLOTS = np.array([0, 1, 2, 3, 4, 5, 9, 10, 11, 12, 13, 14])


def _conv_batch(p):
    """p (..., 15) -> gate (..., 4, 4), derivatives (..., 15, 4, 4)."""
    u, du = _u3_with_grad(p[..., _U3_SLOTS].reshape(p.shape[:-1] + (4, 3)))
    ua, ub, uc, ud = (u[..., i, :, :] for i in range(4))
    ent, dent = _entangler_with_grad(p[..., 6:9])
    k1 = _kron_batch(ua, ub)
    k2 = _kron_batch(uc, ud)
    ent_k2 = ent @ k2
    k1_ent = k1 @ ent
    ins = lambda m: m[..., None, :, :]  # noqa: E731
    grads = np.concatenate([
        _kron_batch(du[..., 0, :, :, :], ins(ub)) @ ins(ent_k2),
        _kron_batch(ins(ua), du[..., 1, :, :, :]) @ ins(ent_k2),
        ins(k1) @ dent @ ins(k2),
        ins(k1_ent) @ _kron_batch(du[..., 2, :, :, :], ins(ud)),
        ins(k1_ent) @ _kron_batch(ins(uc), du[..., 3, :, :, :]),
    ], axis=-3)
    return k1_ent @ k2, grads


def conv_unitary(p) -> np.ndarray:
    """(U3(p0..2) x U3(p3..5)) . ENT(p6, p7, p8) . (U3(p9..11) x U3(p12..14))."""
    return conv_unitary_with_grad(p)[0]


def conv_unitary_with_grad(p):
    """Return the 4x4 conv gate and its derivative wrt each of the 15 angles."""
    p = np.asarray(p, dtype=float)
    if p.shape != (CONV_PARAMS,):
        raise ShapeError(f"conv gate takes 15 angles, got shape {p.shape}")
    return _conv_batch(p)


def pool_unitary(p) -> np.ndarray:
    """CRz(p0), X on control, CRx(p1), X on control; control is the first qubit."""
    p = np.asarray(p, dtype=float)
    if p.shape != (POOL_PARAMS,):
        raise ShapeError(f"pool gate takes 2 angles, got shape {p.shape}")
    x_c = np.kron(qsim.X, I2)
    return x_c @ qsim.controlled(qsim.rx(p[1])) @ x_c @ qsim.controlled(qsim.rz(p[0]))


def _pool_batch(p):
    # net effect of the four-step sequence: |1><1| x Rz(p0) + |0><0| x Rx(p1)
    rz0 = _rz_batch(p[..., 0])
    rx1 = _rx_batch(p[..., 1])
    gate = np.zeros(p.shape[:-1] + (4, 4), dtype=complex)
    gate[..., :2, :2] = rx1
    gate[..., 2:, 2:] = rz0
    grads = np.zeros(p.shape[:-1] + (2, 4, 4), dtype=complex)
    grads[..., 0, 2:, 2:] = _HALF_MINUS_IZ @ rz0
    grads[..., 1, :2, :2] = -0.5j * qsim.X @ rx1
    return gate, grads


def pool_unitary_with_grad(p):
    p = np.asarray(p, dtype=float)
    if p.shape != (POOL_PARAMS,):
        raise ShapeError(f"pool gate takes 2 angles, got shape {p.shape}")
    return _pool_batch(p)


# ---------------------------------------------------------------- layers

def _check_pair(pair, n):
    a, b = pair
    if not (0 <= a < n and 0 <= b < n) or a == b:
        raise ShapeError(f"invalid qubit pair {pair} for {n} qubits")


def apply_conv_layer(state: StateVector, p, pairs) -> StateVector:
    """Apply the same 15-angle conv gate to every pair, in order."""
    gate = conv_unitary(p)
    for pair in pairs:
        _check_pair(pair, state.num_qubits)
        state = qsim.apply_2q(state, gate, *pair)
    return state


def apply_pool_layer(state: StateVector, p, pools, active=None):
    """Pool each (control, target); returns the new state and surviving qubits."""
    n = state.num_qubits
    active = tuple(range(n)) if active is None else tuple(active)
    controls = [c for c, _ in pools]
    targets = {t for _, t in pools}
    if len(set(controls)) != len(controls) or targets & set(controls):
        raise ShapeError(f"overlapping pools {pools}")
    p = np.asarray(p, dtype=float)
    for c, t in pools:
        _check_pair((c, t), n)
        state = qsim.apply_controlled_rotation(state, "z", p[0], c, t)
        state = qsim.apply_1q(state, qsim.X, c)
        state = qsim.apply_controlled_rotation(state, "x", p[1], c, t)
        state = qsim.apply_1q(state, qsim.X, c)
    surviving = tuple(q for q in active if q not in controls)
    return state, surviving


# ---------------------------------------------------------------- forward / gradient

def _pair_index(a, b, n=N_QUBITS):
    """idx[g, r]: basis index with (qubit a, qubit b) = bits of g, rest = r."""
    rest = [q for q in range(n) if q not in (a, b)]
    idx = np.empty((4, 2 ** (n - 2)), dtype=np.intp)
    for g in range(4):
        for r in range(2 ** (n - 2)):
            bits = {a: g >> 1, b: g & 1}
            bits.update({q: (r >> (len(rest) - 1 - k)) & 1 for k, q in enumerate(rest)})
            idx[g, r] = sum(bits[q] << (n - 1 - q) for q in range(n))
    return idx


_PAIR_INDEX = {pair: _pair_index(*pair) for _, _, pair in CIRCUIT}


def _batch_gates(theta):
    """Gates and derivatives for a (m, 34) angle batch, keyed by first angle index."""
    conv, dconv = _conv_batch(np.stack([theta[:, CONV1], theta[:, CONV2]], axis=1))
    pool, dpool = _pool_batch(np.stack([theta[:, POOL1_SLICE], theta[:, POOL2_SLICE]], axis=1))
    return {
        0: (conv[:, 0], dconv[:, 0]),
        15: (pool[:, 0], dpool[:, 0]),
        17: (conv[:, 1], dconv[:, 1]),
        32: (pool[:, 1], dpool[:, 1]),
    }


def _encode_batch(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != 2**N_QUBITS:
        raise ShapeError(f"QCNN input must have 16 values, got shape {xs.shape[1:]}")
    norms = np.linalg.norm(xs, axis=1)
    if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
        raise EncodingError("cannot amplitude-encode a zero-norm (flat) segment")
    return (xs / norms[:, None]).astype(complex)


def _readout(amps) -> np.ndarray:
    # amps (..., 16); readout qubit is the least significant bit
    probs = amps.real**2 + amps.imag**2
    return probs.reshape(probs.shape[:-1] + (-1, 2)).sum(axis=-2)


def _apply(amps, gate, idx):
    out = np.empty_like(amps)
    out[:, idx] = gate @ amps[:, idx]
    return out


def qcnn_forward_batch(xs, thetas) -> np.ndarray:
    """(m, 16) inputs with (m, 34) angles -> (m, 2) probabilities."""
    return qcnn_jacobian_batch(xs, thetas, want_jacobian=False)[0]


def qcnn_jacobian_batch(xs, thetas, want_jacobian=True):
    """Probabilities (m, 2) and Jacobians (m, 2, 34) for m independent blocks."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1:] != (N_PARAMS,):
        raise ShapeError(f"a QCNN block takes {N_PARAMS} angles, got shape {thetas.shape[1:]}")
    amps = _encode_batch(xs)
    gates = _batch_gates(thetas)
    states = [amps]
    for _, start, pair in CIRCUIT:
        states.append(_apply(states[-1], gates[start][0], _PAIR_INDEX[pair]))
    final = states[-1]
    probs = _readout(final)
    if not want_jacobian:
        return probs, None

    # adjoint of p1 = <psi|P|psi>, P projects the readout qubit onto |1>
    lam = final.copy()
    lam[:, 0::2] = 0.0
    dp1 = np.zeros(thetas.shape)
    for k in range(len(CIRCUIT) - 1, -1, -1):
        _, start, pair = CIRCUIT[k]
        gate, dgates = gates[start]
        idx = _PAIR_INDEX[pair]
        psi = states[k][:, idx]
        lam_t = lam[:, idx]
        overlap = lam_t.conj() @ psi.transpose(0, 2, 1)
        contrib = np.einsum("mjab,mab->mj", dgates, overlap).real
        dp1[:, start:start + dgates.shape[1]] += 2.0 * contrib
        lam = _apply(lam, gate.conj().transpose(0, 2, 1), idx)
    return probs, np.stack([-dp1, dp1], axis=1)


def qcnn_forward(x, params) -> tuple[float, float]:
    theta = _as_vector(params)
    p0, p1 = qcnn_forward_batch(np.asarray(x, dtype=float)[None], theta[None])[0]
    return float(p0), float(p1)


def qcnn_jacobian(x, params):
    """Probabilities (2,) and their Jacobian (2, 34) by reverse-mode sweep."""
    theta = _as_vector(params)
    probs, jac = qcnn_jacobian_batch(np.asarray(x, dtype=float)[None], theta[None])
    return probs[0], jac[0]


def qcnn_gradient(x, params, upstream) -> np.ndarray:
    """Gradient of ``upstream . (p0, p1)`` wrt the 34 angles."""
    _, jac = qcnn_jacobian(x, params)
    return np.asarray(upstream, dtype=float) @ jac


# ---------------------------------------------------------------- elementary tape

def _u3_tape(q, start):
    # rightmost factor of Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lam) acts first
    return [
        ("rot", "z", q, start + 2, 1.0, 0.0),
        ("rot", "x", q, None, 0.0, np.pi / 2),
        ("rot", "z", q, start + 0, 1.0, 0.0),
        ("rot", "x", q, None, 0.0, -np.pi / 2),
        ("rot", "z", q, start + 1, 1.0, 0.0),
    ]


def _conv_tape(qa, qb, s):
    return [
        *_u3_tape(qa, s + 9), *_u3_tape(qb, s + 12),
        ("cx", qb, qa),
        ("rot", "y", qb, s + 8, 1.0, 0.0),
        ("cx", qa, qb),
        ("rot", "z", qa, s + 6, 1.0, 0.0),
        ("rot", "y", qb, s + 7, 1.0, 0.0),
        ("cx", qb, qa),
        *_u3_tape(qa, s + 0), *_u3_tape(qb, s + 3),
    ]


def _crz_tape(c, t, idx):
    # CRz(a) = [I x Rz(a/2)] CX [I x Rz(-a/2)] CX
    return [
        ("cx", c, t),
        ("rot", "z", t, idx, -0.5, 0.0),
        ("cx", c, t),
        ("rot", "z", t, idx, 0.5, 0.0),
    ]


def _pool_tape(c, t, s):
    return [
        *_crz_tape(c, t, s),
        ("x", c),
        ("h", t), *_crz_tape(c, t, s + 1), ("h", t),
        ("x", c),
    ]


def circuit_tape():
    """The QCNN block as CNOT/X/H plus single-angle rotations."""
    tape = []
    for kind, start, (a, b) in CIRCUIT:
        tape.extend(_conv_tape(a, b, start) if kind == "conv" else _pool_tape(a, b, start))
    return tape


def run_tape(amps, tape, theta, shift=None):
    """Run a tape; ``shift=(op_index, delta)`` offsets one rotation's angle."""
    n = N_QUBITS
    for i, op in enumerate(tape):
        if op[0] == "rot":
            _, axis, q, idx, coeff, offset = op
            angle = offset + (coeff * theta[idx] if idx is not None else 0.0)
            if shift is not None and shift[0] == i:
                angle += shift[1]
            amps = qsim.apply_1q_array(amps, qsim.rotation(axis, angle), q, n)
        elif op[0] == "cx":
            amps = qsim.apply_2q_array(amps, CNOT, op[1], op[2], n)
        elif op[0] == "x":
            amps = qsim.apply_1q_array(amps, qsim.X, op[1], n)
        else:
            amps = qsim.apply_1q_array(amps, qsim.H, op[1], n)
    return amps


def _encode(x) -> np.ndarray:
    return _encode_batch(np.asarray(x, dtype=float)[None])[0]


def qcnn_forward_tape(x, params) -> tuple[float, float]:
    theta = _as_vector(params)
    p0, p1 = _readout(run_tape(_encode(x), circuit_tape(), theta))
    return float(p0), float(p1)


def qcnn_gradient_param_shift(x, params, upstream) -> np.ndarray:
    """Parameter-shift gradient, one +-pi/2 pair per rotation occurrence.

    Controlled rotations are expanded into half-angle Rz rotations around
    CNOTs first, so every occurrence has a generator with eigenvalues +-1/2.
    """
    theta = _as_vector(params)
    upstream = np.asarray(upstream, dtype=float)
    amps0 = _encode(x)
    tape = circuit_tape()
    grad = np.zeros(N_PARAMS)
    for i, op in enumerate(tape):
        if op[0] != "rot" or op[3] is None:
            continue
        plus = _readout(run_tape(amps0, tape, theta, (i, np.pi / 2)))
        minus = _readout(run_tape(amps0, tape, theta, (i, -np.pi / 2)))
        grad[op[3]] += op[4] * 0.5 * float(upstream @ (plus - minus))
    return grad
