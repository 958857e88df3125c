"""Minimal gate-level simulator: pure-statevector and density-matrix backends.

Conventions used throughout the package
---------------------------------------
* Qubit 0 is the least significant bit of a computational-basis index: the
  basis state with index ``b`` assigns qubit ``q`` the bit ``(b >> q) & 1``.
  Bitstrings (e.g. keys of :func:`sample_counts`) are written with qubit
  ``n-1`` as the leftmost character.
* Rotations follow the half-angle convention ``R_P(theta) = exp(-i*theta/2 * P)``
  for P in {X, Y, Z, X⊗X}.
* The depolarizing channel attached to a gate acts on that gate's target
  qubits only: with probability ``p`` the targets are replaced by the
  maximally mixed state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PURE_QUBIT_LIMIT = 24
DENSITY_QUBIT_LIMIT = 12

ROTATION_KINDS = ("RX", "RY", "RZ", "RXX")
GATE_KINDS = ROTATION_KINDS + ("CNOT",)

_TWO_QUBIT = ("RXX", "CNOT")


# ---------------------------------------------------------------------------
# states


@dataclass
class Statevector:
    """Pure state of ``n_qubits`` qubits as 2^n complex amplitudes."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_qubits > PURE_QUBIT_LIMIT:
            raise ValueError(f"statevector backend supports 1..{PURE_QUBIT_LIMIT} qubits, got {self.n_qubits}")
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(f"expected {2**self.n_qubits} amplitudes, got shape {self.amplitudes.shape}")
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"statevector not normalized: |norm - 1| = {abs(norm - 1.0):.3e}")

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())


@dataclass
class DensityMatrix:
    """Mixed state of ``n_qubits`` qubits as a 2^n x 2^n Hermitian matrix."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_qubits > DENSITY_QUBIT_LIMIT:
            raise ValueError(f"density backend supports 1..{DENSITY_QUBIT_LIMIT} qubits, got {self.n_qubits}")
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        dim = 2**self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"expected {dim}x{dim} matrix, got shape {self.matrix.shape}")
        if abs(np.trace(self.matrix).real - 1.0) > 1e-8:
            raise ValueError("density matrix trace deviates from 1")

    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, self.matrix.copy())


def zero_state(n_qubits: int) -> Statevector:
    """|0...0> on ``n_qubits`` qubits."""
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(n_qubits, amps)


def zero_density(n_qubits: int) -> DensityMatrix:
    """|0...0><0...0| on ``n_qubits`` qubits."""
    dim = 2**n_qubits
    mat = np.zeros((dim, dim), dtype=np.complex128)
    mat[0, 0] = 1.0
    return DensityMatrix(n_qubits, mat)


# ---------------------------------------------------------------------------
# gates and circuits


@dataclass(frozen=True)
class Gate:
    """One gate: kind in {RX, RY, RZ, RXX, CNOT}, targets, and an angle.

    The angle is either a fixed float or a variational slot index (exactly
    one of ``angle``/``slot`` is set for rotations; CNOT carries neither).
    For CNOT, ``targets = (control, target)``.
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None
    slot: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind in _TWO_QUBIT else 1
        if len(self.targets) != want:
            raise ValueError(f"{self.kind} takes {want} target(s), got {self.targets}")
        if any(t < 0 for t in self.targets):
            raise ValueError(f"negative qubit index in {self.targets}")
        if want == 2 and self.targets[0] == self.targets[1]:
            raise ValueError(f"{self.kind} targets must be distinct, got {self.targets}")
        if self.kind == "CNOT":
            if self.angle is not None or self.slot is not None:
                raise ValueError("CNOT takes no parameter")
        else:
            if (self.angle is None) == (self.slot is None):
                raise ValueError(f"{self.kind} needs exactly one of angle or slot")
            if self.angle is not None and not math.isfinite(self.angle):
                raise ValueError(f"non-finite gate angle {self.angle!r}")


def rx(q: int, angle: float | None = None, slot: int | None = None) -> Gate:
    return Gate("RX", (q,), angle, slot)


def ry(q: int, angle: float | None = None, slot: int | None = None) -> Gate:
    return Gate("RY", (q,), angle, slot)


def rz(q: int, angle: float | None = None, slot: int | None = None) -> Gate:
    return Gate("RZ", (q,), angle, slot)


def rxx(qa: int, qb: int, angle: float | None = None, slot: int | None = None) -> Gate:
    return Gate("RXX", (qa, qb), angle, slot)


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


@dataclass(frozen=True)
class Circuit:
    """Ordered gate sequence on a fixed register, immutable once built."""

    n_qubits: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        slots = set()
        for g in self.gates:
            if any(t < 0 or t >= self.n_qubits for t in g.targets):
                raise ValueError(f"gate {g.kind} targets {g.targets} outside register of {self.n_qubits}")
            if g.slot is not None:
                slots.add(g.slot)
        if slots and slots != set(range(max(slots) + 1)):
            raise ValueError("parameter slots must be contiguous from 0 and each referenced by a gate")

    @property
    def n_parameters(self) -> int:
        slots = [g.slot for g in self.gates if g.slot is not None]
        return max(slots) + 1 if slots else 0

    def bind(self, params: np.ndarray | None) -> "Circuit":
        """Resolve every slot against ``params``, returning a parameter-free circuit."""
        params = _check_params(self, params)
        bound = []
        for g in self.gates:
            if g.slot is not None:
                bound.append(Gate(g.kind, g.targets, float(params[g.slot]), None))
            else:
                bound.append(g)
        return Circuit(self.n_qubits, tuple(bound))

    def inverse(self) -> "Circuit":
        """Reverse gate order with negated angles; requires a bound circuit."""
        if self.n_parameters:
            raise ValueError("bind parameters before inverting")
        inv = []
        for g in reversed(self.gates):
            if g.kind == "CNOT":
                inv.append(g)
            else:
                inv.append(Gate(g.kind, g.targets, -g.angle, None))
        return Circuit(self.n_qubits, tuple(inv))


def join(*circuits: Circuit) -> Circuit:
    """Concatenate bound circuits on one register."""
    n = circuits[0].n_qubits
    if any(c.n_qubits != n for c in circuits):
        raise ValueError("cannot join circuits on different registers")
    gates: list[Gate] = []
    for c in circuits:
        if c.n_parameters:
            raise ValueError("join requires bound circuits")
        gates.extend(c.gates)
    return Circuit(n, tuple(gates))


def _check_params(circuit: Circuit, params: np.ndarray | None) -> np.ndarray:
    want = circuit.n_parameters
    if params is None:
        params = np.zeros(0)
    params = np.asarray(params, dtype=float)
    if params.shape != (want,):
        raise ValueError(f"circuit takes {want} parameters, got shape {params.shape}")
    if params.size and not np.all(np.isfinite(params)):
        raise ValueError("non-finite parameter value")
    return params


# ---------------------------------------------------------------------------
# gate matrices and kernels


def gate_matrix(kind: str, angle: float | None) -> np.ndarray:
    """2x2 or 4x4 unitary; two-qubit index is 2*bit(first target) + bit(second)."""
    if kind == "CNOT":
        m = np.eye(4, dtype=np.complex128)
        m[[2, 3]] = m[[3, 2]]
        return m
    if angle is None or not math.isfinite(angle):
        raise ValueError(f"{kind} requires a finite angle")
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    if kind == "RXX":
        m = np.eye(4, dtype=np.complex128) * c
        anti = -1j * s
        for k in range(4):
            m[k, 3 - k] = anti
        return m
    raise ValueError(f"unknown gate kind {kind!r}")


def _apply_1q(arr: np.ndarray, n: int, q: int, u: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix on qubit ``q`` of the leading index of ``arr``.

    ``arr`` is C-contiguous with shape (2^n,) or (2^n, K); a new array is
    returned.
    """
    lead = 1 << (n - 1 - q)
    block = arr.size // (2 * lead)
    a = arr.reshape(lead, 2, block)
    out = np.empty_like(arr)
    o = out.reshape(lead, 2, block)
    a0, a1 = a[:, 0, :], a[:, 1, :]
    o[:, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    o[:, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return out


def _apply_2q(arr: np.ndarray, n: int, qa: int, qb: int, u: np.ndarray) -> np.ndarray:
    """Apply a 4x4 matrix on qubits (qa, qb); index convention 2*bit(qa)+bit(qb)."""
    hi, lo = (qa, qb) if qa > qb else (qb, qa)
    a_dim = 1 << (n - 1 - hi)
    b_dim = 1 << (hi - 1 - lo)
    c_dim = arr.size // (a_dim * 4 * b_dim)
    a = arr.reshape(a_dim, 2, b_dim, 2, c_dim)
    out = np.empty_like(arr)
    o = out.reshape(a_dim, 2, b_dim, 2, c_dim)

    def view(t, m):
        bits_a, bits_b = (m >> 1) & 1, m & 1
        if qa == hi:
            return t[:, bits_a, :, bits_b, :]
        return t[:, bits_b, :, bits_a, :]

    blocks = [view(a, m) for m in range(4)]
    for m in range(4):
        view(o, m)[...] = (
            u[m, 0] * blocks[0] + u[m, 1] * blocks[1] + u[m, 2] * blocks[2] + u[m, 3] * blocks[3]
        )
    return out


def apply_matrix_pure(amps: np.ndarray, n: int, targets: tuple[int, ...], u: np.ndarray) -> np.ndarray:
    if len(targets) == 1:
        return _apply_1q(amps, n, targets[0], u)
    return _apply_2q(amps, n, targets[0], targets[1], u)


def apply_matrix_density(mat: np.ndarray, n: int, targets: tuple[int, ...], u: np.ndarray) -> np.ndarray:
    """U rho U^dagger via two row-index applications."""
    rows = apply_matrix_pure(mat, n, targets, u)
    cols = apply_matrix_pure(np.ascontiguousarray(rows.T), n, targets, u.conj())
    return np.ascontiguousarray(cols.T)


def apply_gate(state: Statevector | DensityMatrix, gate: Gate):
    """Apply one bound gate, returning a new state of the same kind."""
    if gate.slot is not None:
        raise ValueError("cannot apply a gate with an unbound parameter")
    if any(t >= state.n_qubits for t in gate.targets):
        raise ValueError(f"gate targets {gate.targets} outside register of {state.n_qubits}")
    u = gate_matrix(gate.kind, gate.angle)
    if isinstance(state, Statevector):
        return Statevector(state.n_qubits, apply_matrix_pure(state.amplitudes, state.n_qubits, gate.targets, u))
    return DensityMatrix(state.n_qubits, apply_matrix_density(state.matrix, state.n_qubits, gate.targets, u))


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing error per gate plus symmetric-per-qubit readout flips.

    ``p1``/``p2`` are applied after every single-/two-qubit gate on its
    targets; ``readout_01`` is P(read 1 | prepared 0), ``readout_10`` the
    reverse.
    """

    p1: float = 0.0
    p2: float = 0.0
    readout_01: float = 0.0
    readout_10: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "readout_01", "readout_10"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"noise probability {name}={v} outside [0, 1]")

    @property
    def has_readout_error(self) -> bool:
        return self.readout_01 > 0.0 or self.readout_10 > 0.0

    def confusion(self) -> np.ndarray:
        """Per-qubit readout matrix mapping true to observed probabilities."""
        return np.array(
            [[1.0 - self.readout_01, self.readout_10], [self.readout_01, 1.0 - self.readout_10]]
        )


def _ptrace_pure(amps: np.ndarray, n: int, keep: list[int]) -> np.ndarray:
    rest = [q for q in range(n) if q not in keep]
    tensor = amps.reshape([2] * n)  # axis i <-> qubit n-1-i
    perm = [n - 1 - q for q in reversed(keep)] + [n - 1 - q for q in reversed(rest)]
    a = np.transpose(tensor, perm).reshape(2 ** len(keep), 2 ** len(rest))
    return a @ a.conj().T


def _ptrace_density(mat: np.ndarray, n: int, keep: list[int]) -> np.ndarray:
    rest = [q for q in range(n) if q not in keep]
    tensor = mat.reshape([2] * (2 * n))
    row = [n - 1 - q for q in reversed(keep)] + [n - 1 - q for q in reversed(rest)]
    col = [n + ax for ax in row]
    m, r = len(keep), len(rest)
    t = np.transpose(tensor, row + col).reshape(2**m, 2**r, 2**m, 2**r)
    return np.einsum("aibi->ab", t)


def partial_trace(state: Statevector | DensityMatrix, keep) -> DensityMatrix:
    """Reduced density matrix on the (sorted) ``keep`` qubits.

    Reduced qubit j corresponds to the j-th smallest kept qubit of the
    original register.
    """
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    if any(q < 0 or q >= state.n_qubits for q in keep):
        raise ValueError(f"keep qubits {keep} outside register of {state.n_qubits}")
    if isinstance(state, Statevector):
        if len(keep) == state.n_qubits:
            rho = np.outer(state.amplitudes, state.amplitudes.conj())
        else:
            rho = _ptrace_pure(state.amplitudes, state.n_qubits, keep)
    else:
        if len(keep) == state.n_qubits:
            rho = state.matrix.copy()
        else:
            rho = _ptrace_density(state.matrix, state.n_qubits, keep)
    return DensityMatrix(len(keep), rho)


def depolarize(mat: np.ndarray, n: int, targets: tuple[int, ...], p: float) -> np.ndarray:
    """Depolarizing channel on ``targets``: rho -> (1-p) rho + p * I/2^k (x) tr_targets(rho)."""
    if p == 0.0:
        return mat
    keep = [q for q in range(n) if q not in targets]
    if not keep:
        mixed = np.eye(2**n, dtype=np.complex128) / 2**n
    else:
        env = _ptrace_density(mat, n, keep)
        mixed = _embed_with_identity(env, n, keep, list(targets))
    return (1.0 - p) * mat + p * mixed


def _embed_with_identity(env: np.ndarray, n: int, keep: list[int], targets: list[int]) -> np.ndarray:
    """Tensor env (on ``keep``) with I/2^k on ``targets``, in register qubit order."""
    k = len(targets)
    m = len(keep)
    out = np.zeros((2**n, 2**n), dtype=np.complex128)
    base = np.zeros(2**m, dtype=np.int64)
    for j, q in enumerate(sorted(keep)):
        base += ((np.arange(2**m) >> j) & 1) << q
    for pattern in range(2**k):
        offset = sum(((pattern >> i) & 1) << q for i, q in enumerate(sorted(targets)))
        sel = base + offset
        out[np.ix_(sel, sel)] = env / 2**k
    return out


# ---------------------------------------------------------------------------
# circuit execution


def run_circuit(
    circuit: Circuit,
    params: np.ndarray | None = None,
    initial: Statevector | DensityMatrix | None = None,
    noise: NoiseModel | None = None,
):
    """Apply all gates in order with bound angles; depolarize after each gate if noisy."""
    params = _check_params(circuit, params)
    if initial is None:
        initial = zero_state(circuit.n_qubits)
    if initial.n_qubits != circuit.n_qubits:
        raise ValueError("initial state register does not match circuit")
    if noise is not None and isinstance(initial, Statevector):
        raise ValueError("noise requires the density-matrix backend")

    if isinstance(initial, Statevector):
        amps = initial.amplitudes.copy()
        for g in circuit.gates:
            angle = params[g.slot] if g.slot is not None else g.angle
            u = gate_matrix(g.kind, angle)
            amps = apply_matrix_pure(amps, circuit.n_qubits, g.targets, u)
        return Statevector(circuit.n_qubits, amps)

    mat = initial.matrix.copy()
    for g in circuit.gates:
        angle = params[g.slot] if g.slot is not None else g.angle
        u = gate_matrix(g.kind, angle)
        mat = apply_matrix_density(mat, circuit.n_qubits, g.targets, u)
        if noise is not None:
            p = noise.p2 if len(g.targets) == 2 else noise.p1
            mat = depolarize(mat, circuit.n_qubits, g.targets, p)
    return DensityMatrix(circuit.n_qubits, mat)


# ---------------------------------------------------------------------------
# measurement


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def apply_readout_confusion(probs: np.ndarray, n: int, noise: NoiseModel) -> np.ndarray:
    """Push a probability vector through the tensor-product readout confusion."""
    c = noise.confusion()
    out = np.ascontiguousarray(probs, dtype=float)
    for q in range(n):
        out = _apply_1q(out, n, q, c)
    return out


def measurement_probabilities(
    state: Statevector | DensityMatrix,
    basis_rotations: list[Gate] | None = None,
    noise: NoiseModel | None = None,
) -> np.ndarray:
    """Outcome distribution after optional pre-measurement rotations and readout flips."""
    if basis_rotations:
        for g in basis_rotations:
            if len(g.targets) != 1:
                raise ValueError("basis rotations must be single-qubit gates")
            state = apply_gate(state, g)
    probs = np.clip(state.probabilities(), 0.0, None)
    probs = probs / probs.sum()
    if noise is not None and noise.has_readout_error:
        probs = apply_readout_confusion(probs, state.n_qubits, noise)
    return probs


def sample_counts(
    state: Statevector | DensityMatrix,
    shots: int,
    basis_rotations: list[Gate] | None = None,
    rng=None,
    noise: NoiseModel | None = None,
) -> dict[str, int]:
    """Sample ``shots`` bitstrings; keys are MSB-first (qubit n-1 leftmost)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = measurement_probabilities(state, basis_rotations, noise)
    counts = _as_rng(rng).multinomial(shots, probs)
    n = state.n_qubits
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c > 0}


def counts_to_frequencies(counts: dict[str, int], n_qubits: int) -> np.ndarray:
    """Empirical frequency vector indexed by basis index."""
    freq = np.zeros(2**n_qubits)
    total = sum(counts.values())
    for bits, c in counts.items():
        if len(bits) != n_qubits or set(bits) - {"0", "1"}:
            raise ValueError(f"malformed bitstring {bits!r} for {n_qubits} qubits")
        freq[int(bits, 2)] = c / total
    return freq


def mitigate_readout(counts: dict[str, int], noise: NoiseModel) -> np.ndarray:
    """Invert the tensor-product readout confusion on empirical frequencies.

    Returns a quasi-probability vector (entries may be slightly negative;
    the sum stays exactly 1 because each per-qubit matrix is column-stochastic).
    """
    n = len(next(iter(counts)))
    det = 1.0 - noise.readout_01 - noise.readout_10
    if det <= 1e-12:
        raise ValueError("singular readout calibration matrix")
    c = noise.confusion()
    cinv = np.array([[c[1, 1], -c[0, 1]], [-c[1, 0], c[0, 0]]]) / det
    quasi = counts_to_frequencies(counts, n)
    for q in range(n):
        quasi = _apply_1q(quasi, n, q, cinv)
    return quasi
