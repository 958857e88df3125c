"""Pauli-sum operators, transverse-field Ising builders, and exact evolution.

The discharged battery Hamiltonian is a uniform longitudinal field,
``-h * sum_i Z_i``; charging switches on a nearest-neighbor XX coupling on the
open chain.  Everything here is dense and capped at 12 qubits, which keeps an
exact spectral solve trivially verifiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import DensityMatrix, Statevector, _apply_1q

DENSE_QUBIT_LIMIT = 12

_PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis; ``letters[q]`` acts on qubit q."""

    letters: str

    def __post_init__(self):
        if not self.letters or set(self.letters) - set("IXYZ"):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @classmethod
    def single(cls, n: int, q: int, letter: str) -> "PauliString":
        if not 0 <= q < n:
            raise ValueError(f"site {q} outside register of {n}")
        letters = ["I"] * n
        letters[q] = letter
        return cls("".join(letters))

    @classmethod
    def pair(cls, n: int, qa: int, qb: int, letter: str) -> "PauliString":
        if not (0 <= qa < n and 0 <= qb < n) or qa == qb:
            raise ValueError(f"bad site pair ({qa}, {qb}) for register of {n}")
        letters = ["I"] * n
        letters[qa] = letter
        letters[qb] = letter
        return cls("".join(letters))


@dataclass(frozen=True)
class PauliSumOperator:
    """Real-weighted sum of Pauli strings (Hermitian by construction)."""

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        seen = set()
        for coeff, ps in self.terms:
            if ps.n_qubits != self.n_qubits:
                raise ValueError("term register size mismatch")
            if not np.isfinite(coeff):
                raise ValueError("non-finite coefficient")
            if ps.letters in seen:
                raise ValueError(f"duplicate Pauli string {ps.letters}")
            seen.add(ps.letters)


def pauli_sum(n_qubits: int, terms) -> PauliSumOperator:
    """Canonicalize (merge duplicates, drop zeros) and build an operator."""
    merged: dict[str, float] = {}
    for coeff, ps in terms:
        merged[ps.letters] = merged.get(ps.letters, 0.0) + float(coeff)
    kept = tuple(
        (c, PauliString(letters)) for letters, c in merged.items() if c != 0.0
    )
    return PauliSumOperator(n_qubits, kept)


def build_h0(n: int, h: float) -> PauliSumOperator:
    """Uniform-field battery Hamiltonian -h * sum_i Z_i."""
    if n < 1:
        raise ValueError("need at least one site")
    if h <= 0:
        raise ValueError("field strength h must be positive")
    return pauli_sum(n, [(-h, PauliString.single(n, i, "Z")) for i in range(n)])


def build_h1_tfim(n: int, h: float, J: float) -> PauliSumOperator:
    """Transverse-field Ising chain -h*sum Z_i - J*sum X_i X_{i+1}, open boundary."""
    if n < 2:
        raise ValueError("the chain needs at least two sites")
    terms = [(-h, PauliString.single(n, i, "Z")) for i in range(n)]
    terms += [(-J, PauliString.pair(n, i, i + 1, "X")) for i in range(n - 1)]
    return pauli_sum(n, terms)


def tfim_parameters(op: PauliSumOperator) -> tuple[float, float]:
    """Recover (h, J) from an operator built by the Ising constructors.

    Raises if the operator is not a uniform field plus a uniform
    nearest-neighbor XX chain (the only quench family supported).
    """
    n = op.n_qubits
    hs, js, other = [], [], []
    for coeff, ps in op.terms:
        nontrivial = [(q, l) for q, l in enumerate(ps.letters) if l != "I"]
        if len(nontrivial) == 1 and nontrivial[0][1] == "Z":
            hs.append((nontrivial[0][0], -coeff))
        elif (
            len(nontrivial) == 2
            and nontrivial[0][1] == nontrivial[1][1] == "X"
            and nontrivial[1][0] == nontrivial[0][0] + 1
        ):
            js.append((nontrivial[0][0], -coeff))
        else:
            other.append(ps.letters)
    if other:
        raise ValueError(f"unsupported terms for an Ising quench: {other}")
    h_vals = {round(v, 15) for _, v in hs}
    j_vals = {round(v, 15) for _, v in js}
    if len(h_vals) > 1 or len(j_vals) > 1:
        raise ValueError("site-dependent couplings are not supported")
    if hs and len(hs) != n:
        raise ValueError("field must act on every site")
    if js and len(js) != n - 1:
        raise ValueError("coupling must cover every nearest-neighbor bond")
    h = h_vals.pop() if h_vals else 0.0
    J = j_vals.pop() if j_vals else 0.0
    return h, J


@dataclass
class Spectrum:
    """Full eigendecomposition: ascending eigenvalues, matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def to_dense(op: PauliSumOperator) -> np.ndarray:
    """2^n x 2^n matrix of the operator (qubit 0 = least significant bit)."""
    n = op.n_qubits
    if n > DENSE_QUBIT_LIMIT:
        raise ValueError(f"dense form capped at {DENSE_QUBIT_LIMIT} qubits, got {n}")
    dim = 2**n
    out = np.zeros((dim, dim), dtype=np.complex128)
    for coeff, ps in op.terms:
        term = np.array([[coeff]], dtype=np.complex128)
        for q in reversed(range(n)):  # kron builds MSB-first
            term = np.kron(term, _PAULI[ps.letters[q]])
        out += term
    return out


def diagonalize(op: PauliSumOperator) -> Spectrum:
    """Full ascending spectrum of the dense operator."""
    vals, vecs = np.linalg.eigh(to_dense(op))
    return Spectrum(vals, vecs)


def evolve_exact(
    initial: Statevector,
    op: PauliSumOperator,
    t: float,
    spectrum: Spectrum | None = None,
) -> Statevector:
    """Spectral time evolution: expand on eigenstates, attach exp(-i E t) phases.

    Pass a precomputed ``spectrum`` when sweeping many times.
    """
    if initial.n_qubits != op.n_qubits:
        raise ValueError("state and operator register sizes differ")
    if spectrum is None:
        spectrum = diagonalize(op)
    coeffs = spectrum.eigenvectors.conj().T @ initial.amplitudes
    amps = spectrum.eigenvectors @ (np.exp(-1j * spectrum.eigenvalues * t) * coeffs)
    return Statevector(initial.n_qubits, amps)


def apply_pauli_string(arr: np.ndarray, n: int, letters: str) -> np.ndarray:
    """Apply a Pauli string to the leading 2^n index of ``arr``; returns a new array."""
    out = arr
    for q, letter in enumerate(letters):
        if letter != "I":
            out = _apply_1q(out, n, q, _PAULI[letter])
    return out.copy() if out is arr else out


def expectation(op: PauliSumOperator, state: Statevector | DensityMatrix) -> float:
    """<state| op |state> (pure) or tr(op rho) (mixed); imaginary residue dropped."""
    if op.n_qubits != state.n_qubits:
        raise ValueError("state and operator register sizes differ")
    n = op.n_qubits
    total = 0.0
    if isinstance(state, Statevector):
        psi = state.amplitudes
        for coeff, ps in op.terms:
            total += coeff * np.vdot(psi, apply_pauli_string(psi, n, ps.letters)).real
    else:
        for coeff, ps in op.terms:
            total += coeff * np.trace(apply_pauli_string(state.matrix, n, ps.letters)).real
    return float(total)


def z_field_diagonal(n: int, sites, h: float) -> np.ndarray:
    """Diagonal of -h * sum_{i in sites} Z_i over the full 2^n basis.

    This is the workhorse for energy estimates: the battery Hamiltonian is
    diagonal in the computational basis, so expectations reduce to weighted
    outcome probabilities.
    """
    idx = np.arange(2**n)
    diag = np.zeros(2**n)
    for q in sites:
        diag -= h * (1.0 - 2.0 * ((idx >> q) & 1))
    return diag
