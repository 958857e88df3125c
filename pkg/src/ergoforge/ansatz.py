"""Circuit constructors: hardware-efficient ansatz, XX charging chain, Trotter steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import Circuit, Gate, cnot, rxx, ry, rz


@dataclass(frozen=True)
class AnsatzSpec:
    """Layered variational circuit shape: ``depth`` entangling layers.

    Each layer is a per-qubit RY*RZ*RY rotation triple followed by a CNOT
    ladder on neighboring qubits, with one trailing rotation layer after the
    last ladder.  A single qubit admits no entanglers, so its depth collapses
    to zero and the circuit is one general rotation (3 parameters).
    """

    n_qubits: int
    depth: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("ansatz needs at least one qubit")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @property
    def effective_depth(self) -> int:
        return 0 if self.n_qubits == 1 else self.depth

    @property
    def n_parameters(self) -> int:
        return 3 * self.n_qubits * (self.effective_depth + 1)


def hardware_efficient(spec: AnsatzSpec) -> Circuit:
    """Build the layered ansatz with parameter slots.

    Slots are ordered layer-major, qubit-minor, with the (RY, RZ, RY) triple
    innermost; the CNOT ladder runs control = lower index, left to right.
    """
    n, d = spec.n_qubits, spec.effective_depth
    gates: list[Gate] = []
    slot = 0
    for layer in range(d + 1):
        for q in range(n):
            gates.append(ry(q, slot=slot))
            gates.append(rz(q, slot=slot + 1))
            gates.append(ry(q, slot=slot + 2))
            slot += 3
        if layer < d:
            for q in range(n - 1):
                gates.append(cnot(q, q + 1))
    return Circuit(n, tuple(gates))


def embed_on_sites(circuit: Circuit, n_total: int, sites) -> Circuit:
    """Remap a circuit on its own register to ``sites`` of a larger one."""
    sites = tuple(int(s) for s in sites)
    if len(sites) != circuit.n_qubits or len(set(sites)) != len(sites):
        raise ValueError(f"need {circuit.n_qubits} distinct sites, got {sites}")
    if any(s < 0 or s >= n_total for s in sites):
        raise ValueError(f"sites {sites} outside register of {n_total}")
    gates = tuple(
        Gate(g.kind, tuple(sites[t] for t in g.targets), g.angle, g.slot)
        for g in circuit.gates
    )
    return Circuit(n_total, gates)


def rxx_chain(n: int, J: float, t: float) -> Circuit:
    """Exact field-off charging layer: RXX(-2*J*t) on every neighboring pair.

    The XX bond terms commute, so this single layer reproduces the full
    evolution under the pure coupling Hamiltonian.
    """
    if n < 2:
        raise ValueError("the chain needs at least two sites")
    theta = -2.0 * J * t
    return Circuit(n, tuple(rxx(i, i + 1, angle=theta) for i in range(n - 1)))


def trotter_step(n: int, h: float, J: float, dt: float) -> Circuit:
    """First-order split step: field rotations RZ(-2h*dt), then the RXX ladder."""
    if n < 2:
        raise ValueError("the chain needs at least two sites")
    if dt <= 0:
        raise ValueError("dt must be positive")
    gates = [rz(q, angle=-2.0 * h * dt) for q in range(n)]
    gates += [rxx(i, i + 1, angle=-2.0 * J * dt) for i in range(n - 1)]
    return Circuit(n, tuple(gates))


def trotter_step_symmetric(n: int, h: float, J: float, dt: float) -> Circuit:
    """Symmetric split step: half field, full coupling, half field.

    One order better than :func:`trotter_step` at the same cost per step; the
    dynamics fitting loop uses this by default so that coarse step counts do
    not cap the reachable fidelity.
    """
    if n < 2:
        raise ValueError("the chain needs at least two sites")
    if dt <= 0:
        raise ValueError("dt must be positive")
    half = [rz(q, angle=-h * dt) for q in range(n)]
    middle = [rxx(i, i + 1, angle=-2.0 * J * dt) for i in range(n - 1)]
    return Circuit(n, tuple(half + middle + half))


def random_parameters(count: int, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
    """Independent uniform draws from [-scale, scale]."""
    return rng.uniform(-scale, scale, size=count)
