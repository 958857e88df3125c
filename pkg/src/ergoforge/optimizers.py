"""Classical optimization drivers and gradient utilities.

Two minimizers cover the two measurement regimes: BFGS with exact gradients
for deterministic (statevector) costs, and SPSA for stochastic shot-based
costs, where two probe evaluations per iteration suffice regardless of the
parameter count.

Gradients come in two exact flavors:

* :func:`parameter_shift_gradient` - the +-pi/2 shift formula, valid because
  every variational parameter here enters through exactly one Pauli rotation;
  costs 2P evaluations.
* :func:`expectation_with_gradient` / :func:`overlap_with_gradient` - a
  reverse sweep over the circuit that yields the full gradient for the price
  of a few state propagations, used on exact backends where the wavefunction
  is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import Circuit, ROTATION_KINDS, _apply_1q, _apply_2q, _check_params, gate_matrix

_GATE_PAULI = {"RX": "X", "RY": "Y", "RZ": "Z", "RXX": "XX"}
_PAULI_1Q = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
_XX = np.zeros((4, 4), dtype=np.complex128)
for _k in range(4):
    _XX[_k, 3 - _k] = 1.0


@dataclass
class OptimizerConfig:
    """Settings shared by both minimizers.

    method: "BFGS" (exact costs) or "SPSA" (stochastic costs).
    cost_tolerance: BFGS stops when the per-step cost decrease or the
        max-norm of the gradient falls below this.
    spsa_*: gain schedule a_k = a/(k+1+A)^alpha, c_k = c/(k+1)^gamma.
        ``spsa_a=None`` calibrates a from a 10-probe gradient estimate so the
        first step has magnitude ~0.1; ``spsa_A=None`` uses 0.1*max_iterations.
    shots: per-evaluation shot count for sampled costs; None means exact.
    """

    method: str = "BFGS"
    max_iterations: int = 500
    cost_tolerance: float = 1e-6
    spsa_a: float | None = None
    spsa_c: float = 0.1
    spsa_A: float | None = None
    spsa_alpha: float = 0.602
    spsa_gamma: float = 0.101
    spsa_step_clip: float | None = None
    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("BFGS", "SPSA"):
            raise ValueError(f"unknown optimizer method {self.method!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.cost_tolerance <= 0:
            raise ValueError("cost_tolerance must be positive")
        for name in ("spsa_a", "spsa_c", "spsa_A", "spsa_alpha", "spsa_gamma", "spsa_step_clip"):
            v = getattr(self, name)
            if v is not None and v <= 0 and name != "spsa_A":
                raise ValueError(f"{name} must be positive")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")


@dataclass
class OptimizationTrace:
    """Per-iteration cost estimates plus the final iterate."""

    costs: list[float]
    parameters: np.ndarray
    iterations: int
    converged: bool
    n_evaluations: int
    n_calibration_evaluations: int = 0


def _check_finite(value: float, where: str) -> float:
    if not math.isfinite(value):
        raise RuntimeError(f"non-finite cost encountered during {where}")
    return value


# ---------------------------------------------------------------------------
# gradients


def parameter_shift_gradient(cost, params: np.ndarray) -> np.ndarray:
    """Exact gradient via cost evaluations at +-pi/2 shifts of each parameter.

    Valid when each parameter feeds exactly one Pauli-rotation gate (use
    :func:`validate_parameter_shift` against the circuit when in doubt).
    """
    params = np.asarray(params, dtype=float)
    grad = np.empty_like(params)
    for k in range(params.size):
        shifted = params.copy()
        shifted[k] = params[k] + np.pi / 2
        plus = cost(shifted)
        shifted[k] = params[k] - np.pi / 2
        minus = cost(shifted)
        grad[k] = 0.5 * (plus - minus)
    return grad


def validate_parameter_shift(circuit: Circuit) -> None:
    """Require every slot to bind exactly one rotation gate."""
    uses: dict[int, int] = {}
    for g in circuit.gates:
        if g.slot is not None:
            if g.kind not in ROTATION_KINDS:
                raise ValueError(f"slot {g.slot} bound to non-rotation gate {g.kind}")
            uses[g.slot] = uses.get(g.slot, 0) + 1
    for slot, count in uses.items():
        if count != 1:
            raise ValueError(f"slot {slot} bound to {count} gates; shift rule needs exactly one")


def _apply_circuit(amps: np.ndarray, circuit: Circuit, angles: list[float]) -> np.ndarray:
    for g, angle in zip(circuit.gates, angles):
        u = gate_matrix(g.kind, angle)
        if len(g.targets) == 1:
            amps = _apply_1q(amps, circuit.n_qubits, g.targets[0], u)
        else:
            amps = _apply_2q(amps, circuit.n_qubits, g.targets[0], g.targets[1], u)
    return amps


def circuit_amplitudes(circuit: Circuit, params: np.ndarray, initial: np.ndarray) -> np.ndarray:
    """Forward-only statevector propagation on raw amplitude arrays."""
    params = _check_params(circuit, params)
    angles = [params[g.slot] if g.slot is not None else g.angle for g in circuit.gates]
    return _apply_circuit(initial.copy(), circuit, angles)


def _apply_gate_pauli(amps: np.ndarray, n: int, kind: str, targets: tuple[int, ...]) -> np.ndarray:
    pauli = _GATE_PAULI[kind]
    if pauli == "XX":
        return _apply_2q(amps, n, targets[0], targets[1], _XX)
    return _apply_1q(amps, n, targets[0], _PAULI_1Q[pauli])


def _reverse_sweep(circuit: Circuit, angles: list[float], psi: np.ndarray, lam: np.ndarray, weight) -> np.ndarray:
    """Accumulate d/dtheta contributions gate by gate, walking the circuit backwards.

    ``psi`` is the fully evolved state, ``lam`` the co-state seeded by the
    caller (H|psi> for expectations, the overlap target for fidelities);
    ``weight`` maps <lam|P|psi> to the gradient contribution.
    """
    n = circuit.n_qubits
    grad = np.zeros(circuit.n_parameters)
    for g, angle in zip(reversed(circuit.gates), reversed(angles)):
        if g.slot is not None:
            pauli_psi = _apply_gate_pauli(psi, n, g.kind, g.targets)
            grad[g.slot] += weight(np.vdot(lam, pauli_psi))
        u_inv = gate_matrix(g.kind, -angle) if g.kind != "CNOT" else gate_matrix("CNOT", None)
        if len(g.targets) == 1:
            psi = _apply_1q(psi, n, g.targets[0], u_inv)
            lam = _apply_1q(lam, n, g.targets[0], u_inv)
        else:
            psi = _apply_2q(psi, n, g.targets[0], g.targets[1], u_inv)
            lam = _apply_2q(lam, n, g.targets[0], g.targets[1], u_inv)
    return grad


def expectation_with_gradient(
    circuit: Circuit,
    params: np.ndarray,
    initial: np.ndarray,
    apply_observable,
) -> tuple[float, np.ndarray]:
    """Value and gradient of <psi(params)|H|psi(params)> in one reverse sweep.

    ``apply_observable`` maps an amplitude array to H times it.
    """
    params = _check_params(circuit, params)
    angles = [params[g.slot] if g.slot is not None else g.angle for g in circuit.gates]
    psi = _apply_circuit(initial.copy(), circuit, angles)
    lam = apply_observable(psi)
    value = float(np.vdot(psi, lam).real)
    grad = _reverse_sweep(circuit, angles, psi, lam, lambda z: float(z.imag))
    return value, grad


def overlap_with_gradient(
    circuit: Circuit,
    params: np.ndarray,
    initial: np.ndarray,
    target: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Value and gradient of |<target|psi(params)>|^2 in one reverse sweep."""
    params = _check_params(circuit, params)
    angles = [params[g.slot] if g.slot is not None else g.angle for g in circuit.gates]
    psi = _apply_circuit(initial.copy(), circuit, angles)
    c = np.vdot(target, psi)
    value = float(abs(c) ** 2)
    grad = _reverse_sweep(
        circuit, angles, psi, target.copy(), lambda z: float((np.conj(c) * z).imag)
    )
    return value, grad


# ---------------------------------------------------------------------------
# BFGS


def minimize_bfgs(cost, gradient, x0: np.ndarray, config: OptimizerConfig) -> OptimizationTrace:
    """Quasi-Newton descent with Armijo backtracking; deterministic for exact costs.

    Stops when the per-step cost decrease or the gradient max-norm drops
    below ``config.cost_tolerance``, or at ``max_iterations``.  Only
    strictly-decreasing steps are accepted, so the recorded cost sequence is
    non-increasing and the final cost never exceeds the initial one.
    """
    tol = config.cost_tolerance
    x = np.asarray(x0, dtype=float).copy()
    n_eval = 1
    f = _check_finite(float(cost(x)), "BFGS")
    g = np.asarray(gradient(x), dtype=float)
    costs = [f]
    dim = x.size
    hinv = np.eye(dim)
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        if np.max(np.abs(g)) < tol:
            converged = True
            iterations -= 1
            break
        direction = -hinv @ g
        slope = float(g @ direction)
        if slope >= 0:  # stale curvature; fall back to steepest descent
            direction = -g
            slope = float(g @ direction)
        alpha = 1.0
        f_new = None
        while alpha > 1e-14:
            trial = x + alpha * direction
            f_try = _check_finite(float(cost(trial)), "BFGS")
            n_eval += 1
            if f_try <= f + 1e-4 * alpha * slope:  # Armijo sufficient decrease
                f_new = f_try
                break
            alpha *= 0.5
        if f_new is None:
            converged = True  # no descent direction left at this resolution
            iterations -= 1
            break
        x_new = x + alpha * direction
        g_new = np.asarray(gradient(x_new), dtype=float)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12:
            rho_k = 1.0 / sy
            v = np.eye(dim) - rho_k * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho_k * np.outer(s, s)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        costs.append(f)
        if decrease < tol:
            converged = True
            break

    return OptimizationTrace(
        costs=costs,
        parameters=x,
        iterations=iterations,
        converged=converged,
        n_evaluations=n_eval,
    )


# ---------------------------------------------------------------------------
# SPSA


def minimize_spsa(cost, x0: np.ndarray, config: OptimizerConfig, rng=None) -> OptimizationTrace:
    """Simultaneous-perturbation descent: 2 cost probes per iteration.

    The gradient estimate at step k comes from cost evaluations at
    x +- c_k*Delta with Delta a random +-1 vector; the recorded per-iteration
    cost is the mean of the two probes (no extra evaluations are spent).
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    x = np.asarray(x0, dtype=float).copy()
    alpha, gamma = config.spsa_alpha, config.spsa_gamma
    big_a = config.spsa_A if config.spsa_A is not None else 0.1 * config.max_iterations
    c = config.spsa_c
    n_calib = 0

    a = config.spsa_a
    if a is None:
        # Calibrate so the first update has magnitude ~0.1 per component.
        mags = []
        for _ in range(10):
            delta = rng.integers(0, 2, size=x.size) * 2.0 - 1.0
            df = _check_finite(float(cost(x + c * delta)), "SPSA calibration") - _check_finite(
                float(cost(x - c * delta)), "SPSA calibration"
            )
            mags.append(abs(df) / (2.0 * c))
            n_calib += 2
        mean_mag = float(np.mean(mags))
        a = 0.1 * (big_a + 1.0) ** alpha / max(mean_mag, 1e-10)

    costs = []
    n_eval = 0
    for k in range(config.max_iterations):
        ak = a / (k + 1.0 + big_a) ** alpha
        ck = c / (k + 1.0) ** gamma
        delta = rng.integers(0, 2, size=x.size) * 2.0 - 1.0
        f_plus = _check_finite(float(cost(x + ck * delta)), "SPSA")
        f_minus = _check_finite(float(cost(x - ck * delta)), "SPSA")
        n_eval += 2
        ghat = (f_plus - f_minus) / (2.0 * ck) * delta  # delta_i = +-1, so 1/delta = delta
        update = ak * ghat
        if config.spsa_step_clip is not None:
            # guard against catastrophic kicks when probe noise dwarfs the signal
            update = np.clip(update, -config.spsa_step_clip, config.spsa_step_clip)
        x = x - update
        costs.append(0.5 * (f_plus + f_minus))

    return OptimizationTrace(
        costs=costs,
        parameters=x,
        iterations=config.max_iterations,
        converged=True,
        n_evaluations=n_eval,
        n_calibration_evaluations=n_calib,
    )
