"""ergoforge: quantum-battery charging and work-extraction simulation toolkit."""

from .ansatz import (
    AnsatzSpec,
    embed_on_sites,
    hardware_efficient,
    random_parameters,
    rxx_chain,
    trotter_step,
    trotter_step_symmetric,
)
from .ergotropy import (
    ErgotropyRecord,
    PassiveDecomposition,
    analytic_m1_ergotropy,
    correlation,
    default_sites,
    ergotropy_exact,
    passive_decomposition,
    reduced_state,
)
from .hamiltonians import (
    PauliString,
    PauliSumOperator,
    Spectrum,
    build_h0,
    build_h1_tfim,
    diagonalize,
    evolve_exact,
    expectation,
    pauli_sum,
    to_dense,
)
from .optimizers import (
    OptimizationTrace,
    OptimizerConfig,
    expectation_with_gradient,
    minimize_bfgs,
    minimize_spsa,
    overlap_with_gradient,
    parameter_shift_gradient,
)
from .pvqd import PvqdConfig, PvqdTrajectory, pvqd_cost, run_pvqd
from .sim import (
    Circuit,
    DensityMatrix,
    Gate,
    NoiseModel,
    Statevector,
    apply_gate,
    cnot,
    mitigate_readout,
    partial_trace,
    run_circuit,
    rx,
    rxx,
    ry,
    rz,
    sample_counts,
    zero_density,
    zero_state,
)
from .vqergo import (
    ChargedState,
    NoisyBackend,
    PassiveOptResult,
    ShotBackend,
    StatevectorBackend,
    mean_energy,
    optimize_passive,
    vqergo_pipeline,
    work,
)

__version__ = "0.1.0"
