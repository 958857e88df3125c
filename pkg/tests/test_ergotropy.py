import numpy as np
import pytest

from ergoforge import (
    DensityMatrix,
    Statevector,
    analytic_m1_ergotropy,
    build_h0,
    build_h1_tfim,
    correlation,
    diagonalize,
    ergotropy_exact,
    evolve_exact,
    hardware_efficient,
    passive_decomposition,
    reduced_state,
    run_circuit,
    rxx_chain,
    zero_state,
)
from ergoforge.ansatz import AnsatzSpec, embed_on_sites
from ergoforge.ergotropy import population_form_ergotropy

H, J = 0.6, 2.0


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return Statevector(n, amps / np.linalg.norm(amps))


def charged_tfim(n, t):
    return evolve_exact(zero_state(n), build_h1_tfim(n, H, J), t)


def charged_xx(n, t):
    if t == 0.0:
        return zero_state(n)
    return run_circuit(rxx_chain(n, J, t))


class TestReducedState:
    def test_full_subsystem_is_projector(self):
        psi = random_state(3, 0)
        rho = reduced_state(psi, 3)
        np.testing.assert_allclose(
            rho.matrix, np.outer(psi.amplitudes, psi.amplitudes.conj()), atol=1e-12
        )

    def test_uncharged_battery_any_m(self):
        psi = zero_state(5)
        for m in (1, 3, 5):
            rho = reduced_state(psi, m)
            want = np.zeros((2**m, 2**m))
            want[0, 0] = 1.0
            np.testing.assert_allclose(rho.matrix, want, atol=1e-12)

    def test_two_dominant_eigenvalues_at_peak_time(self):
        # at the first work maximum the six-cell state is nearly rank-2
        rho = reduced_state(charged_tfim(8, 0.4), 6)
        lam = np.sort(np.linalg.eigvalsh(rho.matrix))[::-1]
        assert lam.sum() == pytest.approx(1.0, abs=1e-9)
        assert lam[0] + lam[1] > lam[2:].sum()
        assert lam[0] + lam[1] > 0.999

    def test_m_out_of_range(self):
        with pytest.raises(ValueError):
            reduced_state(zero_state(3), 0)
        with pytest.raises(ValueError):
            reduced_state(zero_state(3), 4)


class TestPassiveDecomposition:
    def test_maximally_mixed_single_cell(self):
        rho = DensityMatrix(1, np.eye(2) / 2)
        dec = passive_decomposition(rho, build_h0(1, H))
        np.testing.assert_allclose(dec.lambdas, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(dec.p, [0.5, 0.5], atol=1e-12)
        assert dec.passive_energy == pytest.approx(0.0, abs=1e-12)

    def test_pure_ground_state(self):
        rho = DensityMatrix(2, np.diag([1.0, 0, 0, 0]).astype(complex))
        dec = passive_decomposition(rho, build_h0(2, H))
        np.testing.assert_allclose(dec.lambdas, [1, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(dec.p, [1, 0, 0, 0], atol=1e-12)

    def test_two_outcome_reordering(self):
        # populations (0.3, 0.7) against levels (-h, +h): lambda reorders, p does not
        rho = DensityMatrix(1, np.diag([0.3, 0.7]).astype(complex))
        dec = passive_decomposition(rho, build_h0(1, H))
        np.testing.assert_allclose(dec.lambdas, [0.7, 0.3], atol=1e-12)
        np.testing.assert_allclose(dec.epsilons, [-H, H], atol=1e-12)
        np.testing.assert_allclose(dec.p, [0.3, 0.7], atol=1e-12)

    def test_lambda_descending_and_normalized(self):
        rho = reduced_state(charged_tfim(6, 0.7), 4)
        dec = passive_decomposition(rho, build_h0(4, H))
        assert np.all(np.diff(dec.lambdas) <= 1e-12)
        assert dec.lambdas.sum() == pytest.approx(1.0, abs=1e-9)
        assert dec.p.sum() == pytest.approx(1.0, abs=1e-9)

    def test_non_hermitian_rejected(self):
        mat = np.array([[0.5, 0.3], [0.0, 0.5]], dtype=complex)
        with pytest.raises(ValueError, match="Hermitian"):
            passive_decomposition(DensityMatrix(1, mat), build_h0(1, H))


class TestErgotropyExact:
    def test_uncharged_battery(self):
        rec = ergotropy_exact(zero_state(4), 2, build_h0(2, H), t=0.0)
        assert rec.work == pytest.approx(0.0, abs=1e-12)
        assert rec.ergotropy == pytest.approx(0.0, abs=1e-12)
        assert rec.efficiency is None

    def test_single_cell_locked_before_crossing(self):
        # work flows in immediately, but one edge cell stays passive early on
        rec = ergotropy_exact(charged_tfim(8, 0.2), 1, build_h0(1, H), t=0.2)
        assert rec.work > 0.1
        assert rec.ergotropy < 1e-12

    def test_full_system_work_equals_ergotropy(self):
        rec = ergotropy_exact(charged_tfim(6, 0.5), 6, build_h0(6, H), t=0.5)
        assert rec.ergotropy == pytest.approx(rec.work, abs=1e-10)
        assert rec.efficiency == pytest.approx(1.0, abs=1e-9)

    def test_formula_equivalence_random_states(self):
        # the energy-based and population-based forms agree on arbitrary states
        for n in (2, 4, 6):
            for m in range(1, n + 1):
                for seed in range(20):
                    psi = random_state(n, 1000 * n + 10 * m + seed)
                    rho = reduced_state(psi, m)
                    h0m = build_h0(m, H)
                    dec = passive_decomposition(rho, h0m)
                    from ergoforge.hamiltonians import expectation

                    energy_form = expectation(h0m, rho) - dec.passive_energy
                    population_form = population_form_ergotropy(dec)
                    assert abs(energy_form - population_form) < 1e-10

    def test_nonnegative_and_efficiency_bounded(self):
        for seed in range(10):
            psi = random_state(5, 50 + seed)
            for m in (1, 2, 4):
                rec = ergotropy_exact(psi, m, build_h0(m, H))
                assert rec.ergotropy >= 0.0
                if rec.efficiency is not None:
                    assert -1e-9 <= rec.efficiency <= 1.0 + 1e-9

    def test_passive_state_has_zero_ergotropy(self):
        # rebuild the passive state as a density matrix and recheck
        rho = reduced_state(charged_tfim(6, 0.6), 3)
        h0m = build_h0(3, H)
        dec = passive_decomposition(rho, h0m)
        spec = diagonalize(h0m)
        passive = (spec.eigenvectors * dec.lambdas) @ spec.eigenvectors.conj().T
        dec2 = passive_decomposition(DensityMatrix(3, passive), h0m)
        assert population_form_ergotropy(dec2) == pytest.approx(0.0, abs=1e-10)

    def test_unitary_invariance_of_passive_energy(self):
        # a unitary on the kept cells shifts the mean energy, never the passive energy
        psi = charged_tfim(6, 0.7)
        m, h0m = 3, build_h0(3, H)
        base = passive_decomposition(reduced_state(psi, m), h0m)
        rng = np.random.default_rng(3)
        scramble = embed_on_sites(hardware_efficient(AnsatzSpec(m, 2)), 6, range(m))
        params = rng.uniform(-np.pi, np.pi, scramble.n_parameters)
        scrambled = run_circuit(scramble, params, initial=psi)
        dec = passive_decomposition(reduced_state(scrambled, m), h0m)
        assert dec.passive_energy == pytest.approx(base.passive_energy, abs=1e-10)


class TestCorrelations:
    def test_product_state_has_no_connected_part(self):
        psi = zero_state(4)
        for ell in (1, 2, 3):
            assert correlation(psi, 0, ell, "Z") == pytest.approx(0.0, abs=1e-12)

    def test_bell_pair_x_correlation(self):
        bell = Statevector(2, np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2))
        assert correlation(bell, 0, 1, "X") == pytest.approx(1.0, abs=1e-12)

    def test_nearest_neighbor_dominance_at_peak(self):
        psi = charged_tfim(8, 0.4)
        near = correlation(psi, 4, 1, "X")
        assert correlation(psi, 4, -1, "X") == pytest.approx(near, rel=0.01)
        far = max(correlation(psi, 4, ell, "X") for ell in (-3, -2, 2, 3))
        assert near > 10 * far
        assert correlation(psi, 4, 1, "Z") < 0.01 * near

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            correlation(zero_state(4), 2, 3, "X")
        with pytest.raises(ValueError):
            correlation(zero_state(4), 0, 1, "Y")


class TestSimplifiedProtocol:
    def test_analytic_boundary_and_values(self):
        assert analytic_m1_ergotropy(np.pi / (4 * J), H, J) == 0.0  # Jt = pi/4 boundary
        assert analytic_m1_ergotropy(np.pi / (2 * J), H, J) == pytest.approx(1.2, abs=1e-12)
        assert analytic_m1_ergotropy(np.pi / (3 * J), H, J) == pytest.approx(0.6, abs=1e-12)

    def test_analytic_matches_oracle_on_grid(self):
        for n in (2, 5):
            for t in np.linspace(0.0, 1.4, 50):
                rec = ergotropy_exact(charged_xx(n, t), 1, build_h0(1, H), t=t)
                assert abs(rec.ergotropy - analytic_m1_ergotropy(t, H, J)) < 1e-10

    def test_product_state_times_store_2h(self):
        # at t = (k + 1/2) pi / J the chain collapses to edge flips: W = E = 2h
        for n in (2, 6, 10):
            for k in (0, 1):
                t = (k + 0.5) * np.pi / J
                psi = charged_xx(n, t)
                for m in range(1, n):
                    rec = ergotropy_exact(psi, m, build_h0(m, H), t=t)
                    assert rec.work == pytest.approx(2 * H, abs=1e-9)
                    assert rec.ergotropy == pytest.approx(2 * H, abs=1e-9)
