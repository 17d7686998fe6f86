import numpy as np
import pytest

from cornerstates.lattice import build_chain_1d, build_corner_3d, single_particle_matrix
from cornerstates.polaron import (EmitterSpec, PolaronSolution,
                                  NearSingularBathShiftError,
                                  assemble_polaron_hamiltonian,
                                  assemble_rwa_hamiltonian, precondition_margin,
                                  solve_selfconsistent)
from conftest import make_single_site_bath


def scalar_fixed_point_bisection(delta, g, omega_a, tol=1e-14):
    """Independent oracle: bisect x = delta*exp(-2 g^2 / (omega_a + x)^2)."""
    def phi(x):
        return x - delta * np.exp(-2.0 * g * g / (omega_a + x) ** 2)
    lo, hi = 0.0, delta
    assert phi(hi) >= 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


class TestSolver:
    def test_zero_coupling_trivial(self, chain60):
        em = EmitterSpec(delta=2.5, g=0.0, site=10)
        sol = solve_selfconsistent(chain60, em)
        assert sol.delta_tilde == 2.5
        assert sol.iterations == 1
        assert np.all(sol.f == 0.0)

    def test_single_site_matches_bisection_oracle(self):
        bath = make_single_site_bath(2.5)
        em = EmitterSpec(delta=2.5, g=0.25, site=0)
        sol = solve_selfconsistent(bath, em, tol=1e-13)
        oracle = scalar_fixed_point_bisection(2.5, 0.25, 2.5)
        assert abs(sol.delta_tilde - oracle) <= 1e-12

    def test_weak_coupling_band(self):
        bath = build_chain_1d(400, 2.5, 1.0)
        em = EmitterSpec(delta=2.5, g=0.25, site=11)
        sol = solve_selfconsistent(bath, em)
        assert 0.9 < sol.delta_tilde / 2.5 < 1.0
        assert sol.f_norm < 0.1

    def test_fixed_point_equations_hold(self, chain60):
        em = EmitterSpec(delta=2.5, g=0.5, site=20)
        sol = solve_selfconsistent(chain60, em, tol=1e-12)
        h = single_particle_matrix(chain60).toarray()
        rhs = np.zeros(chain60.n_sites)
        rhs[20] = em.g
        defect = h @ sol.f + sol.delta_tilde * sol.f - rhs
        assert np.max(np.abs(defect)) < 1e-10
        target = em.delta * np.exp(-2 * sol.f @ sol.f)
        assert abs(target - sol.delta_tilde) <= 1e-12 * em.delta

    def test_delta_tilde_nonincreasing_in_g(self, chain60):
        values = []
        for g in np.linspace(0.0, 1.0, 9):
            em = EmitterSpec(delta=2.5, g=float(g), site=30)
            values.append(solve_selfconsistent(chain60, em).delta_tilde)
        assert np.all(np.diff(values) <= 1e-12)

    def test_delta_tilde_bounded(self, chain60):
        for g in (0.1, 0.5, 1.0):
            em = EmitterSpec(delta=2.5, g=g, site=30)
            sol = solve_selfconsistent(chain60, em)
            assert 0.0 < sol.delta_tilde <= 2.5

    def test_damping_residual_monotone(self):
        # indefinite shifted bath: the map oscillates and damping engages
        bath = build_corner_3d(6, 2.5, 1.0)
        for g in (0.0125, 0.05, 0.125):
            em = EmitterSpec(delta=2.5, g=g, site=bath.index_of((2, 2, 2)))
            sol = solve_selfconsistent(bath, em)
            assert sol.damping_engaged_at is not None
            tail = np.abs(sol.residual_history[sol.damping_engaged_at - 1:])
            assert np.all(np.diff(tail) <= 1e-16)

    def test_near_singular_shift(self):
        # omega_a = 0, J = 1: bath eigenvalue -1 meets delta_tilde = 1 exactly
        bath = build_chain_1d(2, 0.0, 1.0)
        em = EmitterSpec(delta=1.0, g=0.1, site=0)
        with pytest.raises(NearSingularBathShiftError):
            solve_selfconsistent(bath, em)

    def test_precondition_margin(self, chain60):
        assert precondition_margin(chain60, 2.5) == pytest.approx(2.5 - 2.0 + 2.5)


class TestAssembly:
    def test_decoupled_block_diagonal(self, chain60):
        em = EmitterSpec(delta=2.5, g=0.0, site=5)
        sol = solve_selfconsistent(chain60, em)
        h = assemble_polaron_hamiltonian(chain60, em, sol).to_dense()
        assert h[0, 0] == 2.5 / 2
        assert np.all(h[0, 1:] == 0.0)
        bath = single_particle_matrix(chain60).toarray()
        assert np.allclose(h[1:, 1:], bath - 1.25 * np.eye(60))

    def test_hermitian_and_rank_structure(self, chain60):
        em = EmitterSpec(delta=2.5, g=0.6, site=20)
        sol = solve_selfconsistent(chain60, em)
        ham = assemble_polaron_hamiltonian(chain60, em, sol)
        h = ham.to_dense()
        assert np.max(np.abs(h - h.T)) == 0.0
        # photon block minus bath = shift*I plus a rank-one correction
        diff = h[1:, 1:] - single_particle_matrix(chain60).toarray()
        shifted = diff - ham.photon_shift * np.eye(60)
        s = np.linalg.svd(shifted, compute_uv=False)
        assert s[1] < 1e-12 * max(s[0], 1.0)

    def test_single_site_closed_form(self):
        bath = make_single_site_bath(2.5)
        em = EmitterSpec(delta=2.5, g=0.3, site=0)
        sol = solve_selfconsistent(bath, em, tol=1e-13)
        h = assemble_polaron_hamiltonian(bath, em, sol).to_dense()
        dt, f = sol.delta_tilde, sol.f[0]
        expect = np.array([[dt / 2, 2 * dt * f],
                           [2 * dt * f, 2.5 - dt / 2 - 4 * dt * f * f]])
        assert np.allclose(h, expect, atol=1e-14)
        a, b = np.linalg.eigvalsh(h)
        tr, det = np.trace(expect), np.linalg.det(expect)
        disc = np.sqrt(tr * tr - 4 * det)
        assert np.allclose([a, b], [(tr - disc) / 2, (tr + disc) / 2])

    def test_assemblies_identical_when_f_vanishes(self, chain60):
        # the two assemblies coincide exactly at f = 0, delta_tilde = delta
        em = EmitterSpec(delta=2.5, g=0.0, site=20)
        sol = solve_selfconsistent(chain60, em)
        hp = assemble_polaron_hamiltonian(chain60, em, sol).to_dense()
        hr = assemble_rwa_hamiltonian(chain60, em).to_dense()
        assert np.array_equal(hp, hr)

    def test_rwa_matches_polaron_dynamics_at_weak_coupling(self, chain60):
        # off-shell matrix elements differ at O(g) (the coupling vector is a
        # resolvent profile, not a delta), but the dynamics agree to O(g^2)
        from cornerstates.dynamics import initial_excited_state, propagate, time_grid
        em = EmitterSpec(delta=2.5, g=1e-6 * 2.5, site=20)
        sol = solve_selfconsistent(chain60, em, tol=1e-14)
        hp = assemble_polaron_hamiltonian(chain60, em, sol)
        hr = assemble_rwa_hamiltonian(chain60, em)
        grid = time_grid(30.0, 0.1)
        tp = propagate(hp, initial_excited_state(chain60), grid, method="dense")
        tr = propagate(hr, initial_excited_state(chain60), grid, method="dense")
        assert np.max(np.abs(tp.c - tr.c)) <= 1e-10

    def test_rwa_two_site_spectrum_cubic_oracle(self):
        bath = build_chain_1d(2, 2.5, 1.0)
        em = EmitterSpec(delta=2.5, g=1.0, site=0)
        h = assemble_rwa_hamiltonian(bath, em).to_dense()
        # independent oracle: roots of the characteristic polynomial
        roots = np.sort(np.roots(np.poly(h)).real)
        assert np.allclose(np.sort(np.linalg.eigvalsh(h)), roots, atol=1e-9)
        # closed form: delta/2 + {0, +-sqrt(g^2 + J^2)} at resonance
        expect = 1.25 + np.array([-np.sqrt(2.0), 0.0, np.sqrt(2.0)])
        assert np.allclose(np.sort(np.linalg.eigvalsh(h)), expect, atol=1e-12)

    def test_localized_inband_state_even_position(self):
        bath = build_chain_1d(120, 2.5, 1.0)
        em = EmitterSpec(delta=2.5, g=0.25, site=11)  # x0 = 12
        sol = solve_selfconsistent(bath, em)
        h = assemble_polaron_hamiltonian(bath, em, sol).to_dense()
        w, v = np.linalg.eigh(h)
        # a state with large qubit weight, localized photon part, mid-band
        i = np.argmax(v[0, :] ** 2)
        assert v[0, i] ** 2 > 0.5
        lo = 2.5 - 2.0 - sol.delta_tilde / 2
        hi = 2.5 + 2.0 - sol.delta_tilde / 2
        assert lo < w[i] < hi
        photon = v[1:, i]
        ipr = np.sum(photon ** 4) / np.sum(photon ** 2) ** 2
        assert ipr > 0.05

    def test_rejects_unconverged_solution(self, chain60):
        em = EmitterSpec(delta=2.5, g=0.2, site=4)
        bad = PolaronSolution(delta_tilde=2.0, f=np.zeros(60), residual=1.0,
                              iterations=500, converged=False,
                              precondition_ok=True,
                              residual_history=np.ones(1))
        with pytest.raises(ValueError):
            assemble_polaron_hamiltonian(chain60, em, bad)

    def test_matvec_matches_dense(self, chain60):
        em = EmitterSpec(delta=2.5, g=0.4, site=12)
        sol = solve_selfconsistent(chain60, em)
        ham = assemble_polaron_hamiltonian(chain60, em, sol)
        rng = np.random.default_rng(3)
        v = rng.standard_normal(ham.dim) + 1j * rng.standard_normal(ham.dim)
        assert np.max(np.abs(ham.matvec(v) - ham.to_dense() @ v)) < 1e-12


class TestEmitterSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            EmitterSpec(delta=0.0, g=0.1, site=0)
        with pytest.raises(ValueError):
            EmitterSpec(delta=1.0, g=-0.1, site=0)

    def test_site_bounds(self, chain60):
        em = EmitterSpec(delta=1.0, g=0.1, site=60)
        with pytest.raises(ValueError):
            em.validate_against(chain60)
