"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with `pytest -s tests/test_acceptance.py -v` to see the lines as they
complete.  Everything here is deterministic; expected values and
tolerances are frozen.  Parameter conventions:

* couplings quoted as fractions of the qubit splitting; internally J = 1
  (so the 1D family has delta = omega_a = 2.5, the 2D/3D families
  J = 0.4 delta => delta = omega_a = 2.5, g = 0.025 / 0.0125).
* diagonal positions count steps from the corner site (corner = 0).
* criteria 2, 5 and 7 run in the bare rotating-wave frame, where the
  corner state is an exact eigenstate at these deep-RWA couplings; the
  ultrastrong-coupling criteria 3, 4 and the solver criteria 9, 10
  exercise the polaron frame.
"""

import numpy as np
import pytest

import cornerstates as cs
from cornerstates.lattice import build_periodic, periodic_spectrum_deviation, single_particle_matrix
from cornerstates.analysis import (bic_probability, density_from_vector,
                                   directionality_fraction, find_bic_eigenstates,
                                   fit_decay_rate, spectral_bic_projection,
                                   trap_region)
from cornerstates.chainmap import (chain_single_exc_hamiltonian,
                                   lanczos_tridiagonalize, reflection_time_bound)
from cornerstates.dynamics import (SingleExcState, initial_excited_state,
                                   propagate, time_grid)


def report(criterion: str, ok: bool, detail: str):
    print(f"[ACCEPTANCE] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


def rwa(bath, delta, g, site):
    return cs.assemble_rwa_hamiltonian(bath, cs.EmitterSpec(delta=delta, g=g,
                                                            site=site))


def polaron(bath, delta, g, site):
    em = cs.EmitterSpec(delta=delta, g=g, site=site)
    sol = cs.solve_selfconsistent(bath, em)
    return cs.assemble_polaron_hamiltonian(bath, em, sol), sol


def run_plateau(bath, h, em, t_final, dt):
    region = trap_region(bath, em)
    traj = propagate(h, initial_excited_state(bath), time_grid(t_final, dt),
                     region=region.sites)
    return bic_probability(traj, region), region, traj


@pytest.fixture(scope="module")
def chain400():
    return cs.build_chain_1d(400, 2.5, 1.0)


@pytest.fixture(scope="module")
def rhombus30():
    return cs.build_rhombus_2d(30, 2.5, 1.0)


@pytest.fixture(scope="module")
def cube20():
    return cs.build_corner_3d(20, 2.5, 1.0)


def test_criterion_01_dispersion_fidelity():
    devs = {d: periodic_spectrum_deviation(build_periodic(d, l, 2.5, 1.0))
            for d, l in ((1, 10), (2, 8), (3, 6))}
    ok = all(v <= 1e-12 for v in devs.values())
    report("criterion 1: dispersion fidelity",
           ok, "max |eig - omega(k)| = " +
           ", ".join(f"{d}D:{v:.1e}" for d, v in devs.items()))


def test_criterion_02_1d_parity(chain400):
    delta, g = 2.5, 0.25
    out = {}
    for x0 in (12, 11):
        em = cs.EmitterSpec(delta=delta, g=g, site=x0 - 1)
        h = cs.assemble_rwa_hamiltonian(chain400, em)
        res, region, _ = run_plateau(chain400, h, em, t_final=350.0, dt=0.1)
        proj = spectral_bic_projection(find_bic_eigenstates(h, chain400, region))
        out[x0] = (res, proj)
    res12, proj12 = out[12]
    res11, _ = out[11]
    ok = (res12.qualified and res12.value > 0.1 and res11.value < 0.01
          and abs(res12.value - proj12) <= 0.02)
    report("criterion 2: 1D parity (Fig 1b)", ok,
           f"x0=12 plateau {res12.value:.4f} (std {res12.std:.1e}) vs "
           f"projection {proj12:.4f}; x0=11 {res11.value:.5f}")


def test_criterion_03_component_crossover(chain400):
    # P_up / P_gamma trend up to the equal-superposition point; beyond
    # ~0.15 delta the finite corner-state lifetime (criterion 4) depletes
    # any fixed measurement window, so the sweep ends at the crossover.
    grid_g = (0.01, 0.02, 0.05, 0.08, 0.10, 0.12, 0.15)
    pu, pg = [], []
    for gf in grid_g:
        h, _ = polaron(chain400, 2.5, gf * 2.5, 11)
        em = cs.EmitterSpec(delta=2.5, g=gf * 2.5, site=11)
        region = trap_region(chain400, em)
        traj = propagate(h, initial_excited_state(chain400),
                         time_grid(160.0, 0.1), region=region.sites)
        tail = slice(3 * traj.n_steps // 4, None)
        pu.append(float(np.mean(np.abs(traj.c[tail]) ** 2)))
        pg.append(float(np.mean(traj.region_weight[tail])))
    monotone_up = all(b <= a + 1e-12 for a, b in zip(pu, pu[1:]))
    monotone_gam = all(b >= a - 1e-12 for a, b in zip(pg, pg[1:]))
    crossover = min(abs(a - b) for a, b in zip(pu, pg))
    ok = monotone_up and monotone_gam and crossover < 0.05
    report("criterion 3: 1D component crossover (Fig 1c)", ok,
           f"P_up {pu[0]:.3f}->{pu[-1]:.3f} non-increasing={monotone_up}, "
           f"P_gam {pg[0]:.3f}->{pg[-1]:.3f} non-decreasing={monotone_gam}, "
           f"min |P_up - P_gam| = {crossover:.3f}")


def test_criterion_04_usc_decay():
    bath = cs.build_chain_1d(800, 2.5, 1.0)

    def gamma_at(gf):
        h, _ = polaron(bath, 2.5, gf * 2.5, 11)
        em = cs.EmitterSpec(delta=2.5, g=gf * 2.5, site=11)
        region = trap_region(bath, em)
        traj = propagate(h, initial_excited_state(bath), time_grid(720.0, 0.5),
                         region=region.sites)
        return fit_decay_rate(traj.times, traj.n_excit(), t0=100.0, t_end=700.0)

    floor_fits = [gamma_at(gf) for gf in (0.01, 0.02, 0.04)]
    usc_fits = [gamma_at(gf) for gf in (0.10, 0.15, 0.20)]
    floor_ok = all(f.floor_flag and f.gamma < 1e-5 for f in floor_fits)
    usc_rates = [f.gamma for f in usc_fits]
    usc_ok = (all(not f.floor_flag and f.gamma > 1e-5 for f in usc_fits)
              and usc_rates[0] < usc_rates[1] < usc_rates[2])

    # oracle: the fit recovers a constructed rate within 1%
    t = np.linspace(0.0, 600.0, 1000)
    fit = fit_decay_rate(t, 0.8 * np.exp(-2.5e-3 * t), t0=0.0)
    oracle_ok = abs(fit.gamma - 2.5e-3) <= 0.01 * 2.5e-3

    report("criterion 4: USC decay rates (Fig 1d)",
           floor_ok and usc_ok and oracle_ok,
           f"floor gammas {[f'{f.gamma:.1e}' for f in floor_fits]} flagged, "
           f"USC gammas {[f'{g:.2e}' for g in usc_rates]} increasing, "
           f"oracle gamma {fit.gamma:.4e}")


def test_criterion_05_2d_reproduction(rhombus30):
    delta, g = 2.5, 0.025  # J = 0.4 delta, g = 0.01 delta
    results = {}
    hams = {}
    for lab, p in (("A", 1), ("B", 2), ("C", 3), ("D", 5), ("E", 7)):
        em = cs.EmitterSpec(delta=delta, g=g,
                            site=cs.diagonal_site(rhombus30, p))
        h = cs.assemble_rwa_hamiltonian(rhombus30, em)
        res, region, _ = run_plateau(rhombus30, h, em, t_final=2000.0, dt=0.5)
        results[lab] = res
        hams[lab] = (h, region, em)
    trapping_ok = all(results[lab].qualified and results[lab].value > 0.1
                      for lab in "ACDE")
    h, region, _ = hams["B"]
    proj_b = spectral_bic_projection(find_bic_eigenstates(h, rhombus30, region))
    b_ok = (not results["B"].qualified) and proj_b < 0.01

    h, region, em = hams["E"]
    cands = find_bic_eigenstates(h, rhombus30, region)
    dmap = density_from_vector(cands[0].vector, rhombus30)
    ratio = dmap.density[em.site] / dmap.density.max()
    density_ok = len(cands) == 1 and ratio < 0.01

    report("criterion 5: 2D rhombus reproduction (Fig 2c)",
           trapping_ok and b_ok and density_ok,
           "plateaus " + ", ".join(f"{lab}:{results[lab].value:.3f}"
                                   for lab in "ABCDE")
           + f"; B projection {proj_b:.1e}; E density at emitter/max {ratio:.1e}")


def test_criterion_06_2d_directionality():
    bulk = cs.build_rhombus_2d(46, 2.5, 1.0)
    center = bulk.index_of((0, 0))
    fracs = {}
    for tag, delta in (("resonant", 2.5), ("detuned", 2.5 + 3.0)):
        em = cs.EmitterSpec(delta=delta, g=0.05, site=center)
        h = cs.assemble_rwa_hamiltonian(bulk, em)
        grid = time_grid(11.0, 0.5)  # beams developed, fronts far from edges
        traj = propagate(h, initial_excited_state(bulk), grid,
                         snapshot_every=len(grid))
        fracs[tag] = directionality_fraction(traj.final_state, bulk, em,
                                             half_width=2)
    ok = fracs["resonant"] >= 0.8 and fracs["detuned"] <= fracs["resonant"] / 2
    report("criterion 6: 2D directional emission", ok,
           f"resonant {fracs['resonant']:.4f} >= 0.8; "
           f"detuned {fracs['detuned']:.4f} <= half")


def test_criterion_07_3d_reproduction(cube20):
    delta, g = 2.5, 0.0125  # J = 0.4 delta, g = 0.005 delta
    results = {}
    hams = {}
    for lab, p in (("A", 1), ("B", 2), ("C", 3), ("D", 5)):
        em = cs.EmitterSpec(delta=delta, g=g, site=cs.diagonal_site(cube20, p))
        h = cs.assemble_rwa_hamiltonian(cube20, em)
        res, region, _ = run_plateau(cube20, h, em, t_final=1500.0, dt=0.5)
        results[lab] = res
        hams[lab] = (h, region)
    trapping_ok = all(results[lab].qualified and results[lab].value > 0.1
                      for lab in "ACD")
    h, region = hams["B"]
    proj_b = spectral_bic_projection(
        find_bic_eigenstates(h, cube20, region, k=400))
    b_ok = (not results["B"].qualified) and proj_b < 0.01
    report("criterion 7: 3D cube reproduction (Fig 3c)", trapping_ok and b_ok,
           "plateaus " + ", ".join(f"{lab}:{results[lab].value:.3f}"
                                   for lab in "ABCD")
           + f"; B projection {proj_b:.1e}")


def test_criterion_08_chain_oracle(chain400, rhombus30):
    def oracle_error(bath, site, m, g):
        em = cs.EmitterSpec(delta=2.5, g=g, site=site)
        h_lat = cs.assemble_rwa_hamiltonian(bath, em)
        seed = np.zeros(bath.n_sites)
        seed[site] = 1.0
        chain = lanczos_tridiagonalize(single_particle_matrix(bath), seed, m)
        h_ch = chain_single_exc_hamiltonian(chain, em)
        horizon = reflection_time_bound(chain, bath.j_hop)
        grid = time_grid(horizon, 0.1)
        t_lat = propagate(h_lat, initial_excited_state(bath), grid)
        t_ch = propagate(h_ch, initial_excited_state(chain.m), grid)
        return float(np.max(np.abs(t_lat.c - t_ch.c))), horizon

    errs = {
        "1D": oracle_error(chain400, 11, 400, 0.25),
        "2D": oracle_error(rhombus30, cs.diagonal_site(rhombus30, 7), 400, 0.025),
        "3D": oracle_error(cs.build_corner_3d(10, 2.5, 1.0),
                           cs.diagonal_site(cs.build_corner_3d(10, 2.5, 1.0), 3),
                           400, 0.0125),
    }
    ok = all(e <= 1e-6 for e, _ in errs.values())
    report("criterion 8: chain-map oracle equivalence", ok,
           ", ".join(f"{k}: max|dc|={e:.1e} for t<=t*={h:.0f}"
                     for k, (e, h) in errs.items()))


def test_criterion_09_conservation_suite(chain400, rhombus30, cube20):
    cases = [
        ("1D", chain400, 0.25, 11),
        ("2D", rhombus30, 0.025, cs.diagonal_site(rhombus30, 7)),
        ("3D", cube20, 0.0125, cs.diagonal_site(cube20, 1)),
    ]
    details = []
    ok = True
    for tag, bath, g, site in cases:
        h, _ = polaron(bath, 2.5, g, site)
        horizon = 40.0
        grid = time_grid(horizon, 0.1)
        all_sites = np.arange(bath.n_sites)
        traj = propagate(h, initial_excited_state(bath), grid,
                         region=all_sites, method="chebyshev",
                         snapshot_every=len(grid))
        drift = float(np.max(np.abs(traj.norms - 1.0))) / horizon
        total_dev = float(np.max(np.abs(traj.n_excit() - 1.0)))
        end = traj.final_state
        back = propagate(h, SingleExcState(np.conj(end.c), np.conj(end.psi), 0.0),
                         grid, method="chebyshev", snapshot_every=len(grid))
        rec = back.final_state
        fid = abs(np.vdot(initial_excited_state(bath).to_vector(),
                          np.conj(rec.to_vector()))) ** 2
        ok = ok and drift <= 1e-8 and total_dev <= 1e-7 and fid >= 1 - 1e-7
        details.append(f"{tag}: drift {drift:.1e}, N_exc dev {total_dev:.1e}, "
                       f"reversal 1-F {1 - fid:.1e}")
    report("criterion 9: unitarity and conservation", ok, "; ".join(details))


def test_criterion_10_polaron_solver(chain400, rhombus30, cube20):
    presets = [
        ("1D", chain400, 0.25, 11),
        ("2D", rhombus30, 0.025, cs.diagonal_site(rhombus30, 7)),
        ("3D", cube20, 0.0125, cs.diagonal_site(cube20, 1)),
    ]
    residual_ok = True
    bounded_ok = True
    for tag, bath, g, site in presets:
        sol = cs.solve_selfconsistent(bath, cs.EmitterSpec(delta=2.5, g=g,
                                                           site=site))
        residual_ok = residual_ok and sol.converged and sol.residual <= 1e-10 * 2.5
        bounded_ok = bounded_ok and 0.0 < sol.delta_tilde <= 2.5

    small = cs.build_chain_1d(200, 2.5, 1.0)
    dts = [cs.solve_selfconsistent(small, cs.EmitterSpec(delta=2.5, g=float(g),
                                                         site=30)).delta_tilde
           for g in np.linspace(0.0, 1.25, 11)]
    monotone_ok = all(b <= a + 1e-12 for a, b in zip(dts, dts[1:]))
    bounded_ok = bounded_ok and all(0.0 < dt <= 2.5 for dt in dts)

    # scalar single-mode fixed point against a bisection oracle
    from conftest import make_single_site_bath
    bath1 = make_single_site_bath(2.5)
    sol1 = cs.solve_selfconsistent(bath1, cs.EmitterSpec(delta=2.5, g=0.25,
                                                         site=0), tol=1e-13)
    lo, hi = 0.0, 2.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - 2.5 * np.exp(-2 * 0.25 ** 2 / (2.5 + mid) ** 2) > 0:
            hi = mid
        else:
            lo = mid
    oracle_ok = abs(sol1.delta_tilde - 0.5 * (lo + hi)) <= 1e-12

    ok = residual_ok and bounded_ok and monotone_ok and oracle_ok
    report("criterion 10: polaron solver properties", ok,
           f"residuals<=1e-10*delta: {residual_ok}, 0<dt<=delta: {bounded_ok}, "
           f"dt(g) non-increasing: {monotone_ok}, scalar oracle: {oracle_ok}")
