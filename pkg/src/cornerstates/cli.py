"""Config-driven experiment runner with reproducible, manifest-stamped output.

A run is described by a flat YAML mapping (types per
``ExperimentConfig``).  Energies are declared either in units of the
hopping J (``units: J``, with j_hop = 1) or of the qubit splitting
(``units: Delta``, with delta = 1); everything is normalized to J-units
internally and times are in 1/J.  All algorithms in the pipeline are
deterministic, so identical configs produce bit-identical CSV numbers.

Subcommands: run, sweep, validate, chain-map, spectrum.
Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .lattice import (BathGraph, build_chain_1d, build_rhombus_2d,
                      build_corner_3d, build_periodic, bandwidth,
                      diagonal_site, periodic_spectrum_deviation,
                      export_edges_csv, export_sites_csv)
from .polaron import (EmitterSpec, NearSingularBathShiftError,
                      NonConvergenceError, assemble_polaron_hamiltonian,
                      assemble_rwa_hamiltonian, export_coupling_csv,
                      export_polaron_json, precondition_margin,
                      solve_selfconsistent)
from .dynamics import (StepNotConvergedError, initial_excited_state,
                       propagate, time_grid)
from .chainmap import (lanczos_tridiagonalize, chain_single_exc_hamiltonian,
                       reflection_time_bound, export_chain_csv)
from .analysis import (NonPositiveDataError, WindowTooShortError,
                       bic_probability, export_candidates_json,
                       export_decay_json, export_density_csv, find_bic_eigenstates,
                       fit_decay_rate, photon_density_map, region_weight_series,
                       spectral_bic_projection, trap_region)
from . import report

GEOMETRIES = ("chain1d", "rhombus2d", "corner3d")
ENERGY_KEYS = ("omega_a", "j_hop", "delta", "g")
TIME_KEYS = ("dt", "t_final", "fit_t0")
SWEEP_AXES = {"g": "g", "delta": "delta", "x0": "emitter_position",
              "emitter_position": "emitter_position", "M": "chain_modes",
              "chain_modes": "chain_modes"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    geometry: str
    extent: int
    emitter_position: int
    units: str = "J"
    omega_a: float = 2.5
    j_hop: float = 1.0
    delta: float = 2.5
    g: float = 0.25
    frame: str = "polaron"
    dt: float = 0.1
    t_final: float = 350.0
    tol: float = 1e-9
    method: str = "auto"
    snapshot_every: int = 100
    chain_enabled: bool = False
    chain_modes: int = 400
    bic_report: bool = True
    fit_t0: float | None = None
    deterministic: bool = True
    label: str = "run"
    # provenance of a unit conversion; lets the inverse conversion restore
    # the source bit-exactly (float division is not losslessly invertible)
    converted_from: "ExperimentConfig | None" = dataclasses.field(
        default=None, compare=False, repr=False)

    def validated(self) -> "ExperimentConfig":
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry must be one of {GEOMETRIES}")
        if self.units not in ("J", "Delta"):
            raise ConfigError("units must be 'J' or 'Delta'")
        if self.units == "J" and self.j_hop != 1.0:
            raise ConfigError("J-units config must declare j_hop = 1.0")
        if self.units == "Delta" and self.delta != 1.0:
            raise ConfigError("Delta-units config must declare delta = 1.0")
        if self.frame not in ("rwa", "polaron"):
            raise ConfigError("frame must be 'rwa' or 'polaron'")
        if self.extent < 2:
            raise ConfigError("extent must be >= 2")
        if self.dt <= 0 or self.t_final <= self.dt:
            raise ConfigError("need 0 < dt < t_final")
        if not self.deterministic:
            raise ConfigError(
                "all algorithms are deterministic; deterministic=false is not available")
        if self.g < 0 or self.delta <= 0 or self.j_hop <= 0:
            raise ConfigError("couplings must be g >= 0, delta > 0, j_hop > 0")
        return self


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {f.name: getattr(cfg, f.name)
            for f in dataclasses.fields(ExperimentConfig)
            if f.name != "converted_from"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    known.discard("converted_from")
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"geometry", "extent", "emitter_position"} - set(raw)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    try:
        cfg = ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validated()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a flat key-value mapping")
    return config_from_dict(raw)


def _numeric_convert(cfg: ExperimentConfig, target: str) -> ExperimentConfig:
    scale = cfg.j_hop if target == "J" else cfg.delta
    changes = {k: getattr(cfg, k) / scale for k in ENERGY_KEYS}
    for k in TIME_KEYS:
        v = getattr(cfg, k)
        if v is not None:
            changes[k] = v * scale
    changes["units"] = target
    changes["converted_from"] = cfg
    return dataclasses.replace(cfg, **changes)


def convert_units(cfg: ExperimentConfig, target: str) -> ExperimentConfig:
    """Re-express a config in 'J' or 'Delta' units (losslessly invertible)."""
    if target not in ("J", "Delta"):
        raise ConfigError("target units must be 'J' or 'Delta'")
    if cfg.units == target:
        return cfg
    src = cfg.converted_from
    if src is not None and src.units == target \
            and _numeric_convert(src, cfg.units) == cfg:
        return src
    return _numeric_convert(cfg, target)


def build_bath(cfg: ExperimentConfig) -> BathGraph:
    cfg = convert_units(cfg, "J")
    builder = {"chain1d": build_chain_1d, "rhombus2d": build_rhombus_2d,
               "corner3d": build_corner_3d}[cfg.geometry]
    return builder(cfg.extent, cfg.omega_a, cfg.j_hop)


def _fmt(x) -> str:
    return repr(float(x))


def _write_observables(path, traj, region):
    weights = region_weight_series(traj, region)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_c", "im_c", "norm", "n_excit", "p_up", "p_gamma"])
        for i, t in enumerate(traj.times):
            p_up = abs(traj.c[i]) ** 2
            w.writerow([_fmt(t), _fmt(traj.c[i].real), _fmt(traj.c[i].imag),
                        _fmt(traj.norms[i]), _fmt(p_up + weights[i]),
                        _fmt(p_up), _fmt(weights[i])])


def _manifest(cfg, cfg_j, bath, extras):
    conventions = {
        "energy_units_internal": "J = 1; times in 1/J",
        "rhombus": "sites with |x|+|y| <= L; count 2L^2+2L+1; corner at (-L, 0)",
        "cube": "sites 1..L per axis, bonds e1,e2,e3,e1+e2+e3; corner at (1,1,1)",
        "positions": "1D: site coordinate x0; 2D/3D: steps from the corner "
                     "site along the diagonal (corner site = 0)",
        "trap_region": "corner-adapted coordinates <= emitter's",
        "plateau_qualification_std": 0.01,
        "gamma_reliability_floor": 1e-5,
        "observable_frame": "states and populations in the propagation frame "
                            "(polaron frame when frame=polaron)",
        "snapshot_thinning": cfg.snapshot_every,
    }
    return {
        "package": "cornerstates",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config_input": config_to_dict(cfg),
        "config_j_units": config_to_dict(cfg_j),
        "n_sites": bath.n_sites,
        "bandwidth": bandwidth(bath),
        "conventions": conventions,
        **extras,
    }


def run(cfg: ExperimentConfig, out_dir, figures: bool = True,
        export_graph: bool = False) -> dict:
    """Execute build -> solve -> assemble -> propagate -> analyze -> write."""
    cfg = cfg.validated()
    cfg_j = convert_units(cfg, "J")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    bath = build_bath(cfg_j)
    site = diagonal_site(bath, cfg_j.emitter_position)
    emitter = EmitterSpec(delta=cfg_j.delta, g=cfg_j.g, site=site)
    region = trap_region(bath, emitter)

    outputs = []
    extras = {"emitter_site_index": site,
              "emitter_coords": [int(c) for c in bath.sites[site]],
              "trap_region_size": len(region)}

    if cfg_j.frame == "polaron":
        sol = solve_selfconsistent(bath, emitter)
        h = assemble_polaron_hamiltonian(bath, emitter, sol)
        export_polaron_json(sol, out / "polaron.json")
        export_coupling_csv(sol, bath, out / "coupling_f.csv")
        outputs += ["polaron.json", "coupling_f.csv"]
        extras["delta_tilde"] = sol.delta_tilde
        extras["polaron_iterations"] = sol.iterations
        extras["polaron_precondition_margin"] = precondition_margin(
            bath, sol.delta_tilde)
    else:
        sol = None
        h = assemble_rwa_hamiltonian(bath, emitter)

    grid = time_grid(cfg_j.t_final, cfg_j.dt)
    traj = propagate(h, initial_excited_state(bath), grid, tol=cfg_j.tol,
                     method=cfg_j.method, snapshot_every=cfg_j.snapshot_every,
                     region=region.sites)

    _write_observables(out / "observables.csv", traj, region)
    outputs.append("observables.csv")

    np.savez_compressed(out / "snapshots.npz", times=traj.times[traj.snapshot_steps],
                        psi=traj.snapshots, c=traj.c[traj.snapshot_steps])
    with open(out / "snapshots.json", "w") as fh:
        json.dump({"format": "npz: times (n,), c (n,), psi (n, n_sites) complex",
                   "geometry": cfg_j.geometry, "extent": cfg_j.extent,
                   "emitter_site_index": site,
                   "parameters": {k: getattr(cfg_j, k) for k in
                                  ("omega_a", "j_hop", "delta", "g", "frame")},
                   "grid": {"dt": cfg_j.dt, "t_final": cfg_j.t_final,
                            "tol": cfg_j.tol, "method": cfg_j.method,
                            "snapshot_every": cfg_j.snapshot_every},
                   "n_snapshots": len(traj.snapshot_steps),
                   "site_order": "matches sites.csv / build order"}, fh, indent=2)
    outputs += ["snapshots.npz", "snapshots.json"]

    final = traj.final_state
    dmap = photon_density_map(final, bath)
    export_density_csv(dmap, bath, out / "density_map.csv")
    outputs.append("density_map.csv")

    plateau = bic_probability(traj, region)
    extras["p_bic"] = plateau.value
    extras["plateau_qualified"] = plateau.qualified
    extras["plateau_std"] = plateau.std

    nexc = traj.n_excit()
    fit_t0 = cfg_j.fit_t0 if cfg_j.fit_t0 is not None else cfg_j.t_final / 4.0
    try:
        fit = fit_decay_rate(traj.times, nexc, t0=fit_t0)
        export_decay_json(fit, out / "decay_fit.json")
        outputs.append("decay_fit.json")
    except (WindowTooShortError, NonPositiveDataError) as exc:
        fit = None
        extras["decay_fit_skipped"] = str(exc)

    candidates = []
    if cfg_j.bic_report:
        candidates = find_bic_eigenstates(h, bath, region)
        export_candidates_json(candidates, out / "bic_candidates.json")
        outputs.append("bic_candidates.json")
        extras["spectral_p_bic"] = spectral_bic_projection(candidates)

    chain = None
    if cfg_j.chain_enabled:
        seed = np.zeros(bath.n_sites)
        seed[site] = 1.0
        from .lattice import single_particle_matrix
        chain = lanczos_tridiagonalize(single_particle_matrix(bath), seed,
                                       min(cfg_j.chain_modes, bath.n_sites))
        export_chain_csv(chain, out / "chain.csv")
        outputs.append("chain.csv")
        extras["chain_m_eff"] = chain.m
        extras["chain_reflection_time_bound"] = reflection_time_bound(
            chain, bath.j_hop)

    if export_graph:
        export_edges_csv(bath, out / "edges.csv")
        export_sites_csv(bath, out / "sites.csv")
        outputs += ["edges.csv", "sites.csv"]

    if figures:
        weights = region_weight_series(traj, region)
        report.save_population_figure(
            traj.times, nexc, np.abs(traj.c) ** 2, weights,
            out / "populations.png")
        report.save_density_figure(dmap, bath, out / "density_final.png",
                                   emitter_site=site)
        outputs += ["populations.png", "density_final.png"]
        if fit is not None:
            report.save_decay_figure(traj.times, nexc, fit, out / "decay_fit.png")
            outputs.append("decay_fit.png")
        if chain is not None:
            report.save_chain_figure(chain, out / "chain.png")
            outputs.append("chain.png")

    extras["outputs"] = outputs
    manifest = _manifest(cfg, cfg_j, bath, extras)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def _sweep_point(args):
    cfg_dict, axis_field, value, figures = args
    cfg = ExperimentConfig(**cfg_dict)
    if axis_field in ("emitter_position", "chain_modes"):
        value = int(value)
    cfg = dataclasses.replace(cfg, **{axis_field: value})
    cfg = cfg.validated()
    cfg_j = convert_units(cfg, "J")
    bath = build_bath(cfg_j)
    site = diagonal_site(bath, cfg_j.emitter_position)
    emitter = EmitterSpec(delta=cfg_j.delta, g=cfg_j.g, site=site)
    region = trap_region(bath, emitter)
    sol = solve_selfconsistent(bath, emitter) if cfg_j.frame == "polaron" else None
    h = (assemble_polaron_hamiltonian(bath, emitter, sol) if sol is not None
         else assemble_rwa_hamiltonian(bath, emitter))
    grid = time_grid(cfg_j.t_final, cfg_j.dt)
    traj = propagate(h, initial_excited_state(bath), grid, tol=cfg_j.tol,
                     method=cfg_j.method, snapshot_every=cfg_j.snapshot_every,
                     region=region.sites)
    plateau = bic_probability(traj, region)
    n = traj.n_steps
    tail = slice(3 * n // 4, None)
    p_up = float(np.mean(np.abs(traj.c[tail]) ** 2))
    p_gamma = float(np.mean(region_weight_series(traj, region)[tail]))
    fit_t0 = cfg_j.fit_t0 if cfg_j.fit_t0 is not None else cfg_j.t_final / 4.0
    try:
        fit = fit_decay_rate(traj.times, traj.n_excit(), t0=fit_t0)
        gamma, floor = fit.gamma, fit.floor_flag
    except (WindowTooShortError, NonPositiveDataError):
        gamma, floor = float("nan"), True
    row = {"value": value, "p_bic": plateau.value,
           "plateau_qualified": plateau.qualified, "plateau_std": plateau.std,
           "p_up": p_up, "p_gamma": p_gamma, "gamma": gamma,
           "floor_flag": floor}
    if axis_field == "chain_modes":
        row["oracle_error"] = _chain_oracle_error(cfg_j, bath, emitter, sol, h)
    return row


def _chain_oracle_error(cfg_j, bath, emitter, sol, h_lattice):
    """max |c_chain(t) - c_lattice(t)| for t within the reflection bound."""
    from .lattice import single_particle_matrix
    seed = np.zeros(bath.n_sites)
    seed[emitter.site] = 1.0
    m = min(cfg_j.chain_modes, bath.n_sites)
    chain = lanczos_tridiagonalize(single_particle_matrix(bath), seed, m)
    h_chain = chain_single_exc_hamiltonian(chain, emitter, sol)
    horizon = min(reflection_time_bound(chain, bath.j_hop), cfg_j.t_final)
    grid = time_grid(horizon, cfg_j.dt)
    if len(grid) < 2:
        return float("nan")
    t_lat = propagate(h_lattice, initial_excited_state(bath), grid,
                      tol=cfg_j.tol, method=cfg_j.method,
                      snapshot_every=max(len(grid) - 1, 1))
    t_ch = propagate(h_chain, initial_excited_state(chain.m), grid,
                     tol=cfg_j.tol, method=cfg_j.method,
                     snapshot_every=max(len(grid) - 1, 1))
    return float(np.max(np.abs(t_lat.c - t_ch.c)))


def sweep(cfg: ExperimentConfig, axis: str, values, out_dir,
          workers: int = 1, figures: bool = True) -> list[dict]:
    if axis not in SWEEP_AXES:
        raise ConfigError(
            f"sweep axis must be one of {sorted(set(SWEEP_AXES))}")
    field = SWEEP_AXES[axis]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config_to_dict(cfg), field, v, figures) for v in values]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]

    columns = list(rows[0].keys())
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], (bool, int)) else _fmt(r[c])
                        for c in columns])
    manifest = _manifest(cfg, convert_units(cfg, "J"), build_bath(cfg),
                         {"sweep_axis": axis, "sweep_values": list(map(float, values)),
                          "outputs": ["sweep.csv"]})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    if figures:
        report.save_sweep_figure([r["value"] for r in rows], rows, axis,
                                 out / "sweep.png")
    return rows


def validate(cfg: ExperimentConfig) -> list[dict]:
    """Run the invariant suite relevant to the config; returns check rows."""
    cfg = cfg.validated()
    cfg_j = convert_units(cfg, "J")
    checks = []

    def check(name, ok, detail):
        checks.append({"name": name, "ok": bool(ok), "detail": detail})

    back = convert_units(convert_units(cfg, "Delta" if cfg.units == "J" else "J"),
                         cfg.units)
    check("unit_round_trip", back == cfg,
          "J<->Delta conversion round-trips the config exactly")

    dim = {"chain1d": 1, "rhombus2d": 2, "corner3d": 3}[cfg_j.geometry]
    per = build_periodic(dim, {1: 12, 2: 6, 3: 4}[dim], cfg_j.omega_a, cfg_j.j_hop)
    dev = periodic_spectrum_deviation(per)
    check("dispersion", dev <= 1e-12,
          f"periodic spectrum vs closed form: max deviation {dev:.2e}")

    bath = build_bath(cfg_j)
    site = diagonal_site(bath, cfg_j.emitter_position)
    emitter = EmitterSpec(delta=cfg_j.delta, g=cfg_j.g, site=site)

    sol = None
    if cfg_j.frame == "polaron":
        try:
            sol = solve_selfconsistent(bath, emitter)
            margin = precondition_margin(bath, sol.delta_tilde)
            check("polaron_residual", sol.residual <= 1e-10 * cfg_j.delta,
                  f"fixed-point residual {sol.residual:.2e}")
            check("polaron_precondition", margin > 0,
                  f"omega_a - W/2 + delta_tilde = {margin:.3g} "
                  + ("(> 0: shifted bath positive definite)" if margin > 0 else
                     "(<= 0: positivity not guaranteed; solver relies on the "
                     "finite lattice spectrum avoiding -delta_tilde)"))
        except (NonConvergenceError, NearSingularBathShiftError) as exc:
            check("polaron_residual", False, f"solver failed: {exc}")

    h = (assemble_polaron_hamiltonian(bath, emitter, sol) if sol is not None
         else assemble_rwa_hamiltonian(bath, emitter))
    rng = np.random.default_rng(7)
    defect = 0.0
    for _ in range(3):
        u = rng.standard_normal(h.dim)
        v = rng.standard_normal(h.dim)
        defect = max(defect, abs(u @ h.matvec(v) - v @ h.matvec(u)))
    check("hermiticity", defect <= 1e-10 * max(cfg_j.delta, 1.0),
          f"max symmetry defect over probes {defect:.2e}")

    horizon = min(10.0, cfg_j.t_final)
    grid = time_grid(horizon, min(cfg_j.dt, 0.1))
    traj = propagate(h, initial_excited_state(bath), grid, tol=cfg_j.tol,
                     method=cfg_j.method, snapshot_every=len(grid))
    drift = np.max(np.abs(traj.norms - 1.0)) / horizon
    check("norm_drift", drift <= 1e-8,
          f"norm drift per unit time {drift:.2e}")
    final = traj.final_state
    total = abs(final.c) ** 2 + float(np.sum(np.abs(final.psi) ** 2))
    check("excitation_conservation", abs(total - 1.0) <= 1e-8,
          f"total excitation {total:.12f}")
    return checks


# ---------------------------------------------------------------------------
# presets reproducing the three experiment families

def preset_runs(name: str) -> list[ExperimentConfig]:
    if name == "fig1":
        base = dict(geometry="chain1d", extent=400, units="J", omega_a=2.5,
                    j_hop=1.0, delta=2.5, g=0.25, frame="polaron", dt=0.1,
                    t_final=350.0, snapshot_every=500, bic_report=True)
        return [ExperimentConfig(emitter_position=12, label="x0_12", **base),
                ExperimentConfig(emitter_position=11, label="x0_11", **base)]
    if name == "fig2":
        base = dict(geometry="rhombus2d", extent=30, units="Delta", omega_a=1.0,
                    j_hop=0.4, delta=1.0, g=0.01, frame="polaron", dt=0.2,
                    t_final=800.0, snapshot_every=500, bic_report=True)
        return [ExperimentConfig(emitter_position=p, label=f"pos_{lab}", **base)
                for lab, p in (("A", 1), ("B", 2), ("C", 3), ("D", 5), ("E", 7))]
    if name == "fig3":
        base = dict(geometry="corner3d", extent=20, units="Delta", omega_a=1.0,
                    j_hop=0.4, delta=1.0, g=0.005, frame="polaron", dt=0.2,
                    t_final=600.0, snapshot_every=1000, bic_report=True)
        return [ExperimentConfig(emitter_position=p, label=f"pos_{lab}", **base)
                for lab, p in (("A", 1), ("B", 2), ("C", 3), ("D", 5))]
    raise ConfigError(f"unknown preset {name!r} (available: fig1, fig2, fig3)")


def _resolve_configs(args) -> list[ExperimentConfig]:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.preset:
        return preset_runs(args.preset)
    if args.config:
        return [load_config(args.config)]
    raise ConfigError("one of --config or --preset is required")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cornerstates",
        description="Spontaneous emission and qubit-photon corner states on "
                    "photonic lattices with open boundaries")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset=True):
        p.add_argument("--config", type=Path, help="YAML config file")
        if preset:
            p.add_argument("--preset", choices=("fig1", "fig2", "fig3"),
                           help="shipped experiment family")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory")
        p.add_argument("--workers", type=int, default=1)
        fig = p.add_mutually_exclusive_group()
        fig.add_argument("--figures", dest="figures", action="store_true",
                         default=True)
        fig.add_argument("--no-figures", dest="figures", action="store_false")

    prun = sub.add_parser("run", help="execute configured run(s)")
    common(prun)
    prun.add_argument("--export-graph", action="store_true",
                      help="also write edge-list and site-coordinate CSVs")
    psweep = sub.add_parser("sweep", help="parameter sweep")
    common(psweep)
    psweep.add_argument("--axis", required=True, help="g | delta | x0 | M")
    psweep.add_argument("--values", required=True,
                        help="comma-separated numeric values")
    pval = sub.add_parser("validate", help="run the invariant suite")
    common(pval)
    pchain = sub.add_parser("chain-map", help="export Lanczos chain coefficients")
    common(pchain)
    pspec = sub.add_parser("spectrum", help="export eigenvalues / corner-state report")
    common(pspec)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NonConvergenceError, NearSingularBathShiftError,
            StepNotConvergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    configs = _resolve_configs(args)
    out = Path(args.out)

    if args.command == "run":
        export_graph = getattr(args, "export_graph", False)
        if args.workers > 1 and len(configs) > 1:
            jobs = [(config_to_dict(c), str(out / c.label), args.figures,
                     export_graph) for c in configs]
            with concurrent.futures.ProcessPoolExecutor(
                    max_workers=args.workers) as ex:
                list(ex.map(_run_job, jobs))
        else:
            for c in configs:
                run(c, out / c.label, figures=args.figures,
                    export_graph=export_graph)
        for c in configs:
            print(f"run {c.label}: wrote {out / c.label}")
        return 0

    if args.command == "sweep":
        values = [float(v) for v in args.values.split(",")]
        rows = sweep(configs[0], args.axis, values, out,
                     workers=args.workers, figures=args.figures)
        for r in rows:
            print(f"{args.axis}={r['value']:g} P_BIC={r['p_bic']:.6f} "
                  f"plateau={r['plateau_qualified']} gamma={r['gamma']:.3e}")
        return 0

    if args.command == "validate":
        code = 0
        for c in configs:
            checks = validate(c)
            for row in checks:
                status = "PASS" if row["ok"] else "FAIL"
                print(f"[{status}] {c.label}/{row['name']}: {row['detail']}")
            if not all(r["ok"] for r in checks):
                code = 1
        return code

    if args.command == "chain-map":
        from .lattice import single_particle_matrix
        for c in configs:
            cfg_j = convert_units(c.validated(), "J")
            bath = build_bath(cfg_j)
            site = diagonal_site(bath, cfg_j.emitter_position)
            seed = np.zeros(bath.n_sites)
            seed[site] = 1.0
            chain = lanczos_tridiagonalize(
                single_particle_matrix(bath), seed,
                min(cfg_j.chain_modes, bath.n_sites))
            dest = out / c.label
            dest.mkdir(parents=True, exist_ok=True)
            export_chain_csv(chain, dest / "chain.csv")
            if args.figures:
                report.save_chain_figure(chain, dest / "chain.png")
            print(f"chain-map {c.label}: M={chain.m} alpha0={chain.alphas[0]:.6f} "
                  f"t*={reflection_time_bound(chain, bath.j_hop):.3f} "
                  f"-> {dest / 'chain.csv'}")
        return 0

    if args.command == "spectrum":
        for c in configs:
            cfg_j = convert_units(c.validated(), "J")
            bath = build_bath(cfg_j)
            site = diagonal_site(bath, cfg_j.emitter_position)
            emitter = EmitterSpec(delta=cfg_j.delta, g=cfg_j.g, site=site)
            region = trap_region(bath, emitter)
            sol = (solve_selfconsistent(bath, emitter)
                   if cfg_j.frame == "polaron" else None)
            h = (assemble_polaron_hamiltonian(bath, emitter, sol)
                 if sol is not None else assemble_rwa_hamiltonian(bath, emitter))
            cands = find_bic_eigenstates(h, bath, region)
            dest = out / c.label
            dest.mkdir(parents=True, exist_ok=True)
            export_candidates_json(cands, dest / "bic_candidates.json")
            if h.dim <= 4000:
                eigs = np.linalg.eigvalsh(h.to_dense())
                with open(dest / "eigenvalues.csv", "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["index", "energy", "bath_energy"])
                    for i, e in enumerate(eigs):
                        w.writerow([i, _fmt(e), _fmt(e - h.photon_shift)])
            if args.figures and cands:
                from .analysis import density_from_vector
                dmap = density_from_vector(cands[0].vector, bath)
                report.save_density_figure(dmap, bath,
                                           dest / "bic_density.png",
                                           emitter_site=site)
            print(f"spectrum {c.label}: {len(cands)} corner-state candidate(s), "
                  f"projection {spectral_bic_projection(cands):.6f}")
        return 0

    raise ConfigError(f"unhandled command {args.command}")


def _run_job(job):
    cfg_dict, out_dir, figures, export_graph = job
    return run(ExperimentConfig(**cfg_dict), out_dir, figures=figures,
               export_graph=export_graph)


if __name__ == "__main__":
    sys.exit(main())
