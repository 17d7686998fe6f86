"""Observables, corner-state detection and decay-rate fits.

The total excitation number restricted to the trapping region,

    N_excit = P_up + P_gamma = |c|^2 + sum_{x in region} |psi(x)|^2,

is the workhorse observable.  Corner states are detected two ways and
cross-checked: dynamically, as a plateau of N_excit over the tail of a
trajectory, and spectrally, as normalizable in-band eigenstates whose
photon density is concentrated in the trapping region.

At exact mid-band the nested dispersions make the in-band spectrum
massively degenerate, and raw eigenvectors inside a degenerate cluster
are an arbitrary rotation of the physical basis.  Detection therefore
groups eigenvalues into clusters and projects each cluster onto the
initially-excited emitter (the only direction dynamics can populate),
which is basis-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import BathGraph, band_edges
from .polaron import EmitterSpec, SingleExcHamiltonian
from .dynamics import SingleExcState, Trajectory

GAMMA_FLOOR = 1e-5          # fitted rates below this are unreliable
PLATEAU_STD = 0.01          # plateau qualification threshold
DENSE_EIG_CUTOFF = 4000     # above this, detection uses shift-invert


class WindowTooShortError(ValueError):
    """Decay-fit window contains fewer than 20 samples."""


class NonPositiveDataError(ValueError):
    """Decay fit requires strictly positive excitation numbers."""


@dataclass(frozen=True, eq=False)
class TrapRegion:
    """Sites between the emitter and the corner (corner-adapted box)."""

    sites: np.ndarray

    def __len__(self):
        return len(self.sites)


def trap_region(bath: BathGraph, emitter: EmitterSpec) -> TrapRegion:
    """All sites whose corner-adapted coordinates are <= the emitter's.

    In 1D this is exactly the sites x = 1..x0; in 2D/3D it is the corner
    box (small diamond / cube) spanned by the corner and the emitter.
    """
    emitter.validate_against(bath)
    ref = bath.corner_coords[emitter.site]
    mask = np.all(bath.corner_coords <= ref, axis=1)
    sites = np.where(mask)[0]
    return TrapRegion(sites=sites)


def excitation_number(state: SingleExcState, region: TrapRegion):
    """(n_excit, p_up, p_gamma) for a normalized state."""
    p_up = float(abs(state.c) ** 2)
    p_gamma = float(np.sum(np.abs(state.psi[region.sites]) ** 2))
    return p_up + p_gamma, p_up, p_gamma


def region_weight_series(traj: Trajectory, region: TrapRegion) -> np.ndarray:
    """Per-step photon weight in ``region``; exact if tracked, else from snapshots."""
    if traj.region is not None and len(traj.region) == len(region.sites) \
            and np.array_equal(np.sort(traj.region), np.sort(region.sites)):
        return traj.region_weight
    # coarse fallback: piecewise-constant from the thinned snapshots
    weights = np.sum(np.abs(traj.snapshots[:, region.sites]) ** 2, axis=1)
    idx = np.searchsorted(traj.snapshot_steps, np.arange(traj.n_steps),
                          side="right") - 1
    return weights[idx]


@dataclass(frozen=True)
class PlateauResult:
    value: float
    qualified: bool
    std: float
    window_start: float
    window_end: float


def bic_probability(traj: Trajectory, region: TrapRegion) -> PlateauResult:
    """Mean of N_excit over the final quarter, with plateau qualification.

    The plateau flag requires the standard deviation over that window to
    be at most 0.01; the value is returned either way.
    """
    n = traj.n_steps
    start = 3 * n // 4
    series = np.abs(traj.c[start:]) ** 2 \
        + region_weight_series(traj, region)[start:]
    value = float(series.mean())
    std = float(series.std())
    return PlateauResult(value=value, qualified=std <= PLATEAU_STD, std=std,
                         window_start=float(traj.times[start]),
                         window_end=float(traj.times[-1]))


@dataclass(frozen=True)
class DecayFit:
    gamma: float
    n_t0: float
    t0: float
    r_squared: float
    floor_flag: bool
    window: tuple
    n_points: int


def fit_decay_rate(times: np.ndarray, n_excit: np.ndarray, t0: float,
                   t_end: float | None = None) -> DecayFit:
    """Log-linear least-squares fit of N_excit ~ N(t0) exp(-gamma (t-t0)).

    The floor flag is set when the fitted gamma is below 1e-5 (not
    reliable at finite simulation time), negative, or when R^2 < 0.9.
    """
    times = np.asarray(times, dtype=float)
    n_excit = np.asarray(n_excit, dtype=float)
    if t_end is None:
        t_end = times[-1]
    mask = (times >= t0) & (times <= t_end)
    if mask.sum() < 20:
        raise WindowTooShortError(
            f"fit window [{t0:g}, {t_end:g}] has {int(mask.sum())} samples (< 20)")
    t = times[mask]
    y = n_excit[mask]
    if np.any(y <= 0):
        raise NonPositiveDataError("excitation numbers must be positive to fit")
    logy = np.log(y)
    slope, intercept = np.polyfit(t - t0, logy, 1)
    pred = slope * (t - t0) + intercept
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    gamma = -float(slope)
    flagged = gamma < GAMMA_FLOOR or r2 < 0.9
    return DecayFit(gamma=gamma, n_t0=float(np.exp(intercept)), t0=float(t0),
                    r_squared=r2, floor_flag=flagged,
                    window=(float(t0), float(t_end)), n_points=int(mask.sum()))


@dataclass(frozen=True, eq=False)
class BicCandidate:
    energy: float               # matrix-frame eigenvalue
    bath_energy: float          # energy - photon_shift, comparable to omega(k)
    vector: np.ndarray = field(repr=False)
    ipr: float = 0.0
    in_band: bool = True
    region_weight: float = 0.0
    qubit_weight: float = 0.0   # |<candidate|initially-excited emitter>|^2
    cluster_size: int = 1


def _eigenpairs_near_midband(h: SingleExcHamiltonian, k: int):
    """Shift-invert eigensolve around the mid-band target energy."""
    n = h.n_photon
    sigma = _midband(h) + h.photon_shift + 1e-6  # off exact degeneracies
    b = (h.bath_matrix + (h.photon_shift - sigma) * sp.identity(n)).tocsc()
    lu = spla.splu(b)
    if h.rank_one is not None:
        r = h.rank_one
        br = lu.solve(r)
        denom = 1.0 - float(r @ br)

        def ainv(v):
            x = lu.solve(v)
            return x + br * (r @ x) / denom
    else:
        def ainv(v):
            return lu.solve(v)

    cvec = h.coupling
    a_c = ainv(cvec)
    alpha = (h.qubit_energy - sigma) - float(cvec @ a_c)

    def opinv(v):
        v = np.asarray(v, dtype=float)
        x_p = ainv(v[1:])
        xq = (v[0] - cvec @ x_p) / alpha
        out = np.empty_like(v)
        out[0] = xq
        out[1:] = x_p - xq * a_c
        return out

    op = spla.LinearOperator((h.dim, h.dim), matvec=opinv, dtype=np.float64)
    op_h = spla.LinearOperator((h.dim, h.dim), matvec=h.matvec, dtype=np.float64)
    vals, vecs = spla.eigsh(op_h, k=k, sigma=sigma, OPinv=op, which="LM")
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _midband(h: SingleExcHamiltonian) -> float:
    # photon-block center: mean of the bath diagonal (= omega_a for our baths)
    return float(h.bath_matrix.diagonal().mean())


def find_bic_eigenstates(h: SingleExcHamiltonian, bath: BathGraph,
                         region: TrapRegion, ipr_threshold: float | None = None,
                         k: int = 400) -> list[BicCandidate]:
    """In-band, region-localized eigenstates with emitter overlap.

    Eigenvalues are grouped into degenerate clusters and each cluster is
    represented by its projection onto the bare-excited-emitter state
    (see module docstring).  A representative qualifies as a candidate
    when its energy lies inside the periodic-bath band, at least half of
    its photon density sits in ``region``, and its photon IPR exceeds
    the threshold (default: 4x the median IPR of the in-band states
    examined).  Candidates are sorted by region weight, descending.
    """
    if h.dim <= DENSE_EIG_CUTOFF:
        vals, vecs = np.linalg.eigh(h.to_dense())
    else:
        vals, vecs = _eigenpairs_near_midband(h, k=min(k, h.dim - 2))

    lo, hi = band_edges(bath)
    scale = max(np.max(np.abs(vals)), 1.0)
    cluster_tol = 1e-9 * scale
    eps = 1e-9 * max(bath.j_hop, 1.0)

    reps = []
    iprs_in_band = []
    i = 0
    while i < len(vals):
        j = i
        while j + 1 < len(vals) and vals[j + 1] - vals[j] < cluster_tol:
            j += 1
        qubit_amp = vecs[0, i:j + 1]
        weight = float(np.sum(qubit_amp ** 2))
        if weight > 1e-14:
            b = vecs[:, i:j + 1] @ qubit_amp
            b /= np.linalg.norm(b)
            photon = b[1:]
            pw = float(np.sum(photon ** 2))
            bath_e = float(vals[i] - h.photon_shift)
            in_band = lo + eps < bath_e < hi - eps
            if pw > 1e-14:
                wreg = float(np.sum(photon[region.sites] ** 2) / pw)
                ipr = float(np.sum(photon ** 4) / pw ** 2)
            else:
                wreg, ipr = 0.0, 0.0
            if in_band and pw > 1e-14:
                iprs_in_band.append(ipr)
            reps.append((vals[i], bath_e, b, ipr, in_band, wreg, weight,
                         j - i + 1))
        else:
            # clusters without emitter overlap still inform the IPR baseline
            bath_e = float(vals[i] - h.photon_shift)
            if lo + eps < bath_e < hi - eps:
                for col in range(i, j + 1):
                    photon = vecs[1:, col]
                    pw = float(np.sum(photon ** 2))
                    if pw > 1e-14:
                        iprs_in_band.append(float(np.sum(photon ** 4) / pw ** 2))
        i = j + 1

    if ipr_threshold is None:
        baseline = np.median(iprs_in_band) if iprs_in_band else 0.0
        ipr_threshold = 4.0 * float(baseline)

    out = []
    for energy, bath_e, b, ipr, in_band, wreg, weight, csize in reps:
        if in_band and wreg >= 0.5 and ipr > ipr_threshold:
            out.append(BicCandidate(
                energy=float(energy), bath_energy=bath_e, vector=b, ipr=ipr,
                in_band=in_band, region_weight=wreg, qubit_weight=weight,
                cluster_size=csize))
    out.sort(key=lambda c: c.region_weight, reverse=True)
    return out


def spectral_bic_projection(candidates: list[BicCandidate]) -> float:
    """Sum of |<candidate|initial excited state>|^2 over candidates."""
    return float(sum(c.qubit_weight for c in candidates))


@dataclass(frozen=True, eq=False)
class DensityMap:
    coords: np.ndarray
    density: np.ndarray
    marginals: dict = field(repr=False)


def photon_density_map(state: SingleExcState, bath: BathGraph) -> DensityMap:
    """|psi(x)|^2 keyed by site coordinates, plus per-axis marginal sums.

    The marginal over the last axis gives the seen-from-above view used
    for 3D density plots.
    """
    dens = np.abs(state.psi) ** 2
    marginals = {}
    for ax in range(bath.dimension):
        keep = [a for a in range(bath.dimension) if a != ax]
        if keep:
            key_coords = bath.sites[:, keep]
            uniq, inv = np.unique(key_coords, axis=0, return_inverse=True)
        else:
            uniq = np.zeros((1, 0), dtype=int)
            inv = np.zeros(len(dens), dtype=int)
        sums = np.zeros(len(uniq))
        np.add.at(sums, inv, dens)
        marginals[ax] = (uniq, sums)
    return DensityMap(coords=bath.sites.copy(), density=dens, marginals=marginals)


def density_from_vector(vector: np.ndarray, bath: BathGraph) -> DensityMap:
    """Density map of an eigenvector in the single-excitation basis."""
    state = SingleExcState(complex(vector[0]),
                           vector[1:].astype(np.complex128), 0.0)
    return photon_density_map(state, bath)


def directionality_fraction(state: SingleExcState, bath: BathGraph,
                            emitter: EmitterSpec, half_width: int) -> float:
    """Photon fraction within +-half_width sites of the emission lines.

    2D: the two diagonals x-y = const and x+y = const through the
    emitter.  3D: the three collimation lines along e1+e2, e2+e3 and
    e1+e3.  Not defined for 1D baths.
    """
    if bath.dimension == 1:
        raise ValueError("directionality is undefined for 1D baths")
    emitter.validate_against(bath)
    rel = bath.sites - bath.sites[emitter.site]
    hw = int(half_width)
    if bath.dimension == 2:
        mask = (np.abs(rel[:, 0] - rel[:, 1]) <= hw) \
            | (np.abs(rel[:, 0] + rel[:, 1]) <= hw)
    else:
        masks = []
        for a, b, c in ((0, 1, 2), (1, 2, 0), (0, 2, 1)):
            masks.append((np.abs(rel[:, a] - rel[:, b]) <= hw)
                         & (np.abs(rel[:, c]) <= hw))
        mask = masks[0] | masks[1] | masks[2]
    dens = np.abs(state.psi) ** 2
    total = float(dens.sum())
    if total == 0.0:
        return 0.0
    return float(dens[mask].sum() / total)


def export_candidates_json(candidates: list[BicCandidate], path) -> None:
    rows = [{
        "energy": c.energy,
        "bath_energy": c.bath_energy,
        "ipr": c.ipr,
        "in_band": bool(c.in_band),
        "region_weight": c.region_weight,
        "qubit_weight": c.qubit_weight,
        "cluster_size": c.cluster_size,
    } for c in candidates]
    with open(path, "w") as fh:
        json.dump({"n_candidates": len(rows), "candidates": rows}, fh, indent=2)


def export_decay_json(fit: DecayFit, path) -> None:
    with open(path, "w") as fh:
        json.dump({
            "gamma": fit.gamma, "n_t0": fit.n_t0, "t0": fit.t0,
            "r_squared": fit.r_squared, "floor_flag": bool(fit.floor_flag),
            "window": list(fit.window), "n_points": fit.n_points,
        }, fh, indent=2)


def export_density_csv(dmap: DensityMap, bath: BathGraph, path) -> None:
    axes = ["x", "y", "z"][: bath.dimension]
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(axes + ["density"])
        for coords, d in zip(dmap.coords, dmap.density):
            w.writerow([int(c) for c in coords] + [repr(float(d))])
