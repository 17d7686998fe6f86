"""Polaron self-consistency and single-excitation Hamiltonian assembly.

The ultrastrong-coupling corrections enter through a renormalized qubit
splitting and a collective coupling vector obtained from the fixed point

    delta_tilde = delta * exp(-2 ||f||^2),
    (H_bath + delta_tilde * I) f = g * e_{x0},

where ``H_bath`` is the full single-particle bath matrix (on-site
frequency plus hoppings), so the diagonal-basis denominators are
omega_k + delta_tilde.

Projected on the single-excitation sector (basis index 0 = qubit excited
with photon vacuum, 1..N = one photon at site x with qubit down), the
transformed Hamiltonian has

    H[0, 0]   = +delta_tilde / 2
    H[x, y]   = H_bath[x, y] - (delta_tilde/2) delta_xy
                - 4 delta_tilde f_x f_y
    H[0, x]   = 2 delta_tilde f_x

The rank-one term comes from the qubit-down projection of the
(1 + 8 F^dag F) dressing.  The bare rotating-wave assembly is the same
structure with delta_tilde -> delta, no rank-one term, and coupling g at
the single site x0.  The two agree at f = 0, and populations are
evaluated in the polaron frame throughout.
"""

from __future__ import annotations

import json
import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import BathGraph, bandwidth, single_particle_matrix


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration hit max_iter; carries the last residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NearSingularBathShiftError(RuntimeError):
    """(H_bath + delta_tilde I) is numerically singular for the solve."""


@dataclass(frozen=True)
class EmitterSpec:
    """Two-level emitter locally coupled to one bath site."""

    delta: float
    g: float
    site: int

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("qubit splitting must be positive")
        if self.g < 0:
            raise ValueError("coupling must be non-negative")
        if self.site < 0:
            raise ValueError("coupling site index must be >= 0")

    def validate_against(self, bath: BathGraph) -> None:
        if self.site >= bath.n_sites:
            raise ValueError(
                f"coupling site {self.site} outside bath of {bath.n_sites} sites")


@dataclass(frozen=True, eq=False)
class PolaronSolution:
    delta_tilde: float
    f: np.ndarray
    residual: float
    iterations: int
    converged: bool
    precondition_ok: bool
    residual_history: np.ndarray = field(repr=False)
    damping_engaged_at: int | None = None

    @property
    def f_norm(self) -> float:
        return float(np.linalg.norm(self.f))


def precondition_margin(bath: BathGraph, delta_tilde: float) -> float:
    """omega_a - W/2 + delta_tilde; positive guarantees a definite shift."""
    return bath.omega_a - 0.5 * bandwidth(bath) + delta_tilde


def solve_selfconsistent(bath: BathGraph, emitter: EmitterSpec,
                         tol: float = 1e-10, max_iter: int = 500) -> PolaronSolution:
    """Solve the polaron fixed point by damped iteration from delta_tilde = delta.

    Plain iteration is used until the update residual changes sign, after
    which a damping factor 0.5 is applied.  Convergence is declared at
    |delta_tilde_{n+1} - delta_tilde_n| <= tol * delta.

    Raises
    ------
    NonConvergenceError
        after ``max_iter`` iterations without meeting the tolerance.
    NearSingularBathShiftError
        if the shifted bath matrix cannot be factorized or the linear
        solve loses too much accuracy.
    """
    emitter.validate_against(bath)
    delta, g = emitter.delta, emitter.g
    n = bath.n_sites

    if g == 0.0:
        return PolaronSolution(
            delta_tilde=delta, f=np.zeros(n), residual=0.0, iterations=1,
            converged=True, precondition_ok=precondition_margin(bath, delta) > 0,
            residual_history=np.zeros(1))

    hbath = single_particle_matrix(bath).tocsc()
    rhs = np.zeros(n)
    rhs[emitter.site] = g
    identity = sp.identity(n, format="csc")

    def coupling_vector(dt):
        try:
            lu = spla.splu(hbath + dt * identity)
            f = lu.solve(rhs)
        except RuntimeError as exc:  # singular factorization
            raise NearSingularBathShiftError(
                f"factorization of (H_bath + {dt:g} I) failed") from exc
        defect = np.linalg.norm(hbath @ f + dt * f - rhs)
        if not np.isfinite(defect) or defect > 1e-8 * g:
            raise NearSingularBathShiftError(
                f"shifted bath solve defect {defect:.3e} at delta_tilde={dt:g}")
        return f

    dt = delta
    damping = 1.0
    engaged_at = None
    last_sign = 0.0
    history = []
    precondition_ok = precondition_margin(bath, delta) > 0
    for it in range(1, max_iter + 1):
        f = coupling_vector(dt)
        target = delta * np.exp(-2.0 * float(f @ f))
        resid = target - dt
        history.append(resid)
        sign = np.sign(resid)
        if last_sign != 0.0 and sign != 0.0 and sign != last_sign:
            # halve on every oscillation; the first flip engages 0.5
            damping = max(0.5 * damping, 1e-6)
            if engaged_at is None:
                engaged_at = it
        last_sign = sign
        dt = dt + damping * resid
        precondition_ok = precondition_ok and precondition_margin(bath, dt) > 0
        if abs(resid) <= tol * delta:
            f = coupling_vector(dt)
            return PolaronSolution(
                delta_tilde=dt, f=f, residual=abs(resid), iterations=it,
                converged=True, precondition_ok=precondition_ok,
                residual_history=np.array(history),
                damping_engaged_at=engaged_at)
    raise NonConvergenceError(
        f"polaron fixed point not converged after {max_iter} iterations "
        f"(last residual {abs(history[-1]):.3e})",
        residual=abs(history[-1]), iterations=max_iter)


class SingleExcHamiltonian:
    """Hermitian single-excitation Hamiltonian in bordered sparse form.

    H = [[qubit_energy,    coupling^T        ],
         [coupling,  bath + shift*I - r r^T  ]]

    with real inputs only, so the matrix is exactly symmetric.  The
    rank-one vector r encodes the polaron dressing (r = 2 sqrt(dt) f); it
    is None for the bare rotating-wave assembly.  ``photon_shift`` maps
    matrix eigenvalues back to the bath frame (bath energy = eigenvalue -
    photon_shift).
    """

    def __init__(self, bath_matrix: sp.csr_matrix, qubit_energy: float,
                 photon_shift: float, coupling: np.ndarray,
                 rank_one: np.ndarray | None, delta_tilde: float, frame: str):
        self.bath_matrix = bath_matrix.tocsr()
        self.qubit_energy = float(qubit_energy)
        self.photon_shift = float(photon_shift)
        self.coupling = np.asarray(coupling, dtype=float)
        self.rank_one = None if rank_one is None else np.asarray(rank_one, dtype=float)
        self.delta_tilde = float(delta_tilde)
        self.frame = frame
        if self.bath_matrix.shape[0] != len(self.coupling):
            raise ValueError("coupling vector length does not match bath size")
        defect = abs(self.bath_matrix - self.bath_matrix.T)
        if defect.nnz and defect.max() > 0:
            raise ValueError("bath matrix is not symmetric")

    @property
    def n_photon(self) -> int:
        return self.bath_matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.n_photon + 1

    def matvec(self, v: np.ndarray) -> np.ndarray:
        c, psi = v[0], v[1:]
        out = np.empty_like(v)
        out[0] = self.qubit_energy * c + self.coupling @ psi
        photon = self.bath_matrix @ psi + self.photon_shift * psi + self.coupling * c
        if self.rank_one is not None:
            photon -= self.rank_one * (self.rank_one @ psi)
        out[1:] = photon
        return out

    def aslinearoperator(self) -> spla.LinearOperator:
        return spla.LinearOperator(
            (self.dim, self.dim), matvec=self.matvec, dtype=np.complex128)

    def to_dense(self) -> np.ndarray:
        n = self.n_photon
        h = np.zeros((n + 1, n + 1))
        h[0, 0] = self.qubit_energy
        h[0, 1:] = self.coupling
        h[1:, 0] = self.coupling
        h[1:, 1:] = self.bath_matrix.toarray() + self.photon_shift * np.eye(n)
        if self.rank_one is not None:
            h[1:, 1:] -= np.outer(self.rank_one, self.rank_one)
        return h

    def expectation(self, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, self.matvec(v))))


def assemble_polaron_hamiltonian(bath: BathGraph, emitter: EmitterSpec,
                                 sol: PolaronSolution) -> SingleExcHamiltonian:
    """Polaron-frame single-excitation Hamiltonian for a converged solution."""
    emitter.validate_against(bath)
    if not sol.converged:
        raise ValueError("polaron solution did not converge; refusing assembly")
    if len(sol.f) != bath.n_sites:
        raise ValueError("polaron solution does not match this bath")
    if np.iscomplexobj(sol.f) and np.max(np.abs(np.imag(sol.f))) > 0:
        raise ValueError("coupling vector must be real for a real bath")
    dt = sol.delta_tilde
    f = np.real(sol.f)
    return SingleExcHamiltonian(
        bath_matrix=single_particle_matrix(bath),
        qubit_energy=+dt / 2.0,
        photon_shift=-dt / 2.0,
        coupling=2.0 * dt * f,
        rank_one=2.0 * np.sqrt(dt) * f,
        delta_tilde=dt,
        frame="polaron")


def assemble_rwa_hamiltonian(bath: BathGraph,
                             emitter: EmitterSpec) -> SingleExcHamiltonian:
    """Bare rotating-wave single-excitation Hamiltonian."""
    emitter.validate_against(bath)
    coupling = np.zeros(bath.n_sites)
    coupling[emitter.site] = emitter.g
    return SingleExcHamiltonian(
        bath_matrix=single_particle_matrix(bath),
        qubit_energy=+emitter.delta / 2.0,
        photon_shift=-emitter.delta / 2.0,
        coupling=coupling,
        rank_one=None,
        delta_tilde=emitter.delta,
        frame="rwa")


def export_polaron_json(sol: PolaronSolution, path) -> None:
    payload = {
        "delta_tilde": float(sol.delta_tilde),
        "residual": float(sol.residual),
        "iterations": int(sol.iterations),
        "converged": bool(sol.converged),
        "precondition_ok": bool(sol.precondition_ok),
        "f_norm": sol.f_norm,
        "damping_engaged_at": sol.damping_engaged_at,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def export_coupling_csv(sol: PolaronSolution, bath: BathGraph, path) -> None:
    axes = ["x", "y", "z"][: bath.dimension]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(axes + ["f"])
        for coords, val in zip(bath.sites, sol.f):
            w.writerow([int(c) for c in coords] + [repr(float(val))])
