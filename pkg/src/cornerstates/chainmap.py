"""Lanczos mapping of the bath onto a tridiagonal chain of modes.

Seeded with the (normalized) emitter coupling vector, the three-term
recursion with full re-orthogonalization produces diagonal coefficients
alpha_n and positive couplings beta_n.  The emitter then talks to chain
mode 0 only, which makes the chain a cheap, independent oracle for the
lattice dynamics: an M-mode truncation is exact until the wavefront can
return from the truncated end, a horizon bounded below by

    t* = M / (2 * max_n beta_n).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .polaron import EmitterSpec, PolaronSolution, SingleExcHamiltonian

MODE_STORAGE_LIMIT = 2000  # Lanczos vectors kept at most this many modes


class ZeroSeedError(ValueError):
    """The Lanczos seed vector has zero norm."""


class SeedMismatchError(ValueError):
    """Chain was built from a seed other than the emitter coupling vector."""


@dataclass(frozen=True, eq=False)
class ChainRepresentation:
    """Tridiagonal chain coefficients plus (optionally) the mode vectors."""

    alphas: np.ndarray            # (M,)
    betas: np.ndarray             # (M-1,), all > 0
    modes: np.ndarray | None      # (n_sites, M) orthonormal columns, or None
    seed: np.ndarray | None       # normalized seed in the lattice frame
    m_requested: int
    breakdown: bool = False       # recursion exhausted an invariant subspace

    @property
    def m(self) -> int:
        return len(self.alphas)

    def tridiagonal(self) -> sp.csr_matrix:
        m = self.m
        if m == 1:
            return sp.csr_matrix(np.array([[self.alphas[0]]]))
        return sp.diags(
            [self.betas, self.alphas, self.betas], offsets=[-1, 0, 1],
            format="csr")


def lanczos_tridiagonalize(bath_matrix, seed: np.ndarray, m: int,
                           store_modes: bool | None = None,
                           breakdown_tol: float | None = None) -> ChainRepresentation:
    """Tridiagonalize ``bath_matrix`` in the Krylov space of ``seed``.

    Full re-orthogonalization (two Gram-Schmidt passes) is applied at
    every step.  The recursion stops early, flagged but not an error,
    when the residual norm falls below ``breakdown_tol`` (default
    1e-12 * ||H||_est): the seed then spans an invariant subspace of
    fewer than ``m`` modes.
    """
    h = sp.csr_matrix(bath_matrix)
    n = h.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"mode count must be in 1..{n}")
    seed = np.asarray(seed, dtype=float)
    seed_norm = np.linalg.norm(seed)
    if seed_norm == 0.0:
        raise ZeroSeedError("Lanczos seed vector is zero")
    if store_modes is None:
        store_modes = m <= MODE_STORAGE_LIMIT

    scale = abs(h).max() * n  # cheap norm surrogate for the breakdown scale
    if breakdown_tol is None:
        breakdown_tol = 1e-12 * max(scale, 1.0)

    basis = np.zeros((n, m))
    v = seed / seed_norm
    basis[:, 0] = v
    alphas = np.zeros(m)
    betas = np.zeros(max(m - 1, 0))
    w = h @ v
    alphas[0] = v @ w
    w = w - alphas[0] * v
    m_eff = m
    breakdown = False
    for k in range(1, m):
        for _ in range(2):
            w -= basis[:, :k] @ (basis[:, :k].T @ w)
        beta = np.linalg.norm(w)
        if beta <= breakdown_tol:
            m_eff = k
            breakdown = True
            break
        betas[k - 1] = beta
        v = w / beta
        basis[:, k] = v
        w = h @ v - beta * basis[:, k - 1]
        alphas[k] = v @ w
        w = w - alphas[k] * v
    return ChainRepresentation(
        alphas=alphas[:m_eff],
        betas=betas[:max(m_eff - 1, 0)],
        modes=basis[:, :m_eff] if store_modes else None,
        seed=seed / seed_norm,
        m_requested=m,
        breakdown=breakdown)


def chain_single_exc_hamiltonian(chain: ChainRepresentation, emitter: EmitterSpec,
                                 sol: PolaronSolution | None = None
                                 ) -> SingleExcHamiltonian:
    """Single-excitation Hamiltonian in the chain frame.

    With ``sol`` None the bare rotating-wave form is used: the qubit
    couples to mode 0 with the full coupling norm g.  With a converged
    polaron solution, the coupling vector 2*dt*f and the rank-one
    dressing are mapped through the Lanczos basis; the mapping residual
    ||f - V V^T f|| is stored on the result as ``f_chain_residual``.
    """
    if chain.seed is not None:
        if emitter.site >= len(chain.seed):
            raise SeedMismatchError("emitter site outside the chain's lattice")
        expected = np.zeros(len(chain.seed))
        expected[emitter.site] = 1.0
        if np.linalg.norm(chain.seed - expected) > 1e-10:
            raise SeedMismatchError(
                "chain seed is not the (normalized) emitter coupling vector")
    tridiag = chain.tridiagonal()
    m = chain.m
    if sol is None:
        coupling = np.zeros(m)
        coupling[0] = emitter.g
        h = SingleExcHamiltonian(
            bath_matrix=tridiag,
            qubit_energy=+emitter.delta / 2.0,
            photon_shift=-emitter.delta / 2.0,
            coupling=coupling,
            rank_one=None,
            delta_tilde=emitter.delta,
            frame="rwa")
        h.f_chain_residual = 0.0
        return h
    if not sol.converged:
        raise ValueError("polaron solution did not converge")
    if chain.modes is None:
        raise ValueError("polaron chain assembly needs stored Lanczos modes")
    dt = sol.delta_tilde
    f_chain = chain.modes.T @ sol.f
    residual = float(np.linalg.norm(sol.f - chain.modes @ f_chain))
    h = SingleExcHamiltonian(
        bath_matrix=tridiag,
        qubit_energy=+dt / 2.0,
        photon_shift=-dt / 2.0,
        coupling=2.0 * dt * f_chain,
        rank_one=2.0 * np.sqrt(dt) * f_chain,
        delta_tilde=dt,
        frame="polaron")
    h.f_chain_residual = residual
    return h


def reflection_time_bound(chain: ChainRepresentation,
                          j_hop: float | None = None) -> float:
    """Horizon t* = M / (2 max beta) before truncation can matter."""
    if chain.m < 1:
        raise ValueError("empty chain")
    if len(chain.betas):
        vmax = float(np.max(chain.betas))
    elif j_hop is not None:
        vmax = float(j_hop)
    else:
        raise ValueError("single-mode chain needs j_hop for the bound")
    return chain.m / (2.0 * vmax)


def export_chain_csv(chain: ChainRepresentation, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "alpha", "beta"])
        for i, a in enumerate(chain.alphas):
            beta = "" if i == 0 else repr(float(chain.betas[i - 1]))
            w.writerow([i, repr(float(a)), beta])


def load_chain_csv(path) -> ChainRepresentation:
    """Read back (n, alpha, beta) rows; modes and seed are not recoverable."""
    alphas, betas = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            alphas.append(float(row["alpha"]))
            if row["beta"]:
                betas.append(float(row["beta"]))
    if len(betas) != max(len(alphas) - 1, 0):
        raise ValueError("malformed chain file: need M alphas and M-1 betas")
    return ChainRepresentation(
        alphas=np.array(alphas), betas=np.array(betas), modes=None,
        seed=None, m_requested=len(alphas))
