"""Render run artifacts to figure files next to the delimited output."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .lattice import BathGraph
from .analysis import DensityMap, DecayFit
from .chainmap import ChainRepresentation

DPI = 150


def save_population_figure(times, n_excit, p_up, p_gamma, path, logy=False):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(times, n_excit, label=r"$N_\mathrm{excit}$", lw=1.6)
    ax.plot(times, p_up, label=r"$P_\uparrow$", lw=1.0, alpha=0.85)
    ax.plot(times, p_gamma, label=r"$P_\gamma$", lw=1.0, alpha=0.85)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(r"$t\,J$")
    ax.set_ylabel("population")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_density_figure(dmap: DensityMap, bath: BathGraph, path,
                        emitter_site: int | None = None):
    fig, ax = plt.subplots(figsize=(6, 5))
    if bath.dimension == 1:
        ax.plot(dmap.coords[:, 0], dmap.density, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel(r"$|\psi(x)|^2$")
        if emitter_site is not None:
            ax.axvline(bath.sites[emitter_site, 0], color="crimson", ls=":",
                       lw=1, label="emitter")
            ax.legend(frameon=False)
    elif bath.dimension == 2:
        sc = ax.scatter(dmap.coords[:, 0], dmap.coords[:, 1], c=dmap.density,
                        s=14, marker="s", cmap="inferno")
        fig.colorbar(sc, ax=ax, label=r"$|\psi|^2$")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        if emitter_site is not None:
            ax.plot(*bath.sites[emitter_site], marker="o", color="deepskyblue",
                    ms=6, mec="k")
    else:
        # seen from above: marginal over the last axis
        uniq, sums = dmap.marginals[2]
        sc = ax.scatter(uniq[:, 0], uniq[:, 1], c=sums, s=30, marker="s",
                        cmap="inferno")
        fig.colorbar(sc, ax=ax, label=r"$\sum_z |\psi|^2$")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        if emitter_site is not None:
            ax.plot(*bath.sites[emitter_site][:2], marker="o",
                    color="deepskyblue", ms=6, mec="k")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_decay_figure(times, n_excit, fit: DecayFit, path):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.semilogy(times, n_excit, lw=1.2, label=r"$N_\mathrm{excit}(t)$")
    t0, t1 = fit.window
    tt = np.linspace(t0, t1, 50)
    ax.semilogy(tt, fit.n_t0 * np.exp(-fit.gamma * (tt - fit.t0)), "--",
                color="crimson",
                label=rf"fit: $\gamma$={fit.gamma:.3e}, $R^2$={fit.r_squared:.4f}")
    ax.set_xlabel(r"$t\,J$")
    ax.set_ylabel(r"$N_\mathrm{excit}$")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_chain_figure(chain: ChainRepresentation, path):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(np.arange(chain.m), chain.alphas, "o-", ms=3, label=r"$\alpha_n$")
    ax.plot(1 + np.arange(chain.m - 1), chain.betas, "s-", ms=3,
            label=r"$\beta_n$")
    ax.set_xlabel("chain mode n")
    ax.set_ylabel("energy (J)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_sweep_figure(values, rows, axis, path):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(values, [r["p_bic"] for r in rows], "o-", label=r"$P_\mathrm{BIC}$")
    ax.plot(values, [r["p_up"] for r in rows], "s-", label=r"$P_\uparrow$")
    ax.plot(values, [r["p_gamma"] for r in rows], "^-", label=r"$P_\gamma$")
    ax.set_xlabel(axis)
    ax.set_ylabel("population")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
