"""Photonic bath lattices with engineered open boundaries.

Three geometries are supported, all with on-site frequency ``omega_a`` and
nearest-neighbour hopping ``j_hop``:

* ``chain1d``   -- open chain of N sites, coordinates x = 1..N.
* ``rhombus2d`` -- square-lattice diamond |x| + |y| <= L.  Its edges run
  along the lattice diagonals, i.e. perpendicular to the mid-band emission
  directions, which is what makes the corners reflective for the emitted
  beams.  Site count is the closed form 2*L**2 + 2*L + 1 (1861 for L=30;
  conventions for the "rhombus with 30 sites per diagonal" differ by how
  boundary sites are counted, ours is fixed by the inequality above).
* ``corner3d``  -- cube 1..L per axis in skewed lattice coordinates with
  bond vectors e1, e2, e3 and e1+e2+e3 (8 bulk neighbours).  The corner
  site (1,1,1) keeps 4 neighbours.

Every open geometry carries *corner-adapted* integer coordinates: they
vanish at the reflective corner and grow into the bulk, so that trapping
regions and emitter placement can be expressed uniformly.  Emitter
positions on the corner diagonal are counted in steps from the corner
site (corner site = position 0).

A periodic variant of each geometry (``periodic``) is provided for
validating the spectrum against the closed-form dispersions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

GEOMETRY_KINDS = ("chain1d", "rhombus2d", "corner3d", "periodic")

# bond vectors of the 3D lattice in skewed integer coordinates
BONDS_3D = ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1))
BONDS_2D = ((1, 0), (0, 1))

N_NN = {1: 2, 2: 4, 3: 8}


@dataclass(frozen=True)
class GeometryKind:
    """Geometry tag plus size parameter.

    ``extent`` is N for the 1D chain, the half-diagonal L for the 2D
    rhombus and the edge length L for the 3D cube.  For the periodic
    validation variant ``dimension`` selects which dispersion applies.
    """

    kind: str
    extent: int
    dimension: int

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.extent < 2:
            raise ValueError("geometry extent must be >= 2")


@dataclass(frozen=True, eq=False)
class BathGraph:
    """Single-particle bath: sites, undirected hopping edges, frequencies.

    ``edges`` stores each undirected edge once; the induced matrix is real
    symmetric.  ``corner_coords`` are the corner-adapted coordinates
    described in the module docstring (1D: x, zero-based walls at x=0;
    2D: (a, b) with a = x+y+L, b = x-y+L; 3D: coords minus 1).
    """

    geometry: GeometryKind
    dimension: int
    sites: np.ndarray          # (N, dim) int
    omega_a: float
    j_hop: float
    edges: np.ndarray          # (E, 2) int, i < j
    amplitudes: np.ndarray     # (E,) float
    n_nn: int
    periodic: bool
    corner_coords: np.ndarray  # (N, dim) int
    site_index: dict = field(repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def index_of(self, coords) -> int:
        return self.site_index[tuple(int(c) for c in coords)]

    def neighbor_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_sites, dtype=int)
        np.add.at(counts, self.edges[:, 0], 1)
        np.add.at(counts, self.edges[:, 1], 1)
        return counts


def _finish(geometry, dimension, sites, omega_a, j_hop, edge_list, periodic,
            corner_coords):
    sites = np.asarray(sites, dtype=int)
    if edge_list:
        edges = np.array(edge_list, dtype=int)
    else:
        edges = np.zeros((0, 2), dtype=int)
    amplitudes = np.full(len(edges), float(j_hop))
    index = {tuple(s): i for i, s in enumerate(sites.tolist())}
    return BathGraph(
        geometry=geometry,
        dimension=dimension,
        sites=sites,
        omega_a=float(omega_a),
        j_hop=float(j_hop),
        edges=edges,
        amplitudes=amplitudes,
        n_nn=N_NN[dimension],
        periodic=periodic,
        corner_coords=np.asarray(corner_coords, dtype=int),
        site_index=index,
    )


def build_chain_1d(n: int, omega_a: float, j_hop: float = 1.0) -> BathGraph:
    """Open chain of ``n`` sites at coordinates x = 1..n."""
    if n < 2:
        raise ValueError("chain needs at least 2 sites")
    sites = [(x,) for x in range(1, n + 1)]
    edges = [(i, i + 1) for i in range(n - 1)]
    corner = [(x,) for x in range(1, n + 1)]
    geom = GeometryKind("chain1d", n, 1)
    return _finish(geom, 1, sites, omega_a, j_hop, edges, False, corner)


def build_rhombus_2d(l: int, omega_a: float, j_hop: float = 1.0) -> BathGraph:
    """Square-lattice diamond |x| + |y| <= l with a reflective corner.

    The corner used for emitter placement is the left vertex (-l, 0); the
    emitter diagonal is the +x axis.  Total sites: 2*l**2 + 2*l + 1.
    """
    if l < 2:
        raise ValueError("rhombus half-diagonal must be >= 2")
    sites = [(x, y) for x in range(-l, l + 1)
             for y in range(-(l - abs(x)), l - abs(x) + 1)]
    index = {s: i for i, s in enumerate(sites)}
    edges = []
    for (x, y), i in index.items():
        for dx, dy in BONDS_2D:
            j = index.get((x + dx, y + dy))
            if j is not None:
                edges.append((i, j) if i < j else (j, i))
    corner = [(x + y + l, x - y + l) for x, y in sites]
    geom = GeometryKind("rhombus2d", l, 2)
    return _finish(geom, 2, sites, omega_a, j_hop, edges, False, corner)


def build_corner_3d(l: int, omega_a: float, j_hop: float = 1.0) -> BathGraph:
    """Skewed-coordinate cube 1..l per axis with a reflective corner at (1,1,1).

    Hopping runs along e1, e2, e3 and e1+e2+e3, so the periodic variant
    reproduces the four-cosine dispersion exactly; bulk sites have 8
    neighbours, the corner site 4.
    """
    if l < 2:
        raise ValueError("cube edge length must be >= 2")
    rng = range(1, l + 1)
    sites = [(x, y, z) for x in rng for y in rng for z in rng]
    index = {s: i for i, s in enumerate(sites)}
    edges = []
    for (x, y, z), i in index.items():
        for dx, dy, dz in BONDS_3D:
            j = index.get((x + dx, y + dy, z + dz))
            if j is not None:
                edges.append((i, j) if i < j else (j, i))
    corner = [(x - 1, y - 1, z - 1) for x, y, z in sites]
    geom = GeometryKind("corner3d", l, 3)
    return _finish(geom, 3, sites, omega_a, j_hop, edges, False, corner)


def build_periodic(dimension: int, l: int, omega_a: float,
                   j_hop: float = 1.0) -> BathGraph:
    """Periodic validation variant: torus with the same bond set."""
    if dimension not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if l < 2:
        raise ValueError("periodic extent must be >= 2")
    if dimension == 1:
        bonds = ((1,),)
    elif dimension == 2:
        bonds = BONDS_2D
    else:
        bonds = BONDS_3D
    axes = [range(l)] * dimension
    sites = [()]
    for ax in axes:
        sites = [s + (v,) for s in sites for v in ax]
    index = {s: i for i, s in enumerate(sites)}
    edges = set()
    for s, i in index.items():
        for b in bonds:
            t = tuple((c + d) % l for c, d in zip(s, b))
            j = index[t]
            if i != j:
                edges.add((i, j) if i < j else (j, i))
    geom = GeometryKind("periodic", l, dimension)
    return _finish(geom, dimension, sites, omega_a, j_hop, sorted(edges),
                   True, sites)


def dispersion(bath: BathGraph, k) -> float:
    """Band energy omega(k) of the infinite lattice underlying ``bath``.

    1D: omega_a + 2J cos k
    2D: omega_a + 2J (cos kx + cos ky)
    3D: omega_a + 2J (cos kx + cos ky + cos kz + cos(kx+ky+kz))
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    wa, j = bath.omega_a, bath.j_hop
    if bath.dimension == 1:
        return wa + 2 * j * np.cos(k[0])
    if bath.dimension == 2:
        return wa + 2 * j * (np.cos(k[0]) + np.cos(k[1]))
    return wa + 2 * j * (np.cos(k[0]) + np.cos(k[1]) + np.cos(k[2])
                         + np.cos(k[0] + k[1] + k[2]))


def bandwidth(bath: BathGraph) -> float:
    """Photon bandwidth W = 2 * n_nn * J."""
    return 2.0 * bath.n_nn * bath.j_hop


def band_edges(bath: BathGraph) -> tuple[float, float]:
    w = bandwidth(bath)
    return bath.omega_a - w / 2.0, bath.omega_a + w / 2.0


def single_particle_matrix(bath: BathGraph) -> sp.csr_matrix:
    """Real symmetric bath matrix: omega_a on the diagonal, J on edges."""
    n = bath.n_sites
    i, j = bath.edges[:, 0], bath.edges[:, 1]
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    vals = np.concatenate([bath.amplitudes, bath.amplitudes])
    h = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return h + bath.omega_a * sp.identity(n, format="csr")


def k_grid(dimension: int, l: int) -> np.ndarray:
    """Discrete wave vectors 2*pi*m/l, folded into (-pi, pi]."""
    ks = 2.0 * np.pi * np.arange(l) / l
    ks = np.where(ks > np.pi, ks - 2 * np.pi, ks)
    if dimension == 1:
        return ks.reshape(-1, 1)
    grids = np.meshgrid(*([ks] * dimension), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def periodic_spectrum_deviation(bath: BathGraph) -> float:
    """Max |eigenvalue - omega(k)| of a periodic variant on its k-grid."""
    if not bath.periodic:
        raise ValueError("spectrum check requires a periodic bath")
    h = single_particle_matrix(bath).toarray()
    eigs = np.sort(np.linalg.eigvalsh(h))
    ks = k_grid(bath.dimension, bath.geometry.extent)
    target = np.sort([dispersion(bath, k) for k in ks])
    return float(np.max(np.abs(eigs - target)))


def diagonal_site(bath: BathGraph, position: int) -> int:
    """Site index for an emitter on the corner diagonal.

    1D: ``position`` is the site coordinate x0 (1..N).  2D/3D:
    ``position`` counts steps from the corner site along the diagonal
    (corner site = 0).
    """
    if position < 0:
        raise ValueError("diagonal position must be >= 0")
    l = bath.geometry.extent
    if bath.dimension == 1:
        if not 1 <= position <= l:
            raise ValueError(f"1D emitter site must be in 1..{l}")
        return bath.index_of((position,))
    if bath.dimension == 2:
        if position > 2 * l:
            raise ValueError("diagonal position outside rhombus")
        return bath.index_of((-l + position, 0))
    if position > l - 1:
        raise ValueError("diagonal position outside cube")
    return bath.index_of((1 + position,) * 3)


def export_edges_csv(bath: BathGraph, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_i", "site_j", "amplitude"])
        for (i, j), a in zip(bath.edges, bath.amplitudes):
            w.writerow([int(i), int(j), repr(float(a))])


def export_sites_csv(bath: BathGraph, path) -> None:
    axes = ["x", "y", "z"][: bath.dimension]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site"] + axes)
        for i, s in enumerate(bath.sites):
            w.writerow([i] + [int(c) for c in s])
