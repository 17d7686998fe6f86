import numpy as np
import pytest

from cornerstates.lattice import (GeometryKind, BathGraph, build_chain_1d,
                                  build_rhombus_2d, build_corner_3d)


@pytest.fixture
def chain60():
    return build_chain_1d(60, 2.5, 1.0)


@pytest.fixture
def rhombus6():
    return build_rhombus_2d(6, 2.5, 1.0)


@pytest.fixture
def cube5():
    return build_corner_3d(5, 2.5, 1.0)


def make_single_site_bath(omega_a):
    """One-resonator bath; the builders require N >= 2 so build it directly."""
    geom = GeometryKind("chain1d", 2, 1)
    return BathGraph(
        geometry=geom, dimension=1,
        sites=np.array([[1]]), omega_a=float(omega_a), j_hop=1.0,
        edges=np.zeros((0, 2), dtype=int), amplitudes=np.zeros(0),
        n_nn=2, periodic=False, corner_coords=np.array([[1]]),
        site_index={(1,): 0})
