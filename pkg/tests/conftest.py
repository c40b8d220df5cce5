import numpy as np
import pytest

from gaitgen.kinematics import planar_biped
from gaitgen.synthdata import GaitParams, forward_walk_segments, generate_gait


def central_difference(f, x, eps=1e-6):
    """Gradient of a scalar function of an array by central differences."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f(x)
        flat[i] = old - eps
        lo = f(x)
        flat[i] = old
        gf[i] = (hi - lo) / (2.0 * eps)
    return g


def max_relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


@pytest.fixture(scope="session")
def biped():
    return planar_biped(6)


@pytest.fixture(scope="session")
def forward_gait(biped):
    """Short forward walk with truth labels (machine-exact constraints)."""
    params = GaitParams(segments=forward_walk_segments(4.0, 0.20),
                        lead_in=2.2, lead_out=1.0, seed=0)
    return generate_gait(biped, params)
