"""Random test fields shared by several test modules."""
import numpy as np

from varexp.exponent import ExponentField
from varexp.spaces import DiscreteField, gauss_box_quadrature


def box_nodes(n=12, lo=(0.0, 0.0), hi=(1.0, 1.0)):
    return gauss_box_quadrature(n, lo, hi)


def piecewise_field(rng, points, weights, rank="scalar", blocks=4, scale=None,
                    lo=(0.0, 0.0), hi=(1.0, 1.0)):
    """Piecewise-constant random field on a ``blocks x blocks`` partition of the box."""
    scale = rng.uniform(0.05, 20.0) if scale is None else scale
    shape = {"scalar": (), "vector": (2,), "sym_tensor": (2, 2)}[rank]
    table = scale * rng.standard_normal((blocks, blocks) + shape)
    if rank == "sym_tensor":
        table = 0.5 * (table + np.swapaxes(table, -1, -2))
    x = points[:, 1:]
    i = np.clip(((x[:, 0] - lo[0]) / (hi[0] - lo[0]) * blocks).astype(int), 0, blocks - 1)
    j = np.clip(((x[:, 1] - lo[1]) / (hi[1] - lo[1]) * blocks).astype(int), 0, blocks - 1)
    return DiscreteField(table[i, j], points, weights, rank)


def random_affine(rng, low=1.05, high=6.0):
    """Random affine exponent whose corner values all lie in ``[low, high]``."""
    while True:
        p00, p10, p01 = rng.uniform(low, high, 3)
        if low <= p10 + p01 - p00 <= high:
            return ExponentField.affine(p00, p10 - p00, p01 - p00)


def ordered_affine_pair(rng, low=1.05, high=6.0):
    """Affine exponents ``q <= p`` pointwise on the unit box."""
    p = random_affine(rng, low, high)
    gap = rng.uniform(0.0, p.p_minus - low)
    return p.shifted(-gap, name="q"), p
