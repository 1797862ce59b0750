"""Activation-pattern counting for piecewise-linear networks.

``activation_patterns`` evaluates the layerwise product bound
``prod_l sum_{j=0}^{m_l - 1} C(n_l, j)`` with ``m_l = min(n_0, ..., n_l)``
over the hidden layers. With ``inclusive=True`` the inner sum runs to
``m_l`` instead, which is the classical count of regions cut by ``n_l``
hyperplanes in ``m_l`` dimensions. Only the inclusive form is a true upper
bound: three generic lines already split the plane into seven regions.
"""

from __future__ import annotations

from math import comb

import numpy as np

from ..sdnne import MlpDesign, MlpModel, _forward


def activation_patterns(design: MlpDesign, inclusive: bool = False) -> int:
    sizes = design.layer_sizes
    if len(sizes) < 3:
        raise ValueError("need at least one hidden layer")
    total = 1
    width = sizes[0]
    for n_l in sizes[1:-1]:
        width = min(width, n_l)
        top = width if inclusive else width - 1
        total *= sum(comb(n_l, j) for j in range(min(top, n_l) + 1))
    return total


def realized_patterns(model: MlpModel, inputs: np.ndarray) -> int:
    """Distinct on/off states of all hidden units seen over ``inputs``."""
    _, cache = _forward(model.params(), model.design, np.atleast_2d(inputs), keep=True)
    states = np.concatenate([z > 0 for _, z, _ in cache[:-1]], axis=1)
    return int(np.unique(np.packbits(states, axis=1), axis=0).shape[0])
