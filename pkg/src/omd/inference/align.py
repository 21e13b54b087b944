"""Post-hoc relabelling of latent states by optimal assignment."""

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import InvalidArgumentError


def align_states(reference, candidate) -> np.ndarray:
    """Permutation ``perm`` minimising ``sum_k |candidate[perm[k]] - reference[k]|_1``.

    ``candidate[perm]`` is the candidate with its rows relabelled to match the
    reference. Solved exactly with the Hungarian method.
    """
    reference = np.asarray(reference, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if reference.shape != candidate.shape:
        raise InvalidArgumentError("reference and candidate must share a shape")
    cost = np.abs(reference[:, None, :] - candidate[None, :, :]).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(reference.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def permute_states(sample: dict, perm) -> dict:
    """Relabel the ``emission`` rows and ``transition`` rows/columns of a sample."""
    perm = np.asarray(perm)
    out = dict(sample)
    if "emission" in out:
        out["emission"] = np.asarray(out["emission"])[perm]
    if "transition" in out:
        out["transition"] = np.asarray(out["transition"])[np.ix_(perm, perm)]
    return out
