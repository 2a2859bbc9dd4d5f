"""Input validation helpers shared by all modules."""

import numpy as np

from .exceptions import (
    EmptyFixations,
    NegativeValue,
    NonFinite,
    OutOfBounds,
    ShapeMismatch,
    ZeroMass,
)

DENSITY_TOL = 1e-6


def check_grid(values, name="grid"):
    """Return ``values`` as a finite 2D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return arr


def check_density(values, name="density", tol=DENSITY_TOL):
    """Validate a probability grid: nonnegative and summing to one within ``tol``."""
    arr = check_grid(values, name)
    if np.any(arr < 0):
        raise NegativeValue(f"{name} has negative entries")
    total = arr.sum()
    if total == 0:
        raise ZeroMass(f"{name} has zero mass")
    if abs(total - 1.0) > tol:
        raise ZeroMass(f"{name} sums to {total!r}, expected 1")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{names[0]} has shape {a.shape} but {names[1]} has shape {b.shape}")


def check_sigma(sigma):
    from .exceptions import NegativeSigma

    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    return sigma


def check_fixations(fixations, shape=None, name="fixations"):
    """Coerce to a :class:`~salbench.core.FixationSet` and bounds-check it.

    Accepts a ``FixationSet`` or a sequence of ``(row, col)`` pairs.
    """
    from .core import FixationSet

    if not isinstance(fixations, FixationSet):
        fixations = FixationSet.from_points(fixations)
    if len(fixations) == 0:
        raise EmptyFixations(f"{name} is empty")
    if shape is not None:
        h, w = shape
        rows, cols = fixations.rows, fixations.cols
        bad = (rows < 0) | (rows >= h) | (cols < 0) | (cols >= w)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise OutOfBounds(
                f"{name}[{i}] = ({rows[i]}, {cols[i]}) outside grid of shape {tuple(shape)}"
            )
    return fixations
