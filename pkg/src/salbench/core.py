"""Grid types and elementary transforms.

Grids are plain 2D ``float64`` numpy arrays indexed ``[row, col]`` with the
origin at the top-left pixel. A *density* is a nonnegative grid summing to
one; a *saliency map* is any finite grid. Fixations are integer pixel
coordinates held in a :class:`FixationSet`.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage, stats

from ._validation import check_grid, check_sigma
from .exceptions import DegenerateMap, NegativeValue, ZeroMass, ZeroVariance

BLUR_TRUNCATE = 4.0


class GridShape(NamedTuple):
    height: int
    width: int

    @property
    def size(self):
        return self.height * self.width


@dataclass(frozen=True)
class FixationSet:
    """Fixations on one stimulus as parallel ``rows``/``cols`` integer arrays.

    Order is preserved and repeated pixels are kept.
    """

    rows: np.ndarray
    cols: np.ndarray
    stimulus_id: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have the same length")
        rows.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def from_points(cls, points, stimulus_id=""):
        pts = np.asarray(list(points), dtype=np.int64).reshape(-1, 2)
        return cls(pts[:, 0], pts[:, 1], stimulus_id)

    @classmethod
    def from_flat(cls, indices, shape, stimulus_id=""):
        rows, cols = np.unravel_index(np.asarray(indices, dtype=np.int64), tuple(shape))
        return cls(rows, cols, stimulus_id)

    def __len__(self):
        return len(self.rows)

    @property
    def points(self):
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def flat_indices(self, shape):
        return np.ravel_multi_index((self.rows, self.cols), tuple(shape))

    def counts(self, shape):
        """Fixation count grid of the given shape."""
        shape = tuple(shape)
        flat = np.bincount(self.flat_indices(shape), minlength=shape[0] * shape[1])
        return flat.reshape(shape).astype(np.float64)


@dataclass
class FixationDataset:
    """Stimulus index plus per-stimulus fixations.

    ``shapes`` maps stimulus id to :class:`GridShape`; ``fixations`` maps the
    id to a :class:`FixationSet`. Iteration follows the insertion order of
    ``shapes``.
    """

    shapes: dict = field(default_factory=dict)
    fixations: dict = field(default_factory=dict)

    def add(self, stimulus_id, shape, fixations=None):
        self.shapes[stimulus_id] = GridShape(*shape)
        if fixations is not None:
            self.fixations[stimulus_id] = fixations
        return self

    @property
    def stimulus_ids(self):
        return list(self.shapes)

    def __len__(self):
        return len(self.shapes)

    def __iter__(self):
        return iter(self.shapes)

    def fixations_for(self, stimulus_id):
        fix = self.fixations.get(stimulus_id)
        if fix is None:
            return FixationSet(np.zeros(0), np.zeros(0), stimulus_id)
        return fix

    @property
    def n_fixations(self):
        return sum(len(f) for f in self.fixations.values())

    def excluding(self, stimulus_id):
        """Leave-one-image-out view without ``stimulus_id``."""
        shapes = {k: v for k, v in self.shapes.items() if k != stimulus_id}
        fixations = {k: v for k, v in self.fixations.items() if k != stimulus_id}
        return FixationDataset(shapes, fixations)

    def normalized_points(self):
        """All fixations as ``(x, y)`` pixel-center coordinates scaled to [0, 1]."""
        xs, ys = [], []
        for sid, shape in self.shapes.items():
            fix = self.fixations_for(sid)
            xs.append((fix.cols + 0.5) / shape.width)
            ys.append((fix.rows + 0.5) / shape.height)
        if not xs:
            return np.zeros((0, 2))
        return np.column_stack([np.concatenate(xs), np.concatenate(ys)])


def density_from_grid(values):
    """Normalize a nonnegative grid to unit sum."""
    arr = check_grid(values, "values")
    if np.any(arr < 0):
        raise NegativeValue("density values must be nonnegative")
    total = arr.sum()
    if total <= 0:
        raise ZeroMass("density values sum to zero")
    return arr / total


def equalize(saliency_map):
    """Histogram-equalize a map: pixel of ascending rank k becomes (k - 0.5) / N.

    Ties share their average rank, so a constant map becomes 0.5 everywhere.
    """
    arr = check_grid(saliency_map, "map")
    ranks = stats.rankdata(arr, method="average").reshape(arr.shape)
    return (ranks - 0.5) / arr.size


def gaussian_blur(grid, sigma, axes=(-2, -1)):
    """Separable Gaussian blur with reflect boundaries.

    The kernel is truncated at 4 sigma and renormalized, so total mass is
    preserved. ``axes`` selects the image axes, which allows blurring a
    stack of grids in one call.
    """
    sigma = check_sigma(sigma)
    arr = np.asarray(grid, dtype=np.float64)
    if sigma == 0:
        return arr.copy()
    out = arr
    for axis in axes:
        out = ndimage.gaussian_filter1d(out, sigma, axis=axis, mode="reflect", truncate=BLUR_TRUNCATE)
    return out


def normalize_to_distribution(saliency_map):
    """Shift a map to be nonnegative (only if it has negative entries), then unit-sum.

    Constant maps carry no spatial information and raise :class:`DegenerateMap`.
    """
    arr = check_grid(saliency_map, "map")
    if arr.max() == arr.min():
        raise DegenerateMap("constant map cannot be normalized to a distribution")
    lo = arr.min()
    if lo < 0:
        arr = arr - lo
    total = arr.sum()
    if not total > 0:
        raise DegenerateMap("map cannot be normalized to a distribution")
    return arr / total


def map_to_distribution(saliency_map):
    """Like :func:`normalize_to_distribution`, but a constant map becomes uniform."""
    arr = check_grid(saliency_map, "map")
    if arr.max() == arr.min():
        return np.full(arr.shape, 1.0 / arr.size)
    return normalize_to_distribution(arr)


def zscore_normalize(saliency_map):
    """Zero mean, unit population standard deviation."""
    arr = check_grid(saliency_map, "map")
    mean = arr.mean()
    std = arr.std()
    if std == 0 or std <= 1e-15 * max(abs(mean), 1.0):
        raise ZeroVariance("map is constant")
    return (arr - mean) / std
