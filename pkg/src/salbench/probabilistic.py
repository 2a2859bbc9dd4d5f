"""Fixation densities from data and from classical saliency maps.

Two estimators live here:

* :class:`SaliencyMapConverter` turns arbitrary saliency maps into fixation
  densities with a monotone pointwise nonlinearity times a radial center
  bias, fitted jointly for maximum likelihood on observed fixations.
* :class:`CenterBiasKDE` is an image-independent Gaussian KDE over
  fixation coordinates normalized to the unit square.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_density, check_fixations, check_grid
from .core import FixationDataset, GridShape
from .exceptions import (
    EmptyAfterExclusion,
    EmptyDataset,
    ShapeMismatch,
    TooFewStimuli,
    ZeroMass,
)

FACTOR_FLOOR = 1e-12
LOG_EPS = 1e-20


@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Continuous piecewise linear function on [0, 1] with equidistant knots.

    ``knot_values`` has ``segments + 1`` entries. Inputs outside [0, 1] are
    clamped.
    """

    knot_values: np.ndarray
    monotone: bool = False

    def __post_init__(self):
        knots = np.asarray(self.knot_values, dtype=np.float64).ravel().copy()
        if knots.size < 2:
            raise ValueError("need at least two knots")
        if not np.all(np.isfinite(knots)):
            raise ValueError("knot values must be finite")
        if self.monotone and np.any(np.diff(knots) < 0):
            raise ValueError("monotone function has decreasing knots")
        knots.setflags(write=False)
        object.__setattr__(self, "knot_values", knots)

    @classmethod
    def identity(cls, segments, monotone=True):
        return cls(np.linspace(0.0, 1.0, segments + 1), monotone)

    @classmethod
    def constant(cls, segments, value=1.0, monotone=False):
        return cls(np.full(segments + 1, float(value)), monotone)

    @property
    def segments(self):
        return self.knot_values.size - 1

    @property
    def breakpoints(self):
        return np.linspace(0.0, 1.0, self.knot_values.size)

    def __call__(self, x):
        return np.interp(np.clip(x, 0.0, 1.0), self.breakpoints, self.knot_values)


def eval_piecewise_linear(fn, x):
    return fn(x)


def _segment_weights(x, segments):
    """Segment index and position within the segment for ``x`` in [0, 1]."""
    t = np.clip(x, 0.0, 1.0) * segments
    idx = np.minimum(np.floor(t).astype(np.int64), segments - 1)
    return idx, t - idx


def center_bias_radius(rows, cols, shape, alpha):
    """Normalized eccentricity: 0 at the image center and 1 at the corners.

    ``x`` runs along columns and ``y`` along rows; ``alpha`` weights the
    vertical offset.
    """
    h, w = shape
    x_max, y_max = w - 1, h - 1
    dx = np.asarray(cols, dtype=np.float64) - 0.5 * x_max
    dy = np.asarray(rows, dtype=np.float64) - 0.5 * y_max
    num = np.sqrt(dx**2 + alpha * dy**2)
    den = np.sqrt(0.25 * x_max**2 + 0.25 * alpha * y_max**2)
    if den == 0:
        return np.zeros_like(num)
    return num / den


def _radius_grid(shape, alpha):
    rows, cols = np.indices(tuple(shape))
    return center_bias_radius(rows, cols, shape, alpha)


@dataclass(frozen=True)
class ProbabilisticModelFit:
    nonlinearity: PiecewiseLinearFn
    cb_profile: PiecewiseLinearFn
    alpha: float
    map_min: float = 0.0
    map_max: float = 1.0

    def rescale(self, saliency_map):
        smap = check_grid(saliency_map, "map")
        span = self.map_max - self.map_min
        if span <= 0:
            return np.zeros_like(smap)
        return np.clip((smap - self.map_min) / span, 0.0, 1.0)


def model_density(fit, saliency_map):
    """Density of a map already rescaled to [0, 1]."""
    smap = check_grid(saliency_map, "map")
    nl = np.maximum(fit.nonlinearity(smap), FACTOR_FLOOR)
    cb = np.maximum(fit.cb_profile(_radius_grid(smap.shape, fit.alpha)), FACTOR_FLOOR)
    product = nl * cb
    total = product.sum()
    if not total > 0:
        raise ZeroMass("model density vanishes everywhere")
    return product / total


def log_likelihood(density, fixations):
    """Total log-likelihood of the fixations in nats."""
    density = check_density(density)
    fixations = check_fixations(fixations, density.shape)
    return float(np.sum(np.log(density[fixations.rows, fixations.cols] + LOG_EPS)))


def _mean_or_one(knots):
    m = float(np.mean(knots))
    return m if m > 0 else 1.0


def _through_mean_scaling(g, raw):
    # gradient wrt raw knots given gradient wrt raw / mean(raw)
    m = _mean_or_one(raw)
    return g / m - np.dot(g, raw) / (m * m * len(raw))


class _ConversionObjective:
    """Negative mean log-likelihood and its gradient for the joint fit.

    Parameter vector: ``[nl_0, nl increments (segments_nl), cb knots
    (segments_cb + 1), alpha]``. Bounds keep increments and cb knots
    nonnegative, so the nonlinearity is nondecreasing by construction.
    """

    def __init__(self, rescaled_maps, fixations, segments_nl, segments_cb):
        self.segments_nl = segments_nl
        self.segments_cb = segments_cb
        values, stim, counts, dx2, dy2, xm2, ym2, n_fix = [], [], [], [], [], [], [], []
        for s, (smap, fix) in enumerate(zip(rescaled_maps, fixations)):
            h, w = smap.shape
            rows, cols = np.indices((h, w))
            values.append(smap.ravel())
            stim.append(np.full(h * w, s))
            counts.append(fix.counts((h, w)).ravel())
            dx2.append(((cols - 0.5 * (w - 1)) ** 2).ravel())
            dy2.append(((rows - 0.5 * (h - 1)) ** 2).ravel())
            xm2.append(np.full(h * w, 0.25 * (w - 1) ** 2))
            ym2.append(np.full(h * w, 0.25 * (h - 1) ** 2))
            n_fix.append(len(fix))
        self.stim = np.concatenate(stim)
        self.counts = np.concatenate(counts)
        self.dx2 = np.concatenate(dx2)
        self.dy2 = np.concatenate(dy2)
        self.xm2 = np.concatenate(xm2)
        self.ym2 = np.concatenate(ym2)
        self.n_fix = np.asarray(n_fix, dtype=np.float64)
        self.total_fix = self.n_fix.sum()
        self.nl_idx, self.nl_frac = _segment_weights(np.concatenate(values), segments_nl)

    def raw_knots(self, theta):
        k = self.segments_nl
        nl_knots = theta[0] + np.concatenate([[0.0], np.cumsum(theta[1:k + 1])])
        cb_knots = theta[k + 1:k + 2 + self.segments_cb]
        return nl_knots, cb_knots

    def unpack(self, theta):
        """Knots rescaled to mean 1 and alpha.

        Rescaling either factor leaves the density unchanged, so the knots
        are normalized before use and the likelihood is exactly scale-free.
        """
        nl_knots, cb_knots = self.raw_knots(theta)
        return nl_knots / _mean_or_one(nl_knots), cb_knots / _mean_or_one(cb_knots), theta[-1]

    def pack(self, nl_knots, cb_knots, alpha):
        return np.concatenate([[nl_knots[0]], np.diff(nl_knots), cb_knots, [alpha]])

    def radius(self, alpha):
        num = np.sqrt(self.dx2 + alpha * self.dy2)
        den = np.sqrt(self.xm2 + alpha * self.ym2)
        safe = np.where(den > 0, den, 1.0)
        return np.where(den > 0, num / safe, 0.0), num, safe

    def log_likelihood(self, theta):
        return self.log_likelihood_and_grad(theta)[0]

    def __call__(self, theta):
        """Objective for the minimizer: mean negative log-likelihood."""
        ll, grad = self.log_likelihood_and_grad(theta)
        return -ll / self.total_fix, -grad / self.total_fix

    def log_likelihood_and_grad(self, theta):
        """Total log-likelihood (nats) and its gradient."""
        nl_knots, cb_knots, alpha = self.unpack(theta)
        i, w = self.nl_idx, self.nl_frac
        nl_raw = nl_knots[i] * (1 - w) + nl_knots[i + 1] * w
        r, num, den = self.radius(alpha)
        j, u = _segment_weights(r, self.segments_cb)
        cb_raw = cb_knots[j] * (1 - u) + cb_knots[j + 1] * u
        nl = np.maximum(nl_raw, FACTOR_FLOOR)
        cb = np.maximum(cb_raw, FACTOR_FLOOR)
        v = nl * cb
        z = np.bincount(self.stim, weights=v, minlength=len(self.n_fix))
        fixated = self.counts > 0
        ll = np.sum(self.counts[fixated] * np.log(v[fixated])) - np.sum(self.n_fix * np.log(z))

        # dLL/dv per pixel
        g = -(self.n_fix / z)[self.stim]
        g[fixated] += self.counts[fixated] / v[fixated]
        g_nl = np.where(nl_raw > FACTOR_FLOOR, g * cb, 0.0)
        g_cb = np.where(cb_raw > FACTOR_FLOOR, g * nl, 0.0)

        k = self.segments_nl
        d_knots = np.bincount(i, g_nl * (1 - w), minlength=k + 1) + np.bincount(
            i + 1, g_nl * w, minlength=k + 1
        )
        nl_raw_knots, cb_raw_knots = self.raw_knots(theta)
        d_knots = _through_mean_scaling(d_knots, nl_raw_knots)
        d_inc = np.cumsum(d_knots[::-1])[::-1]
        d_cb = np.bincount(j, g_cb * (1 - u), minlength=self.segments_cb + 1) + np.bincount(
            j + 1, g_cb * u, minlength=self.segments_cb + 1
        )
        d_cb = _through_mean_scaling(d_cb, cb_raw_knots)
        slope = self.segments_cb * (cb_knots[j + 1] - cb_knots[j])
        with np.errstate(invalid="ignore", divide="ignore"):
            dr = np.where(
                num > 0, self.dy2 / (2 * num * den) - num * self.ym2 / (2 * den**3), 0.0
            )
        d_alpha = np.sum(g_cb * slope * dr)
        grad = np.concatenate([[d_inc[0]], d_inc[1:], d_cb, [d_alpha]])
        return ll, grad


def _as_map_list(maps, dataset):
    if isinstance(maps, dict):
        missing = [sid for sid in dataset if len(dataset.fixations_for(sid)) and sid not in maps]
        if missing:
            raise ShapeMismatch(f"no saliency map for stimuli {missing}")
        return [maps.get(sid) for sid in dataset]
    maps = list(maps)
    if len(maps) != len(dataset):
        raise ShapeMismatch(f"got {len(maps)} maps for {len(dataset)} stimuli")
    return maps


class SaliencyMapConverter(TransformerMixin, BaseEstimator):
    """Convert saliency maps into fixation densities by maximum likelihood.

    All maps are jointly rescaled to [0, 1]; a monotone piecewise linear
    nonlinearity is applied per pixel and multiplied with a piecewise
    linear function of the normalized eccentricity. The knots and the
    eccentricity ratio ``alpha`` are optimized with L-BFGS-B on the summed
    log-likelihood of the observed fixations.

    Parameters
    ----------
    segments_nl : int, default=20
    segments_cb : int, default=12
    max_iter : int, default=5000
    tol : float, default=1e-15
        Relative objective improvement below which L-BFGS-B stops. Tight
        on purpose: fits of affinely related maps then agree per pixel
        to well below 1e-6.

    Attributes
    ----------
    fit_ : ProbabilisticModelFit
    history_ : list of float
        Log-likelihood (nats) after each optimizer iteration. Iterates that
        would lower it are not accepted, so the list is nondecreasing.
    initial_log_likelihood_, log_likelihood_ : float
    n_iter_ : int
    """

    def __init__(self, segments_nl=20, segments_cb=12, max_iter=5000, tol=1e-15):
        self.segments_nl = segments_nl
        self.segments_cb = segments_cb
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        """Fit on maps ``X`` and the :class:`FixationDataset` ``y``.

        ``X`` is either a dict keyed by stimulus id or a sequence in the
        dataset's stimulus order.
        """
        dataset = y
        if not isinstance(dataset, FixationDataset) or len(dataset) == 0 or dataset.n_fixations == 0:
            raise EmptyDataset("conversion needs a nonempty fixation dataset")
        maps = _as_map_list(X, dataset)
        used_maps, used_fix = [], []
        for sid, smap in zip(dataset, maps):
            fix = dataset.fixations_for(sid)
            if len(fix) == 0:
                continue
            smap = check_grid(smap, f"map[{sid}]")
            if smap.shape != tuple(dataset.shapes[sid]):
                raise ShapeMismatch(
                    f"map for {sid} has shape {smap.shape}, stimulus is {tuple(dataset.shapes[sid])}"
                )
            used_maps.append(smap)
            used_fix.append(check_fixations(fix, smap.shape))
        lo = min(float(m.min()) for m in used_maps)
        hi = max(float(m.max()) for m in used_maps)
        self.map_min_, self.map_max_ = lo, hi
        span = hi - lo
        rescaled = [(m - lo) / span if span > 0 else np.zeros_like(m) for m in used_maps]

        objective = _ConversionObjective(rescaled, used_fix, self.segments_nl, self.segments_cb)
        theta0 = objective.pack(
            np.linspace(0.0, 2.0, self.segments_nl + 1), np.ones(self.segments_cb + 1), 1.0
        )
        bounds = (
            [(0.0, None)] * (self.segments_nl + 1)
            + [(0.0, None)] * (self.segments_cb + 1)
            + [(1e-3, 1e3)]
        )
        history = [objective.log_likelihood(theta0)]
        accepted = [theta0]

        def accept(xk):
            # an iterate that lowers the likelihood (round-off near the optimum) is not taken
            ll = objective.log_likelihood(xk)
            if ll >= history[-1]:
                accepted[0] = np.array(xk, copy=True)
                history.append(ll)
            else:
                history.append(history[-1])

        result = optimize.minimize(
            objective,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=accept,
            options={"maxiter": self.max_iter, "ftol": self.tol, "gtol": 1e-12, "maxcor": 20},
        )
        accept(result.x)
        theta = accepted[0]
        nl_knots, cb_knots, alpha = objective.unpack(theta)
        self.fit_ = ProbabilisticModelFit(
            nonlinearity=PiecewiseLinearFn(np.maximum.accumulate(nl_knots), monotone=True),
            cb_profile=PiecewiseLinearFn(cb_knots),
            alpha=float(alpha),
            map_min=lo,
            map_max=hi,
        )
        self.initial_log_likelihood_ = history[0]
        self.log_likelihood_ = objective.log_likelihood(theta)
        self.history_ = history
        self.n_iter_ = int(result.nit)
        return self

    def transform(self, X):
        """Densities for one map ``(H, W)`` or a stack ``(n, H, W)``."""
        check_is_fitted(self, "fit_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return model_density(self.fit_, self.fit_.rescale(X))
        return np.stack([model_density(self.fit_, self.fit_.rescale(m)) for m in X])

    def score(self, X, y):
        """Mean log-likelihood per fixation in nats."""
        check_is_fitted(self, "fit_")
        maps = _as_map_list(X, y)
        total, n = 0.0, 0
        for sid, smap in zip(y, maps):
            fix = y.fixations_for(sid)
            if len(fix):
                total += log_likelihood(self.transform(smap), fix)
                n += len(fix)
        return total / n


def fit_conversion(maps, fixations, segments_nl=20, segments_cb=12, **opt):
    return SaliencyMapConverter(segments_nl, segments_cb, **opt).fit(maps, fixations).fit_


def _gaussian_factors(coords, centers, bandwidth):
    return np.exp(-0.5 * ((coords[:, None] - centers[None, :]) / bandwidth) ** 2)


def _kde_grid(points, shape, bandwidth):
    """Unnormalized isotropic Gaussian KDE at pixel centers, as a separable product."""
    h, w = shape
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    ky = _gaussian_factors(ys, points[:, 1], bandwidth)
    kx = _gaussian_factors(xs, points[:, 0], bandwidth)
    return ky @ kx.T


class CenterBiasKDE(BaseEstimator):
    """Gaussian KDE over fixation coordinates normalized to [0, 1]^2.

    Parameters
    ----------
    bandwidth : float, default=0.22
        Kernel standard deviation in normalized image coordinates.
    """

    def __init__(self, bandwidth=0.22):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        """Fit on a :class:`FixationDataset`."""
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if not isinstance(X, FixationDataset) or X.n_fixations == 0:
            raise EmptyDataset("centerbias KDE needs at least one fixation")
        self.normalized_points_ = X.normalized_points()
        labels = []
        for sid in X:
            labels.extend([sid] * len(X.fixations_for(sid)))
        self.point_stimuli_ = np.asarray(labels, dtype=object)
        return self

    def density(self, shape, exclude=None):
        """Density on a grid of ``shape``, optionally leaving out one stimulus."""
        check_is_fitted(self, "normalized_points_")
        shape = GridShape(*shape)
        points = self.normalized_points_
        if exclude is not None:
            points = points[self.point_stimuli_ != exclude]
            if len(points) == 0:
                raise EmptyAfterExclusion(f"no fixations left after excluding {exclude!r}")
        grid = _kde_grid(points, shape, self.bandwidth)
        total = grid.sum()
        if not total > 0:
            raise ZeroMass("KDE underflowed on this grid; bandwidth too small")
        return grid / total

    def score(self, X, y=None):
        """Mean leave-one-image-out log-likelihood per fixation of dataset ``X``."""
        return _loo_mean_log_likelihood(self, X, "stimulus")


def fit_kde_centerbias(dataset, bandwidth=0.22):
    return CenterBiasKDE(bandwidth).fit(dataset)


def kde_density_for_size(kde, shape, exclude_stimulus=None, dataset=None):
    """Evaluate ``kde`` on a grid; ``dataset`` refits the points if given."""
    if dataset is not None:
        kde = CenterBiasKDE(kde.bandwidth).fit(dataset)
    return kde.density(shape, exclude=exclude_stimulus)


def _loo_mean_log_likelihood(kde, dataset, shape_policy):
    total, n = 0.0, 0
    for sid in dataset:
        fix = dataset.fixations_for(sid)
        if len(fix) == 0:
            continue
        own_shape = dataset.shapes[sid]
        if shape_policy == "stimulus":
            shape = own_shape
            rows, cols = fix.rows, fix.cols
        else:
            shape = GridShape(*shape_policy)
            rows = np.minimum(((fix.rows + 0.5) / own_shape.height * shape.height).astype(int), shape.height - 1)
            cols = np.minimum(((fix.cols + 0.5) / own_shape.width * shape.width).astype(int), shape.width - 1)
        density = kde.density(shape, exclude=sid)
        total += float(np.sum(np.log(density[rows, cols] + LOG_EPS)))
        n += len(fix)
    return total / n


def crossvalidate_bandwidth(dataset, candidates, shape_policy="stimulus"):
    """Bandwidth with the best leave-one-image-out mean log-likelihood per fixation.

    ``shape_policy`` is ``"stimulus"`` (evaluate each held-out stimulus on
    its own grid) or a fixed ``(height, width)``. Ties go to the earlier
    candidate.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidate bandwidths")
    populated = [sid for sid in dataset if len(dataset.fixations_for(sid))]
    if len(populated) < 2:
        raise TooFewStimuli("cross-validation needs at least two stimuli with fixations")
    if len(candidates) == 1:
        return candidates[0]
    scores = []
    for bw in candidates:
        kde = CenterBiasKDE(bw).fit(dataset)
        scores.append(_loo_mean_log_likelihood(kde, dataset, shape_policy))
    return candidates[int(np.argmax(scores))]
