"""Metric-specific saliency maps derived from a fixation density.

Each metric has a map that maximizes the expected score when fixations are
drawn from the density. AUC, sAUC, NSS/IG and CC/KLDiv have closed forms;
the SIM map is found by projected stochastic gradient ascent.
"""

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_density, check_grid, check_same_shape, check_sigma
from .core import equalize, gaussian_blur, map_to_distribution
from .exceptions import CapReached, MissingCenterbias, NegativeSigma, NonFinite, ZeroCenterbias
from .metrics import MetricId

# pixel count the reference learning rates were tuned for (1024 x 768 images)
REFERENCE_PIXELS = 1024 * 768


@dataclass(frozen=True)
class SgdConfig:
    """Hyperparameters of the SIM optimizer.

    Learning rates are given for a 1024x768 image and scaled by
    ``REFERENCE_PIXELS / N`` for a grid of ``N`` pixels, so the step size
    stays the same relative to the mean pixel value.
    """

    batch_size: int = 50
    initial_lr: float = 1e-7
    lr_decay: float = 1.0 / 3.0
    min_lr: float = 1e-9
    validation_samples: int = 1000
    validation_interval: int = 1000
    seed: int = 0
    tie_weight: float = 0.5
    max_training_samples: int = 10_000_000
    scale_lr_to_grid: bool = True

    def __post_init__(self):
        if not 0 < self.lr_decay < 1:
            raise ValueError("lr_decay must be in (0, 1)")
        if not 0 < self.min_lr < self.initial_lr:
            raise ValueError("need 0 < min_lr < initial_lr")
        if self.batch_size < 1 or self.validation_samples < 1 or self.validation_interval < 1:
            raise ValueError("batch_size, validation_samples and validation_interval must be >= 1")


@dataclass(frozen=True)
class DeriveConfig:
    empirical_sigma: float = 35.0
    fixations_per_image: int = 100
    sgd: SgdConfig = field(default_factory=SgdConfig)
    centerbias: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.empirical_sigma > 0:
            raise NegativeSigma("empirical_sigma must be > 0")
        if self.fixations_per_image < 1:
            raise ValueError("fixations_per_image must be >= 1")


def derive_auc_map(density):
    return equalize(check_density(density))


def derive_sauc_map(density, centerbias):
    density = check_density(density)
    centerbias = check_density(centerbias, "centerbias")
    check_same_shape(density, centerbias, ("density", "centerbias"))
    if np.any(centerbias <= 0):
        raise ZeroCenterbias("centerbias must be strictly positive everywhere")
    return equalize(density / centerbias)


def derive_nss_ig_map(density):
    return check_density(density).copy()


def derive_cc_kldiv_map(density, sigma):
    """Expected empirical saliency map: the density blurred by ``sigma``."""
    sigma = check_sigma(sigma)
    if sigma == 0:
        raise NegativeSigma("sigma must be > 0")
    return gaussian_blur(check_density(density), sigma)


def project_to_simplex(grid):
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}`` (sort and threshold)."""
    v = np.asarray(grid, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NonFinite("grid contains NaN or Inf")
    u = np.sort(v.ravel())[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, u.size + 1)
    rho = np.count_nonzero(u - css / k > 0)
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def _sample_empirical(density_flat, shape, n_fix, n_samples, sigma, rng):
    """``n_samples`` normalized empirical maps, shape ``(n_samples, H*W)``."""
    counts = rng.multinomial(n_fix, density_flat, size=n_samples).astype(np.float64)
    maps = counts.reshape((n_samples,) + tuple(shape))
    if sigma > 0:
        maps = gaussian_blur(maps, sigma)
    maps = maps.reshape(n_samples, -1)
    maps /= maps.sum(axis=1, keepdims=True)
    return maps


def _mean_sim(x_flat, empirical):
    return float(np.mean(np.minimum(x_flat[None, :], empirical).sum(axis=1)))


def expected_sim(saliency_map, density, n_fix, n_samples, sigma, seed=0, chunk=500):
    """Monte-Carlo estimate of the expected SIM score of ``saliency_map``."""
    x = map_to_distribution(saliency_map).ravel()
    density = check_density(density)
    check_same_shape(np.asarray(saliency_map), density, ("map", "density"))
    sigma = check_sigma(sigma)
    if n_fix < 1 or n_samples < 1:
        raise ValueError("n_fix and n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    p = density.ravel()
    total = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        emp = _sample_empirical(p, density.shape, n_fix, m, sigma, rng)
        total += np.minimum(x[None, :], emp).sum(axis=1).sum()
        done += m
    return total / n_samples


@dataclass
class SimOptimizationResult:
    saliency_map: np.ndarray
    initial_validation: float
    best_validation: float
    training_samples: int
    lr_decays: int
    history: list
    cap_reached: bool


def optimize_sim_map(density, sigma, n_fix, sgd=None, init=None):
    """Projected stochastic gradient ascent on the expected SIM score.

    Starting from ``init`` (default: the normalized blurred density), each
    step draws ``batch_size`` empirical maps, adds ``lr`` times the mean
    indicator ``x < e`` (``tie_weight`` at equality) and projects back onto
    the simplex. Every ``validation_interval`` training samples the score on
    a fixed validation set is computed; whenever it fails to rise, the best iterate
    is restored and the learning rate decays. Stops once the rate falls
    below ``min_lr``.
    """
    sgd = sgd or SgdConfig()
    density = check_density(density)
    sigma = check_sigma(sigma)
    shape = density.shape
    p = density.ravel()
    if init is None:
        init = gaussian_blur(density, sigma) if sigma > 0 else density
    x = project_to_simplex(map_to_distribution(init)).ravel()

    scale = REFERENCE_PIXELS / p.size if sgd.scale_lr_to_grid else 1.0
    lr = sgd.initial_lr * scale
    min_lr = sgd.min_lr * scale

    train_seq, val_seq = np.random.SeedSequence(sgd.seed).spawn(2)
    train_rng = np.random.default_rng(train_seq)
    validation = _sample_empirical(
        p, shape, n_fix, sgd.validation_samples, sigma, np.random.default_rng(val_seq)
    )

    best_x = x.copy()
    best_val = last_val = initial_val = _mean_sim(x, validation)
    history = [(0, lr, initial_val)]
    seen = 0
    since_check = 0
    decays = 0
    cap_reached = False
    while lr >= min_lr:
        if seen >= sgd.max_training_samples:
            cap_reached = True
            warnings.warn(
                f"SIM optimizer stopped at the cap of {sgd.max_training_samples} samples",
                CapReached,
                stacklevel=2,
            )
            break
        batch = _sample_empirical(p, shape, n_fix, sgd.batch_size, sigma, train_rng)
        grad = (x[None, :] < batch).mean(axis=0)
        if sgd.tie_weight:
            grad += sgd.tie_weight * (x[None, :] == batch).mean(axis=0)
        x = project_to_simplex(x + lr * grad)
        seen += sgd.batch_size
        since_check += sgd.batch_size
        if since_check >= sgd.validation_interval:
            since_check = 0
            val = _mean_sim(x, validation)
            history.append((seen, lr, val))
            if val > best_val:
                best_val = val
                best_x = x.copy()
            # an exact plateau counts as a drop, otherwise a stationary
            # iterate would run until the sample cap
            if val <= last_val:
                x = best_x.copy()
                lr *= sgd.lr_decay
                decays += 1
                last_val = best_val
            else:
                last_val = val
    return SimOptimizationResult(
        saliency_map=best_x.reshape(shape),
        initial_validation=initial_val,
        best_validation=best_val,
        training_samples=seen,
        lr_decays=decays,
        history=history,
        cap_reached=cap_reached,
    )


def derive_sim_map(density, config=None):
    config = config or DeriveConfig()
    return optimize_sim_map(
        density, config.empirical_sigma, config.fixations_per_image, config.sgd
    ).saliency_map


def derive_map(density, metric, config=None):
    """Saliency map for ``metric`` that maximizes expected performance under ``density``."""
    config = config or DeriveConfig()
    metric = MetricId.parse(metric)
    density = check_density(density)
    if metric is MetricId.AUC:
        return derive_auc_map(density)
    if metric is MetricId.sAUC:
        if config.centerbias is None:
            raise MissingCenterbias("sAUC maps need a centerbias density")
        return derive_sauc_map(density, config.centerbias)
    if metric in (MetricId.NSS, MetricId.IG):
        return derive_nss_ig_map(density)
    if metric in (MetricId.CC, MetricId.KLDiv):
        return derive_cc_kldiv_map(density, config.empirical_sigma)
    return derive_sim_map(density, config)


class MetricMapDeriver(TransformerMixin, BaseEstimator):
    """Transform fixation densities into saliency maps for one metric.

    Stateless: ``fit`` only validates parameters. ``transform`` accepts a
    single ``(H, W)`` density or a stack ``(n, H, W)``.

    Parameters
    ----------
    metric : str or MetricId
    empirical_sigma : float, default=35.0
        Blur of the empirical saliency maps used by CC, KLDiv and SIM.
    fixations_per_image : int, default=100
        Fixations per empirical map assumed by the SIM optimizer.
    centerbias : ndarray, optional
        Nonfixation density, required for sAUC.
    sgd : SgdConfig, optional
    """

    def __init__(self, metric="AUC", empirical_sigma=35.0, fixations_per_image=100,
                 centerbias=None, sgd=None):
        self.metric = metric
        self.empirical_sigma = empirical_sigma
        self.fixations_per_image = fixations_per_image
        self.centerbias = centerbias
        self.sgd = sgd

    def _config(self):
        return DeriveConfig(
            empirical_sigma=self.empirical_sigma,
            fixations_per_image=self.fixations_per_image,
            sgd=self.sgd or SgdConfig(),
            centerbias=self.centerbias,
        )

    def fit(self, X=None, y=None):
        self.metric_ = MetricId.parse(self.metric)
        self.config_ = self._config()
        if self.metric_ is MetricId.sAUC and self.centerbias is None:
            raise MissingCenterbias("sAUC maps need a centerbias density")
        return self

    def transform(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return derive_map(X, self.metric_, self.config_)
        return np.stack([derive_map(d, self.metric_, self.config_) for d in X])

    def with_seed(self, seed):
        sgd = replace(self.sgd or SgdConfig(), seed=seed)
        return self.set_params(sgd=sgd)
