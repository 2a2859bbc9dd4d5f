"""The seven saliency metrics plus the empirical saliency map.

All metric functions return a plain ``float``. Fixations may be passed as a
:class:`~salbench.core.FixationSet` or as a sequence of ``(row, col)``
pairs; repeated fixations count with multiplicity.
"""

from enum import Enum

import numpy as np

from ._validation import check_density, check_fixations, check_grid, check_same_shape
from .core import gaussian_blur, map_to_distribution, zscore_normalize

KLDIV_EPS = 2.2e-16
IG_EPS = 1e-20


class MetricId(str, Enum):
    AUC = "AUC"
    sAUC = "sAUC"
    NSS = "NSS"
    IG = "IG"
    CC = "CC"
    KLDiv = "KLDiv"
    SIM = "SIM"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown metric {value!r}; expected one of {[m.value for m in cls]}")

    @property
    def lower_is_better(self):
        return self is MetricId.KLDiv

    def __str__(self):
        return self.value


ALL_METRICS = tuple(MetricId)


def empirical_saliency_map(fixations, shape, sigma):
    """Fixation count grid blurred with a Gaussian of width ``sigma`` pixels."""
    fixations = check_fixations(fixations, shape)
    return gaussian_blur(fixations.counts(shape), sigma)


def _values_at(saliency_map, fixations):
    return saliency_map[fixations.rows, fixations.cols]


def roc_auc(positives, negatives):
    """Trapezoidal area under the ROC curve.

    Thresholds are all distinct values of ``positives`` and ``negatives``;
    a value is classified positive when it is ``>=`` the threshold.
    """
    pos = np.sort(np.asarray(positives, dtype=np.float64).ravel())
    neg = np.sort(np.asarray(negatives, dtype=np.float64).ravel())
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tp = len(pos) - np.searchsorted(pos, thresholds, side="left")
    fp = len(neg) - np.searchsorted(neg, thresholds, side="left")
    tpr = np.concatenate([[0.0], tp / len(pos), [1.0]])
    fpr = np.concatenate([[0.0], fp / len(neg), [1.0]])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def two_afc_score(positives, negatives, chunk=4096):
    """Exhaustive pairwise 2AFC score: 1 per win, 1/2 per tie, over all pairs."""
    pos = np.asarray(positives, dtype=np.float64).ravel()
    neg = np.asarray(negatives, dtype=np.float64).ravel()
    wins = 0
    ties = 0
    for start in range(0, len(pos), chunk):
        block = pos[start:start + chunk, None]
        wins += int(np.count_nonzero(block > neg[None, :]))
        ties += int(np.count_nonzero(block == neg[None, :]))
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def auc(saliency_map, fixations):
    """AUC with every pixel of the map as a nonfixation."""
    smap = check_grid(saliency_map, "map")
    fixations = check_fixations(fixations, smap.shape)
    return roc_auc(_values_at(smap, fixations), smap.ravel())


def auc_2afc_oracle(saliency_map, fixations, nonfixations):
    smap = check_grid(saliency_map, "map")
    fixations = check_fixations(fixations, smap.shape)
    nonfixations = check_fixations(nonfixations, smap.shape, "nonfixations")
    return two_afc_score(_values_at(smap, fixations), _values_at(smap, nonfixations))


def sauc(saliency_map, fixations, nonfix_fixations):
    """Shuffled AUC: nonfixations are fixations from other stimuli."""
    smap = check_grid(saliency_map, "map")
    fixations = check_fixations(fixations, smap.shape)
    nonfix = check_fixations(nonfix_fixations, smap.shape, "nonfix_fixations")
    return roc_auc(_values_at(smap, fixations), _values_at(smap, nonfix))


def nss(saliency_map, fixations):
    smap = check_grid(saliency_map, "map")
    fixations = check_fixations(fixations, smap.shape)
    z = zscore_normalize(smap)
    return float(np.mean(_values_at(z, fixations)))


def ig(density, fixations, baseline):
    """Information gain over ``baseline`` in bits per fixation."""
    density = check_density(density)
    baseline = check_density(baseline, "baseline")
    check_same_shape(density, baseline, ("density", "baseline"))
    fixations = check_fixations(fixations, density.shape)
    gain = np.log2(_values_at(density, fixations) + IG_EPS) - np.log2(
        _values_at(baseline, fixations) + IG_EPS
    )
    return float(np.mean(gain))


def cc(saliency_map, empirical):
    """Pearson correlation between two maps."""
    a = check_grid(saliency_map, "map")
    b = check_grid(empirical, "empirical")
    check_same_shape(a, b, ("map", "empirical"))
    za = zscore_normalize(a)
    zb = zscore_normalize(b)
    return float(np.clip(np.mean(za * zb), -1.0, 1.0))


def kldiv(empirical, saliency_map):
    """KL divergence of the normalized map from the normalized empirical map, in nats.

    A constant input is read as the uniform distribution.
    """
    e = check_grid(empirical, "empirical")
    q = check_grid(saliency_map, "map")
    check_same_shape(e, q, ("empirical", "map"))
    e = map_to_distribution(e)
    q = map_to_distribution(q)
    return float(np.sum(e * np.log((e + KLDIV_EPS) / (q + KLDIV_EPS))))


def sim(saliency_map, empirical):
    """Sum of pixelwise minima after normalizing both maps to distributions.

    A constant input is read as the uniform distribution.
    """
    p = check_grid(saliency_map, "map")
    q = check_grid(empirical, "empirical")
    check_same_shape(p, q, ("map", "empirical"))
    return float(np.sum(np.minimum(map_to_distribution(p), map_to_distribution(q))))


def score(metric, saliency_map, fixations, *, nonfixations=None, baseline=None, empirical=None,
          sigma=None):
    """Evaluate one metric with the inputs it needs.

    ``nonfixations`` is required for sAUC; ``baseline`` for IG (the map is
    normalized to a distribution first); ``empirical`` or ``sigma`` for the
    distribution-based metrics CC, KLDiv and SIM.
    """
    metric = MetricId.parse(metric)
    smap = check_grid(saliency_map, "map")
    if metric is MetricId.AUC:
        return auc(smap, fixations)
    if metric is MetricId.sAUC:
        if nonfixations is None:
            raise ValueError("sAUC needs nonfixations")
        return sauc(smap, fixations, nonfixations)
    if metric is MetricId.NSS:
        return nss(smap, fixations)
    if metric is MetricId.IG:
        if baseline is None:
            baseline = np.full(smap.shape, 1.0 / smap.size)
        return ig(map_to_distribution(smap), fixations, baseline)
    if empirical is None:
        if sigma is None:
            raise ValueError(f"{metric} needs an empirical map or sigma")
        empirical = empirical_saliency_map(fixations, smap.shape, sigma)
    if metric is MetricId.CC:
        return cc(smap, empirical)
    if metric is MetricId.KLDiv:
        return kldiv(empirical, smap)
    return sim(smap, empirical)


__all__ = [
    "ALL_METRICS",
    "MetricId",
    "auc",
    "auc_2afc_oracle",
    "cc",
    "empirical_saliency_map",
    "ig",
    "kldiv",
    "nss",
    "roc_auc",
    "sauc",
    "score",
    "sim",
    "two_afc_score",
]
