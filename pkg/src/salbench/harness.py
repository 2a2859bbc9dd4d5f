"""Fixation sampling and the reproduction experiments.

Every experiment is deterministic given its seed. Per-set random streams
are spawned from one :class:`numpy.random.SeedSequence`, so results do not
depend on evaluation order.
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from ._validation import check_density, check_grid
from .core import FixationDataset, FixationSet, GridShape, gaussian_blur, zscore_normalize
from .derive import (
    DeriveConfig,
    SgdConfig,
    derive_auc_map,
    derive_cc_kldiv_map,
    derive_nss_ig_map,
    derive_sauc_map,
    optimize_sim_map,
)
from .exceptions import NumericError
from .metrics import ALL_METRICS, MetricId, auc, empirical_saliency_map, score

MAP_TYPES = ("AUC", "sAUC", "NSS/IG", "CC/KLDiv", "SIM")

# map type each metric is expected to prefer
MATCHED_MAP = {
    MetricId.AUC: "AUC",
    MetricId.sAUC: "sAUC",
    MetricId.NSS: "NSS/IG",
    MetricId.IG: "NSS/IG",
    MetricId.CC: "CC/KLDiv",
    MetricId.KLDiv: "CC/KLDiv",
    MetricId.SIM: "SIM",
}


def load_synthetic_config():
    text = resources.files("salbench").joinpath("data/synthetic.json").read_text()
    return json.loads(text)


def default_sigma(shape):
    """Empirical-map blur scaled to the grid: 35 px on a 768 px tall image."""
    return GridShape(*shape).height * load_synthetic_config()["sigma_per_height"]


def synthetic_density(shape=None, components=None):
    """Mixture of isotropic Gaussians on a grid (parameters in normalized units)."""
    cfg = load_synthetic_config()["density"]
    h, w = shape or cfg["shape"]
    components = components or cfg["components"]
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    grid = np.zeros((h, w))
    for c in components:
        s = c["sigma"]
        gy = np.exp(-0.5 * ((ys - c["center_y"]) / s) ** 2)
        gx = np.exp(-0.5 * ((xs - c["center_x"]) / s) ** 2)
        grid += c["weight"] * np.outer(gy, gx) / (2 * np.pi * s * s)
    return grid / grid.sum()


def synthetic_centerbias_dataset(shape=None, seed=None):
    """Center-biased fixations on several synthetic stimuli of one size."""
    cfg = load_synthetic_config()
    cb = cfg["centerbias"]
    h, w = shape or cfg["density"]["shape"]
    rng = np.random.default_rng(cb["seed"] if seed is None else seed)
    dataset = FixationDataset()
    for s in range(cb["n_stimuli"]):
        pts = rng.normal(0.5, cb["spread"], size=(cb["fixations_per_stimulus"], 2))
        pts = np.clip(pts, 0.0, 1.0 - 1e-9)
        sid = f"cb{s:03d}"
        fix = FixationSet((pts[:, 1] * h).astype(int), (pts[:, 0] * w).astype(int), sid)
        dataset.add(sid, (h, w), fix)
    return dataset


def synthetic_centerbias(shape=None, seed=None):
    """KDE centerbias fitted on :func:`synthetic_centerbias_dataset`."""
    from .probabilistic import CenterBiasKDE

    cfg = load_synthetic_config()
    shape = shape or cfg["density"]["shape"]
    kde = CenterBiasKDE(cfg["centerbias"]["bandwidth"]).fit(synthetic_centerbias_dataset(shape, seed))
    return kde.density(shape)


def sample_fixations(density, n, rng, stimulus_id=""):
    """``n`` independent pixel draws (with replacement) from ``density``."""
    density = check_density(density)
    if n < 1:
        raise ValueError("n must be >= 1")
    p = density.ravel()
    idx = rng.choice(p.size, size=n, p=p / p.sum())
    return FixationSet.from_flat(idx, density.shape, stimulus_id)


@dataclass
class ExperimentConfig:
    n_sets: int = 1000
    n_fix: int = 100
    seed: int = 0
    sigma: Optional[float] = None
    n_nonfix: Optional[int] = None
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        if self.n_sets < 1 or self.n_fix < 1:
            raise ValueError("n_sets and n_fix must be >= 1")

    def resolved_sigma(self, shape):
        return default_sigma(shape) if self.sigma is None else float(self.sigma)


def paired_difference(a, b):
    """Mean and standard error of ``a - b`` over sets where both are finite."""
    diff = np.asarray(a) - np.asarray(b)
    diff = diff[np.isfinite(diff)]
    if diff.size == 0:
        return float("nan"), float("nan")
    se = diff.std() / np.sqrt(diff.size) if diff.size > 1 else float("nan")
    return float(diff.mean()), float(se)


@dataclass
class ScoreMatrix:
    """Mean scores of map types (rows) under metrics (columns).

    ``samples`` keeps the per-set scores, shape ``(n_sets, n_maps,
    n_metrics)``, with NaN where a metric was undefined for a map.
    """

    map_types: list
    metrics: list
    scores: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray

    @classmethod
    def from_samples(cls, map_types, metrics, samples):
        samples = np.asarray(samples, dtype=np.float64)
        valid = np.isfinite(samples).all(axis=0)
        with np.errstate(invalid="ignore"):
            means = np.where(valid, samples.mean(axis=0), np.nan)
            se = np.where(valid, samples.std(axis=0) / np.sqrt(samples.shape[0]), np.nan)
        return cls(list(map_types), list(metrics), means, se, samples)

    def column(self, metric):
        return self.metrics.index(metric)

    def row(self, map_type):
        return self.map_types.index(map_type)

    def value(self, map_type, metric):
        return float(self.scores[self.row(map_type), self.column(metric)])

    def best(self, metric, lower_is_better=False):
        col = self.scores[:, self.column(metric)]
        if np.all(np.isnan(col)):
            return None
        i = np.nanargmin(col) if lower_is_better else np.nanargmax(col)
        return self.map_types[int(i)]

    def margin(self, metric, winner, other, lower_is_better=False):
        """Paired advantage of ``winner`` over ``other`` and its standard error."""
        c = self.column(metric)
        a = self.samples[:, self.row(winner), c]
        b = self.samples[:, self.row(other), c]
        mean, se = paired_difference(b, a) if lower_is_better else paired_difference(a, b)
        return mean, se

    def rows(self):
        for i, m in enumerate(self.map_types):
            for j, metric in enumerate(self.metrics):
                yield m, str(metric), self.scores[i, j], self.stderr[i, j]


def derive_all_maps(density, centerbias, sigma, n_fix, sgd=None):
    """The five map types derived from one density."""
    sim = optimize_sim_map(density, sigma, n_fix, sgd or SgdConfig())
    return {
        "AUC": derive_auc_map(density),
        "sAUC": derive_sauc_map(density, centerbias),
        "NSS/IG": derive_nss_ig_map(density),
        "CC/KLDiv": derive_cc_kldiv_map(density, sigma),
        "SIM": sim.saliency_map,
    }


def _safe_score(*args, **kwargs):
    try:
        return score(*args, **kwargs)
    except NumericError:
        return float("nan")


def evaluate_maps(maps, density, centerbias, config, metrics=ALL_METRICS):
    """Score every map under every metric on sampled fixation sets."""
    density = check_density(density)
    centerbias = check_density(centerbias, "centerbias")
    sigma = config.resolved_sigma(density.shape)
    n_nonfix = config.n_nonfix or config.n_fix
    names = list(maps)
    samples = np.full((config.n_sets, len(names), len(metrics)), np.nan)
    streams = np.random.SeedSequence(config.seed).spawn(config.n_sets)
    for s, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        fix = sample_fixations(density, config.n_fix, rng)
        nonfix = sample_fixations(centerbias, n_nonfix, rng)
        empirical = empirical_saliency_map(fix, density.shape, sigma)
        for i, name in enumerate(names):
            for j, metric in enumerate(metrics):
                samples[s, i, j] = _safe_score(
                    metric, maps[name], fix, nonfixations=nonfix, baseline=centerbias,
                    empirical=empirical,
                )
    return ScoreMatrix.from_samples(names, list(metrics), samples)


def run_crossmetric_experiment(density, centerbias, config=None):
    """Derive the five map types and score each under all seven metrics."""
    config = config or ExperimentConfig()
    density = check_density(density)
    sigma = config.resolved_sigma(density.shape)
    maps = derive_all_maps(density, centerbias, sigma, config.n_fix, config.sgd)
    return evaluate_maps(maps, density, centerbias, config)


def diagonal_dominance(matrix, n_se=2.0, skip_identical=False):
    """Check that each metric's matched map beats every other map type.

    Returns a list of ``(metric, other, margin, se, ok)`` tuples; margins are
    paired differences (positive = matched map better). With
    ``skip_identical`` competitors whose per-set scores equal the matched
    map's exactly are reported with ``ok=None`` instead of failing.
    """
    report = []
    for metric in matrix.metrics:
        metric = MetricId.parse(metric)
        matched = MATCHED_MAP[metric]
        for other in matrix.map_types:
            if other == matched:
                continue
            c = matrix.column(metric)
            a = matrix.samples[:, matrix.row(matched), c]
            b = matrix.samples[:, matrix.row(other), c]
            mean, se = matrix.margin(metric, matched, other, metric.lower_is_better)
            if skip_identical and np.array_equal(a, b):
                ok = None
            else:
                ok = bool(np.isfinite(mean) and mean > n_se * (se if np.isfinite(se) else np.inf))
            report.append((metric, other, mean, se, ok))
    return report


def _batched_empirical(p, shape, n_fix, n, sigma, rng):
    counts = rng.multinomial(n_fix, p, size=n).astype(np.float64).reshape((n,) + tuple(shape))
    return gaussian_blur(counts, sigma).reshape(n, -1)


def _zscore_rows(maps):
    centered = maps - maps.mean(axis=1, keepdims=True)
    std = centered.std(axis=1, keepdims=True)
    return centered / np.where(std > 0, std, np.nan)


def run_cc_approximation_experiment(density, n_sets=10_000, n_fix_list=(1, 10, 100),
                                    sigma_list=None, seed=0, chunk=1000):
    """Mean empirical vs mean normalized empirical map under CC.

    For each ``(n_fix, sigma)`` the two averages are built from ``n_sets``
    sampled empirical maps and scored by CC against ``n_sets`` fresh ones.
    Returns one dict per cell with both mean scores, their paired
    difference and its standard error.
    """
    density = check_density(density)
    shape = density.shape
    p = density.ravel()
    if sigma_list is None:
        base = default_sigma(shape)
        sigma_list = (1.0, base, 3 * base)
    rows = []
    root = np.random.SeedSequence(seed)
    cells = [(n, s) for n in n_fix_list for s in sigma_list]
    for (n_fix, sigma), cell_seq in zip(cells, root.spawn(len(cells))):
        build_seq, eval_seq = cell_seq.spawn(2)
        rng = np.random.default_rng(build_seq)
        mean_emp = np.zeros(p.size)
        mean_norm = np.zeros(p.size)
        done = 0
        while done < n_sets:
            m = min(chunk, n_sets - done)
            emp = _batched_empirical(p, shape, n_fix, m, sigma, rng)
            mean_emp += emp.sum(axis=0)
            mean_norm += np.nansum(_zscore_rows(emp), axis=0)
            done += m
        z_emp = zscore_normalize(mean_emp.reshape(shape)).ravel()
        z_norm = zscore_normalize(mean_norm.reshape(shape)).ravel()
        rng = np.random.default_rng(eval_seq)
        cc_emp, cc_norm = [], []
        done = 0
        while done < n_sets:
            m = min(chunk, n_sets - done)
            fresh = _zscore_rows(_batched_empirical(p, shape, n_fix, m, sigma, rng))
            cc_emp.append(fresh @ z_emp / p.size)
            cc_norm.append(fresh @ z_norm / p.size)
            done += m
        cc_emp = np.concatenate(cc_emp)
        cc_norm = np.concatenate(cc_norm)
        diff, se = paired_difference(cc_norm, cc_emp)
        rows.append({
            "n_fix": n_fix,
            "sigma": float(sigma),
            "cc_mean_empirical": float(np.nanmean(cc_emp)),
            "cc_mean_normalized": float(np.nanmean(cc_norm)),
            "difference": diff,
            "difference_se": se,
        })
    return rows


@dataclass
class CountTable:
    """Mean SIM of each map (rows) at each evaluation fixation count (columns)."""

    map_labels: list
    counts: list
    scores: np.ndarray
    stderr: np.ndarray
    samples: list  # one (n_sets, n_maps) array per count

    def margin(self, count, winner, other):
        k = self.counts.index(count)
        s = self.samples[k]
        return paired_difference(s[:, self.map_labels.index(winner)], s[:, self.map_labels.index(other)])

    def best(self, count):
        return self.map_labels[int(np.argmax(self.scores[:, self.counts.index(count)]))]

    def rows(self):
        for i, label in enumerate(self.map_labels):
            for k, count in enumerate(self.counts):
                yield label, count, self.scores[i, k], self.stderr[i, k]


def run_sim_count_experiment(density, fix_counts, config=None, sim_maps=None, chunk=500):
    """SIM maps optimized for several fixation counts, scored at every count.

    ``sim_maps`` may hold precomputed maps keyed by count; missing ones are
    optimized with ``config.sgd``. The CC map (blurred density) is the
    last row.
    """
    config = config or ExperimentConfig()
    density = check_density(density)
    fix_counts = [int(c) for c in fix_counts]
    if not fix_counts:
        raise ValueError("fix_counts is empty")
    sigma = config.resolved_sigma(density.shape)
    maps = {}
    for count in fix_counts:
        if sim_maps is not None and count in sim_maps:
            maps[f"SIM-{count}"] = check_grid(sim_maps[count])
        else:
            maps[f"SIM-{count}"] = optimize_sim_map(density, sigma, count, config.sgd).saliency_map
    maps["CC"] = derive_cc_kldiv_map(density, sigma)
    labels = list(maps)
    flat = np.stack([m.ravel() / m.sum() for m in maps.values()])
    p = density.ravel()
    scores = np.zeros((len(labels), len(fix_counts)))
    stderr = np.zeros_like(scores)
    samples = []
    streams = np.random.SeedSequence(config.seed).spawn(len(fix_counts))
    for k, (count, stream) in enumerate(zip(fix_counts, streams)):
        rng = np.random.default_rng(stream)
        per_set = []
        done = 0
        while done < config.n_sets:
            m = min(chunk, config.n_sets - done)
            emp = _batched_empirical(p, density.shape, count, m, sigma, rng)
            emp /= emp.sum(axis=1, keepdims=True)
            per_set.append(np.stack([np.minimum(f[None, :], emp).sum(axis=1) for f in flat], axis=1))
            done += m
        per_set = np.concatenate(per_set)
        samples.append(per_set)
        scores[:, k] = per_set.mean(axis=0)
        stderr[:, k] = per_set.std(axis=0) / np.sqrt(per_set.shape[0])
    return CountTable(labels, fix_counts, scores, stderr, samples)


def run_binning_experiment(density, fixations):
    """AUC of the raw and equalized density, with and without 256-bin quantization."""
    from .core import equalize
    from .io import quantize_256

    density = check_density(density)
    raw = density
    eq = equalize(density)
    table = {
        ("density", "none"): auc(raw, fixations),
        ("density", "8bit"): auc(quantize_256(raw), fixations),
        ("equalized", "none"): auc(eq, fixations),
        ("equalized", "8bit"): auc(quantize_256(eq), fixations),
    }
    return table


def synthetic_conversion_dataset(n_stimuli=20, shape=(64, 64), n_fix=200, seed=0):
    """Random three-blob densities with fixations sampled from each.

    Returns ``(densities, dataset)`` with stimulus ids ``"0"``, ``"1"``, ...
    """
    h, w = shape
    rng = np.random.default_rng(seed)
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    densities = []
    dataset = FixationDataset()
    for s in range(n_stimuli):
        d = np.full((h, w), 1e-3 / (h * w))
        for _ in range(3):
            cy, cx = rng.uniform(0.15, 0.85, 2)
            sd = rng.uniform(0.04, 0.12)
            weight = rng.uniform(0.2, 1.0)
            d += weight * np.outer(np.exp(-0.5 * ((ys - cy) / sd) ** 2), np.exp(-0.5 * ((xs - cx) / sd) ** 2))
        d /= d.sum()
        densities.append(d)
        dataset.add(str(s), shape, sample_fixations(d, n_fix, rng, str(s)))
    return densities, dataset


def expected_information_gain(model, true_density):
    """Expected IG of ``model`` over a uniform baseline under ``true_density``, bits."""
    model = check_density(model, "model")
    return float(np.sum(true_density * (np.log2(model + 1e-20) + np.log2(model.size))))


def run_conversion_experiment(distortion=np.cbrt, n_stimuli=20, shape=(64, 64), n_fix=200, seed=0,
                              **converter_params):
    """Fit a conversion to distorted true densities and measure the recovered IG.

    IG values are expectations under the true densities (not sample means),
    averaged over stimuli. ``recovery`` is the fraction of the gap between
    the distorted map read directly as a density and the true density that
    the fitted model closes.
    """
    from .probabilistic import SaliencyMapConverter

    densities, dataset = synthetic_conversion_dataset(n_stimuli, shape, n_fix, seed)
    maps = [distortion(d) for d in densities]
    converter = SaliencyMapConverter(**converter_params).fit(maps, dataset)
    ig_true = np.mean([expected_information_gain(d, d) for d in densities])
    ig_direct = np.mean([expected_information_gain(m / m.sum(), d) for m, d in zip(maps, densities)])
    ig_fit = np.mean([expected_information_gain(converter.transform(m), d) for m, d in zip(maps, densities)])
    gap = ig_true - ig_direct
    return {
        "converter": converter,
        "ig_true": float(ig_true),
        "ig_direct": float(ig_direct),
        "ig_fit": float(ig_fit),
        "recovery": float((ig_fit - ig_direct) / gap) if gap > 0 else float("nan"),
    }
