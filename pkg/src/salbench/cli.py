"""Command-line interface.

Exit codes: 0 on success, 2 for malformed input or a violated contract,
3 for numerically degenerate input (constant maps, zero mass, ...).
"""

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import harness
from . import io as sio
from .core import FixationSet, GridShape
from .derive import DeriveConfig, SgdConfig, derive_map
from .exceptions import CapReached, ContractError, EmptyFixations, NumericError, SaliencyError, ShapeMismatch
from .metrics import ALL_METRICS, MetricId, empirical_saliency_map, score
from .probabilistic import CenterBiasKDE, SaliencyMapConverter, crossvalidate_bandwidth, model_density

METRIC_CHOICES = [m.value for m in ALL_METRICS]


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return GridShape(h, w)


def _metrics(text):
    if text.lower() == "all":
        return list(ALL_METRICS)
    try:
        return [MetricId.parse(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(sio.fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _emit(text, out):
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        sio.atomic_write(out, text)


def _sgd(args):
    return SgdConfig(seed=args.seed)


def cmd_derive(args):
    density = sio.load_density(args.density)
    centerbias = sio.load_density(args.centerbias) if args.centerbias else None
    config = DeriveConfig(
        empirical_sigma=args.sigma,
        fixations_per_image=args.fixations_per_image,
        sgd=_sgd(args),
        centerbias=centerbias,
    )
    smap = derive_map(density, args.metric, config)
    sio.save_map(args.out, smap, equalize_first=not args.no_equalize)


def _load_map(path):
    return sio.load_grid(path)


def _map_for(source, sid, shape):
    """Map for one stimulus: a single file for all, or ``DIR/<id>.sald|.png``."""
    source = Path(source)
    if source.is_dir():
        for ext in (".sald", ".png"):
            candidate = source / f"{sid}{ext}"
            if candidate.exists():
                smap = _load_map(candidate)
                break
        else:
            raise ContractError(f"no map for stimulus {sid!r} in {source}")
    else:
        smap = _load_map(source)
    if smap.shape != tuple(shape):
        raise ShapeMismatch(f"map for {sid!r} is {smap.shape}, stimulus is {tuple(shape)}")
    return smap


def _other_fixations(dataset, sid, shape):
    """Fixations of all other stimuli, mapped onto the grid of ``shape``."""
    rows, cols = [], []
    for other in dataset:
        if other == sid:
            continue
        fix = dataset.fixations_for(other)
        oshape = dataset.shapes[other]
        rows.append(np.minimum(((fix.rows + 0.5) / oshape.height * shape.height).astype(int), shape.height - 1))
        cols.append(np.minimum(((fix.cols + 0.5) / oshape.width * shape.width).astype(int), shape.width - 1))
    if not rows or sum(len(r) for r in rows) == 0:
        raise EmptyFixations(f"sAUC for {sid!r} needs fixations on other stimuli")
    return FixationSet(np.concatenate(rows), np.concatenate(cols))


def cmd_evaluate(args):
    dataset = sio.load_fixations(args.fixations, args.stimuli)
    baseline = sio.load_density(args.baseline) if args.baseline else None
    rows = []
    per_metric = {m: [] for m in args.metric}
    for sid in dataset:
        fix = dataset.fixations_for(sid)
        if len(fix) == 0:
            continue
        shape = dataset.shapes[sid]
        smap = _map_for(args.map, sid, shape)
        empirical = None
        if any(m in (MetricId.CC, MetricId.KLDiv, MetricId.SIM) for m in args.metric):
            empirical = empirical_saliency_map(fix, shape, args.empirical_sigma)
        nonfix = _other_fixations(dataset, sid, shape) if MetricId.sAUC in args.metric else None
        for metric in args.metric:
            value = score(metric, smap, fix, nonfixations=nonfix, baseline=baseline, empirical=empirical)
            rows.append((sid, metric.value, value))
            per_metric[metric].append(value)
    if not rows:
        raise ContractError("no stimulus has fixations")
    for metric in args.metric:
        rows.append(("mean", metric.value, float(np.mean(per_metric[metric]))))
    _emit(_csv(("stimulus_id", "metric", "score"), rows), args.out)


def cmd_convert(args):
    dataset = sio.load_fixations(args.fixations, args.stimuli)
    maps = {
        sid: _map_for(args.maps, sid, dataset.shapes[sid])
        for sid in dataset
        if len(dataset.fixations_for(sid))
    }
    converter = SaliencyMapConverter(args.segments_nl, args.segments_cb).fit(maps, dataset)
    sio.save_fit(args.out, converter.fit_)
    n = dataset.n_fixations
    print(
        f"log-likelihood per fixation: {converter.initial_log_likelihood_ / n:.6f} -> "
        f"{converter.log_likelihood_ / n:.6f} nats",
        file=sys.stderr,
    )


def cmd_apply_fit(args):
    fit = sio.load_fit(args.fit)
    density = model_density(fit, fit.rescale(_load_map(args.map)))
    sio.save_density(args.out, density)


def cmd_centerbias(args):
    dataset = sio.load_fixations(args.fixations, args.stimuli)
    bandwidth = args.bandwidth
    if args.crossvalidate:
        bandwidth = crossvalidate_bandwidth(dataset, args.crossvalidate)
        print(f"selected bandwidth {sio.fmt(bandwidth)}", file=sys.stderr)
    kde = CenterBiasKDE(bandwidth).fit(dataset)
    if args.exclude is not None and args.exclude not in dataset.shapes:
        raise ContractError(f"unknown stimulus {args.exclude!r}")
    sio.save_density(args.out, kde.density(args.size, exclude=args.exclude))


def _experiment_config(args):
    return harness.ExperimentConfig(
        n_sets=args.n_sets, n_fix=args.n_fix, seed=args.seed, sigma=args.sigma, sgd=_sgd(args)
    )


def cmd_benchmark(args):
    density = sio.load_density(args.density)
    centerbias = sio.load_density(args.centerbias)
    matrix = harness.run_crossmetric_experiment(density, centerbias, _experiment_config(args))
    rows = [(m, metric, float(v), float(se)) for m, metric, v, se in matrix.rows()]
    _emit(_csv(("map_type", "metric", "mean", "stderr"), rows), args.out)
    if args.dominance:
        report = harness.diagonal_dominance(matrix)
        drows = [
            (metric.value, harness.MATCHED_MAP[metric], other, float(margin), float(se), ok)
            for metric, other, margin, se, ok in report
        ]
        sio.atomic_write(
            args.dominance,
            _csv(("metric", "matched_map", "other_map", "margin", "stderr", "ok"), drows),
        )


def cmd_cc_approx(args):
    density = sio.load_density(args.density)
    table = harness.run_cc_approximation_experiment(
        density, n_sets=args.n_sets, n_fix_list=args.n_fix, sigma_list=args.sigma, seed=args.seed
    )
    header = ("n_fix", "sigma", "cc_mean_empirical", "cc_mean_normalized", "difference", "difference_se")
    _emit(_csv(header, [tuple(r[k] for k in header) for r in table]), args.out)


def cmd_sim_count(args):
    density = sio.load_density(args.density)
    config = harness.ExperimentConfig(n_sets=args.n_sets, seed=args.seed, sigma=args.sigma, sgd=_sgd(args))
    table = harness.run_sim_count_experiment(density, args.counts, config)
    rows = [(label, count, float(v), float(se)) for label, count, v, se in table.rows()]
    _emit(_csv(("map", "eval_fixations", "mean_sim", "stderr"), rows), args.out)


def cmd_binning(args):
    density = sio.load_density(args.density)
    fix = harness.sample_fixations(density, args.n_fix, np.random.default_rng(args.seed))
    table = harness.run_binning_experiment(density, fix)
    rows = [(m, b, float(v)) for (m, b), v in table.items()]
    _emit(_csv(("map", "binning", "auc"), rows), args.out)


def cmd_sample(args):
    density = sio.load_density(args.density)
    fix = harness.sample_fixations(density, args.n, np.random.default_rng(args.seed), args.stimulus_id)
    sio.save_fixations(args.out, [fix])
    if args.stimuli_out:
        h, w = density.shape
        sio.save_stimuli(args.stimuli_out, {args.stimulus_id: (h, w)})


def cmd_visualize(args):
    density = sio.load_density(args.density)
    fix = None
    if args.fixations:
        fix = sio.load_fixation_points(args.fixations, density.shape, args.stimulus_id)
    image, thresholds, report = sio.render_density_quartiles(density, fix)
    sio.save_image(args.out, image)
    lines = ["thresholds," + ",".join(sio.fmt(t) for t in thresholds)]
    if report is not None:
        lines.append("area,count,expected,std")
        for k, c in enumerate(report["counts"]):
            lines.append(f"{k},{c},{sio.fmt(report['expected'])},{sio.fmt(report['std'])}")
    text = "\n".join(lines) + "\n"
    if args.report:
        sio.atomic_write(args.report, text)
    else:
        sys.stdout.write(text)


def cmd_synthetic(args):
    shape = args.size
    sio.save_density(args.out_density, harness.synthetic_density(shape))
    if args.out_centerbias:
        sio.save_density(args.out_centerbias, harness.synthetic_centerbias(shape))


def build_parser():
    parser = argparse.ArgumentParser(prog="salbench", description="Metric-specific saliency maps and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="derive the optimal saliency map for one metric")
    p.add_argument("--density", required=True)
    p.add_argument("--metric", required=True, type=MetricId.parse, metavar="{" + ",".join(METRIC_CHOICES) + "}")
    p.add_argument("--centerbias")
    p.add_argument("--sigma", type=float, default=35.0)
    p.add_argument("--fixations-per-image", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-equalize", action="store_true", help="write PNG output without equalizing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("evaluate", help="score a saliency map against fixations")
    p.add_argument("--map", required=True, help="map file used for every stimulus, or a directory of <id>.sald/.png")
    p.add_argument("--fixations", required=True)
    p.add_argument("--stimuli", required=True)
    p.add_argument("--metric", required=True, type=_metrics, help="metric name, comma list, or 'all'")
    p.add_argument("--baseline")
    p.add_argument("--empirical-sigma", type=float, default=35.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("convert", help="fit a saliency-map to density conversion")
    p.add_argument("--maps", required=True)
    p.add_argument("--fixations", required=True)
    p.add_argument("--stimuli", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segments-nl", type=int, default=20)
    p.add_argument("--segments-cb", type=int, default=12)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("apply-fit", help="turn a saliency map into a density with a fitted conversion")
    p.add_argument("--fit", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply_fit)

    p = sub.add_parser("centerbias", help="KDE centerbias density for an image size")
    p.add_argument("--fixations", required=True)
    p.add_argument("--stimuli", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--bandwidth", type=float, default=0.22)
    group.add_argument("--crossvalidate", type=_float_list, metavar="B1,B2,...")
    p.add_argument("--size", required=True, type=_size, metavar="WxH")
    p.add_argument("--exclude")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_centerbias)

    p = sub.add_parser("benchmark", help="score all derived maps under all metrics")
    p.add_argument("--density", required=True)
    p.add_argument("--centerbias", required=True)
    p.add_argument("--n-sets", type=int, default=1000)
    p.add_argument("--n-fix", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, help="empirical blur in pixels (default: 35 px per 768 px of height)")
    p.add_argument("--dominance", help="also write the matched-map margins to this CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("experiment", help="supplementary experiments")
    esub = p.add_subparsers(dest="experiment", required=True)
    e = esub.add_parser("cc-approx")
    e.add_argument("--density", required=True)
    e.add_argument("--n-sets", type=int, default=10_000)
    e.add_argument("--n-fix", type=_int_list, default=[1, 10, 100])
    e.add_argument("--sigma", type=_float_list, help="blur widths (default: 1, grid-scaled 35 px, 3x that)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_cc_approx)
    e = esub.add_parser("sim-count")
    e.add_argument("--density", required=True)
    e.add_argument("--counts", type=_int_list, default=[1, 10, 100, 1000])
    e.add_argument("--n-sets", type=int, default=1000)
    e.add_argument("--sigma", type=float)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_sim_count)
    e = esub.add_parser("binning")
    e.add_argument("--density", required=True)
    e.add_argument("--n-fix", type=int, default=100_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_binning)

    p = sub.add_parser("sample", help="draw fixations from a density")
    p.add_argument("--density", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stimulus-id", default="s0")
    p.add_argument("--stimuli-out", help="also write a one-row stimulus index")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("visualize", help="equal-mass quartile rendering of a density")
    p.add_argument("--density", required=True)
    p.add_argument("--fixations")
    p.add_argument("--stimulus-id", help="only overlay fixations of this stimulus")
    p.add_argument("--report", help="write thresholds and counts here instead of stdout")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("synthetic", help="write the built-in synthetic density and centerbias")
    p.add_argument("--size", type=_size, default=GridShape(64, 64), metavar="WxH")
    p.add_argument("--out-density", required=True)
    p.add_argument("--out-centerbias")
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", CapReached)
            args.func(args)
    except NumericError as exc:
        print(f"salbench: numeric error: {exc}", file=sys.stderr)
        return 3
    except (SaliencyError, OSError) as exc:
        print(f"salbench: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
