"""Small end-to-end CLI invocations shared by the CLI and acceptance tests."""

import numpy as np

from salbench import harness
from salbench import io as sio
from salbench.cli import main


def prepare_inputs(d):
    """Write a 16x16 density, centerbias and a two-stimulus fixation table into ``d``."""
    density = harness.synthetic_density((16, 16))
    sio.save_density(d / "density.sald", density)
    sio.save_density(d / "cb.sald", harness.synthetic_centerbias((16, 16)))
    rng = np.random.default_rng(5)
    sets = [harness.sample_fixations(density, 150, rng, sid) for sid in ("s0", "s1")]
    sio.save_fixations(d / "fix.csv", sets)
    sio.save_stimuli(d / "stim.csv", {"s0": (16, 16), "s1": (16, 16)})
    (d / "maps").mkdir()
    sio.save_grid(d / "maps" / "s0.sald", density**0.5)
    sio.save_grid(d / "maps" / "s1.sald", density**0.5 + 0.1)


# (name, argv, output files); "{d}" is replaced by the working directory
COMMANDS = [
    ("synthetic", "synthetic --size 16x16 --out-density {d}/syn.sald --out-centerbias {d}/syncb.sald",
     ["syn.sald", "syncb.sald"]),
    ("sample", "sample --density {d}/density.sald --n 300 --seed 2 --out {d}/sampled.csv "
     "--stimuli-out {d}/sampled_stim.csv", ["sampled.csv", "sampled_stim.csv"]),
    ("derive-auc-png", "derive --density {d}/density.sald --metric AUC --out {d}/auc.png", ["auc.png"]),
    ("derive-sauc", "derive --density {d}/density.sald --metric sAUC --centerbias {d}/cb.sald "
     "--out {d}/sauc.sald", ["sauc.sald"]),
    ("derive-cc", "derive --density {d}/density.sald --metric CC --sigma 1.5 --out {d}/cc.sald", ["cc.sald"]),
    ("derive-sim", "derive --density {d}/density.sald --metric SIM --sigma 1 --seed 3 --out {d}/sim.sald",
     ["sim.sald"]),
    ("evaluate", "evaluate --map {d}/maps --fixations {d}/fix.csv --stimuli {d}/stim.csv --metric all "
     "--baseline {d}/cb.sald --empirical-sigma 1 --out {d}/eval.csv", ["eval.csv"]),
    ("convert", "convert --maps {d}/maps --fixations {d}/fix.csv --stimuli {d}/stim.csv "
     "--segments-nl 8 --segments-cb 4 --out {d}/fit.txt", ["fit.txt"]),
    ("apply-fit", "apply-fit --fit {d}/fit.txt --map {d}/maps/s0.sald --out {d}/applied.sald", ["applied.sald"]),
    ("centerbias", "centerbias --fixations {d}/fix.csv --stimuli {d}/stim.csv --crossvalidate 0.1,0.2,0.4 "
     "--size 20x10 --exclude s1 --out {d}/kde.sald", ["kde.sald"]),
    ("benchmark", "benchmark --density {d}/density.sald --centerbias {d}/cb.sald --n-sets 20 --n-fix 50 "
     "--seed 4 --out {d}/matrix.csv --dominance {d}/dominance.csv", ["matrix.csv", "dominance.csv"]),
    ("cc-approx", "experiment cc-approx --density {d}/density.sald --n-sets 200 --n-fix 1,10 "
     "--sigma 0.5,2 --out {d}/ccapprox.csv", ["ccapprox.csv"]),
    ("sim-count", "experiment sim-count --density {d}/density.sald --counts 1,10 --n-sets 50 "
     "--out {d}/simcount.csv", ["simcount.csv"]),
    ("binning", "experiment binning --density {d}/density.sald --n-fix 5000 --seed 1 --out {d}/binning.csv",
     ["binning.csv"]),
    ("visualize", "visualize --density {d}/density.sald --fixations {d}/fix.csv --stimulus-id s0 "
     "--report {d}/quartiles.txt --out {d}/quartiles.png", ["quartiles.png", "quartiles.txt"]),
]


def run(argv, d):
    return main(argv.format(d=d).split())


def run_all(d):
    """Run every command in order; returns ``{name: (exit_code, {file: bytes})}``."""
    results = {}
    for name, argv, outputs in COMMANDS:
        code = run(argv, d)
        results[name] = (code, {f: (d / f).read_bytes() for f in outputs if (d / f).exists()})
    return results
