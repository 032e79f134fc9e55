"""Acceptance suite: one recorded PASS/FAIL line per criterion (see the summary section).

The SNN criteria use the committed desk-scale checkpoint in ``reference/``,
produced by ``tdcless train`` on 2,000 training exposures (see README).
"""

import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from tdcless.config import SensorConfig
from tdcless.dataset import Dataset, DatasetSpec, generate_dataset
from tdcless.energy import PRESETS, estimate_energy, format_energy, format_power, parse_energy, power_at_fps
from tdcless.events import apply_spad, make_rng, sample_ambient
from tdcless.snn import SpikeCounters, load_checkpoint
from tdcless.train import evaluate

from test_snn import delay_nrmse
from test_train import gradient_check

REFERENCE = Path(__file__).resolve().parent.parent / "reference"
TEST_SETS = [(0.4, 1.0), (0.4, 25.0), (0.7, 1.0), (0.7, 25.0)]
SNN_PER_DEPTH = 5

COUNTS = SpikeCounters(15_000, 916_000)
PRINTED = {  # profile -> (E_n N_n, E_s N_s, total) as printed
    "btbt": ("29 pJ", "174 pJ", "203 pJ"),
    "graphene": ("603 fJ", "3 pJ", "4 pJ"),
    "cmos": ("33 nJ", "200 nJ", "233 nJ"),
    "l_bimos": ("3 nJ", "17 nJ", "19 nJ"),
    "tfet": ("23 fJ", "137 fJ", "160 fJ"),
}


# -- energy and power ------------------------------------------------------------------

@pytest.mark.parametrize("profile", list(PRINTED))
@pytest.mark.parametrize("column", [0, 1, 2], ids=["neural", "synaptic", "total"])
def test_energy_table_cell(profile, column, criterion):
    e = estimate_energy(COUNTS, PRESETS[profile])
    got = format_energy((e.neural_zj, e.synaptic_zj, e.total_zj)[column])
    want = PRINTED[profile][column]
    name = f"energy table {profile} {['E_n*N_n', 'E_s*N_s', 'total'][column]}"
    assert criterion(name, got == want, f"computed {got}, printed {want}"), (got, want)


def test_power_scaling(criterion):
    p = power_at_fps(parse_energy("204 pJ"), 30)
    ok = format_power(p) == "6.12 nW" and p == Fraction(612, 10**11)
    assert criterion("power 204 pJ x 30 fps", ok, format_power(p))


# -- CoM baseline ----------------------------------------------------------------------

def test_com_baseline_desk(tmp_path, criterion):
    generate_dataset(DatasetSpec(mode="test", per_depth=100, reflectivity=0.7, ambient=1.0), 201,
                     tmp_path)
    rep = evaluate([("r0.7_1klux", Dataset(tmp_path))], None, method="com")
    far = np.array([(r[2], r[3]) for r in rep.scatter if r[2] >= 1.5])
    err = np.abs(far[:, 1] - far[:, 0])
    failed = int(np.sum(~np.isfinite(err)))
    mae = float(np.mean(err[np.isfinite(err)]))
    ok = mae <= 0.10 and failed == 0
    assert criterion("CoM MAE, depths >= 1.5 m, 0.7 / 1 kLux", ok,
                     f"MAE {mae:.4f} m over {len(err)} exposures ({failed} failed), target <= 0.10 m")


# -- SNN training gates ------------------------------------------------------------------

def test_snn_gradient_check(criterion):
    worst = gradient_check()
    assert criterion("SNN (a) finite-difference gradient check", worst <= 1e-4,
                     f"worst relative error {worst:.2e}, limit 1e-4")


OVERFIT_EPOCHS = 150


def test_snn_overfit_50(criterion):
    from tdcless.snn import init_network
    from tdcless.train import AdamConfig, TrainConfig, batch_inputs, predict, train
    from test_train import _records
    params = init_network()
    recs = _records(50, seed=11)
    data = batch_inputs(params, recs)
    cfg = TrainConfig(adam=AdamConfig(lr=1e-2), batch_size=10, epochs=OVERFIT_EPOCHS, lr_final=0.05)
    res = train(params, data, data, cfg)
    y = predict(res.params, data[0], data[1])
    cw = SensorConfig().cycle_window
    mae = float(np.mean(np.abs(np.maximum(y, 0) - data[2])) * cw * 1e-12 * 2.99792458e8 / 2)
    assert criterion("SNN (b) 50-exposure overfit", mae <= 0.1,
                     f"train MAE {mae:.4f} m after {OVERFIT_EPOCHS} epochs, limit 0.1 m")


@pytest.fixture(scope="module")
def test_sets(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_sets")
    out = []
    for k, (refl, amb) in enumerate(TEST_SETS):
        d = root / f"r{refl}_a{amb:g}"
        generate_dataset(DatasetSpec(mode="test", per_depth=SNN_PER_DEPTH, reflectivity=refl,
                                     ambient=amb), 301 + k, d)
        out.append((d.name, Dataset(d)))
    return out


@pytest.fixture(scope="module")
def reference():
    path = REFERENCE / "checkpoint.bin"
    if not path.exists():
        pytest.fail(f"reference checkpoint missing: {path}")
    meta = json.loads((REFERENCE / "checkpoint.json").read_text())
    return load_checkpoint(path), meta


@pytest.fixture(scope="module")
def snn_reports(test_sets, reference):
    params, _ = reference
    return {
        "spiking": evaluate(test_sets, params, mode="spiking"),
        "rate": evaluate(test_sets, params, mode="rate"),
        "adder": evaluate(test_sets, params, mode="spiking", combiner="adder_async"),
    }


def test_snn_desk_run(snn_reports, reference, criterion):
    _, meta = reference
    rep = snn_reports["spiking"]
    truth = np.array([r[2] for r in rep.scatter])
    best_const = float(np.mean(np.abs(truth - np.median(truth))))
    ok = (rep.mae <= 0.30 and rep.mae * 5 <= best_const and rep.failed == 0
          and meta["training_exposures"] >= 2000)
    detail = (f"spiking MAE {rep.mae:.4f} m (std over sets {rep.mae_std:.4f}), limit 0.30 m; "
              f"best constant {best_const:.4f} m, ratio {best_const / rep.mae:.1f}x (need >= 5x); "
              f"{meta['training_exposures']} training exposures")
    assert criterion("SNN (c) desk-scale held-out spiking MAE", ok, detail)


def test_snn_transfer_gap(snn_reports, criterion):
    s, r = snn_reports["spiking"].mae, snn_reports["rate"].mae
    gap = abs(s - r)
    assert criterion("SNN (d) rate-to-spiking transfer gap", gap <= 0.15,
                     f"spiking {s:.4f} m, rate {r:.4f} m, gap {gap:.4f} m, limit 0.15 m")


def test_adder_tree_robustness(snn_reports, criterion):
    a, s = snn_reports["adder"].mae, snn_reports["spiking"].mae
    deg = a - s
    assert criterion("adder-tree input degradation", deg <= 0.05,
                     f"adder {a:.4f} m vs level-SST {s:.4f} m, degradation {deg:+.4f} m, limit 0.05 m")


# -- LMU memory -------------------------------------------------------------------------

def test_lmu_delay_memory(criterion):
    errs = delay_nrmse((0.25, 0.5, 1.0))
    ok = all(v <= 0.2 for v in errs.values())
    assert criterion("LMU d=56 delay NRMSE", ok,
                     ", ".join(f"{r:g} theta: {v:.4f}" for r, v in errs.items()) + ", limit 0.2")


# -- simulator statistics ----------------------------------------------------------------

def test_simulator_statistics(criterion):
    rng = make_rng(2)
    length = 100_000
    counts = np.array([sample_ambient(5.0 / length, length, rng).size for _ in range(10_000)])
    mean_ok = abs(counts.mean() - 5.0) <= 3 * np.sqrt(5.0 / 10_000)
    var_se = 5.0 * np.sqrt(2.0 / (len(counts) - 1) + 1 / (5.0 * len(counts)))  # Poisson var. estimator
    var_ok = abs(counts.var(ddof=1) - 5.0) <= 3 * var_se

    sensor = SensorConfig()
    long = 800_000_000
    rng = make_rng(7)
    out = apply_spad(sample_ambient(5e-3, long, rng), sensor, rng, length=long)
    total = sum(len(o) for o in out)
    dead_ok = total >= 1_000_000 and all(np.all(np.diff(o) >= sensor.dead_time) for o in out)

    lam, n = 3.0, 10_000
    p = lam / length
    rng = np.random.default_rng(8)
    ev = np.array([sample_ambient(p, length, rng).size for _ in range(n)])
    bern = np.concatenate([(rng.random((100, length), dtype=np.float32) < p).sum(axis=1)
                           for _ in range(n // 100)])
    table = np.array([np.bincount(np.minimum(x, 8), minlength=9) for x in (ev, bern)])
    pval = chi2_contingency(table)[1]
    ok = mean_ok and var_ok and dead_ok and pval > 0.001
    assert criterion("simulator statistics", ok,
                     f"Poisson mean {counts.mean():.4f}, var {counts.var(ddof=1):.4f} (expect 5); "
                     f"dead time holds on {total} events; chi-square p = {pval:.3f}")


# -- determinism ------------------------------------------------------------------------

def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "tdcless.cli", *map(str, args)], cwd=cwd,
                          capture_output=True, text=True)


def test_determinism(tmp_path, criterion):
    runs = [
        ("gen", "--out", "gen", "--count", 40, "--validation", 8, "--seed", 9),
        ("gen", "--out", "test", "--mode", "test", "--per-depth", 1, "--seed", 10),
        ("hist", tmp_path / "test", "--index", 4, "--out", "hist"),
        ("eval", tmp_path / "test", "--out", "eval"),
        ("train", tmp_path / "gen", "--out", "train", "--epochs", 1, "--batch-size", 16),
        ("eval", tmp_path / "test", "--checkpoint", tmp_path / "train" / "checkpoint.bin",
         "--limit-per-depth", 1, "--out", "eval_snn"),
        ("energy", "--from-report", tmp_path / "eval_snn" / "eval_report.csv", "--out", "energy"),
    ]
    problems = []
    n_art = 0
    for argv in runs:
        proc = _cli(*argv, cwd=tmp_path)
        if proc.returncode:
            problems.append(f"{argv[0]} failed: {proc.stderr.strip()[-200:]}")
            continue
        out = tmp_path / argv[argv.index("--out") + 1]
        again = _cli("rerun", out / "run_manifest.json", "--out", f"{out.name}_rerun", cwd=tmp_path)
        if again.returncode:
            problems.append(f"rerun {argv[0]}: {again.stderr.strip()[-200:]}")
        man = json.loads((out / "run_manifest.json").read_text())
        n_art += len(set(man["outputs"]) - set(man["volatile"]))
    # regenerating a dataset through the library gives the same files
    regen = tmp_path / "regen"
    generate_dataset(DatasetSpec(mode="train", count=40, validation=8), 9, regen)
    original = json.loads((tmp_path / "gen" / "run_manifest.json").read_text())["outputs"]
    from tdcless.cli import RunManifest
    m = RunManifest("gen", [], "")
    m.collect_outputs(regen)
    if m.outputs != original:
        problems.append("library regeneration differs from CLI dataset")
    ok = not problems
    assert criterion("determinism (regenerate + rerun from manifest)", ok,
                     f"{len(runs)} commands, {n_art} artifacts byte-identical" if ok else "; ".join(problems))
