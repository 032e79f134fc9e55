"""Rate-mode training by backpropagation through time, and evaluation."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .combine import adder_levels, combine_adder, combine_edge_sst, combine_level_sst
from .config import tof_to_depth
from .histogram import accumulate_histogram, com_depth
from .snn import RateTables, forward, prepare_inputs, rate_forward, to_rate_mode, to_spiking_mode

# -- loss and optimiser -----------------------------------------------------------------


def logcosh(e):
    """ln cosh(e), stable for large |e|."""
    a = np.abs(np.asarray(e, dtype=np.float64))
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def logcosh_loss(pred, target):
    return logcosh(np.asarray(pred) - np.asarray(target))


def logcosh_grad(pred, target):
    return np.tanh(np.asarray(pred, dtype=np.float64) - np.asarray(target))


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


def adam_step(params, grads, moments, t, config):
    """Bias-corrected Adam on dicts of arrays; returns (params', moments').

    ``moments`` maps each key to ``(m, v)``; missing keys start at zero.
    """
    if t < 1:
        raise ValueError("step counter starts at 1")
    new_p, new_m = {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient shape {g.shape} does not match {k} {np.shape(p)}")
        m, v = moments.get(k, (np.zeros_like(g), np.zeros_like(g)))
        m = config.beta1 * m + (1 - config.beta1) * g
        v = config.beta2 * v + (1 - config.beta2) * g * g
        m_hat = m / (1 - config.beta1 ** t)
        v_hat = v / (1 - config.beta2 ** t)
        new_p[k] = p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        new_m[k] = (m, v)
    return new_p, new_m


# -- inputs ---------------------------------------------------------------------------


def combined_signal(rec, combiner, dt_ps):
    """Network input per step of ``dt_ps`` from the chosen combination tree."""
    sensor = rec.sensor
    if combiner == "level_sst":
        return combine_level_sst(rec.events, sensor, rec.length).values.astype(np.float64)
    if combiner == "edge_sst":
        return combine_edge_sst(rec.events, sensor, rec.length).values.astype(np.float64)
    if combiner == "adder_async":
        return adder_levels(combine_adder(rec.events), sensor.dead_time, dt_ps, rec.length)
    raise ValueError(f"unknown combiner {combiner!r}")


def batch_inputs(params, records, combiner="level_sst", workers=1):
    """Stack (sig, trig, target) arrays for a list of exposure records."""
    if workers > 1 and len(records) > 1:
        from multiprocessing import Pool
        step = -(-len(records) // workers)
        chunks = [(params, records[i:i + step], combiner) for i in range(0, len(records), step)]
        with Pool(workers) as pool:
            parts = pool.starmap(batch_inputs, chunks)
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))
    dt_ps = int(round(params.dt * 1000))
    sig, trig, target = [], [], []
    for rec in records:
        s, t = prepare_inputs(params, combined_signal(rec, combiner, dt_ps), rec.trigger_times,
                              rec.length, dt_ps)
        sig.append(s)
        trig.append(t)
        target.append(rec.ground_truth_tof / rec.sensor.cycle_window)
    return np.array(sig), np.array(trig), np.array(target)


# -- gradients ------------------------------------------------------------------------


def loss_and_grad(params, sig, trig, target, tables=None, smoothing=None):
    """Mean logcosh loss (in cycle units) and its gradient for every trainable array."""
    smoothing = params.smoothing if smoothing is None else smoothing
    tables = tables or RateTables(params)
    tr = rate_forward(params, sig, trig, tables=tables, keep=True, smoothing=smoothing)
    lmu = params.lmu
    b, t_len = sig.shape
    loss = float(np.mean(logcosh(tr.y - target)))
    gy = logcosh_grad(tr.y, target) / b
    a_out = math.exp(-params.dt / params.tau_out)

    g = {k: np.zeros_like(v) for k, v in params.trainable().items()}
    g["dec_bias"][0] = gy.sum()
    gproj = np.empty((b, t_len, 1 + lmu.n_hidden))
    gm = np.zeros((b, lmu.order))
    gh = np.zeros((b, lmu.n_hidden))
    gz = gy.copy()
    bb = lmu.b_bar[:, 0]
    zeros_h = np.zeros((b, lmu.n_hidden))
    zeros_m = np.zeros((b, lmu.order))
    for t in range(t_len - 1, -1, -1):
        h_prev = tr.h[t - 1] if t else zeros_h
        m_prev = tr.m[t - 1] if t else zeros_m
        g["dec"] += (1 - a_out) * (gz @ tr.h[t])
        gh = gh + (1 - a_out) * gz[:, None] * params.dec
        gz = a_out * gz
        gpre = gh * tr.dact[t]
        g["w_h"] += gpre.T @ h_prev
        g["w_m"] += gpre.T @ tr.m[t]
        gproj[:, t, 1:] = gpre
        gm = gm + gpre @ lmu.w_m
        gu = gm @ bb
        gproj[:, t, 0] = gu
        g["e_h"] += gu @ h_prev
        g["e_m"] += gu @ m_prev
        gm = gm @ lmu.a_bar + gu[:, None] * lmu.e_m
        gh = gpre @ lmu.w_h + gu[:, None] * lmu.e_h

    gx = _projection_grad(params, tables, tr.interp, gproj)
    g["e_x"] = gx[0]
    g["w_x"] = gx[1:]
    return loss, g, tr.y


def _projection_grad(params, tables, interp, gproj):
    si, sw, ti, tw = interp
    k = gproj.shape[-1]
    gp = gproj.reshape(-1, k)
    out = []
    for idx, w, rates in ((si, sw, tables.sig_rates), (ti, tw, tables.trig_rates)):
        acc = np.zeros((rates.shape[0], k))
        idx, w = idx.ravel(), w.ravel()
        np.add.at(acc, idx, gp * (1 - w)[:, None])
        np.add.at(acc, idx + 1, gp * w[:, None])
        out.append(acc.T @ rates)
    return np.hstack(out)


# -- training loop --------------------------------------------------------------------


@dataclass
class TrainConfig:
    adam: AdamConfig = field(default_factory=AdamConfig)
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    combiner: str = "level_sst"
    smoothing: float = 0.05
    clip_norm: float = 1.0
    lr_final: float = 0.1  # cosine decay to this fraction of lr over the run

    def lr_at(self, epoch):
        frac = (epoch - 1) / max(self.epochs - 1, 1)
        return self.adam.lr * (self.lr_final + (1 - self.lr_final) * 0.5 * (1 + math.cos(math.pi * frac)))


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainResult:
    params: object
    log: list
    best_epoch: int
    best_val_mae: float


def _mae_m(pred, target, cycle_window):
    return float(np.mean(np.abs(np.maximum(pred, 0) - target)) * cycle_window * 1e-12 * 2.99792458e8 / 2)


def train(params, train_data, val_data, config=None, log_path=None, progress=None,
          cycle_window=86_000):
    """Adam/BPTT on (sig, trig, target) arrays; returns the best-validation params."""
    config = config or TrainConfig()
    params = to_rate_mode(params)
    rng = np.random.default_rng(config.seed)
    tables = RateTables(params)
    sig, trig, target = train_data
    theta = params.trainable()
    moments = {}
    step = 0
    log = []
    best = (math.inf, 0, params)
    t0 = time.perf_counter()
    n = len(target)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        adam = replace(config.adam, lr=config.lr_at(epoch))
        losses = []
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            cur = params.with_trainable(theta)
            loss, grads, _ = loss_and_grad(cur, sig[idx], trig[idx], target[idx], tables,
                                           config.smoothing)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(v)) for v in grads.values()):
                raise DivergenceError(f"non-finite loss/gradient at epoch {epoch}, step {step + 1}")
            norm = math.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
            if config.clip_norm and norm > config.clip_norm:
                grads = {k: v * (config.clip_norm / norm) for k, v in grads.items()}
            step += 1
            theta, moments = adam_step(theta, grads, moments, step, adam)
            losses.append(loss)
        params = params.with_trainable(theta)
        val_mae = math.nan
        if val_data is not None and len(val_data[2]):
            y = predict(params, val_data[0], val_data[1], tables)
            val_mae = _mae_m(y, val_data[2], cycle_window)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_mae": val_mae,
               "wall_time": time.perf_counter() - t0, "lr": adam.lr}
        log.append(row)
        if progress:
            progress(row)
        if not val_mae >= best[0]:
            best = (val_mae, epoch, params)
        if log_path:
            write_log(log, log_path)
    if best[1] == 0:
        best = (math.nan, config.epochs, params)
    return TrainResult(best[2], log, best[1], best[0])


def predict(params, sig, trig, tables=None, batch=64):
    out = []
    for s in range(0, len(sig), batch):
        y, _ = forward(params, sig[s:s + batch], trig[s:s + batch], tables)
        out.append(y)
    return np.concatenate(out) if out else np.empty(0)


def write_log(log, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_mae", "wall_time", "lr"])
        w.writeheader()
        for row in log:
            w.writerow(row)


# -- evaluation ---------------------------------------------------------------------

WITHIN_M = 0.15


@dataclass
class SetResult:
    name: str
    mae: float
    within: float
    n: int
    mean_neural: float = math.nan
    mean_synaptic: float = math.nan
    failed: int = 0  # non-finite predictions, left out of the MAE and counted as misses


@dataclass
class EvalReport:
    sets: list
    scatter: list  # rows: (set, index, depth, prediction, N_n, N_s)
    method: str = ""

    @property
    def mae(self):
        return float(np.mean([s.mae for s in self.sets])) if self.sets else math.nan

    @property
    def mae_std(self):
        return float(np.std([s.mae for s in self.sets])) if self.sets else math.nan

    @property
    def within(self):
        errs = np.abs(np.array([r[3] - r[2] for r in self.scatter], dtype=np.float64))
        return float(np.mean(np.nan_to_num(errs, nan=np.inf) <= WITHIN_M)) if errs.size else math.nan

    @property
    def failed(self):
        return sum(s.failed for s in self.sets)

    @property
    def mean_neural(self):
        v = [r[4] for r in self.scatter if r[4] is not None]
        return float(np.mean(v)) if v else math.nan

    @property
    def mean_synaptic(self):
        v = [r[5] for r in self.scatter if r[5] is not None]
        return float(np.mean(v)) if v else math.nan

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "set", "n", "failed", "mae_m", "within_15cm", "mean_neural_spikes",
                        "mean_synaptic_spikes"])
            for s in self.sets:
                w.writerow([self.method, s.name, s.n, s.failed, f"{s.mae:.6f}", f"{s.within:.6f}",
                            _fmt(s.mean_neural), _fmt(s.mean_synaptic)])
            w.writerow([self.method, "all", sum(s.n for s in self.sets), self.failed,
                        f"{self.mae:.6f}", f"{self.within:.6f}", _fmt(self.mean_neural),
                        _fmt(self.mean_synaptic)])

    def write_scatter(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set", "index", "depth_m", "prediction_m", "neural_spikes", "synaptic_spikes"])
            for r in self.scatter:
                w.writerow([r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.6f}",
                            "" if r[4] is None else r[4], "" if r[5] is None else r[5]])


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3f}"


def summarize(name_depth_pred, method=""):
    """Build an EvalReport from (set, index, depth, prediction, N_n, N_s) rows."""
    rows = list(name_depth_pred)
    sets = []
    for name in dict.fromkeys(r[0] for r in rows):
        sel = [r for r in rows if r[0] == name]
        err = np.abs(np.array([r[3] - r[2] for r in sel], dtype=np.float64))
        ok = np.isfinite(err)
        nn = [r[4] for r in sel if r[4] is not None]
        ns = [r[5] for r in sel if r[5] is not None]
        sets.append(SetResult(name, float(err[ok].mean()) if ok.any() else math.nan,
                              float(np.mean(ok & (np.where(ok, err, 0) <= WITHIN_M))), len(sel),
                              float(np.mean(nn)) if nn else math.nan,
                              float(np.mean(ns)) if ns else math.nan, int(np.sum(~ok))))
    return EvalReport(sets, rows, method)


def com_predictions(records):
    """CoM depth per record (NaN when CoM fails)."""
    from .histogram import DegeneratePeakError, NoSignalError
    out = []
    for rec in records:
        try:
            out.append(com_depth(accumulate_histogram(rec)).depth_estimate)
        except (NoSignalError, DegeneratePeakError):
            out.append(math.nan)
    return out


def _snn_chunk(args):
    params, records, combiner = args
    sig, trig, _ = batch_inputs(params, records, combiner)
    y, counters = forward(params, sig, trig)
    cw = records[0].sensor.cycle_window
    depths = [tof_to_depth(max(float(v), 0.0) * cw) for v in y]
    return depths, counters


def snn_predictions(params, records, combiner="level_sst", batch=32, workers=1):
    """(depths, counters or None) for a list of records, in record order."""
    chunks = [(params, records[i:i + batch], combiner) for i in range(0, len(records), batch)]
    if workers > 1:
        from multiprocessing import Pool
        with Pool(workers) as pool:
            results = pool.map(_snn_chunk, chunks)
    else:
        results = [_snn_chunk(c) for c in chunks]
    depths, counters = [], []
    for d, c in results:
        depths += d
        counters += c if c is not None else [None] * len(d)
    return depths, counters


def evaluate(datasets, params=None, mode="spiking", combiner="level_sst", method=None,
             workers=1, limit_per_depth=None):
    """Evaluate on named datasets: ``datasets`` is a list of (name, Dataset).

    ``params=None`` (or ``method='com'``) evaluates the CoM baseline.
    ``limit_per_depth`` keeps only the first exposures of every depth.
    """
    rows = []
    use_com = params is None or method == "com"
    if not use_com:
        params = to_spiking_mode(params) if mode == "spiking" else to_rate_mode(params)
    for name, ds in datasets:
        idx = _subset(ds, limit_per_depth)
        records = [ds[i] for i in idx]
        if use_com:
            preds, counters = com_predictions(records), [None] * len(records)
        else:
            preds, counters = snn_predictions(params, records, combiner, workers=workers)
        for i, rec, p, c in zip(idx, records, preds, counters):
            rows.append((name, int(i), rec.scene.depth, p,
                         None if c is None else c.neural, None if c is None else c.synaptic))
    label = method or ("com" if use_com else f"snn-{mode}-{combiner}")
    return summarize(rows, label)


def _subset(ds, limit_per_depth):
    if not limit_per_depth:
        return list(range(len(ds)))
    seen = {}
    out = []
    for i, e in enumerate(ds.manifest["exposures"]):
        k = e["depth"]
        if seen.get(k, 0) < limit_per_depth:
            seen[k] = seen.get(k, 0) + 1
            out.append(i)
    return out
