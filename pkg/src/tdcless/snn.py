"""LIF encoders + Legendre Memory Unit depth network.

Network time is in nanoseconds.  Per step of ``dt``::

    u_t = e_x . x_t + e_h . h_{t-1} + e_m . m_{t-1}
    m_t = A_bar m_{t-1} + B_bar u_t
    h_t = f(W_x x_t + W_h h_{t-1} + W_m m_t)
    z_t = a z_{t-1} + (1 - a) d . h_t            (output synapse, a = exp(-dt/tau_out))

and the prediction is ``z_T + d0`` at the last step, a time of flight as a
fraction of the cycle window.  ``x_t`` is the output of two LIF populations,
one driven by the combined SPAD signal and one by the laser-trigger trace (the
trigger pulses passed through a first-order synapse), and ``f`` is a LIF
population of ``n_hidden`` neurons.  In rate mode every LIF neuron outputs its
steady-state rate; in spiking mode it outputs ``1/dt`` on the steps it spikes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.linalg
from scipy.signal import lfilter

from .config import tof_to_depth

SPIKE_FLOOR = 1e-300


# -- LIF neurons ----------------------------------------------------------------

@dataclass
class LifParams:
    tau_rc: float
    tau_ref: float
    gain: np.ndarray
    bias: np.ndarray
    v_threshold: float = 1.0

    def __post_init__(self):
        self.gain = np.asarray(self.gain, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if not (self.tau_rc > 0 and self.tau_ref > 0):
            raise ValueError("tau_rc and tau_ref must be positive")
        if np.any(self.gain <= 0):
            raise ValueError("gains must be positive")

    @property
    def n(self):
        return self.gain.size


@dataclass
class LifState:
    voltage: np.ndarray
    refractory: np.ndarray

    @classmethod
    def rest(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    def copy(self):
        return LifState(self.voltage.copy(), self.refractory.copy())


def lif_rate_from_drive(j, tau_rc, tau_ref):
    """Steady-state rate for total drive ``j`` (threshold 1)."""
    j = np.asarray(j)
    if j.dtype != np.float32:
        j = j.astype(np.float64)
    out = np.zeros_like(j)
    on = j > 1
    out[on] = 1.0 / (tau_ref + tau_rc * np.log1p(1.0 / (j[on] - 1.0)))
    return out


def lif_rate(current, params):
    """Rate of each neuron for input current ``current`` (gain and bias applied)."""
    return lif_rate_from_drive(params.gain * current + params.bias, params.tau_rc, params.tau_ref)


def soft_lif_rate(j, tau_rc, tau_ref, sigma):
    """Softplus-smoothed LIF rate and its derivative w.r.t. the drive ``j``.

    The excess drive ``j - 1`` is replaced by ``sigma * softplus((j - 1)/sigma)``
    so the rate is smooth through threshold; ``sigma -> 0`` recovers the LIF
    rate.
    """
    x = (np.asarray(j, dtype=np.float64) - 1.0) / sigma
    p = sigma * np.logaddexp(0.0, x)
    live = p > SPIKE_FLOOR
    ps = np.where(live, p, 1.0)
    lg = np.log1p(1.0 / ps)
    rate = np.where(live, 1.0 / (tau_ref + tau_rc * lg), 0.0)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    drate = np.where(live, rate * rate * tau_rc / (ps * (ps + 1.0)) * sig, 0.0)
    return rate, drate


def lif_step(state, current, params, dt):
    """Advance LIF neurons by ``dt``; returns (new_state, spikes as 0/1 floats).

    Integrates ``dv/dt = (gain*J + bias - v)/tau_rc`` exactly over the part of
    the step outside the refractory period, spikes when ``v`` crosses 1, and
    places the refractory period from the interpolated crossing time.
    """
    if dt == 0:
        return state.copy(), np.zeros_like(state.voltage)
    j = np.broadcast_to(params.gain * current + params.bias, state.voltage.shape)
    ref = state.refractory - dt
    delta = np.clip(-ref, 0.0, dt)  # time available for integration
    v = state.voltage - (j - state.voltage) * np.expm1(-delta / params.tau_rc)
    spiked = v > params.v_threshold
    if np.any(spiked):
        # interpolated crossing time within the step
        t_spike = dt + params.tau_rc * np.log1p(-(v[spiked] - 1.0) / (j[spiked] - 1.0))
        ref[spiked] = params.tau_ref - (dt - t_spike)
        v[spiked] = 0.0
    v = np.maximum(v, 0.0)
    ref = np.clip(ref, 0.0, params.tau_ref)
    return LifState(v, ref), spiked.astype(np.float64)


# -- Legendre memory ----------------------------------------------------------------

def legendre_continuous(d, theta):
    i = np.arange(d)[:, None]
    j = np.arange(d)[None, :]
    a = np.where(i < j, -1.0, (-1.0) ** (i - j + 1)) * (2 * i + 1) / theta
    b = ((2 * np.arange(d) + 1) * (-1.0) ** np.arange(d) / theta)[:, None]
    return a, b


def legendre_matrices(d, theta, dt):
    """Zero-order-hold discretisation (A_bar, B_bar) of the Legendre delay system."""
    if d < 1 or not theta > 0 or not dt > 0:
        raise ValueError("need d >= 1, theta > 0, dt > 0")
    a, b = legendre_continuous(int(d), float(theta))
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = a
    aug[:d, d:] = b
    e = scipy.linalg.expm(aug * dt)
    return e[:d, :d], e[:d, d:]


def shifted_legendre(d, r):
    """Weights w_i(r) such that u(t - r*theta) ~ sum_i w_i m_i(t)."""
    return np.polynomial.legendre.legvander(np.atleast_1d(2.0 * np.asarray(r) - 1.0), d - 1)


# -- parameters ------------------------------------------------------------------------

@dataclass
class LmuParams:
    a_bar: np.ndarray
    b_bar: np.ndarray
    e_x: np.ndarray
    e_h: np.ndarray
    e_m: np.ndarray
    w_x: np.ndarray
    w_h: np.ndarray
    w_m: np.ndarray

    @property
    def order(self):
        return self.a_bar.shape[0]

    @property
    def n_hidden(self):
        return self.w_h.shape[0]

    def check(self):
        d, nh, nx = self.order, self.n_hidden, self.e_x.size
        shapes = {"a_bar": (d, d), "b_bar": (d, 1), "e_x": (nx,), "e_h": (nh,),
                  "e_m": (d,), "w_x": (nh, nx), "w_h": (nh, nh), "w_m": (nh, d)}
        for k, s in shapes.items():
            if getattr(self, k).shape != s:
                raise ValueError(f"{k} has shape {getattr(self, k).shape}, expected {s}")


TRAINABLE = ("e_x", "e_h", "e_m", "w_x", "w_h", "w_m", "dec", "dec_bias")


@dataclass
class NetworkParams:
    dt: float  # ns
    theta: float  # ns
    lmu: LmuParams
    sig_pop: LifParams
    sig_enc: np.ndarray
    trig_pop: LifParams
    trig_enc: np.ndarray
    hidden: LifParams
    dec: np.ndarray
    dec_bias: float
    tau_out: float  # ns
    tau_trigger: float  # ns
    signal_scale: float = 1.0 / 16  # combined signal -> population input
    mode: str = "rate"
    smoothing: float = 0.05  # softplus width used for training gradients

    @property
    def n_in(self):
        return self.sig_pop.n + self.trig_pop.n

    @property
    def state_variables(self):
        return self.lmu.n_hidden + self.lmu.order

    def trainable(self):
        out = {k: getattr(self.lmu, k) for k in TRAINABLE[:6]}
        out["dec"] = self.dec
        out["dec_bias"] = np.array([self.dec_bias])
        return out

    def with_trainable(self, values):
        lmu = replace(self.lmu, **{k: np.array(values[k], dtype=np.float64) for k in TRAINABLE[:6]})
        return replace(self, lmu=lmu, dec=np.array(values["dec"], dtype=np.float64),
                       dec_bias=float(np.asarray(values["dec_bias"]).ravel()[0]))

    def parameter_count(self):
        return int(sum(v.size for v in self.trainable().values()))


@dataclass
class NetworkConfig:
    order: int = 56
    n_hidden: int = 4
    n_signal: int = 320
    n_trigger: int = 320
    dt: float = 0.5  # ns
    theta: float = 3870.0  # ns
    tau_out: float = 100.0  # ns
    tau_trigger: float = 43.0  # ns
    in_tau_rc: float = 1.0
    in_tau_ref: float = 1.0
    in_max_rate: tuple = (0.2, 0.6)  # per ns
    hidden_tau_rc: float = 2.0
    hidden_tau_ref: float = 0.5
    signal_scale: float = 1.0 / 16
    seed: int = 0


def _population(n, rng, lo, hi, tau_rc, tau_ref, intercept_range):
    """NEF-style population: encoders +-1, intercepts and max rates uniform."""
    enc = rng.choice([-1.0, 1.0], size=n)
    max_rates = rng.uniform(lo, hi, size=n)
    intercepts = rng.uniform(*intercept_range, size=n)
    # drive at x = 1 along the encoder gives max_rate; drive at intercept is 1
    j_max = 1.0 / (1.0 - np.exp((tau_ref - 1.0 / max_rates) / tau_rc))
    gain = (j_max - 1.0) / (1.0 - intercepts)
    bias = 1.0 - gain * intercepts
    return LifParams(tau_rc, tau_ref, gain, bias), enc


def init_network(config=None):
    cfg = config or NetworkConfig()
    rng = np.random.default_rng(cfg.seed)
    a_bar, b_bar = legendre_matrices(cfg.order, cfg.theta, cfg.dt)
    sig_pop, sig_enc = _population(cfg.n_signal, rng, *cfg.in_max_rate, cfg.in_tau_rc,
                                   cfg.in_tau_ref, (-0.9, 0.9))
    trig_pop, trig_enc = _population(cfg.n_trigger, rng, *cfg.in_max_rate, cfg.in_tau_rc,
                                     cfg.in_tau_ref, (-0.9, 0.9))
    nx, nh, d = cfg.n_signal + cfg.n_trigger, cfg.n_hidden, cfg.order
    scale_x = 1.0 / np.sqrt(nx * 0.2)
    lmu = LmuParams(
        a_bar=a_bar, b_bar=b_bar,
        e_x=rng.normal(0, scale_x, nx), e_h=rng.normal(0, 0.1, nh), e_m=np.zeros(d),
        w_x=rng.normal(0, scale_x, (nh, nx)), w_h=rng.normal(0, 0.1, (nh, nh)),
        w_m=rng.normal(0, 1.0 / np.sqrt(d), (nh, d)),
    )
    hidden = LifParams(cfg.hidden_tau_rc, cfg.hidden_tau_ref, np.ones(nh), np.zeros(nh))
    return NetworkParams(
        dt=cfg.dt, theta=cfg.theta, lmu=lmu, sig_pop=sig_pop, sig_enc=sig_enc,
        trig_pop=trig_pop, trig_enc=trig_enc, hidden=hidden,
        dec=rng.normal(0, 0.1, nh), dec_bias=0.5, tau_out=cfg.tau_out,
        tau_trigger=cfg.tau_trigger, signal_scale=cfg.signal_scale)


def to_rate_mode(params):
    return replace(params, mode="rate")


def to_spiking_mode(params):
    return replace(params, mode="spiking")


# -- inputs ----------------------------------------------------------------------------

def trigger_trace(pulses, dt, tau):
    """First-order synapse on the trigger pulse train, unit jump per pulse."""
    a = math.exp(-dt / tau)
    return lfilter([1.0], [1.0, -a], np.asarray(pulses, dtype=np.float64), axis=-1)


def trigger_pulses(trigger_times, length, dt_ps):
    n = length // dt_ps
    out = np.zeros(n)
    np.add.at(out, np.asarray(trigger_times, dtype=np.int64) // dt_ps, 1.0)
    return out


# -- rate mode -------------------------------------------------------------------------

class RateTables:
    """Population rates tabulated over the input range, for interpolation.

    ``x_t`` in rate mode is the linear interpolation of these tables at the
    channel value, so projections ``E x_t`` interpolate ``table @ E.T``.
    """

    def __init__(self, params, sig_max=1.0, trig_max=None, n_grid=2049):
        if trig_max is None:
            trig_max = 1.0 / (1.0 - math.exp(-params.dt * 172 / params.tau_trigger)) + 0.05
        self.sig_grid = np.linspace(0.0, sig_max, n_grid)
        self.trig_grid = np.linspace(0.0, trig_max, n_grid)
        self.sig_rates = lif_rate(self.sig_grid[:, None] * params.sig_enc, params.sig_pop)
        self.trig_rates = lif_rate(self.trig_grid[:, None] * params.trig_enc, params.trig_pop)

    @staticmethod
    def locate(grid, values):
        step = grid[1] - grid[0]
        pos = np.clip((values - grid[0]) / step, 0.0, len(grid) - 1 - 1e-9)
        idx = pos.astype(np.int64)
        return idx, pos - idx


def input_projection(tables, params, sig, trig):
    """Per-step projections of x_t: (u_in (B,T), pre_in (B,T,n_hidden)) and
    the interpolation data needed for gradients."""
    nsig = params.sig_pop.n
    e = np.vstack([params.lmu.e_x[None, :], params.lmu.w_x])  # (1+nh, nx)
    ps = tables.sig_rates @ e[:, :nsig].T
    pt = tables.trig_rates @ e[:, nsig:].T
    si, sw = tables.locate(tables.sig_grid, sig)
    ti, tw = tables.locate(tables.trig_grid, trig)
    proj = (ps[si] * (1 - sw)[..., None] + ps[si + 1] * sw[..., None]
            + pt[ti] * (1 - tw)[..., None] + pt[ti + 1] * tw[..., None])
    return proj, (si, sw, ti, tw)


@dataclass
class RateTrace:
    h: np.ndarray  # (T, B, nh)
    m: np.ndarray  # (T, B, d)
    dact: np.ndarray  # (T, B, nh) derivative of f at pre
    z: np.ndarray  # (B,)
    y: np.ndarray  # (B,)
    interp: tuple = ()
    proj: np.ndarray = None


def lmu_step(x_t, h_prev, m_prev, lmu, f):
    """One step of the LMU cell; ``f`` maps the hidden pre-activation to h_t.

    Works on single vectors or on batches in the leading axis.
    """
    if np.shape(x_t)[-1] != lmu.e_x.size or np.shape(m_prev)[-1] != lmu.order \
            or np.shape(h_prev)[-1] != lmu.n_hidden:
        raise ValueError("input/state dimensions do not match the LMU")
    u = x_t @ lmu.e_x + h_prev @ lmu.e_h + m_prev @ lmu.e_m
    m = m_prev @ lmu.a_bar.T + np.multiply.outer(u, lmu.b_bar[:, 0])
    h = f(x_t @ lmu.w_x.T + h_prev @ lmu.w_h.T + m @ lmu.w_m.T)
    return h, m


def rate_forward(params, sig, trig, tables=None, keep=False, smoothing=None, dtype=np.float64):
    """Run the rate network on batched inputs ``sig``/``trig`` of shape (B, T).

    ``sig`` is already scaled into population input units; ``trig`` is the
    trigger trace.  With ``smoothing`` the hidden units use the softplus-
    smoothed rate (training); otherwise the exact LIF rate.  ``dtype=float32``
    runs the recurrence in single precision (fast path).
    """
    sig = np.atleast_2d(sig)
    trig = np.atleast_2d(trig)
    tables = tables or RateTables(params)
    lmu, hid = params.lmu, params.hidden
    proj, interp = input_projection(tables, params, sig, trig)
    b, t_len = sig.shape
    d, nh = lmu.order, lmu.n_hidden
    a_t = lmu.a_bar.T.astype(dtype)
    bb = lmu.b_bar[:, 0].astype(dtype)
    a_out = math.exp(-params.dt / params.tau_out)
    h = np.zeros((b, nh), dtype=dtype)
    m = np.zeros((b, d), dtype=dtype)
    z = np.zeros(b, dtype=dtype)
    if dtype != np.float64:
        proj = proj.astype(dtype)
        lmu = LmuParams(*(np.asarray(getattr(lmu, f.name), dtype=dtype) for f in fields(LmuParams)))
    if keep:
        hs = np.empty((t_len, b, nh))
        ms = np.empty((t_len, b, d))
        ds = np.empty((t_len, b, nh))
    gain, bias = hid.gain.astype(dtype), hid.bias.astype(dtype)
    for t in range(t_len):
        u = proj[:, t, 0] + h @ lmu.e_h + m @ lmu.e_m
        m = m @ a_t + u[:, None] * bb
        pre = proj[:, t, 1:] + h @ lmu.w_h.T + m @ lmu.w_m.T
        drive = gain * pre + bias
        if smoothing:
            h, dh = soft_lif_rate(drive, hid.tau_rc, hid.tau_ref, smoothing)
        else:
            h = lif_rate_from_drive(drive, hid.tau_rc, hid.tau_ref)
        z = a_out * z + (1 - a_out) * (h @ params.dec.astype(dtype))
        if keep:
            hs[t], ms[t], ds[t] = h, m, dh * gain
    y = z + params.dec_bias
    if keep:
        return RateTrace(hs, ms, ds, z, y, interp, proj)
    return y


# -- spiking mode ----------------------------------------------------------------------

@dataclass
class SpikeCounters:
    neural: int = 0  # N_n
    synaptic: int = 0  # N_s

    def __add__(self, other):
        return SpikeCounters(self.neural + other.neural, self.synaptic + other.synaptic)


def fan_out(params):
    """Outgoing connections per neuron: (signal pop, trigger pop, hidden)."""
    lmu = params.lmu
    nsig = params.sig_pop.n
    x_targets = (lmu.e_x != 0).astype(int) + (lmu.w_x != 0).sum(axis=0)
    h_targets = ((lmu.e_h != 0).astype(int) + (lmu.w_h != 0).sum(axis=0)
                 + (params.dec != 0).astype(int))
    return x_targets[:nsig], x_targets[nsig:], h_targets


def spiking_forward(params, sig, trig, record=False):
    """Spiking simulation on batched inputs; returns (y (B,), counters per sample).

    Counters tally every neural spike, and every spike times its number of
    outgoing connections as synaptic events.
    """
    sig = np.atleast_2d(sig)
    trig = np.atleast_2d(trig)
    lmu, hid = params.lmu, params.hidden
    b, t_len = sig.shape
    dt = params.dt
    d, nh = lmu.order, lmu.n_hidden
    nsig = params.sig_pop.n
    a_t = lmu.a_bar.T.copy()
    bb = lmu.b_bar[:, 0]
    a_out = math.exp(-dt / params.tau_out)
    s_state = LifState.rest((b, nsig))
    t_state = LifState.rest((b, params.trig_pop.n))
    h_state = LifState.rest((b, nh))
    h = np.zeros((b, nh))
    m = np.zeros((b, d))
    z = np.zeros(b)
    fo_s, fo_t, fo_h = fan_out(params)
    n_neural = np.zeros(b, dtype=np.int64)
    n_syn = np.zeros(b, dtype=np.int64)
    ex_s, ex_t = lmu.e_x[:nsig], lmu.e_x[nsig:]
    wx_s, wx_t = lmu.w_x[:, :nsig].T.copy(), lmu.w_x[:, nsig:].T.copy()
    hist = [] if record else None
    for t in range(t_len):
        s_state, ss = lif_step(s_state, sig[:, t, None] * params.sig_enc, params.sig_pop, dt)
        t_state, ts = lif_step(t_state, trig[:, t, None] * params.trig_enc, params.trig_pop, dt)
        u = (ss @ ex_s + ts @ ex_t) / dt + h @ lmu.e_h + m @ lmu.e_m
        m = m @ a_t + u[:, None] * bb
        pre = (ss @ wx_s + ts @ wx_t) / dt + h @ lmu.w_h.T + m @ lmu.w_m.T
        h_state, hs = lif_step(h_state, pre, hid, dt)
        h = hs / dt
        z = a_out * z + (1 - a_out) * (h @ params.dec)
        n_neural += (ss.sum(axis=1) + ts.sum(axis=1) + hs.sum(axis=1)).astype(np.int64)
        n_syn += np.rint(ss @ fo_s + ts @ fo_t + hs @ fo_h).astype(np.int64)
        if record:
            hist.append((ss.copy(), ts.copy(), hs.copy()))
    y = z + params.dec_bias
    counters = [SpikeCounters(int(n), int(s)) for n, s in zip(n_neural, n_syn)]
    if record:
        return y, counters, hist
    return y, counters


# -- exposure-level inference -----------------------------------------------------------

def prepare_inputs(params, signal, trigger_times, length_ps, dt_ps):
    """Scale the combined signal and build the trigger trace for one exposure."""
    sig = np.asarray(signal, dtype=np.float64) * params.signal_scale
    trig = trigger_trace(trigger_pulses(trigger_times, length_ps, dt_ps), params.dt, params.tau_trigger)
    return sig, trig


def forward(params, sig, trig, tables=None):
    """Mode-dispatching batched forward pass; returns (y, counters or None)."""
    if params.mode == "spiking":
        return spiking_forward(params, sig, trig)
    return rate_forward(params, sig, trig, tables=tables), None


def output_to_depth(y, cycle_window_ps):
    return tof_to_depth(max(float(y), 0.0) * cycle_window_ps)


def infer_exposure(signal, trigger_times, params, length_ps, cycle_window_ps=86_000, dt_ps=None):
    """Depth (m) and spike counters for one exposure's combined signal."""
    dt_ps = dt_ps or int(round(params.dt * 1000))
    sig, trig = prepare_inputs(params, signal, trigger_times, length_ps, dt_ps)
    y, counters = forward(params, sig[None], trig[None])
    return output_to_depth(y[0], cycle_window_ps), (counters[0] if counters else SpikeCounters())


# -- checkpoints -----------------------------------------------------------------------
#
# little-endian: "TDCN" u16 version, u8 mode (0 rate, 1 spiking), u8 pad,
# u32 d, u32 n_hidden, u32 n_signal, u32 n_trigger,
# f8 dt, f8 theta, f8 tau_out, f8 tau_trigger, f8 signal_scale, f8 smoothing,
# f8 sig tau_rc, f8 sig tau_ref, f8 trig tau_rc, f8 trig tau_ref,
# f8 hidden tau_rc, f8 hidden tau_ref, f8 dec_bias,
# then row-major f8 blocks in this order:
# a_bar, b_bar, e_x, e_h, e_m, w_x, w_h, w_m, dec,
# sig gain, sig bias, sig enc, trig gain, trig bias, trig enc, hidden gain, hidden bias

CKPT_MAGIC = b"TDCN"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<4sHBB4I13d")


def encode_checkpoint(p):
    lmu = p.lmu
    head = _CKPT_HEAD.pack(
        CKPT_MAGIC, CKPT_VERSION, 1 if p.mode == "spiking" else 0, 0,
        lmu.order, lmu.n_hidden, p.sig_pop.n, p.trig_pop.n,
        p.dt, p.theta, p.tau_out, p.tau_trigger, p.signal_scale, p.smoothing,
        p.sig_pop.tau_rc, p.sig_pop.tau_ref, p.trig_pop.tau_rc, p.trig_pop.tau_ref,
        p.hidden.tau_rc, p.hidden.tau_ref, p.dec_bias)
    blocks = [lmu.a_bar, lmu.b_bar, lmu.e_x, lmu.e_h, lmu.e_m, lmu.w_x, lmu.w_h, lmu.w_m,
              p.dec, p.sig_pop.gain, p.sig_pop.bias, p.sig_enc, p.trig_pop.gain,
              p.trig_pop.bias, p.trig_enc, p.hidden.gain, p.hidden.bias]
    return head + b"".join(np.ascontiguousarray(x, dtype="<f8").tobytes() for x in blocks)


def decode_checkpoint(buf):
    if len(buf) < _CKPT_HEAD.size:
        raise ValueError("truncated checkpoint header")
    vals = _CKPT_HEAD.unpack_from(buf, 0)
    magic, version, mode = vals[0], vals[1], vals[2]
    if magic != CKPT_MAGIC:
        raise ValueError("not a network checkpoint")
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    d, nh, ns, nt = vals[4:8]
    (dt, theta, tau_out, tau_trig, sscale, smoothing, s_rc, s_ref, t_rc, t_ref,
     h_rc, h_ref, dec_bias) = vals[8:]
    nx = ns + nt
    shapes = [(d, d), (d, 1), (nx,), (nh,), (d,), (nh, nx), (nh, nh), (nh, d), (nh,),
              (ns,), (ns,), (ns,), (nt,), (nt,), (nt,), (nh,), (nh,)]
    pos = _CKPT_HEAD.size
    arrs = []
    for s in shapes:
        n = int(np.prod(s))
        arrs.append(np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(s).astype(np.float64))
        pos += 8 * n
    if pos != len(buf):
        raise ValueError("checkpoint size mismatch")
    lmu = LmuParams(*arrs[:8])
    lmu.check()
    return NetworkParams(
        dt=dt, theta=theta, lmu=lmu,
        sig_pop=LifParams(s_rc, s_ref, arrs[9], arrs[10]), sig_enc=arrs[11],
        trig_pop=LifParams(t_rc, t_ref, arrs[12], arrs[13]), trig_enc=arrs[14],
        hidden=LifParams(h_rc, h_ref, arrs[15], arrs[16]),
        dec=arrs[8], dec_bias=dec_bias, tau_out=tau_out, tau_trigger=tau_trig,
        signal_scale=sscale, mode="spiking" if mode == 1 else "rate", smoothing=smoothing)


def save_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(params))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
