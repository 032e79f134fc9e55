"""Real sensor timestamp frames -> macropixel exposures -> depth maps.

Text frame format (one record per line, ``#`` lines are metadata/comments)::

    # code_ps=60
    # width=64
    # height=32
    # frames=90          (optional; frames may be empty at the end)
    frame_index,x,y,code
    0,3,7,412
    ...

Binary twin (little-endian): ``"TDCF"`` u16 version, u16 pad, u32 width,
u32 height, u32 frames, f8 code_ps, u64 n, then n records of (u32 frame, u16 x, u16 y,
u32 code).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import C_LIGHT, SensorConfig
from .histogram import DegeneratePeakError, NoSignalError, accumulate_histogram, com_depth

FRAME_MAGIC = b"TDCF"
FRAME_VERSION = 1
_FRAME_HEAD = struct.Struct("<4sHHIIIdQ")
_FRAME_REC = np.dtype([("frame", "<u4"), ("x", "<u2"), ("y", "<u2"), ("code", "<u4")])
ORDERS = ("scale_then_shift", "shift_then_scale")


class FrameFormatError(ValueError):
    """Malformed frame file."""


@dataclass
class RealFrameSet:
    frame: np.ndarray
    x: np.ndarray
    y: np.ndarray
    code: np.ndarray
    code_ps: float
    width: int
    height: int
    declared_frames: int = 0  # frame count from the header; may exceed the last index

    def __post_init__(self):
        self.frame = np.asarray(self.frame, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.code = np.asarray(self.code, dtype=np.int64)
        if not (len(self.frame) == len(self.x) == len(self.y) == len(self.code)):
            raise FrameFormatError("column lengths differ")
        if np.any((self.x < 0) | (self.x >= self.width) | (self.y < 0) | (self.y >= self.height)):
            raise FrameFormatError("pixel coordinate outside the array")
        if np.any(self.code < 0) or np.any(self.frame < 0):
            raise FrameFormatError("negative frame index or timestamp code")

    def __len__(self):
        return len(self.code)

    @property
    def n_frames(self):
        last = int(self.frame.max()) + 1 if len(self.frame) else 0
        return max(last, int(self.declared_frames))


def read_frames_text(path):
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if line.startswith("frame_index"):
            continue
        rows.append(line.split(","))
    try:
        code_ps, width, height = float(meta["code_ps"]), int(meta["width"]), int(meta["height"])
        arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
        declared = int(meta.get("frames", 0))
    except (KeyError, ValueError) as exc:
        raise FrameFormatError(f"bad frame file {path}: {exc}") from exc
    return RealFrameSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], code_ps, width, height, declared)


def write_frames_text(frames, path):
    lines = [f"# code_ps={frames.code_ps!r}", f"# width={frames.width}",
             f"# height={frames.height}", f"# frames={frames.n_frames}", "frame_index,x,y,code"]
    lines += [f"{f},{x},{y},{c}" for f, x, y, c in zip(frames.frame, frames.x, frames.y, frames.code)]
    Path(path).write_text("\n".join(lines) + "\n")


def encode_frames(frames):
    rec = np.empty(len(frames), dtype=_FRAME_REC)
    rec["frame"], rec["x"], rec["y"], rec["code"] = frames.frame, frames.x, frames.y, frames.code
    head = _FRAME_HEAD.pack(FRAME_MAGIC, FRAME_VERSION, 0, frames.width, frames.height,
                            frames.n_frames, frames.code_ps, len(frames))
    return head + rec.tobytes()


def decode_frames(buf):
    try:
        magic, version, _, width, height, n_frames, code_ps, n = _FRAME_HEAD.unpack_from(buf, 0)
    except struct.error as exc:
        raise FrameFormatError("truncated frame header") from exc
    if magic != FRAME_MAGIC or version != FRAME_VERSION:
        raise FrameFormatError("not a version-1 frame file")
    if len(buf) != _FRAME_HEAD.size + n * _FRAME_REC.itemsize:
        raise FrameFormatError("frame file size mismatch")
    rec = np.frombuffer(buf, dtype=_FRAME_REC, count=n, offset=_FRAME_HEAD.size)
    return RealFrameSet(rec["frame"], rec["x"], rec["y"], rec["code"], code_ps, width, height,
                        n_frames)


def read_frames(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == FRAME_MAGIC:
        return decode_frames(data)
    return read_frames_text(path)


@dataclass
class MacropixelExposure:
    """Duck-compatible with ExposureRecord for histogramming and combination."""
    sensor: SensorConfig
    trigger_times: np.ndarray
    events: list
    length: int


@dataclass
class ExposureGrid:
    exposures: list  # [exposure][my][mx] -> MacropixelExposure
    n_in: int = 0
    n_out: int = 0
    dropped: int = 0
    time_scale: float = 3.0

    @property
    def shape(self):
        return (len(self.exposures[0]), len(self.exposures[0][0])) if self.exposures else (0, 0)


def reformat_frames(frames, frames_per_exposure=45, group=4, time_scale=3.0, sensor=None,
                    order="scale_then_shift"):
    """Pool ``frames_per_exposure`` frames into one exposure per ``group`` x ``group`` macropixel.

    Frame ``k`` of an exposure becomes laser cycle ``k``.  With the default
    ``scale_then_shift`` each timestamp becomes ``k * cycle + time_scale * t``
    and is dropped if ``time_scale * t`` leaves the cycle window;
    ``shift_then_scale`` uses ``time_scale * (k * cycle + t)`` instead.  Events
    past the exposure length are dropped too.  Pixels within a macropixel act
    as its SPADs.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}")
    sensor = sensor or SensorConfig()
    cycle = int(sensor.cycle_window)
    length = cycle * frames_per_exposure
    n_exp = frames.n_frames // frames_per_exposure
    gx, gy = frames.width // group, frames.height // group
    if frames.width % group or frames.height % group:
        raise FrameFormatError("array dimensions must be multiples of the macropixel size")
    intra = frames.code * frames.code_ps
    k = frames.frame % frames_per_exposure
    if order == "scale_then_shift":
        scaled = np.floor(intra * time_scale)
        t = k * cycle + scaled
        ok = scaled < cycle
    else:
        t = np.floor((k * cycle + intra) * time_scale)
        ok = np.ones(len(t), dtype=bool)
    e = frames.frame // frames_per_exposure
    in_exposure = e < n_exp  # trailing partial exposure is not an input
    ok &= (t < length) & in_exposure
    dropped = int(np.sum(in_exposure & ~ok))
    if dropped:
        warnings.warn(f"dropped {dropped} timestamps outside the exposure window")
    t = t.astype(np.int64)
    spad = (frames.y % group) * group + (frames.x % group)
    mpx = (frames.y // group) * gx + (frames.x // group)
    triggers = np.arange(frames_per_exposure, dtype=np.int64) * cycle
    sel = np.flatnonzero(ok)
    key = (e[sel] * (gx * gy) + mpx[sel]) * (group * group) + spad[sel]
    order_idx = np.lexsort((t[sel], key))
    key, ts = key[order_idx], t[sel][order_idx]
    n_spad = group * group
    bounds = np.searchsorted(key, np.arange(n_exp * gx * gy * n_spad + 1))
    sensor = _sensor_for(sensor, n_spad)
    grid = []
    for ei in range(n_exp):
        rows = []
        for my in range(gy):
            row = []
            for mx in range(gx):
                base = ((ei * gx * gy) + my * gx + mx) * n_spad
                ev = [ts[bounds[base + s]:bounds[base + s + 1]] for s in range(n_spad)]
                row.append(MacropixelExposure(sensor, triggers, ev, length))
            rows.append(row)
        grid.append(rows)
    n_in = int(np.sum(in_exposure))
    return ExposureGrid(grid, n_in, n_in - dropped, dropped, float(time_scale))


def _sensor_for(sensor, n_spad):
    if sensor.spads_per_pixel == n_spad:
        return sensor
    from dataclasses import replace
    return replace(sensor, spads_per_pixel=n_spad)


NO_SIGNAL = float("nan")


@dataclass
class DepthMap:
    values: np.ndarray  # m, NaN where there was no usable signal
    method: str = ""

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path):
        lines = [",".join("nan" if np.isnan(v) else f"{v:.4f}" for v in row) for row in self.values]
        Path(path).write_text("\n".join(lines) + "\n")

    def to_pgm(self, path):
        """16-bit binary PGM in millimetres; no-signal pixels are 0."""
        mm = np.where(np.isnan(self.values), 0, np.clip(np.rint(self.values * 1000), 1, 65535))
        h, w = self.values.shape
        Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + mm.astype(">u2").tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w)


def render_depth_map(grid, method="com", params=None, exposure=0, combiner="level_sst"):
    """Depth per macropixel of one exposure of ``grid``, in scene metres.

    Depths are divided by the grid's time scale so they refer to the real
    scene.  Macropixels with no events, a failed CoM, or (SNN) no network
    activity get the NaN sentinel.
    """
    if method not in ("com", "snn"):
        raise ValueError("method must be 'com' or 'snn'")
    if method == "snn" and params is None:
        raise ValueError("SNN depth map needs a network checkpoint")
    if not grid.exposures:
        return DepthMap(np.full((0, 0), NO_SIGNAL), method)
    cells = grid.exposures[exposure]
    out = np.full(grid.shape, NO_SIGNAL)
    for my, row in enumerate(cells):
        for mx, cell in enumerate(row):
            if sum(len(e) for e in cell.events) == 0:
                continue
            if method == "com":
                try:
                    out[my, mx] = com_depth(accumulate_histogram(cell)).depth_estimate
                except (NoSignalError, DegeneratePeakError):
                    continue
            else:
                from .snn import infer_exposure
                from .train import combined_signal
                dt_ps = int(round(params.dt * 1000))
                sig = combined_signal(cell, combiner, dt_ps)
                depth, counters = infer_exposure(sig, cell.trigger_times, params, cell.length,
                                                 cell.sensor.cycle_window, dt_ps)
                if params.mode == "spiking" and counters.neural == 0:
                    continue
                out[my, mx] = depth
    out /= grid.time_scale
    return DepthMap(out, method)


def synthetic_frames(depth_map, n_frames, seed, code_ps=60.0, signal_prob=0.3,
                     ambient_prob=0.05, time_scale=3.0, cycle_window=86_000, jitter_ps=150.0):
    """First-photon timestamp frames of a scene with per-pixel depth ``depth_map``.

    Each pixel records at most one timestamp per frame: the earliest of a
    signal return (with probability ``signal_prob``) and a uniform ambient
    arrival (with probability ``ambient_prob``) inside the sensor range
    ``cycle_window / time_scale``.
    """
    rng = np.random.default_rng(seed)
    depth_map = np.asarray(depth_map, dtype=np.float64)
    h, w = depth_map.shape
    span = cycle_window / time_scale
    ys, xs = np.mgrid[0:h, 0:w]
    recs = []
    for f in range(n_frames):
        tof = 2e12 * depth_map / C_LIGHT + rng.normal(0, jitter_ps, (h, w))
        sig = np.where(rng.random((h, w)) < signal_prob, tof, np.inf)
        amb = np.where(rng.random((h, w)) < ambient_prob, rng.uniform(0, span, (h, w)), np.inf)
        t = np.minimum(sig, amb)
        hit = np.isfinite(t) & (t >= 0) & (t < span)
        code = np.floor(t[hit] / code_ps).astype(np.int64)
        recs.append(np.column_stack([np.full(hit.sum(), f), xs[hit], ys[hit], code]))
    arr = np.vstack(recs) if recs else np.empty((0, 4), dtype=np.int64)
    return RealFrameSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], code_ps, w, h, n_frames)
