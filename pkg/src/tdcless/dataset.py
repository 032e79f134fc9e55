"""Synthetic dataset generation and the dataset manifest.

A dataset is one packed binary file of concatenated exposure records plus a
JSON manifest with the master seed, per-exposure seeds, scene parameters and
byte offsets.  Every exposure is a pure function of ``(master_seed, index)``
and the instrument configuration, so any entry can be regenerated alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .config import OpticalConfig, SceneInstance, SensorConfig, format_config, parse_config_text
from .events import RNG_ALGORITHM, decode_exposure, simulate_exposure

MANIFEST_NAME = "manifest.json"
DATA_NAME = "exposures.bin"
TEST_DEPTHS = tuple(np.round(np.arange(1, 21) * 0.5, 1))
TRAIN_RANGES = {"depth": (0.5, 10.0), "reflectivity": (0.25, 1.0), "ambient": (0.0, 30.0)}


@dataclass
class DatasetSpec:
    mode: str = "train"  # "train" samples scenes, "test" enumerates the depth grid
    count: int = 12_000
    validation: int = 2_000
    per_depth: int = 500
    reflectivity: float = 0.4
    ambient: float = 1.0
    depths: tuple = TEST_DEPTHS

    def __post_init__(self):
        if self.mode not in ("train", "test"):
            raise ValueError("mode must be 'train' or 'test'")
        if self.mode == "train" and self.count < 1:
            raise ValueError("count must be >= 1")
        if self.mode == "test" and self.per_depth < 1:
            raise ValueError("per_depth must be >= 1")
        if self.mode == "train" and not 0 <= self.validation < self.count:
            raise ValueError("validation must be smaller than count")

    @property
    def n_exposures(self):
        return self.count if self.mode == "train" else self.per_depth * len(self.depths)


def exposure_seed(master_seed, index):
    """64-bit seed for exposure ``index``: SeedSequence(master, spawn_key=(index,))."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def scene_for(spec, master_seed, index):
    if spec.mode == "test":
        d = spec.depths[index // spec.per_depth]
        return SceneInstance(float(d), spec.reflectivity, spec.ambient)
    rng = np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index), 1)))
    lo = [TRAIN_RANGES[k][0] for k in ("depth", "reflectivity", "ambient")]
    hi = [TRAIN_RANGES[k][1] for k in ("depth", "reflectivity", "ambient")]
    d, r, a = rng.uniform(lo, hi)
    return SceneInstance(float(d), float(r), float(a))


def _simulate(args):
    optical, sensor, spec, master_seed, index, sections = args
    scene = scene_for(spec, master_seed, index)
    seed = exposure_seed(master_seed, index)
    return simulate_exposure(optical, sensor, scene, seed).to_bytes(sections)


def generate_dataset(spec, master_seed, out_dir, optical=None, sensor=None,
                     workers=1, sections=()):
    """Write ``exposures.bin`` and ``manifest.json`` into ``out_dir``.

    Output bytes do not depend on ``workers``.
    """
    optical = optical or OpticalConfig()
    sensor = sensor or SensorConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(optical, sensor, spec, master_seed, i, tuple(sections))
            for i in range(spec.n_exposures)]
    entries = []
    digest = hashlib.sha256()
    offset = 0
    with open(out / DATA_NAME, "wb") as fh:
        if workers > 1:
            with Pool(workers) as pool:
                blobs = pool.imap(_simulate, jobs, chunksize=16)
                offset = _write_all(blobs, jobs, spec, master_seed, fh, digest, entries)
        else:
            offset = _write_all(map(_simulate, jobs), jobs, spec, master_seed, fh, digest, entries)
    manifest = {
        "format": "tdcless-dataset",
        "version": 1,
        "mode": spec.mode,
        "master_seed": int(master_seed),
        "rng": RNG_ALGORITHM,
        "config": format_config(optical, sensor),
        "spec": {
            "count": spec.n_exposures,
            "validation": spec.validation if spec.mode == "train" else 0,
            "per_depth": spec.per_depth if spec.mode == "test" else None,
            "reflectivity": spec.reflectivity if spec.mode == "test" else None,
            "ambient": spec.ambient if spec.mode == "test" else None,
            "depths": list(spec.depths) if spec.mode == "test" else None,
        },
        "sections": list(sections),
        "data_file": DATA_NAME,
        "data_bytes": offset,
        "data_sha256": digest.hexdigest(),
        "exposures": entries,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def _write_all(blobs, jobs, spec, master_seed, fh, digest, entries):
    offset = 0
    for (_, _, _, _, i, _), blob in zip(jobs, blobs):
        scene = scene_for(spec, master_seed, i)
        entries.append({
            "index": i, "seed": exposure_seed(master_seed, i),
            "depth": scene.depth, "reflectivity": scene.reflectivity, "ambient": scene.ambient,
            "offset": offset, "nbytes": len(blob),
        })
        fh.write(blob)
        digest.update(blob)
        offset += len(blob)
    return offset


class Dataset:
    """Read access to a generated dataset directory."""

    def __init__(self, path):
        path = Path(path)
        self.root = path if path.is_dir() else path.parent
        self.manifest = json.loads((self.root / MANIFEST_NAME).read_text())
        self.optical, self.sensor = parse_config_text(self.manifest["config"])
        self._data = None

    def __len__(self):
        return len(self.manifest["exposures"])

    @property
    def data(self):
        if self._data is None:
            self._data = (self.root / self.manifest["data_file"]).read_bytes()
        return self._data

    def __getitem__(self, i):
        e = self.manifest["exposures"][i]
        rec, _, _ = decode_exposure(self.data, e["offset"])
        return rec

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def regenerate(self, i):
        """Re-simulate exposure ``i`` from the manifest alone."""
        e = self.manifest["exposures"][i]
        scene = SceneInstance(e["depth"], e["reflectivity"], e["ambient"])
        rec = simulate_exposure(self.optical, self.sensor, scene, e["seed"])
        return rec.to_bytes(tuple(self.manifest.get("sections", ())))

    def raw(self, i):
        e = self.manifest["exposures"][i]
        return self.data[e["offset"]:e["offset"] + e["nbytes"]]

    @property
    def depths(self):
        return np.array([e["depth"] for e in self.manifest["exposures"]])

    def split(self):
        """(train indices, validation indices); validation is the tail."""
        n = len(self)
        n_val = int(self.manifest["spec"].get("validation") or 0)
        return np.arange(n - n_val), np.arange(n - n_val, n)
