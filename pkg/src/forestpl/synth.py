"""Seeded synthetic path loss datasets.

Shadowing draws come from a Philox4x64-10 counter-based generator keyed by
the seed. Sample ``i`` takes counter block ``i`` (four 64-bit words) and
turns the first two words into one standard normal with the cosine branch of
Box-Muller:

    u1 = ((w0 >> 11) + 1) / 2**53      # in (0, 1]
    u2 = (w1 >> 11) / 2**53            # in [0, 1)
    z  = sqrt(-2 ln u1) * cos(2 pi u2)

so any index range can be regenerated on its own and the raw stream is
identical on every platform.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.random import Philox

from .ingest import PathLossSample
from .models import ModelParams, predict

_TWO_POW_M53 = 2.0**-53


class SynthSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset.

    Attributes:
        params: generating model.
        f: carrier frequency, GHz.
        d_min, d_max: distance span in meters, ``1 <= d_min < d_max``.
        n_points: number of samples.
        sigma_db: Gaussian shadowing standard deviation in dB.
        seed: 64-bit generator key.
        spacing: ``"log"`` (default) or ``"linear"`` distance grid.
    """

    params: ModelParams
    f: float
    d_min: float = 5.0
    d_max: float = 500.0
    n_points: int = 200
    sigma_db: float = 0.0
    seed: int = 0
    spacing: str = "log"

    def validate(self) -> None:
        if not (math.isfinite(self.f) and self.f > 0):
            raise SynthSpecError("f must be > 0 GHz")
        if not (math.isfinite(self.d_min) and math.isfinite(self.d_max)):
            raise SynthSpecError("distance bounds must be finite")
        if not 1.0 <= self.d_min < self.d_max:
            raise SynthSpecError(f"need 1 <= d_min < d_max, got [{self.d_min}, {self.d_max}]")
        if int(self.n_points) != self.n_points or self.n_points < 1:
            raise SynthSpecError("n_points must be a positive integer")
        if not (math.isfinite(self.sigma_db) and self.sigma_db >= 0):
            raise SynthSpecError("sigma_db must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise SynthSpecError("seed must fit in 64 unsigned bits")
        if self.spacing not in ("log", "linear"):
            raise SynthSpecError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = {"model": self.params.name, **self.params.as_dict()}
        return out


def standard_normals(seed: int, start: int, count: int) -> np.ndarray:
    """Normals for sample indices ``start .. start+count-1`` of stream ``seed``."""
    bg = Philox(key=int(seed))
    if start:
        bg.advance(int(start))
    words = bg.random_raw(4 * count).reshape(count, 4)
    u1 = ((words[:, 0] >> np.uint64(11)) + np.uint64(1)).astype(float) * _TWO_POW_M53
    u2 = (words[:, 1] >> np.uint64(11)).astype(float) * _TWO_POW_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def distance_grid(d_min: float, d_max: float, n: int, spacing: str = "log") -> np.ndarray:
    if n == 1:
        return np.array([float(d_min)])
    if spacing == "log":
        return np.geomspace(d_min, d_max, n)
    return np.linspace(d_min, d_max, n)


def generate(spec: SynthSpec) -> list[PathLossSample]:
    """Samples ``predict(params, d_i, f) + sigma_db * z_i`` on the spec's grid."""
    spec.validate()
    n = int(spec.n_points)
    d = distance_grid(spec.d_min, spec.d_max, n, spec.spacing)
    pl = np.asarray(predict(spec.params, d, spec.f), dtype=float)
    if spec.sigma_db > 0:
        pl = pl + spec.sigma_db * standard_normals(spec.seed, 0, n)
    return [PathLossSample(float(a), float(b)) for a, b in zip(d, pl)]
