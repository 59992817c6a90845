"""Path loss model formulas for short-range forest propagation.

Every function accepts either scalars or numpy arrays for the distance and
returns the same shape. Distances are 3-D transmitter/receiver separations in
meters and frequencies are in GHz throughout, including the BHF frequency
term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact SI value
REFERENCE_DISTANCE_M = 1.0
BHF_TANH_SCALE_M = 20.0

# 20*log10(4*pi*1e9/c): free-space loss at 1 m and 1 GHz
_FSPL_1M_1GHZ = 20.0 * math.log10(4.0 * math.pi * 1e9 / SPEED_OF_LIGHT)


class DomainError(ValueError):
    """Raised when a distance or frequency lies outside a model's domain."""


def _check_distance(d):
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DomainError("distance must be finite and > 0 m")
    return d


def _check_frequency(f):
    f = float(f)
    if not math.isfinite(f) or f <= 0:
        raise DomainError(f"frequency must be finite and > 0 GHz, got {f}")
    return f


def _out(value):
    # keep scalars as python floats
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class FsplParams:
    """Free space has no free parameters."""

    name: ClassVar[str] = "fspl"
    label: ClassVar[str] = "FSPL"

    def as_dict(self) -> dict[str, float]:
        return {}


@dataclass(frozen=True)
class CiParams:
    """Close-in reference distance model, anchored at ``d0 = 1 m``."""

    n: float
    d0: float = field(default=REFERENCE_DISTANCE_M, init=False)

    name: ClassVar[str] = "ci"
    label: ClassVar[str] = "CI"

    def __post_init__(self):
        if not math.isfinite(self.n):
            raise ValueError("CI exponent n must be finite")

    def as_dict(self) -> dict[str, float]:
        return {"n": self.n}


@dataclass(frozen=True)
class AbgParams:
    alpha: float
    beta: float
    gamma: float = 2.0

    name: ClassVar[str] = "abg"
    label: ClassVar[str] = "ABG"

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.alpha, self.beta, self.gamma)):
            raise ValueError("ABG parameters must be finite")

    def as_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class ItuHParams:
    """Horizontal forest excess loss.

    Attributes:
        a_m: maximum excess attenuation in dB.
        mu: specific attenuation for very short vegetation paths, dB/m.
    """

    a_m: float
    mu: float

    name: ClassVar[str] = "ituh"
    label: ClassVar[str] = "ITU-H"

    def __post_init__(self):
        if not (math.isfinite(self.a_m) and self.a_m > 0):
            raise ValueError(f"a_m must be finite and > 0 dB, got {self.a_m}")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be finite and > 0 dB/m, got {self.mu}")

    def as_dict(self) -> dict[str, float]:
        return {"a_m": self.a_m, "mu": self.mu}


@dataclass(frozen=True)
class FsplHParams(ItuHParams):
    """Free space plus the horizontal forest excess term."""

    name: ClassVar[str] = "fsplh"
    label: ClassVar[str] = "FSPL-H"


@dataclass(frozen=True)
class BhfParams:
    alpha: float
    beta: float
    zeta: float

    name: ClassVar[str] = "bhf"
    label: ClassVar[str] = "BHF"

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.alpha, self.beta, self.zeta)):
            raise ValueError("BHF parameters must be finite")

    def as_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta, "zeta": self.zeta}


ModelParams = Union[FsplParams, CiParams, AbgParams, ItuHParams, FsplHParams, BhfParams]

PARAM_TYPES: dict[str, type] = {
    cls.name: cls
    for cls in (FsplParams, CiParams, AbgParams, ItuHParams, FsplHParams, BhfParams)
}


def params_from_dict(name: str, values: dict[str, float]) -> ModelParams:
    """Build a parameter set from a model name and a ``{field: value}`` mapping."""
    try:
        cls = PARAM_TYPES[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}") from None
    return cls(**values)


def fspl(d, f):
    """Free-space path loss, ``20*log10(4*pi*f*d*1e9/c)`` in dB.

    Args:
        d: distance in meters (> 0), scalar or array.
        f: carrier frequency in GHz (> 0).
    """
    d = _check_distance(d)
    f = _check_frequency(f)
    return _out(20.0 * np.log10(4.0 * math.pi * f * d * 1e9 / SPEED_OF_LIGHT))


def ci(d, f, p: CiParams):
    """Close-in model: ``10*n*log10(d/d0) + 20*log10(4*pi*1e9/c) + 20*log10(f)``."""
    d = _check_distance(d)
    f = _check_frequency(f)
    return _out(10.0 * p.n * np.log10(d / p.d0) + _FSPL_1M_1GHZ + 20.0 * math.log10(f))


def abg(d, f, p: AbgParams):
    """Alpha-beta-gamma model: ``10*alpha*log10(d) + beta + 10*gamma*log10(f)``."""
    d = _check_distance(d)
    f = _check_frequency(f)
    return _out(10.0 * p.alpha * np.log10(d) + p.beta + 10.0 * p.gamma * math.log10(f))


def itu_h(d, p: ItuHParams):
    """Horizontal forest excess loss ``A_m*(1 - exp(-d*mu/A_m))``.

    The result lies in ``[0, A_m)`` and saturates at ``A_m`` for deep
    vegetation.
    """
    d = _check_distance(d)
    if not (p.a_m > 0 and p.mu > 0):
        raise ValueError("a_m and mu must be > 0")
    return _out(-p.a_m * np.expm1(-d * p.mu / p.a_m))


def fspl_h(d, f, p: ItuHParams):
    return _out(np.add(fspl(d, f), itu_h(d, p)))


def bhf(d, f, p: BhfParams):
    """BHF forest model.

    ``10*alpha*log10(d) + beta + zeta*tanh(d/20) + 20*log10(f)``, where the
    tanh scale of 20 m is a fixed constant of the model.
    """
    d = _check_distance(d)
    f = _check_frequency(f)
    return _out(
        10.0 * p.alpha * np.log10(d)
        + p.beta
        + p.zeta * np.tanh(d / BHF_TANH_SCALE_M)
        + 20.0 * math.log10(f)
    )


def predict(params: ModelParams, d, f):
    """Evaluate whichever model ``params`` belongs to.

    ``ItuHParams`` evaluates the bare excess loss and ignores ``f`` apart
    from validating it.
    """
    # subclass before base: FsplHParams is an ItuHParams
    if isinstance(params, FsplHParams):
        return fspl_h(d, f, params)
    if isinstance(params, ItuHParams):
        _check_frequency(f)
        return itu_h(d, params)
    if isinstance(params, FsplParams):
        return fspl(d, f)
    if isinstance(params, CiParams):
        return ci(d, f, params)
    if isinstance(params, AbgParams):
        return abg(d, f, params)
    if isinstance(params, BhfParams):
        return bhf(d, f, params)
    raise TypeError(f"unsupported parameter set {type(params).__name__}")
