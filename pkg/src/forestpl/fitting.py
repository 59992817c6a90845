"""Least-squares fitting of the path loss models and RMSE scoring.

CI, ABG (fixed gamma) and BHF are linear in their parameters and are solved
with a QR factorisation of the design matrix. FSPL-H is nonlinear in
``(A_m, mu)`` and is fitted with a multistart Nelder-Mead search over the
log-parameters, which keeps both strictly positive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .ingest import PathLossSample, samples_to_arrays
from .models import (
    BHF_TANH_SCALE_M,
    AbgParams,
    BhfParams,
    CiParams,
    FsplHParams,
    ModelParams,
    fspl,
    predict,
)

logger = logging.getLogger(__name__)

MODEL_ORDER = ("ci", "abg", "fsplh", "bhf")
N_PARAMS = {"ci": 1, "abg": 2, "fsplh": 2, "bhf": 3}

# above this the fitted BHF beta/zeta pair is mostly trading off against itself
ILL_CONDITIONED = 1e6

DEFAULT_MULTISTART = tuple(
    (a_m, mu) for a_m in (5.0, 20.0, 40.0, 80.0) for mu in (0.05, 0.5, 1.5, 5.0)
)

# log-parameter clamp; keeps exp() finite and strictly positive
_LOG_BOUND = 40.0


class FitError(ValueError):
    """A dataset cannot support the requested fit."""


class DegenerateDesignError(FitError):
    pass


class RankDeficientError(FitError):
    pass


@dataclass(frozen=True)
class SimplexConfig:
    """Settings for the FSPL-H simplex search.

    ``tol`` bounds the spread of the objective (mean squared residual, dB^2)
    across the simplex at termination.
    """

    max_evals: int = 10_000
    tol: float = 1e-10
    multistart_grid: tuple = DEFAULT_MULTISTART

    def __post_init__(self):
        if self.max_evals <= 0:
            raise ValueError("max_evals must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.multistart_grid:
            raise ValueError("multistart_grid must not be empty")


@dataclass(frozen=True)
class FitResult:
    """Outcome of fitting one model to one dataset.

    ``condition_number`` is set for the linear fits and ``converged`` /
    ``iterations`` for the simplex fit; the others stay None.
    """

    model: ModelParams
    rmse_db: float
    n_points: int
    n_params: int
    condition_number: Optional[float] = None
    converged: Optional[bool] = None
    iterations: Optional[int] = None

    @property
    def name(self) -> str:
        return self.model.name

    @property
    def ill_conditioned(self) -> bool:
        return self.condition_number is not None and self.condition_number > ILL_CONDITIONED


@dataclass(frozen=True)
class FitFailure:
    """Placeholder entry for a model whose fit raised."""

    name: str
    n_params: int
    error: str


def _arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    d, pl = samples_to_arrays(samples)
    if d.size and (not np.all(np.isfinite(d)) or np.any(d <= 0)):
        raise FitError("sample distances must be finite and > 0")
    if not np.all(np.isfinite(pl)):
        raise FitError("sample path losses must be finite")
    return d, pl


def rmse(samples: Sequence[PathLossSample], params: ModelParams, f: float) -> float:
    """Root-mean-square difference between measured and predicted path loss."""
    d, pl = _arrays(samples)
    if d.size == 0:
        raise FitError("cannot compute RMSE of an empty dataset")
    resid = pl - np.asarray(predict(params, d, f))
    return float(np.sqrt(np.mean(resid**2)))


def _require_points(n: int, name: str) -> None:
    if n < N_PARAMS[name]:
        raise FitError(f"{name} fit needs at least {N_PARAMS[name]} samples, got {n}")


def solve_linear(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares ``X @ coef ~= y`` via reduced QR.

    Returns:
        ``(coef, condition_number)`` where the condition number is the
        2-norm condition of ``X`` (equal to that of its R factor).

    Raises:
        RankDeficientError: if ``X`` is numerically rank deficient, using the
            same tolerance as ``numpy.linalg.matrix_rank``.
    """
    q, r = np.linalg.qr(X, mode="reduced")
    s = np.linalg.svd(r, compute_uv=False)
    tol = s[0] * max(X.shape) * np.finfo(float).eps
    if s[-1] <= tol:
        raise RankDeficientError(
            f"design matrix is rank deficient (smallest singular value {s[-1]:.3g})"
        )
    coef = solve_triangular(r, q.T @ y, lower=False)
    return coef, float(s[0] / s[-1])


def fit_ci(samples: Sequence[PathLossSample], f: float) -> FitResult:
    """Closed-form path loss exponent of the CI model.

    With ``x = 10*log10(d)`` and ``y = PL - FSPL(1 m, f)`` the estimate is
    ``sum(x*y) / sum(x*x)``.
    """
    d, pl = _arrays(samples)
    _require_points(d.size, "ci")
    x = 10.0 * np.log10(d)
    y = pl - fspl(1.0, f)
    sxx = float(np.dot(x, x))
    if sxx == 0.0:
        raise DegenerateDesignError("all samples sit at the 1 m reference distance")
    params = CiParams(n=float(np.dot(x, y)) / sxx)
    return FitResult(
        model=params,
        rmse_db=rmse(samples, params, f),
        n_points=int(d.size),
        n_params=N_PARAMS["ci"],
        condition_number=1.0,
    )


def fit_abg(samples: Sequence[PathLossSample], f: float, gamma_fixed: float = 2.0) -> FitResult:
    """ABG fit with gamma pinned (single-frequency data): alpha is the slope
    against ``10*log10(d)``, beta the intercept."""
    d, pl = _arrays(samples)
    _require_points(d.size, "abg")
    if np.ptp(d) == 0.0:
        raise DegenerateDesignError("ABG fit needs at least two distinct distances")
    x = 10.0 * np.log10(d)
    y = pl - 10.0 * gamma_fixed * math.log10(f)
    X = np.column_stack([x, np.ones_like(x)])
    (alpha, beta), cond = solve_linear(X, y)
    params = AbgParams(alpha=float(alpha), beta=float(beta), gamma=float(gamma_fixed))
    return FitResult(
        model=params,
        rmse_db=rmse(samples, params, f),
        n_points=int(d.size),
        n_params=N_PARAMS["abg"],
        condition_number=cond,
    )


def bhf_design(d: np.ndarray) -> np.ndarray:
    """Columns ``[10*log10(d), 1, tanh(d/20)]``."""
    d = np.asarray(d, dtype=float)
    return np.column_stack([10.0 * np.log10(d), np.ones_like(d), np.tanh(d / BHF_TANH_SCALE_M)])


def fit_bhf(samples: Sequence[PathLossSample], f: float) -> FitResult:
    d, pl = _arrays(samples)
    _require_points(d.size, "bhf")
    if np.ptp(d) == 0.0:
        raise DegenerateDesignError("BHF fit needs distinct distances")
    y = pl - 20.0 * math.log10(f)
    (alpha, beta, zeta), cond = solve_linear(bhf_design(d), y)
    if cond > ILL_CONDITIONED:
        logger.warning(
            "BHF design condition number %.3g: tanh column nearly duplicates the intercept, "
            "beta and zeta are poorly determined",
            cond,
        )
    params = BhfParams(alpha=float(alpha), beta=float(beta), zeta=float(zeta))
    return FitResult(
        model=params,
        rmse_db=rmse(samples, params, f),
        n_points=int(d.size),
        n_params=N_PARAMS["bhf"],
        condition_number=cond,
    )


def _excess_objective(theta, d, excess):
    a_m, mu = np.exp(np.clip(theta, -_LOG_BOUND, _LOG_BOUND))
    model = -a_m * np.expm1(-d * mu / a_m)
    return float(np.mean((excess - model) ** 2))


def fsplh_objective(samples: Sequence[PathLossSample], f: float, a_m: float, mu: float) -> float:
    """Mean squared FSPL-H residual in dB^2 at ``(a_m, mu)``."""
    d, pl = _arrays(samples)
    return _excess_objective(np.log([a_m, mu]), d, pl - np.asarray(fspl(d, f)))


def fit_fsplh(
    samples: Sequence[PathLossSample], f: float, cfg: Optional[SimplexConfig] = None
) -> FitResult:
    """Nelder-Mead fit of ``(A_m, mu)`` from every multistart point; the start
    that ends at the lowest objective wins (earliest start on ties)."""
    cfg = cfg or SimplexConfig()
    d, pl = _arrays(samples)
    _require_points(d.size, "fsplh")
    excess = pl - np.asarray(fspl(d, f))

    best = None
    for a0, mu0 in cfg.multistart_grid:
        res = minimize(
            _excess_objective,
            x0=np.log([a0, mu0]),
            args=(d, excess),
            method="Nelder-Mead",
            options={"maxfev": cfg.max_evals, "fatol": cfg.tol, "xatol": 1e-9},
        )
        if best is None or res.fun < best.fun:
            best = res

    a_m, mu = np.exp(np.clip(best.x, -_LOG_BOUND, _LOG_BOUND))
    if not best.success:
        logger.warning("FSPL-H simplex stopped without converging: %s", best.message)
    params = FsplHParams(a_m=float(a_m), mu=float(mu))
    return FitResult(
        model=params,
        rmse_db=rmse(samples, params, f),
        n_points=int(d.size),
        n_params=N_PARAMS["fsplh"],
        converged=bool(best.success),
        iterations=int(best.nit),
    )


def fit_model(
    name: str,
    samples: Sequence[PathLossSample],
    f: float,
    cfg: Optional[SimplexConfig] = None,
    gamma_fixed: float = 2.0,
) -> FitResult:
    if name == "ci":
        return fit_ci(samples, f)
    if name == "abg":
        return fit_abg(samples, f, gamma_fixed)
    if name == "fsplh":
        return fit_fsplh(samples, f, cfg)
    if name == "bhf":
        return fit_bhf(samples, f)
    raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_ORDER)}")


def fit_all(
    samples: Sequence[PathLossSample],
    f: float,
    cfg: Optional[SimplexConfig] = None,
    models: Sequence[str] = MODEL_ORDER,
    gamma_fixed: float = 2.0,
) -> list[Union[FitResult, FitFailure]]:
    """Fit each requested model, in CI, ABG, FSPL-H, BHF order.

    A model that cannot be fitted yields a :class:`FitFailure` entry instead
    of aborting the batch.
    """
    unknown = [m for m in models if m not in N_PARAMS]
    if unknown:
        raise ValueError(f"unknown model(s): {', '.join(unknown)}")
    if len(samples) == 0:
        raise FitError("cannot fit an empty dataset")

    results: list[Union[FitResult, FitFailure]] = []
    for name in (m for m in MODEL_ORDER if m in models):
        try:
            results.append(fit_model(name, samples, f, cfg, gamma_fixed))
        except (FitError, np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("%s fit failed: %s", name, exc)
            results.append(FitFailure(name=name, n_params=N_PARAMS[name], error=str(exc)))
    return results
