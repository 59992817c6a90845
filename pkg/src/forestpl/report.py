"""Fit reports (JSON, ``schema_version`` 1) and cross-site comparison tables.

Reports keep a fixed key order and print every float with exactly six
decimals so reruns on identical input diff cleanly. ``generated_at`` is the
only field allowed to change between reruns; set ``SOURCE_DATE_EPOCH`` to pin
it.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
import os
from typing import Iterable, Optional, Sequence, Union

from . import __version__
from .fitting import MODEL_ORDER, FitFailure, FitResult
from .models import PARAM_TYPES

SCHEMA_VERSION = 1
TIMESTAMP_FIELD = "generated_at"


class ReportError(ValueError):
    pass


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        dt.datetime.fromtimestamp(int(epoch), tz=dt.timezone.utc)
        if epoch
        else dt.datetime.now(tz=dt.timezone.utc)
    )
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _entry(result: Union[FitResult, FitFailure]) -> dict:
    if isinstance(result, FitFailure):
        return {
            "model": result.name,
            "status": "failed",
            "parameters": None,
            "rmse_db": None,
            "n_params": result.n_params,
            "n_points": None,
            "condition_number": None,
            "converged": None,
            "iterations": None,
            "error": result.error,
        }
    return {
        "model": result.name,
        "status": "ok",
        "parameters": result.model.as_dict(),
        "rmse_db": result.rmse_db,
        "n_params": result.n_params,
        "n_points": result.n_points,
        "condition_number": result.condition_number,
        "converged": result.converged,
        "iterations": result.iterations,
        "error": None,
    }


def build_report(
    results: Iterable[Union[FitResult, FitFailure]],
    *,
    site_label: str,
    frequency_ghz: float,
    input_digest: str,
    generated_at: Optional[str] = None,
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "site_label": site_label,
        "frequency_ghz": float(frequency_ghz),
        "input_digest": input_digest,
        TIMESTAMP_FIELD: generated_at if generated_at is not None else timestamp(),
        "models": [_entry(r) for r in results],
    }


def _scalar(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6f}" if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with insertion-ordered keys and fixed 6-decimal floats."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_scalar(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _scalar(obj)


def validate_report(report: dict) -> None:
    if not isinstance(report, dict) or report.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"not a schema_version {SCHEMA_VERSION} fit report")
    for key in ("site_label", "frequency_ghz", "models"):
        if key not in report:
            raise ReportError(f"report missing {key!r}")


def compare_reports(reports: Sequence[dict]) -> dict:
    """RMSE grid with one row per model and one column per site.

    The lowest-RMSE model of each site is recorded under ``best``. Reports
    must cover the same set of models.

    Raises:
        ReportError: fewer than two reports, or mismatched model sets.
    """
    if len(reports) < 2:
        raise ReportError("comparison needs at least two reports")
    for r in reports:
        validate_report(r)

    model_sets = [tuple(e["model"] for e in r["models"]) for r in reports]
    if any(set(ms) != set(model_sets[0]) for ms in model_sets[1:]):
        raise ReportError(
            "reports cover different model sets: " + " vs ".join(",".join(ms) for ms in model_sets)
        )
    models = sorted(set(model_sets[0]), key=lambda m: (MODEL_ORDER + (m,)).index(m))

    sites: list[str] = []
    for r in reports:
        label = str(r["site_label"])
        base, k = label, 2
        while label in sites:
            label = f"{base}#{k}"
            k += 1
        sites.append(label)

    grid = {m: {} for m in models}
    for site, r in zip(sites, reports):
        for e in r["models"]:
            grid[e["model"]][site] = e["rmse_db"] if e.get("status", "ok") == "ok" else None

    best = {}
    for site in sites:
        scored = [(grid[m][site], m) for m in models if grid[m][site] is not None]
        best[site] = min(scored)[1] if scored else None

    return {
        "schema_version": SCHEMA_VERSION,
        "sites": sites,
        "models": models,
        "rmse_db": grid,
        "best": best,
    }


def format_comparison(table: dict) -> str:
    """Plain-text table; ``*`` marks each site's lowest RMSE."""
    sites, models = table["sites"], table["models"]
    header = ["model"] + sites
    rows = []
    for m in models:
        row = [PARAM_TYPES[m].label if m in PARAM_TYPES else m]
        for s in sites:
            v = table["rmse_db"][m][s]
            cell = "failed" if v is None else f"{v:.2f}"
            if table["best"][s] == m:
                cell += "*"
            row.append(cell)
        rows.append(row)
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("RMSE in dB; * = lowest per site")
    return "\n".join(lines) + "\n"
