"""``forestpl`` command line: ingest, fit, predict, synth, compare.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .fitting import MODEL_ORDER, FitFailure, FitResult, SimplexConfig, fit_all
from .ingest import (
    MeasurementParseError,
    SiteConfigError,
    build_dataset,
    load_measurements,
    load_site_config,
    read_samples,
    write_samples,
)
from .models import PARAM_TYPES, ModelParams, params_from_dict, predict
from .report import ReportError, build_report, compare_reports, digest_bytes, dumps, format_comparison
from .synth import SynthSpec, SynthSpecError, distance_grid, generate

logger = logging.getLogger("forestpl")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

# CLI flag -> parameter field, per model
MODEL_FLAGS = {
    "fspl": {},
    "ci": {"n": "n"},
    "abg": {"alpha": "alpha", "beta": "beta", "gamma": "gamma"},
    "ituh": {"a_m": "a_m", "mu": "mu"},
    "fsplh": {"a_m": "a_m", "mu": "mu"},
    "bhf": {"alpha": "alpha", "beta": "beta", "zeta": "zeta"},
}


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _samples_csv(samples) -> str:
    buf = io.StringIO()
    write_samples(samples, buf)
    return buf.getvalue()


def _params_from_args(args) -> ModelParams:
    flags = MODEL_FLAGS[args.model]
    values = {}
    missing = []
    for flag, field_name in flags.items():
        v = getattr(args, flag)
        if v is None:
            if args.model == "abg" and flag == "gamma":
                v = 2.0
            else:
                missing.append("--" + flag.replace("_", "-"))
                continue
        values[field_name] = v
    if missing:
        raise UsageError(f"model {args.model} needs {', '.join(missing)}")
    try:
        return params_from_dict(args.model, values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_ingest(args) -> int:
    try:
        site = load_site_config(args.site)
    except (OSError, json.JSONDecodeError, SiteConfigError) as exc:
        raise UsageError(f"{args.site}: {exc}") from None
    try:
        with open(args.measurements, "rb") as fh:
            records = load_measurements(fh)
    except (OSError, MeasurementParseError) as exc:
        raise UsageError(f"{args.measurements}: {exc}") from None

    samples, drops = build_dataset(site, records)
    _emit(args.output, _samples_csv(samples))
    print(f"ingest: {len(records)} records, {len(samples)} samples, {drops.summary()}", file=sys.stderr)
    return EXIT_OK


def _entry_line(r) -> str:
    if isinstance(r, FitFailure):
        return f"{r.name:>6}: failed ({r.error})"
    params = ", ".join(f"{k}={v:.4g}" for k, v in r.model.as_dict().items())
    return f"{r.name:>6}: rmse={r.rmse_db:.3f} dB  {params}"


def cmd_fit(args) -> int:
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    bad = [m for m in models if m not in MODEL_ORDER]
    if bad or not models:
        raise UsageError(f"--models must be a subset of {','.join(MODEL_ORDER)}; got {args.models!r}")
    try:
        raw = Path(args.samples).read_bytes()
        samples = read_samples(io.BytesIO(raw))
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except MeasurementParseError as exc:
        raise UsageError(f"{args.samples}: {exc}") from None
    if not samples:
        raise UsageError(f"{args.samples}: no samples")

    cfg = SimplexConfig(max_evals=args.max_evals, tol=args.tol)
    results = fit_all(samples, args.freq_ghz, cfg, models=models, gamma_fixed=args.gamma)
    label = args.site_label or Path(args.samples).stem
    report = build_report(
        results, site_label=label, frequency_ghz=args.freq_ghz, input_digest=digest_bytes(raw)
    )
    _emit(args.output, dumps(report) + "\n")

    if args.curves_dir:
        out = Path(args.curves_dir)
        out.mkdir(parents=True, exist_ok=True)
        d_lo = min(s.distance_m for s in samples)
        d_hi = max(s.distance_m for s in samples)
        grid = distance_grid(d_lo, d_hi, args.curve_steps if d_hi > d_lo else 1)
        for r in results:
            if isinstance(r, FitResult):
                pl = predict(r.model, grid, args.freq_ghz)
                atomic_write(out / f"{label}_{r.name}.csv", _samples_csv(zip(grid, pl)))

    for r in results:
        print(_entry_line(r), file=sys.stderr)
    if not any(isinstance(r, FitResult) for r in results):
        raise NumericalError("no model could be fitted")
    return EXIT_OK


def cmd_predict(args) -> int:
    params = _params_from_args(args)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if not 0 < args.d_min <= args.d_max or (args.steps > 1 and args.d_min == args.d_max):
        raise UsageError("need 0 < --d-min < --d-max")
    d = distance_grid(args.d_min, args.d_max, args.steps)
    try:
        pl = predict(params, d, args.freq_ghz)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args.output, _samples_csv(zip(d, pl)))
    return EXIT_OK


def cmd_synth(args) -> int:
    params = _params_from_args(args)
    spec = SynthSpec(
        params=params,
        f=args.freq_ghz,
        d_min=args.d_min,
        d_max=args.d_max,
        n_points=args.n_points,
        sigma_db=args.sigma_db,
        seed=args.seed,
        spacing=args.spacing,
    )
    try:
        samples = generate(spec)
    except (SynthSpecError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    atomic_write(args.output, _samples_csv(samples))
    atomic_write(f"{args.output}.spec.json", dumps({"toolkit_version": __version__, **spec.to_dict()}) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        try:
            with open(p, encoding="utf-8") as fh:
                reports.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"{p}: {exc}") from None
    try:
        table = compare_reports(reports)
    except ReportError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(format_comparison(table))
    if args.json_out:
        atomic_write(args.json_out, dumps(table) + "\n")
    return EXIT_OK


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, choices=sorted(PARAM_TYPES))
    p.add_argument("--n", type=float, help="CI path loss exponent")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float, help="ABG frequency coefficient (default 2)")
    p.add_argument("--zeta", type=float, help="BHF vegetation coefficient, dB")
    p.add_argument("--a-m", dest="a_m", type=float, help="ITU-H maximum attenuation, dB")
    p.add_argument("--mu", type=float, help="ITU-H specific attenuation, dB/m")
    p.add_argument("--freq-ghz", type=float, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forestpl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert an RSRP log into path loss samples")
    p.add_argument("--site", required=True, help="site config JSON")
    p.add_argument("--measurements", required=True, help="CSV with lon,lat,alt_m,rsrp_dbm")
    p.add_argument("-o", "--output", default="-", help="sample CSV (default stdout)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit path loss models to a sample CSV")
    p.add_argument("samples")
    p.add_argument("--freq-ghz", type=float, required=True)
    p.add_argument("--models", default=",".join(MODEL_ORDER))
    p.add_argument("--gamma", type=float, default=2.0, help="fixed ABG gamma")
    p.add_argument("--site-label")
    p.add_argument("--max-evals", type=int, default=SimplexConfig.max_evals)
    p.add_argument("--tol", type=float, default=SimplexConfig.tol)
    p.add_argument("--curves-dir", help="also write fitted curve CSVs here")
    p.add_argument("--curve-steps", type=int, default=200)
    p.add_argument("-o", "--output", default="-", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a model over a log-spaced distance range")
    _add_model_flags(p)
    p.add_argument("--d-min", type=float, default=1.0)
    p.add_argument("--d-max", type=float, default=500.0)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a seeded synthetic sample CSV")
    _add_model_flags(p)
    p.add_argument("--d-min", type=float, default=5.0)
    p.add_argument("--d-max", type=float, default=500.0)
    p.add_argument("--n-points", type=int, default=200)
    p.add_argument("--sigma-db", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing", choices=("log", "linear"), default="log")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compare", help="tabulate RMSE across fit reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "freq_ghz", 1.0) <= 0:
        print("forestpl: error: --freq-ghz must be > 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"forestpl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"forestpl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
