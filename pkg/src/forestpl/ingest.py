"""Turn geotagged RSRP drive-test logs into (distance, path loss) samples."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8  # IUGG mean radius
RSRP_TYPICAL_RANGE_DBM = (-160.0, -20.0)

MEASUREMENT_COLUMNS = ("lon", "lat", "alt_m", "rsrp_dbm")
SAMPLE_COLUMNS = ("distance_m", "path_loss_db")
SITE_KEYS = (
    "tx_lon",
    "tx_lat",
    "tx_alt_m",
    "tx_height_m",
    "freq_ghz",
    "tx_power_dbm",
    "tx_gain_dbi",
    "rx_gain_dbi",
    "ref_signal_power_dbm",
    "min_distance_m",
)

DROP_BELOW_MIN_DISTANCE = "below_min_distance"
DROP_NON_FINITE = "non_finite_path_loss"


class MeasurementParseError(ValueError):
    """Malformed measurement or sample file.

    Attributes:
        line: 1-based line number of the offending row, or None for
            header-level problems.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SiteConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float
    alt: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if self.alt is not None and not math.isfinite(self.alt):
            raise ValueError("altitude must be finite when given")


@dataclass(frozen=True)
class MeasurementRecord:
    position: GeoPoint
    rsrp_dbm: float

    def __post_init__(self):
        if not math.isfinite(self.rsrp_dbm):
            raise ValueError("rsrp_dbm must be finite")


@dataclass(frozen=True)
class LinkBudget:
    """Transmitter and antenna figures needed to turn RSRP into path loss.

    Defaults follow the measurement setup table: 43 dBm total transmit power,
    5 dBi transmit gain, 0 dBi receive gain and a 15.2 dBm cell reference
    signal. ``tx_power_dbm`` is informational; the per-resource-element
    ``ref_signal_power_dbm`` is what RSRP is compared against. The campaign
    description also quotes 2.5 dBi for the transmit antenna, so override
    ``tx_gain_dbi`` if that figure applies.
    """

    tx_power_dbm: float = 43.0
    tx_gain_dbi: float = 5.0
    rx_gain_dbi: float = 0.0
    ref_signal_power_dbm: float = 15.2

    def __post_init__(self):
        for name in ("tx_power_dbm", "tx_gain_dbi", "rx_gain_dbi", "ref_signal_power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class SiteConfig:
    """Transmitter geometry and radio setup for one measurement site.

    ``tx_position.alt`` is the ground altitude at the transmitter; the antenna
    sits ``tx_height_m`` above it.
    """

    tx_position: GeoPoint
    tx_height_m: float = 1.5
    frequency_ghz: float = 0.605
    budget: LinkBudget = field(default_factory=LinkBudget)
    min_distance_m: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.frequency_ghz) and self.frequency_ghz > 0):
            raise ValueError("frequency_ghz must be > 0")
        if not (math.isfinite(self.min_distance_m) and self.min_distance_m >= 1.0):
            raise ValueError("min_distance_m must be >= 1.0 m")
        if not math.isfinite(self.tx_height_m):
            raise ValueError("tx_height_m must be finite")

    @property
    def tx_antenna_alt(self) -> Optional[float]:
        if self.tx_position.alt is None:
            return None
        return self.tx_position.alt + self.tx_height_m


# Transmitter sites of the 605 MHz forest campaign, (lon, lat) as published.
JIAOZI_SNOW_MOUNTAIN = SiteConfig(tx_position=GeoPoint(lon=102.848226, lat=26.0845327))
PUDU_RIVER_VALLEY = SiteConfig(tx_position=GeoPoint(lon=102.7342136, lat=26.02112129))


class PathLossSample(NamedTuple):
    distance_m: float
    path_loss_db: float


@dataclass
class DropReport:
    """Counts of records discarded by :func:`build_dataset`, keyed by reason."""

    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, reason: str) -> None:
        self.counts[reason] += 1

    def summary(self) -> str:
        if not self.counts:
            return "dropped 0 records"
        parts = ", ".join(f"{k}={v}" for k, v in sorted(self.counts.items()))
        return f"dropped {self.total} records ({parts})"


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle ground distance in meters on a sphere of mean Earth radius."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def tr_separation(site: SiteConfig, rec: MeasurementRecord) -> float:
    """Transmitter-receiver separation in meters.

    3-D when both the receiver altitude and the transmitter ground altitude
    are known, otherwise the ground distance alone.
    """
    h = haversine_distance(site.tx_position, rec.position)
    tx_alt = site.tx_antenna_alt
    if tx_alt is None or rec.position.alt is None:
        return h
    return math.hypot(h, rec.position.alt - tx_alt)


def rsrp_to_pathloss(budget: LinkBudget, rsrp_dbm: float) -> float:
    """Path loss in dB from a reference signal received power reading."""
    return budget.ref_signal_power_dbm + budget.tx_gain_dbi + budget.rx_gain_dbi - rsrp_dbm


def _text_stream(source: Union[IO[str], IO[bytes]]) -> IO[str]:
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def _parse_float(value: str, column: str, line: int) -> float:
    try:
        x = float(value)
    except ValueError:
        raise MeasurementParseError(f"column {column!r}: not a number: {value!r}", line) from None
    if not math.isfinite(x):
        raise MeasurementParseError(f"column {column!r}: non-finite value {value!r}", line)
    return x


def _check_header(fieldnames, required) -> None:
    if fieldnames is None:
        raise MeasurementParseError("missing header row", 1)
    names = [n.strip() for n in fieldnames]
    missing = [c for c in required if c not in names]
    if missing:
        raise MeasurementParseError(f"missing required column(s): {', '.join(missing)}", 1)


def load_measurements(source: Union[IO[str], IO[bytes]]) -> list[MeasurementRecord]:
    """Parse a measurement CSV with columns ``lon,lat,alt_m,rsrp_dbm``.

    ``alt_m`` may be left empty. Extra columns are ignored. Rows come back in
    file order.

    Raises:
        MeasurementParseError: on a missing column or malformed row; the
            exception carries the 1-based line number.
    """
    reader = csv.DictReader(_text_stream(source))
    _check_header(reader.fieldnames, MEASUREMENT_COLUMNS)
    reader.fieldnames = [n.strip() for n in reader.fieldnames]

    lo, hi = RSRP_TYPICAL_RANGE_DBM
    records = []
    for row in reader:
        line = reader.line_num
        if None in row or any(row.get(c) is None for c in MEASUREMENT_COLUMNS):
            raise MeasurementParseError("wrong number of fields", line)
        lon = _parse_float(row["lon"], "lon", line)
        lat = _parse_float(row["lat"], "lat", line)
        alt_raw = row["alt_m"].strip()
        alt = _parse_float(alt_raw, "alt_m", line) if alt_raw else None
        rsrp = _parse_float(row["rsrp_dbm"], "rsrp_dbm", line)
        try:
            rec = MeasurementRecord(GeoPoint(lon, lat, alt), rsrp)
        except ValueError as exc:
            raise MeasurementParseError(str(exc), line) from None
        if not lo <= rsrp <= hi:
            logger.warning("line %d: rsrp %.1f dBm outside typical range [%g, %g]", line, rsrp, lo, hi)
        records.append(rec)
    return records


def build_dataset(
    site: SiteConfig, records: Iterable[MeasurementRecord]
) -> tuple[list[PathLossSample], DropReport]:
    """Convert records to path loss samples, dropping those too close to the Tx.

    Every input record ends up either in the sample list or counted in the
    returned :class:`DropReport`.
    """
    samples = []
    drops = DropReport()
    for rec in records:
        d = tr_separation(site, rec)
        if not d >= site.min_distance_m:
            drops.add(DROP_BELOW_MIN_DISTANCE)
            continue
        pl = rsrp_to_pathloss(site.budget, rec.rsrp_dbm)
        if not math.isfinite(pl):
            drops.add(DROP_NON_FINITE)
            continue
        samples.append(PathLossSample(d, pl))
    return samples, drops


def load_site_config(source: Union[str, dict, IO[str]]) -> SiteConfig:
    """Read a site JSON document (path, open file, or already-parsed dict).

    Keys: ``tx_lon, tx_lat, tx_alt_m, tx_height_m, freq_ghz, tx_power_dbm,
    tx_gain_dbi, rx_gain_dbi, ref_signal_power_dbm, min_distance_m``. Only
    ``tx_lon``, ``tx_lat`` and ``freq_ghz`` are mandatory; the rest fall back
    to the campaign defaults, and ``tx_alt_m`` may be null.
    """
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = json.load(source)
    if not isinstance(doc, dict):
        raise SiteConfigError("site config must be a JSON object")

    unknown = sorted(set(doc) - set(SITE_KEYS))
    if unknown:
        raise SiteConfigError(f"unknown site config key(s): {', '.join(unknown)}")
    for key in ("tx_lon", "tx_lat", "freq_ghz"):
        if key not in doc:
            raise SiteConfigError(f"site config missing required key {key!r}")

    defaults = LinkBudget()
    try:
        budget = LinkBudget(
            tx_power_dbm=float(doc.get("tx_power_dbm", defaults.tx_power_dbm)),
            tx_gain_dbi=float(doc.get("tx_gain_dbi", defaults.tx_gain_dbi)),
            rx_gain_dbi=float(doc.get("rx_gain_dbi", defaults.rx_gain_dbi)),
            ref_signal_power_dbm=float(doc.get("ref_signal_power_dbm", defaults.ref_signal_power_dbm)),
        )
        alt = doc.get("tx_alt_m")
        return SiteConfig(
            tx_position=GeoPoint(float(doc["tx_lon"]), float(doc["tx_lat"]), None if alt is None else float(alt)),
            tx_height_m=float(doc.get("tx_height_m", 1.5)),
            frequency_ghz=float(doc["freq_ghz"]),
            budget=budget,
            min_distance_m=float(doc.get("min_distance_m", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise SiteConfigError(f"invalid site config: {exc}") from None


def write_samples(samples: Iterable[PathLossSample], stream: IO[str]) -> None:
    """Write ``distance_m,path_loss_db`` rows with 6 decimal places."""
    stream.write(",".join(SAMPLE_COLUMNS) + "\n")
    for d, pl in samples:
        stream.write(f"{d:.6f},{pl:.6f}\n")


def read_samples(source: Union[IO[str], IO[bytes]]) -> list[PathLossSample]:
    reader = csv.DictReader(_text_stream(source))
    _check_header(reader.fieldnames, SAMPLE_COLUMNS)
    reader.fieldnames = [n.strip() for n in reader.fieldnames]
    samples = []
    for row in reader:
        line = reader.line_num
        if None in row or any(row.get(c) is None for c in SAMPLE_COLUMNS):
            raise MeasurementParseError("wrong number of fields", line)
        d = _parse_float(row["distance_m"], "distance_m", line)
        pl = _parse_float(row["path_loss_db"], "path_loss_db", line)
        if d <= 0:
            raise MeasurementParseError(f"distance_m must be > 0, got {d}", line)
        samples.append(PathLossSample(d, pl))
    return samples


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Split samples into ``(distances, path_losses)`` float arrays."""
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    return arr[:, 0].copy(), arr[:, 1].copy()
