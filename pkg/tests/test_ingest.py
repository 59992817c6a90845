import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forestpl.ingest import (
    DROP_BELOW_MIN_DISTANCE,
    EARTH_RADIUS_M,
    JIAOZI_SNOW_MOUNTAIN,
    GeoPoint,
    LinkBudget,
    MeasurementParseError,
    MeasurementRecord,
    PathLossSample,
    SiteConfig,
    SiteConfigError,
    build_dataset,
    haversine_distance,
    load_measurements,
    load_site_config,
    read_samples,
    rsrp_to_pathloss,
    tr_separation,
    write_samples,
)


def chord_angle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Central angle from unit vectors, atan2(|a x b|, a . b)."""

    def unit(p):
        lat, lon = math.radians(p.lat), math.radians(p.lon)
        return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])

    u, v = unit(a), unit(b)
    return EARTH_RADIUS_M * math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v)))


class TestHaversine:
    def test_identical(self):
        p = GeoPoint(102.848226, 26.0845327)
        assert haversine_distance(p, p) == 0.0

    def test_one_degree_latitude(self):
        d = haversine_distance(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
        assert d == pytest.approx(111195.08, abs=1.0)
        assert d == pytest.approx(EARTH_RADIUS_M * math.pi / 180, abs=1e-6)

    def test_matches_vector_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = GeoPoint(rng.uniform(-180, 180), rng.uniform(-90, 90))
            b = GeoPoint(rng.uniform(-180, 180), rng.uniform(-90, 90))
            assert haversine_distance(a, b) == pytest.approx(chord_angle_distance(a, b), abs=1e-3)

    def test_short_range_between_sites(self):
        # two campaign sites are roughly 13 km apart
        d = haversine_distance(GeoPoint(102.848226, 26.0845327), GeoPoint(102.7342136, 26.02112129))
        assert d == pytest.approx(chord_angle_distance(GeoPoint(102.848226, 26.0845327), GeoPoint(102.7342136, 26.02112129)), rel=1e-9)
        assert 12_000 < d < 14_000


lats = st.floats(-90, 90)
lons = st.floats(-180, 180)
points = st.builds(GeoPoint, lons, lats)


@settings(max_examples=300, deadline=None)
@given(a=points, b=points, c=points)
def test_haversine_metric_axioms(a, b, c):
    ab = haversine_distance(a, b)
    assert ab >= 0
    assert ab == pytest.approx(haversine_distance(b, a), abs=1e-6)
    assert haversine_distance(a, a) == 0.0
    assert ab <= haversine_distance(a, c) + haversine_distance(c, b) + 1e-6


class TestGeoPoint:
    @pytest.mark.parametrize("lon,lat", [(0, 91), (0, -90.5), (181, 0), (-180.1, 0), (math.nan, 0)])
    def test_invalid(self, lon, lat):
        with pytest.raises(ValueError):
            GeoPoint(lon, lat)


def _site(alt=None, height=1.5, min_d=1.0):
    return SiteConfig(tx_position=GeoPoint(102.0, 26.0, alt), tx_height_m=height, min_distance_m=min_d)


def _offset_north(meters):
    return 26.0 + math.degrees(meters / EARTH_RADIUS_M)


class TestSeparation:
    def test_2d_fallback(self):
        rec = MeasurementRecord(GeoPoint(102.0, _offset_north(250.0), 3000.0), -90)
        site = _site(alt=None)
        assert tr_separation(site, rec) == haversine_distance(site.tx_position, rec.position)

    def test_3_4_5(self):
        site = _site(alt=1000.0, height=0.0)
        rec = MeasurementRecord(GeoPoint(102.0, _offset_north(30.0), 1040.0), -90)
        assert tr_separation(site, rec) == pytest.approx(50.0, abs=1e-6)

    def test_vertical_only(self):
        site = _site(alt=2300.0, height=1.5)
        rec = MeasurementRecord(GeoPoint(102.0, 26.0, 2300.0), -90)
        assert tr_separation(site, rec) == pytest.approx(1.5, abs=1e-12)

    def test_receiver_altitude_missing(self):
        site = _site(alt=2300.0)
        rec = MeasurementRecord(GeoPoint(102.0, _offset_north(80.0)), -90)
        assert tr_separation(site, rec) == pytest.approx(80.0, abs=1e-6)


class TestLinkBudget:
    def test_defaults(self):
        b = LinkBudget()
        assert (b.tx_power_dbm, b.tx_gain_dbi, b.rx_gain_dbi, b.ref_signal_power_dbm) == (43.0, 5.0, 0.0, 15.2)

    def test_zero_loss(self):
        b = LinkBudget()
        assert rsrp_to_pathloss(b, 15.2 + 5.0 + 0.0) == 0.0

    def test_example(self):
        assert rsrp_to_pathloss(LinkBudget(ref_signal_power_dbm=15.2, tx_gain_dbi=5, rx_gain_dbi=0), -90) == pytest.approx(
            110.2, abs=1e-12
        )

    def test_override_gain(self):
        # campaign prose quotes 2.5 dBi instead of the tabulated 5 dBi
        assert rsrp_to_pathloss(LinkBudget(tx_gain_dbi=2.5), -90) == pytest.approx(107.7, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(r=st.floats(-200, 0), k=st.floats(-50, 50))
    def test_affine_slope_minus_one(self, r, k):
        b = LinkBudget()
        assert rsrp_to_pathloss(b, r + k) - rsrp_to_pathloss(b, r) == pytest.approx(-k, abs=1e-9)


CSV_OK = b"lon,lat,alt_m,rsrp_dbm\n102.0,26.001,2310.5,-85.5\n102.001,26.0,,-92\n102.002,26.002,2300,-101.25\n"


class TestLoadMeasurements:
    def test_rows_in_order(self):
        recs = load_measurements(io.BytesIO(CSV_OK))
        assert [r.rsrp_dbm for r in recs] == [-85.5, -92.0, -101.25]
        assert recs[1].position.alt is None
        assert recs[0].position == GeoPoint(102.0, 26.001, 2310.5)

    def test_text_stream(self):
        assert len(load_measurements(io.StringIO(CSV_OK.decode()))) == 3

    def test_empty_data(self):
        assert load_measurements(io.BytesIO(b"lon,lat,alt_m,rsrp_dbm\n")) == []

    def test_bad_latitude_reports_line(self):
        data = b"lon,lat,alt_m,rsrp_dbm\n102,26,,-90\n102,91,,-90\n"
        with pytest.raises(MeasurementParseError) as exc:
            load_measurements(io.BytesIO(data))
        assert exc.value.line == 3
        assert "line 3" in str(exc.value)

    def test_non_numeric(self):
        with pytest.raises(MeasurementParseError, match="rsrp_dbm"):
            load_measurements(io.BytesIO(b"lon,lat,alt_m,rsrp_dbm\n102,26,,abc\n"))

    def test_short_row(self):
        with pytest.raises(MeasurementParseError) as exc:
            load_measurements(io.BytesIO(b"lon,lat,alt_m,rsrp_dbm\n102,26\n"))
        assert exc.value.line == 2

    def test_missing_column_named(self):
        with pytest.raises(MeasurementParseError, match="rsrp_dbm"):
            load_measurements(io.BytesIO(b"lon,lat,alt_m\n1,2,3\n"))

    def test_no_header(self):
        with pytest.raises(MeasurementParseError):
            load_measurements(io.BytesIO(b""))

    def test_extra_columns_and_bom(self):
        data = "﻿lon,lat,alt_m,rsrp_dbm,time\n102,26,,-90,12:00\n".encode()
        assert len(load_measurements(io.BytesIO(data))) == 1

    def test_out_of_range_warns(self, caplog):
        load_measurements(io.BytesIO(b"lon,lat,alt_m,rsrp_dbm\n102,26,,-5\n"))
        assert "outside typical range" in caplog.text


class TestBuildDataset:
    def test_tx_position_dropped(self):
        site = _site()
        recs = [MeasurementRecord(GeoPoint(102.0, 26.0), -40.0)]
        samples, drops = build_dataset(site, recs)
        assert samples == []
        assert drops.counts[DROP_BELOW_MIN_DISTANCE] == 1
        assert drops.total == 1

    def test_all_valid(self):
        site = _site()
        recs = [MeasurementRecord(GeoPoint(102.0, _offset_north(m)), -90.0) for m in (10, 20, 40)]
        samples, drops = build_dataset(site, recs)
        assert len(samples) == 3 and drops.total == 0
        assert samples[0].distance_m == pytest.approx(10.0, abs=1e-6)
        assert samples[0].path_loss_db == pytest.approx(110.2, abs=1e-12)

    def test_conservation_and_invariants(self):
        rng = np.random.default_rng(8)
        site = _site(min_d=5.0)
        recs = [
            MeasurementRecord(GeoPoint(102.0 + rng.uniform(-1e-4, 1e-4), 26.0 + rng.uniform(-1e-4, 1e-4)), rng.uniform(-120, -60))
            for _ in range(300)
        ]
        samples, drops = build_dataset(site, recs)
        assert len(samples) + drops.total == len(recs)
        assert drops.total > 0
        assert all(s.distance_m >= 5.0 and math.isfinite(s.path_loss_db) for s in samples)


class TestSiteConfig:
    def test_load(self, tmp_path):
        doc = {
            "tx_lon": 102.848226,
            "tx_lat": 26.0845327,
            "tx_alt_m": 3600.0,
            "tx_height_m": 1.5,
            "freq_ghz": 0.605,
            "tx_power_dbm": 43,
            "tx_gain_dbi": 2.5,
            "rx_gain_dbi": 0,
            "ref_signal_power_dbm": 15.2,
            "min_distance_m": 2.0,
        }
        path = tmp_path / "site.json"
        path.write_text(json.dumps(doc))
        site = load_site_config(str(path))
        assert site.tx_position == GeoPoint(102.848226, 26.0845327, 3600.0)
        assert site.tx_antenna_alt == 3601.5
        assert site.budget.tx_gain_dbi == 2.5
        assert site.min_distance_m == 2.0

    def test_defaults_and_null_alt(self):
        site = load_site_config({"tx_lon": 1.0, "tx_lat": 2.0, "tx_alt_m": None, "freq_ghz": 0.605})
        assert site.tx_antenna_alt is None
        assert site.budget == LinkBudget()

    @pytest.mark.parametrize(
        "doc",
        [
            {"tx_lat": 2.0, "freq_ghz": 0.605},
            {"tx_lon": 1.0, "tx_lat": 2.0, "freq_ghz": -1},
            {"tx_lon": 1.0, "tx_lat": 2.0, "freq_ghz": 0.6, "min_distance_m": 0.5},
            {"tx_lon": 1.0, "tx_lat": 2.0, "freq_ghz": 0.6, "bogus": 1},
            {"tx_lon": 1.0, "tx_lat": 95.0, "freq_ghz": 0.6},
        ],
    )
    def test_invalid(self, doc):
        with pytest.raises(SiteConfigError):
            load_site_config(doc)

    def test_campaign_presets(self):
        assert JIAOZI_SNOW_MOUNTAIN.frequency_ghz == 0.605
        assert JIAOZI_SNOW_MOUNTAIN.tx_height_m == 1.5
        assert JIAOZI_SNOW_MOUNTAIN.tx_position.lon == 102.848226


def test_sample_csv_roundtrip():
    samples = [PathLossSample(5.0, 72.4302031), PathLossSample(123.456789, 110.0)]
    buf = io.StringIO()
    write_samples(samples, buf)
    assert buf.getvalue() == "distance_m,path_loss_db\n5.000000,72.430203\n123.456789,110.000000\n"
    back = read_samples(io.StringIO(buf.getvalue()))
    assert back[1] == PathLossSample(123.456789, 110.0)


def test_read_samples_rejects_nonpositive_distance():
    with pytest.raises(MeasurementParseError) as exc:
        read_samples(io.StringIO("distance_m,path_loss_db\n1,2\n0,3\n"))
    assert exc.value.line == 3
