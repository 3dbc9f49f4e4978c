import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record
from oracles import convex_polygon, inside_convex
from tourmonitor.demo import box, territories_geojson
from tourmonitor.errors import GeometryError, ValidationError
from tourmonitor.geo import (Territory, TerritoryIndex, assign_many, assign_territory,
                             density_per_100km2, load_territories, point_in_polygon,
                             territories_from_geojson)

SQUARE = [box(0, 0, 1, 1)]


def terr(tid, ring, country="MA", area=100.0, level="region"):
    return Territory(tid, country, tid, level, (ring,), area)


@pytest.mark.parametrize("pt,inside", [((0.5, 0.5), True), ((1.5, 0.5), False), ((0, 0), True),
                                       ((0.5, 0), True), ((1, 1), True), ((0.5, -0.001), False)])
def test_unit_square(pt, inside):
    assert point_in_polygon(pt[0], pt[1], SQUARE) is inside


def test_unclosed_ring():
    with pytest.raises(GeometryError):
        point_in_polygon(0.5, 0.5, [[(0, 0), (1, 0), (1, 1), (0, 1)]])


def test_non_finite_point():
    with pytest.raises(ValueError):
        point_in_polygon(math.nan, 0.5, SQUARE)


def test_concave_polygon():
    # U shape: notch between x in (1,2), y > 1
    ring = [(0, 0), (3, 0), (3, 3), (2, 3), (2, 1), (1, 1), (1, 3), (0, 3), (0, 0)]
    assert point_in_polygon(0.5, 2.5, [ring])
    assert not point_in_polygon(1.5, 2.0, [ring])
    assert point_in_polygon(1.5, 0.5, [ring])
    # ray through a reflex vertex
    assert not point_in_polygon(1.5, 1.5, [ring])
    assert point_in_polygon(2.5, 1.0, [ring])


def test_convex_octagon_against_half_planes():
    rng = random.Random(8)
    ring = convex_polygon(rng, 8)
    pts = [(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)) for _ in range(2000)]
    for x, y in pts:
        assert point_in_polygon(x, y, [ring]) == inside_convex(ring, x, y)
    # every vertex is on the boundary
    for x, y in ring[:-1]:
        assert point_in_polygon(x, y, [ring])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_random_convex_property(seed):
    rng = random.Random(seed)
    ring = convex_polygon(rng, rng.randint(3, 16), rng.uniform(-5, 5), rng.uniform(-5, 5),
                          rng.uniform(0.1, 3))
    t = terr("X", ring)
    xs = np.array([rng.uniform(-9, 9) for _ in range(200)])
    ys = np.array([rng.uniform(-9, 9) for _ in range(200)])
    got = t.contains_many(xs, ys)
    assert list(got) == [inside_convex(ring, x, y) for x, y in zip(xs, ys)]


def test_shared_border_tie_break():
    idx = TerritoryIndex([terr("MA-08", box(1, 0, 2, 1)), terr("MA-07", box(0, 0, 1, 1))])
    assert idx.locate(1.0, 0.5) == "MA-07"
    assert idx.tie_log == [(1.0, 0.5, ("MA-07", "MA-08"))]
    assert idx.locate_many([1.0], [0.5]) == ["MA-07"]
    assert idx.locate(1.5, 0.5) == "MA-08"


def test_country_restricts_candidates():
    idx = TerritoryIndex([terr("MA-01", box(0, 0, 1, 1)), terr("TN-01", box(0, 0, 1, 1), "TN")])
    rec = make_record(latitude=0.5, longitude=0.5, country="TN")
    assert assign_territory(rec, idx) == "TN-01"
    assert assign_many([rec, make_record(1, latitude=5.0, longitude=5.0)], idx) == ["TN-01", None]


def test_unassigned_outside():
    idx = TerritoryIndex([terr("MA-01", box(0, 0, 1, 1))])
    assert assign_territory(make_record(latitude=3.0, longitude=3.0), idx) is None


def test_hole_excludes():
    t = Territory("A", "MA", "A", "region", (box(0, 0, 4, 4), box(1, 1, 2, 2)), 16.0)
    assert not t.contains(1.5, 1.5)
    assert t.contains(3, 3)


def test_prefilter_is_sound():
    rng = random.Random(5)
    ts = [terr(f"T{i:02d}", convex_polygon(rng, 7, rng.uniform(0, 10), rng.uniform(0, 10), 1.5))
          for i in range(12)]
    idx = TerritoryIndex(ts)
    for _ in range(1000):
        x, y = rng.uniform(-2, 12), rng.uniform(-2, 12)
        brute = [t.territory_id for t in ts if inside_convex(t.rings[0], x, y)]
        cand = {t.territory_id for t in idx.candidates(x, y)}
        assert set(brute) <= cand
        assert idx.locate(x, y) == (min(brute) if brute else None)


def test_input_order_does_not_matter():
    rng = random.Random(11)
    ts = [terr(f"T{i}", convex_polygon(rng, 6, rng.uniform(0, 3), rng.uniform(0, 3), 1.0))
          for i in range(6)]
    xs, ys = [rng.uniform(-1, 4) for _ in range(300)], [rng.uniform(-1, 4) for _ in range(300)]
    a = TerritoryIndex(ts).locate_many(xs, ys)
    b = TerritoryIndex(list(reversed(ts))).locate_many(xs, ys)
    assert a == b == [TerritoryIndex(ts).locate(x, y) for x, y in zip(xs, ys)]


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError):
        TerritoryIndex([terr("A", box(0, 0, 1, 1)), terr("A", box(1, 1, 2, 2))])


def test_bad_level_label():
    with pytest.raises(ValidationError):
        terr("A", box(0, 0, 1, 1), level="province")


@pytest.mark.parametrize("count,area,expected", [(85, 100, 85.0), (275, 323.5, 85.0)])
def test_density(count, area, expected):
    assert density_per_100km2(count, area) == pytest.approx(expected, abs=0.1)


def test_density_rejects_zero_area():
    with pytest.raises(ValueError):
        density_per_100km2(3, 0)


def test_geojson_multipolygon(tmp_path):
    data = territories_geojson([
        {"territory_id": "TN-11", "country": "TN", "name": "Tunis", "level_label": "governorate",
         "area_km2": 288.0, "ring": box(10.0, 36.7, 10.3, 36.9)}])
    data["features"].append({"type": "Feature", "properties": {
        "territory_id": "TN-99", "country": "tn", "name": "Iles", "level_label": "governorate",
        "area_km2": 10.0}, "geometry": {"type": "MultiPolygon", "coordinates": [
            [box(0, 0, 1, 1)], [box(5, 5, 6, 6)]]}})
    import json

    path = tmp_path / "t.geojson"
    path.write_text(json.dumps(data))
    idx = load_territories(path)
    assert [t.territory_id for t in idx.territories] == ["TN-11", "TN-99"]
    assert idx.locate(5.5, 5.5, "TN") == "TN-99"
    assert idx.locate(10.1, 36.8, "TN") == "TN-11"


def test_geojson_missing_properties():
    with pytest.raises(ValidationError):
        territories_from_geojson({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"territory_id": "X"},
             "geometry": {"type": "Polygon", "coordinates": [box(0, 0, 1, 1)]}}]})
