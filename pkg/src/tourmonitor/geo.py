"""Territory assignment by point-in-polygon and spatial density.

Geometry is planar in raw lon/lat degrees. Containment follows the even-odd
rule over all rings of a territory, so holes work; a point lying exactly on an
edge or vertex counts as inside.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import GeometryError, ValidationError

log = logging.getLogger(__name__)

LEVEL_LABELS = ("region", "wilaya", "governorate", "mohafazat")
UNASSIGNED = None

Ring = Sequence[Sequence[float]]


def flatten_rings(rings: Sequence[Ring]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pack rings into flat vertex arrays plus ring start offsets for the kernels."""
    xs: list[float] = []
    ys: list[float] = []
    starts = [0]
    for ring in rings:
        if len(ring) < 4:
            raise GeometryError(f"ring needs at least 4 vertices (closed triangle), got {len(ring)}")
        first, last = ring[0], ring[-1]
        if float(first[0]) != float(last[0]) or float(first[1]) != float(last[1]):
            raise GeometryError(f"unclosed ring: first vertex {tuple(first)} != last {tuple(last)}")
        for pt in ring:
            x, y = float(pt[0]), float(pt[1])
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError(f"non-finite vertex {tuple(pt)}")
            xs.append(x)
            ys.append(y)
        starts.append(len(xs))
    return (np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64),
            np.asarray(starts, dtype=np.int64))


def point_in_polygon(lon: float, lat: float, rings: Sequence[Ring]) -> bool:
    if not (math.isfinite(lon) and math.isfinite(lat)):
        raise ValueError(f"non-finite point ({lon}, {lat})")
    vx, vy, starts = flatten_rings(rings)
    return kernels.point_in_rings(lon, lat, vx, vy, starts)


@dataclass(frozen=True)
class Territory:
    territory_id: str
    country: str
    name: str
    level_label: str
    rings: tuple
    area_km2: float
    _vx: np.ndarray = field(init=False, repr=False, compare=False)
    _vy: np.ndarray = field(init=False, repr=False, compare=False)
    _starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.level_label not in LEVEL_LABELS:
            raise ValidationError(f"{self.territory_id}: level_label {self.level_label!r} "
                                  f"not in {LEVEL_LABELS}")
        if not (self.area_km2 > 0):
            raise ValidationError(f"{self.territory_id}: area_km2 must be > 0")
        if not self.rings:
            raise GeometryError(f"{self.territory_id}: no rings")
        rings = tuple(tuple((float(x), float(y)) for x, y, *_ in ring) for ring in self.rings)
        object.__setattr__(self, "rings", rings)
        vx, vy, starts = flatten_rings(rings)
        object.__setattr__(self, "_vx", vx)
        object.__setattr__(self, "_vy", vy)
        object.__setattr__(self, "_starts", starts)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (float(self._vx.min()), float(self._vy.min()),
                float(self._vx.max()), float(self._vy.max()))

    def contains(self, lon: float, lat: float) -> bool:
        return kernels.point_in_rings(lon, lat, self._vx, self._vy, self._starts)

    def contains_many(self, lons, lats) -> np.ndarray:
        return kernels.points_in_rings(lons, lats, self._vx, self._vy, self._starts).astype(bool)


class TerritoryIndex:
    """Immutable set of territories with bounding boxes for prefiltering."""

    def __init__(self, territories: Iterable[Territory]):
        self.territories: tuple[Territory, ...] = tuple(sorted(territories, key=lambda t: t.territory_id))
        ids = [t.territory_id for t in self.territories]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate territory_id(s): {dupes}")
        self.by_id = {t.territory_id: t for t in self.territories}
        self.bboxes = {t.territory_id: t.bbox for t in self.territories}
        self.tie_log: list[tuple[float, float, tuple[str, ...]]] = []

    def __len__(self) -> int:
        return len(self.territories)

    def candidates(self, lon: float, lat: float, country: str | None = None) -> list[Territory]:
        out = []
        for t in self.territories:
            if country is not None and t.country != country:
                continue
            x0, y0, x1, y1 = self.bboxes[t.territory_id]
            if x0 <= lon <= x1 and y0 <= lat <= y1:
                out.append(t)
        return out

    def locate(self, lon: float, lat: float, country: str | None = None) -> str | None:
        hits = [t.territory_id for t in self.candidates(lon, lat, country) if t.contains(lon, lat)]
        if not hits:
            return UNASSIGNED
        if len(hits) > 1:
            # territories are sorted by id, so hits[0] is the smallest
            self.tie_log.append((lon, lat, tuple(hits)))
            log.info("point (%s, %s) on shared border of %s; assigned to %s",
                     lon, lat, ", ".join(hits), hits[0])
        return hits[0]

    def locate_many(self, lons: Sequence[float], lats: Sequence[float],
                    countries: Sequence[str] | None = None) -> list[str | None]:
        """Vectorized ``locate``; same tie-break and tie logging."""
        lons = np.asarray(lons, dtype=np.float64)
        lats = np.asarray(lats, dtype=np.float64)
        ctry = np.asarray(countries, dtype=object) if countries is not None else None
        hits: list[list[str]] = [[] for _ in range(len(lons))]
        for t in self.territories:
            x0, y0, x1, y1 = self.bboxes[t.territory_id]
            mask = (lons >= x0) & (lons <= x1) & (lats >= y0) & (lats <= y1)
            if ctry is not None:
                mask &= ctry == t.country
            cand = np.nonzero(mask)[0]
            if not len(cand):
                continue
            inside = t.contains_many(lons[cand], lats[cand])
            for k in cand[inside]:
                hits[k].append(t.territory_id)
        out: list[str | None] = []
        for k, h in enumerate(hits):
            if len(h) > 1:
                self.tie_log.append((float(lons[k]), float(lats[k]), tuple(h)))
                log.info("point (%s, %s) on shared border of %s; assigned to %s",
                         lons[k], lats[k], ", ".join(h), h[0])
            out.append(h[0] if h else UNASSIGNED)
        return out


def assign_territory(record, index: TerritoryIndex) -> str | None:
    """Territory id containing the record's coordinates, or ``None`` when unassigned.

    Only territories of the record's own country are candidates.
    """
    return index.locate(record.longitude, record.latitude, record.country)


def assign_many(records: Sequence, index: TerritoryIndex) -> list[str | None]:
    return index.locate_many([r.longitude for r in records], [r.latitude for r in records],
                             [r.country for r in records])


def density_per_100km2(count: int, area_km2: float) -> float:
    if count < 0:
        raise ValueError("count must be >= 0")
    if not (area_km2 > 0):
        raise ValueError(f"area_km2 must be > 0, got {area_km2}")
    return 100.0 * count / area_km2


def _feature_rings(geometry: dict) -> list:
    kind = geometry.get("type")
    coords = geometry.get("coordinates")
    if kind == "Polygon":
        return list(coords)
    if kind == "MultiPolygon":
        return [ring for poly in coords for ring in poly]
    raise GeometryError(f"unsupported geometry type {kind!r}")


def territories_from_geojson(data: dict) -> list[Territory]:
    if data.get("type") != "FeatureCollection":
        raise ValidationError("territory file must be a GeoJSON FeatureCollection")
    out = []
    for feat in data.get("features", []):
        props = feat.get("properties") or {}
        missing = [k for k in ("territory_id", "country", "name", "level_label", "area_km2")
                   if k not in props]
        if missing:
            raise ValidationError(f"feature missing properties {missing}: {props}")
        out.append(Territory(
            territory_id=str(props["territory_id"]),
            country=str(props["country"]).upper(),
            name=str(props["name"]),
            level_label=str(props["level_label"]),
            rings=tuple(_feature_rings(feat.get("geometry") or {})),
            area_km2=float(props["area_km2"]),
        ))
    return out


def load_territories(path: str | Path) -> TerritoryIndex:
    with open(path, encoding="utf-8") as fh:
        return TerritoryIndex(territories_from_geojson(json.load(fh)))
