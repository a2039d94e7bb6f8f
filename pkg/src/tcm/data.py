"""Study-area dataset container: scenes, footprints, optional truth labels."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import formats
from .geometry import Polygon, Scene


@dataclass
class FootprintDataset:
    """Co-registered scene time series plus the footprints to analyze.

    labels maps footprint id -> (first_index 1-based, first_year) and is only
    present for evaluation runs.
    """

    scenes: list[Scene]
    polygons: list[Polygon]
    labels: Optional[dict[str, tuple[int, int]]] = None

    def __post_init__(self):
        self.polygons = sorted(self.polygons, key=lambda p: p.id)
        years = [s.year for s in self.scenes]
        if years != sorted(years):
            self.scenes = sorted(self.scenes, key=lambda s: s.year)

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(s.year for s in self.scenes)

    @property
    def n_layers(self) -> int:
        return len(self.scenes)

    def polygon_by_id(self, fid: str) -> Polygon:
        for poly in self.polygons:
            if poly.id == fid:
                return poly
        raise KeyError(fid)

    def labeled_ids(self) -> list[str]:
        if not self.labels:
            return []
        known = {p.id for p in self.polygons}
        return sorted(fid for fid in self.labels if fid in known)

    def year_of_index(self, index: int) -> int:
        return self.scenes[index - 1].year

    def index_of_year(self, year: int) -> int:
        for i, sc in enumerate(self.scenes, start=1):
            if sc.year == year:
                return i
        raise KeyError(year)

    @classmethod
    def load(cls, scenes_dir, polygons_path, labels_path=None) -> "FootprintDataset":
        scenes = formats.read_scenes_dir(scenes_dir)
        polygons = formats.read_polygons_geojson(polygons_path)
        labels: Optional[dict[str, tuple[int, int]]] = None
        if labels_path is not None:
            labels = formats.read_labels_csv(labels_path)
        else:
            # Fall back to label_year properties carried by the GeoJSON.
            years = [s.year for s in scenes]
            from_geo = {
                p.id: (years.index(p.label_year) + 1, p.label_year)
                for p in polygons
                if p.label_year is not None and p.label_year in years
            }
            labels = from_geo or None
        return cls(scenes=scenes, polygons=polygons, labels=labels)

    def save(self, out_dir) -> dict[str, Path]:
        """Write scenes, footprints, and labels (if any) under out_dir."""
        out = Path(out_dir)
        scenes_dir = out / "scenes"
        scenes_dir.mkdir(parents=True, exist_ok=True)
        for scene in self.scenes:
            formats.write_scene(scenes_dir / f"scene_{scene.year}.tcs", scene)
        paths = {"scenes": scenes_dir}
        poly_path = out / "polygons.geojson"
        formats.write_polygons_geojson(poly_path, self.polygons)
        paths["polygons"] = poly_path
        if self.labels is not None:
            labels_path = out / "labels.csv"
            formats.write_labels_csv(labels_path, self.labels)
            paths["labels"] = labels_path
        return paths
