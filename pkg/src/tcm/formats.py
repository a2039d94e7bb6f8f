"""On-disk formats: TCS rasters, GeoJSON footprints, label and detection CSVs.

TCS layout (little-endian, bit-exact):
  magic "TCS1" | u32 T, H, W, C | u8 dtype code (1=u8, 2=u16, 4=f32)
  | T*H*W*C samples in [t][channel][row][col] order
  | optionally (chip files) H*W u8 mask bytes.
Scene files carry T=1 and no mask; a sidecar <name>.json next to each scene
holds {"year": int, "geotransform": [a, b, c, d, e, f]}.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import AffineGeoTransform, ChipStack, Polygon, Scene

MAGIC = b"TCS1"
_CODE_TO_DTYPE = {1: np.uint8, 2: np.uint16, 4: np.float32}
_DTYPE_TO_CODE = {np.dtype(v): k for k, v in _CODE_TO_DTYPE.items()}


def write_tcs(path, stack: np.ndarray, mask: Optional[np.ndarray] = None) -> None:
    """Write a (T, H, W, C) stack, plus the footprint mask for chip files."""
    stack = np.asarray(stack)
    if stack.ndim != 4:
        raise ValueError(f"stack must be (T, H, W, C), got {stack.shape}")
    dtype = np.dtype(stack.dtype)
    if dtype not in _DTYPE_TO_CODE:
        raise ValueError(f"unsupported dtype {dtype}; use u8, u16, or f32")
    t, h, w, c = stack.shape
    ordered = np.ascontiguousarray(np.transpose(stack, (0, 3, 1, 2)))
    payload = ordered.astype(dtype.newbyteorder("<"), copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIB", t, h, w, c, _DTYPE_TO_CODE[dtype]))
        fh.write(payload)
        if mask is not None:
            mask = np.asarray(mask, dtype=np.uint8)
            if mask.shape != (h, w):
                raise ValueError("mask shape must match the stack's spatial shape")
            fh.write(mask.tobytes())


def read_tcs(path) -> tuple[np.ndarray, Optional[np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a TCS file")
    t, h, w, c, code = struct.unpack_from("<IIIIB", blob, 4)
    if code not in _CODE_TO_DTYPE:
        raise ValueError(f"{path}: unknown dtype code {code}")
    dtype = np.dtype(_CODE_TO_DTYPE[code]).newbyteorder("<")
    n_samples = t * h * w * c
    offset = 4 + struct.calcsize("<IIIIB")
    data = np.frombuffer(blob, dtype=dtype, count=n_samples, offset=offset)
    stack = np.transpose(data.reshape(t, c, h, w), (0, 2, 3, 1))
    stack = stack.astype(dtype.newbyteorder("="))
    rest = blob[offset + n_samples * dtype.itemsize:]
    mask = None
    if len(rest) == h * w:
        mask = np.frombuffer(rest, dtype=np.uint8).reshape(h, w).copy()
    elif len(rest) != 0:
        raise ValueError(f"{path}: {len(rest)} trailing bytes, expected 0 or {h * w}")
    return stack, mask


def write_scene(path, scene: Scene) -> None:
    path = Path(path)
    write_tcs(path, scene.pixels[None, ...])
    sidecar = {"year": int(scene.year), "geotransform": list(scene.transform.coefficients())}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_scene(path) -> Scene:
    path = Path(path)
    stack, _ = read_tcs(path)
    if stack.shape[0] != 1:
        raise ValueError(f"{path}: scene files must hold exactly one layer")
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise ConfigError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    return Scene(
        pixels=stack[0],
        year=int(meta["year"]),
        transform=AffineGeoTransform(*[float(v) for v in meta["geotransform"]]),
    )


def read_scenes_dir(directory) -> list[Scene]:
    """All *.tcs scenes under directory, in temporal order."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.tcs"))
    if not paths:
        raise ConfigError(f"no .tcs scenes in {directory}")
    scenes = [read_scene(p) for p in paths]
    scenes.sort(key=lambda s: s.year)
    return scenes


def write_chip(path, chips: ChipStack) -> None:
    write_tcs(path, chips.imagery, chips.mask)


def _ring_coords(ring) -> list[list[float]]:
    pts = [[float(x), float(y)] for x, y in ring]
    pts.append(pts[0])
    return pts


def write_polygons_geojson(path, polygons: Sequence[Polygon]) -> None:
    features = []
    for poly in polygons:
        props = {"id": poly.id}
        if poly.label_year is not None:
            props["label_year"] = int(poly.label_year)
        features.append({
            "type": "Feature",
            "properties": props,
            "geometry": {
                "type": "Polygon",
                "coordinates": [_ring_coords(poly.exterior)]
                + [_ring_coords(h) for h in poly.holes],
            },
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_polygons_geojson(path) -> list[Polygon]:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "FeatureCollection":
        raise ConfigError(f"{path}: expected a GeoJSON FeatureCollection")
    polygons = []
    for feat in doc.get("features", []):
        props = feat.get("properties") or {}
        if "id" not in props:
            raise ConfigError(f"{path}: every feature needs an 'id' property")
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ConfigError(f"{path}: feature {props['id']!r} is not a Polygon")
        rings = geom["coordinates"]
        label_year = props.get("label_year")
        polygons.append(Polygon(
            id=str(props["id"]),
            exterior=tuple((float(x), float(y)) for x, y in rings[0]),
            holes=tuple(tuple((float(x), float(y)) for x, y in ring) for ring in rings[1:]),
            label_year=None if label_year is None else int(label_year),
        ))
    return polygons


def write_labels_csv(path, labels: dict[str, tuple[int, int]]) -> None:
    """labels maps footprint id -> (first_index 1-based, first_year)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["footprint_id", "first_index", "first_year"])
        for fid in sorted(labels):
            idx, year = labels[fid]
            writer.writerow([fid, int(idx), int(year)])


def read_labels_csv(path) -> dict[str, tuple[int, int]]:
    labels = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels[row["footprint_id"]] = (int(row["first_index"]), int(row["first_year"]))
    return labels


def write_detections_csv(path, results: Sequence) -> None:
    """One row per footprint, sorted by id: index, year, crossed flag, d_1..d_T."""
    results = sorted(results, key=lambda r: r.footprint_id)
    if not results:
        raise ValueError("no detection results to write")
    n_layers = len(results[0].series.values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["footprint_id", "predicted_index", "predicted_year", "crossed"]
                        + [f"d_{i}" for i in range(1, n_layers + 1)])
        for res in results:
            writer.writerow([res.footprint_id, res.index, res.year,
                             str(bool(res.crossed)).lower()]
                            + [repr(float(v)) for v in res.series.values])


def histogram_to_dict(hist) -> dict:
    return {"edges": [float(e) for e in hist.edges],
            "masses": [float(m) for m in hist.masses]}


def calibration_report_to_dict(report) -> dict:
    return {
        "chosen": {"k": report.chosen_k, "r": report.chosen_r, "theta": report.chosen_theta},
        "seed": report.seed,
        "n_random": report.n_random,
        "percentile": report.percentile,
        "cells": [
            {
                "k": cell.k,
                "r": cell.r,
                "bc": cell.bc,
                "theta": cell.theta,
                "hist_p": histogram_to_dict(cell.hist_p),
                "hist_q": histogram_to_dict(cell.hist_q),
            }
            for cell in report.cells
        ],
    }


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
