# core/storage.py

import csv
import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np
from PIL import Image
from pydantic import ValidationError

from core.errors import ConfigError, FieldFileError
from models.schemas import FieldFileHeader, GridAxis, GridSpec, GuardStatus, RunConfig
from sdi.cartography import EnsembleBundle, FieldResult, RegionMask, cell_centers

logger = logging.getLogger(__name__)

FIELD_CSV = "field.csv"
FIELD_META = "field.meta.json"
FIELD_PGM = "field.pgm"
BASE_COLUMNS = ["ix", "iy", "u", "v"]


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _fmt(value: float) -> str:
    return repr(float(value))


# --- configuration files ------------------------------------------------------

def load_run_config(path: str) -> RunConfig:
    """Reads a JSON run configuration. A field sidecar is accepted too (its config entry is used)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read configuration {path}: {exc}")
    try:
        if isinstance(data, dict) and "config" in data and "tool_version" in data:
            return FieldFileHeader.model_validate(data).config
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration {path}: {exc}")


# --- field files --------------------------------------------------------------

def write_field(field: FieldResult, header: FieldFileHeader, out_dir: str) -> Dict[str, str]:
    """Writes field.csv and field.meta.json; returns their paths."""
    ensure_dir(out_dir)
    csv_path = os.path.join(out_dir, FIELD_CSV)
    meta_path = os.path.join(out_dir, FIELD_META)
    u = cell_centers(field.grid.axis1)
    v = cell_centers(field.grid.axis2)
    ny, nx = field.grid.shape

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# tool_version: {header.tool_version}\n")
        fh.write(f"# created_at: {header.created_at.isoformat()}\n")
        fh.write(f"# system: {header.config.system}\n")
        fh.write(f"# seed: {header.seed}\n")
        fh.write(f"# grid: {nx}x{ny} ({field.grid.axis1.name}, {field.grid.axis2.name})\n")
        fh.write(f"# config: {header.config.model_dump_json()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BASE_COLUMNS + field.columns + ["status"])
        for iy in range(ny):
            for ix in range(nx):
                values = [_fmt(field.values[c][iy, ix]) for c in field.columns]
                writer.writerow([ix, iy, _fmt(u[ix]), _fmt(v[iy])] + values + [GuardStatus(int(field.status[iy, ix])).label])

    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(header.model_dump_json(indent=2))
    logger.info("Wrote %s and %s", csv_path, meta_path)
    return {"csv": csv_path, "meta": meta_path}


def _axis_from_centers(name: str, centers: np.ndarray) -> GridAxis:
    centers = np.unique(centers)
    if len(centers) < 2:
        raise FieldFileError(f"axis {name} needs at least two distinct cells")
    width = (centers[-1] - centers[0]) / (len(centers) - 1)
    return GridAxis(name=name, lo=float(centers[0] - width / 2), hi=float(centers[-1] + width / 2), count=len(centers))


def read_field(path: str) -> FieldResult:
    """Parses a field CSV. Errors carry the offending line number."""
    metadata: Dict[str, str] = {}
    header: Optional[List[str]] = None
    rows = []
    cells = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise FieldFileError(f"cannot open {path}: {exc}")

    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(":")
                if sep:
                    metadata[key.strip()] = value.strip()
                continue
            fields = next(csv.reader([line]))
            if header is None:
                if fields[: len(BASE_COLUMNS)] != BASE_COLUMNS or fields[-1] != "status":
                    raise FieldFileError(f"unexpected column header {fields}", lineno)
                header = fields
                continue
            if len(fields) != len(header):
                raise FieldFileError(f"expected {len(header)} fields, got {len(fields)}", lineno)
            try:
                ix, iy = int(fields[0]), int(fields[1])
                numbers = [float(x) for x in fields[2:-1]]
                status = GuardStatus.from_label(fields[-1])
            except ValueError as exc:
                raise FieldFileError(str(exc), lineno)
            if ix < 0 or iy < 0:
                raise FieldFileError("negative cell index", lineno)
            if (ix, iy) in cells:
                raise FieldFileError(f"duplicate cell ({ix}, {iy})", lineno)
            cells.add((ix, iy))
            rows.append((lineno, ix, iy, numbers, status))

    if header is None:
        raise FieldFileError("missing column header")
    if not rows:
        raise FieldFileError("field file has no cells")

    columns = header[len(BASE_COLUMNS):-1]
    nx = max(r[1] for r in rows) + 1
    ny = max(r[2] for r in rows) + 1

    config = None
    if "config" in metadata:
        try:
            config = RunConfig.model_validate_json(metadata["config"])
        except ValidationError as exc:
            raise FieldFileError(f"invalid config metadata: {exc.errors()[0]['msg']}")
    if config is not None and config.grid.shape == (ny, nx):
        grid = config.grid
    else:
        us = np.array([r[3][0] for r in rows])
        vs = np.array([r[3][1] for r in rows])
        grid = GridSpec(axis1=_axis_from_centers("u", us), axis2=_axis_from_centers("v", vs))

    values = {c: np.full((ny, nx), np.nan) for c in columns}
    status = np.zeros((ny, nx), dtype=int)
    seen = np.zeros((ny, nx), dtype=bool)
    for _, ix, iy, numbers, code in rows:
        seen[iy, ix] = True
        for c, value in zip(columns, numbers[2:]):
            values[c][iy, ix] = value
        status[iy, ix] = code
    if not seen.all():
        iy, ix = np.argwhere(~seen)[0]
        raise FieldFileError(f"cell ({ix}, {iy}) missing from a {nx}x{ny} field")

    metadata["path"] = path
    return FieldResult(grid=grid, columns=columns, values=values, status=status, metadata=metadata)


def write_pgm(values: np.ndarray, path: str) -> str:
    """Binary PGM heatmap, min-max scaled to 0..255; non-finite cells are 0. Row iy = 0 is at the bottom."""
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    pixels = np.zeros(values.shape, dtype=np.uint8)
    if finite.any():
        lo, hi = values[finite].min(), values[finite].max()
        span = hi - lo if hi > lo else 1.0
        pixels[finite] = np.round(255.0 * (values[finite] - lo) / span).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(np.flipud(pixels))).save(path, format="PPM")
    logger.info("Wrote %s", path)
    return path


# --- regions / ensembles / reports --------------------------------------------

def write_regions(region: RegionMask, field: FieldResult, out_dir: str) -> Dict[str, str]:
    ensure_dir(out_dir)
    mask_path = os.path.join(out_dir, "mask.csv")
    report_path = os.path.join(out_dir, "regions.json")
    u = cell_centers(field.grid.axis1)
    v = cell_centers(field.grid.axis2)
    ny, nx = region.mask.shape
    with open(mask_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# column: {region.column}\n")
        fh.write(f"# predicate: {region.predicate.describe()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BASE_COLUMNS + ["mask", "component"])
        for iy in range(ny):
            for ix in range(nx):
                writer.writerow([ix, iy, _fmt(u[ix]), _fmt(v[iy]), int(region.mask[iy, ix]), int(region.labels[iy, ix])])

    report = {
        "column": region.column,
        "predicate": region.predicate.model_dump(),
        "cells": int(region.mask.sum()),
        "components": [
            {"id": c.id, "area": c.area, "bbox": c.bbox, "sample": c.sample}
            for c in region.components
        ],
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    logger.info("Wrote %s and %s", mask_path, report_path)
    return {"mask": mask_path, "report": report_path}


def write_ensemble(bundle: EnsembleBundle, state_names, out_dir: str) -> str:
    """Long-format trajectories: realization_id, t, states..., status."""
    ensure_dir(out_dir)
    path = os.path.join(out_dir, "ensemble.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# realizations: {len(bundle.trajectories)}\n")
        fh.write(f"# spread_max: {_fmt(bundle.spread_max)}\n")
        fh.write(f"# spread_mean: {_fmt(bundle.spread_mean)}\n")
        for r, p in enumerate(bundle.params):
            fh.write(f"# params {r}: {' '.join(_fmt(x) for x in p)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["realization_id", "t", *state_names, "status"])
        for r, (times, states) in enumerate(zip(bundle.times, bundle.trajectories)):
            label = GuardStatus(int(bundle.status[r])).label
            for t, z in zip(times, states):
                writer.writerow([r, _fmt(t)] + [_fmt(x) for x in z] + [label])
    logger.info("Wrote %s", path)
    return path


def write_report(report: dict, path: str) -> str:
    ensure_dir(os.path.dirname(path) or ".")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=float)
    return path
