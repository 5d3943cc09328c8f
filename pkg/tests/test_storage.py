"""Tests for field files, sidecars, heatmaps and region/ensemble exports."""

import json

import numpy as np
import pytest
from PIL import Image

from core.errors import ConfigError, FieldFileError
from core.presets import get_preset
from core.storage import (
    load_run_config, read_field, write_ensemble, write_field, write_pgm, write_regions,
)
from models.schemas import FieldFileHeader, GuardStatus, RegionPredicate
from sdi.cartography import EnsembleBundle, FieldResult, extract_regions


@pytest.fixture
def run_config():
    return get_preset("pendulum", grid_size=3).model_copy(update={"indicators": ["alpha", "expectation"]})


@pytest.fixture
def small_field(run_config):
    alpha = np.array([[0.1, 0.2, 0.3], [0.4, np.nan, 0.6], [0.7, 0.8, 0.9]])
    expectation = np.array([[1.0, 0.5, 0.25], [0.0, np.nan, 1.0], [0.75, 0.5, 0.0]])
    status = np.zeros((3, 3), dtype=int)
    status[1, 1] = GuardStatus.ESCAPE
    return FieldResult(grid=run_config.grid, columns=["alpha", "expectation"], values={"alpha": alpha, "expectation": expectation}, status=status)


def write_small(tmp_path, small_field, run_config):
    header = FieldFileHeader(seed=0, columns=small_field.columns, config=run_config)
    return write_field(small_field, header, str(tmp_path))


class TestFieldFiles:
    """field.csv and field.meta.json."""

    def test_layout(self, tmp_path, small_field, run_config):
        paths = write_small(tmp_path, small_field, run_config)
        lines = open(paths["csv"]).read().splitlines()
        assert all(line.startswith("#") for line in lines[:6])
        assert lines[6] == "ix,iy,u,v,alpha,expectation,status"
        assert len(lines) == 7 + 9
        assert lines[7].startswith("0,0,-2.0,-2.0,0.1,1.0,ok")

    def test_read_back(self, tmp_path, small_field, run_config):
        paths = write_small(tmp_path, small_field, run_config)
        field = read_field(paths["csv"])
        assert field.columns == ["alpha", "expectation"]
        np.testing.assert_array_equal(field.values["alpha"], small_field.values["alpha"])
        np.testing.assert_array_equal(field.status, small_field.status)
        assert field.grid == run_config.grid

    def test_sidecar_is_a_run_configuration(self, tmp_path, small_field, run_config):
        paths = write_small(tmp_path, small_field, run_config)
        assert load_run_config(paths["meta"]) == run_config
        meta = json.loads(open(paths["meta"]).read())
        assert meta["config"]["box"]["dims"][0] == {"lo": 2.25, "hi": 2.75}
        assert meta["config"]["t_f"] == 10.0

    def test_grid_rebuilt_without_metadata(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("ix,iy,u,v,alpha,status\n0,0,0.25,0.5,1.0,ok\n1,0,0.75,0.5,2.0,ok\n0,1,0.25,1.5,3.0,ok\n1,1,0.75,1.5,4.0,collision\n")
        field = read_field(str(path))
        assert field.grid.shape == (2, 2)
        assert field.grid.axis1.lo == pytest.approx(0.0)
        assert field.grid.axis2.hi == pytest.approx(2.0)
        assert field.status[1, 1] == GuardStatus.COLLISION


class TestMalformedFieldFiles:
    """Parse errors carry line numbers."""

    @pytest.mark.parametrize("body,line", [
        ("ix,iy,u,v,alpha,status\n0,0,0.1,0.1,1.0,ok\n1,0,0.2,0.1,oops,ok\n", 3),
        ("ix,iy,u,v,alpha,status\n0,0,0.1,0.1,1.0,ok\n1,0,0.2,0.1,1.0\n", 3),
        ("ix,iy,u,v,alpha,status\n0,0,0.1,0.1,1.0,lost\n", 2),
        ("# note\nix,iy,u,v,alpha,status\n0,0,0.1,0.1,1.0,ok\n0,0,0.1,0.1,1.0,ok\n", 4),
        ("x,y,alpha\n", 1),
    ])
    def test_line_numbers(self, tmp_path, body, line):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(FieldFileError) as info:
            read_field(str(path))
        assert info.value.line == line
        assert f"line {line}" in str(info.value)

    def test_duplicate_cell_reports_its_line(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(
            "ix,iy,u,v,alpha,status\n"
            "0,0,0.1,0.1,1.0,ok\n1,0,0.2,0.1,1.0,ok\n0,1,0.1,0.2,1.0,ok\n1,1,0.2,0.2,1.0,ok\n"
            "1,0,0.2,0.1,0.5,ok\n"
        )
        with pytest.raises(FieldFileError, match="duplicate") as info:
            read_field(str(path))
        assert info.value.line == 6

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "holes.csv"
        path.write_text("ix,iy,u,v,alpha,status\n0,0,0.1,0.1,1.0,ok\n1,1,0.2,0.2,1.0,ok\n")
        with pytest.raises(FieldFileError, match="missing"):
            read_field(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FieldFileError):
            read_field(str(tmp_path / "nope.csv"))


class TestConfigFiles:
    """JSON run configurations."""

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_run_config(str(path))

    def test_invalid_values(self, tmp_path, run_config):
        data = json.loads(run_config.model_dump_json())
        data["degree"] = -1
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigError):
            load_run_config(str(path))


class TestHeatmap:
    """Binary PGM output."""

    def test_scaling_and_orientation(self, tmp_path):
        values = np.array([[0.0, 1.0], [np.nan, 2.0]])
        path = write_pgm(values, str(tmp_path / "field.pgm"))
        assert open(path, "rb").read(2) == b"P5"
        image = np.asarray(Image.open(path))
        assert image.shape == (2, 2)
        # row iy = 0 is drawn at the bottom
        np.testing.assert_array_equal(image, [[0, 255], [0, 128]])

    def test_all_nan(self, tmp_path):
        path = write_pgm(np.full((2, 3), np.nan), str(tmp_path / "empty.pgm"))
        np.testing.assert_array_equal(np.asarray(Image.open(path)), 0)


class TestExports:
    """Region reports and ensemble trajectories."""

    def test_regions(self, tmp_path, small_field):
        region = extract_regions(small_field, RegionPredicate(kind="below", threshold=0.35))
        paths = write_regions(region, small_field, str(tmp_path))
        report = json.loads(open(paths["report"]).read())
        assert report["cells"] == 3
        assert report["components"][0]["area"] == 3
        mask_lines = [line for line in open(paths["mask"]).read().splitlines() if not line.startswith("#")]
        assert mask_lines[0] == "ix,iy,u,v,mask,component"
        assert len(mask_lines) == 10

    def test_ensemble(self, tmp_path):
        bundle = EnsembleBundle(
            params=np.array([[2.4], [2.6]]),
            times=[np.array([0.0, 1.0]), np.array([0.0, 0.5])],
            trajectories=[np.zeros((2, 2)), np.ones((2, 2))],
            status=np.array([GuardStatus.OK, GuardStatus.FAILED]),
            spread_max=0.0,
            spread_mean=0.0,
        )
        path = write_ensemble(bundle, ("x", "vx"), str(tmp_path))
        rows = [line for line in open(path).read().splitlines() if not line.startswith("#")]
        assert rows[0] == "realization_id,t,x,vx,status"
        assert rows[-1] == "1,0.5,1.0,1.0,failed"
        assert len(rows) == 5
