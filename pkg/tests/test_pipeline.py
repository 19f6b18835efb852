import json
import math

import numpy as np
import pytest
import requests

from conftest import FakeResponse, FakeSession, lm, write_png
from facadepv import pipeline, synthetic
from facadepv.layout import PANEL_L, PixelRect, ScaleFactors, best_layout_in_rect
from facadepv.pipeline import (
    ConfigError,
    ManifestParseError,
    config_from_dict,
    load_config,
    parse_manifest,
    parse_manifest_text,
    run_batch,
)
from facadepv.pvgis import PVGISClient
from facadepv.raster import CLASS_IDS
from facadepv.render import overlay_figure, render_overlay

OFFLINE = {"yield.offline": True, "yield.offline_y_spec": 650.0}


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    d = tmp_path_factory.mktemp("demo")
    return synthetic.write_demo(d, px_per_m=20.0)


def three_facades(tmp_path):
    rows = ["id,image,width_m,height_m,azimuth_deg,lat,lon,gt_image"]
    for i, spec in enumerate(synthetic.DEMO_FACADES[:3]):
        lmap = synthetic.facade_label_map(spec[1], 20.0)
        write_png(tmp_path / f"{i}.png", lmap.labels)
        rows.append(f"c{i},{i}.png,{spec[1].width_m},{spec[1].height_m},180,47.0,8.0,")
    (tmp_path / "m.csv").write_text("\n".join(rows) + "\n")
    return tmp_path / "m.csv"


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.panels == ("L", "S") and cfg.gap_m == 0.02
        assert cfg.suitability.gap_m == 0.02

    def test_precedence(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"panels": "S", "gap_m": 0.03, "workers": 3, "yield": {"offline": True}}))
        cfg = load_config(f, {"workers": 2, "panels": None})
        assert cfg.panels == ("S",) and cfg.workers == 2 and cfg.gap_m == 0.03
        assert cfg.suitability.gap_m == 0.03
        assert load_config(f, {"panels": "both"}).panels == ("L", "S")

    def test_mapping_file_relative_to_config(self, tmp_path):
        (tmp_path / "map.txt").write_text("1 = background\n2 = facade\n")
        (tmp_path / "c.json").write_text(json.dumps({"class_mapping": "map.txt"}))
        assert load_config(tmp_path / "c.json").class_mapping == {1: 0, 2: 1}

    @pytest.mark.parametrize("bad", [
        {"panels": "XL"}, {"nonsense": 1}, {"gap_m": -1}, {"suitability": {"opening_buffer_m": -2}},
        {"workers": 0}, {"yield": {"bogus": 1}},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            config_from_dict(bad)

    def test_unreadable_file(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.json")


class TestManifest:
    def test_parse(self, demo):
        recs = parse_manifest(demo)
        assert [r.id for r in recs] == ["f01", "f02", "f03", "f04", "pillars"]
        assert recs[0].geometry.width_m == 14.0 and recs[0].geometry.azimuth_deg == 180.0
        assert recs[0].label_map_path.is_absolute()

    def test_header_only(self):
        assert parse_manifest_text("id,image,width_m,height_m\n") == []
        assert parse_manifest_text("") == []

    def test_duplicate_id(self):
        with pytest.raises(ManifestParseError):
            parse_manifest_text("id,image,width_m,height_m\na,x.png,1,1\na,y.png,1,1\n")

    def test_missing_columns(self):
        with pytest.raises(ManifestParseError):
            parse_manifest_text("id,image\na,x.png\n")

    def test_bad_geometry_is_row_level(self):
        recs = parse_manifest_text("id,image,width_m,height_m\na,x.png,-1,3\n")
        assert recs[0].geometry is None and recs[0].geometry_error

    def test_optional_azimuth(self):
        recs = parse_manifest_text("id,image,width_m,height_m,azimuth_deg\na,x.png,2,3,\n")
        assert recs[0].geometry.azimuth_deg is None


class TestRunBatch:
    def test_three_facades_aggregates(self, tmp_path):
        rep = run_batch(parse_manifest(three_facades(tmp_path)), load_config(None, OFFLINE))
        assert len(rep.rows) == 3
        rows = rep.rows
        assert rep.aggregates["mean_theoretical_share"] == pytest.approx(sum(r["f_pv"] for r in rows) / 3, rel=1e-12)
        assert rep.aggregates["mean_wall_share"] == pytest.approx(sum(r["wall_share"] for r in rows) / 3, rel=1e-12)
        for name in ("L", "S"):
            cells = [r["panels"][name] for r in rows]
            agg = rep.aggregates["panels"][name]
            assert agg["mean_practical_share"] == pytest.approx(sum(c["practical_share"] for c in cells) / 3)
            assert agg["total_modules"] == sum(c["n_modules"] for c in cells)
            assert agg["zero_panel_count"] == sum(c["n_modules"] == 0 for c in cells)
        for r in rows:
            for c in r["panels"].values():
                assert c["practical_share"] <= r["f_pv"]
                assert c["kwh_yr"] == pytest.approx(c["kwp"] * 650.0, rel=1e-12)

    def test_empty_manifest(self, caplog):
        rep = run_batch([], load_config(None, OFFLINE))
        assert rep.rows == [] and rep.aggregates["n_facades"] == 0
        assert rep.aggregates["mean_theoretical_share"] is None
        assert "no facades" in caplog.text

    def test_failure_isolated(self, tmp_path):
        m = three_facades(tmp_path)
        (tmp_path / "1.png").write_bytes(b"corrupt")
        rep = run_batch(parse_manifest(m), load_config(None, OFFLINE))
        statuses = {r["id"]: r["status"] for r in rep.rows}
        assert statuses["c1"] == "error"
        assert statuses["c0"] != "error" and statuses["c2"] != "error"
        assert rep.aggregates["n_failed"] == 1

    def test_missing_azimuth_skips_yield(self, tmp_path):
        write_png(tmp_path / "a.png", np.full((60, 60), CLASS_IDS["facade"]))
        (tmp_path / "m.csv").write_text("id,image,width_m,height_m,azimuth_deg,lat,lon\na,a.png,3,3,,47,8\n")
        rep = run_batch(parse_manifest(tmp_path / "m.csv"), load_config(None, OFFLINE))
        row = rep.rows[0]
        assert row["panels"]["L"]["kwh_yr"] is None and row["panels"]["L"]["n_modules"] > 0
        assert any(w.startswith("no-azimuth") for w in row["warnings"])

    def test_workers_do_not_change_result(self, demo):
        recs = parse_manifest(demo)
        one = run_batch(recs, load_config(None, {**OFFLINE, "workers": 1}))
        four = run_batch(recs, load_config(None, {**OFFLINE, "workers": 4}))
        one.meta, four.meta = {}, {}
        assert one.to_json() == four.to_json()

    def test_service_failure_degrades_to_null(self, demo):
        client = PVGISClient(session=FakeSession(requests.ConnectionError("down")), sleep=lambda s: None, retries=1)
        rep = run_batch(parse_manifest(demo), load_config(), client=client)
        for row in rep.rows:
            assert all(c["kwh_yr"] is None for c in row["panels"].values())
            assert any("ServiceUnreachable" in w for w in row["warnings"])
        assert rep.aggregates["panels"]["L"]["total_kwh_yr"] is None

    def test_service_success(self, demo, pvcalc_fixture):
        client = PVGISClient(session=FakeSession(FakeResponse(200, pvcalc_fixture)), sleep=lambda s: None)
        rep = run_batch(parse_manifest(demo), load_config(), client=client)
        row = rep.rows[0]
        assert row["y_source"] == "service"
        assert row["panels"]["L"]["kwh_yr"] == pytest.approx(row["panels"]["L"]["kwp"] * 1821.96, rel=1e-12)

    def test_ground_truth_metrics(self, tmp_path):
        arr = np.full((40, 40), CLASS_IDS["facade"])
        write_png(tmp_path / "p.png", arr)
        write_png(tmp_path / "g.png", arr)
        (tmp_path / "m.csv").write_text("id,image,width_m,height_m,gt_image\na,p.png,2,2,g.png\n")
        row = run_batch(parse_manifest(tmp_path / "m.csv"), load_config(None, OFFLINE)).rows[0]
        assert row["gt"] == {"wall_share": 1.0, "miou": 1.0, "pixel_accuracy": 1.0}


class TestExport:
    def test_json_round_trip(self, demo, tmp_path):
        rep = run_batch(parse_manifest(demo), load_config(None, OFFLINE))
        path = pipeline.export_report(rep, tmp_path / "r.json")
        back = pipeline.BatchReport.from_json(path.read_text())
        assert back.rows == rep.rows and back.aggregates == rep.aggregates and back.meta == rep.meta
        assert json.loads(path.read_text())["schema_version"] == pipeline.SCHEMA_VERSION

    def test_csv_rows_and_values(self, demo, tmp_path):
        rep = run_batch(parse_manifest(demo), load_config(None, OFFLINE))
        text = pipeline.export_report(rep, tmp_path / "r.csv").read_text()
        assert len(text.strip().splitlines()) == len(rep.rows) + 1
        for row, flat in zip(rep.rows, pipeline.read_report_csv(text)):
            assert math.isclose(flat["f_pv"], row["f_pv"], rel_tol=1e-9)
            assert math.isclose(flat["L_kwp"], row["panels"]["L"]["kwp"], rel_tol=1e-9, abs_tol=0)

    def test_csv_null_energy_is_empty(self, demo, tmp_path):
        client = PVGISClient(session=FakeSession(requests.ConnectionError("down")), sleep=lambda s: None, retries=0)
        rep = run_batch(parse_manifest(demo), load_config(), client=client)
        text = pipeline.report_csv(rep)
        header = text.splitlines()[0].split(",")
        col = header.index("L_kwh_yr")
        for line in text.splitlines()[1:]:
            import csv
            assert next(csv.reader([line]))[col] == ""
        assert all(r["L_kwh_yr"] is None for r in pipeline.read_report_csv(text))

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            pipeline.export_report(pipeline.BatchReport([], {}, {}), tmp_path / "r.xml")


class TestRender:
    def test_zero_panel_overlay_has_no_grid(self):
        lmap = synthetic.pillar_strips()
        lay = best_layout_in_rect(PixelRect(0, 0, 10, 200), PANEL_L, 0.02, ScaleFactors(20, 20))
        fig = overlay_figure(lmap, np.ones(lmap.shape, bool), lay)
        gids = [p.get_gid() for p in fig.axes[0].patches]
        assert "panel" not in gids and gids == ["max-rect"]

    def test_two_panel_outlines_centered(self):
        lmap = lm(np.full((150, 200), CLASS_IDS["facade"]))
        lay = best_layout_in_rect(PixelRect(0, 0, 200, 150), PANEL_L, 0.02, ScaleFactors(100, 100))
        fig = overlay_figure(lmap, None, lay)
        panels = [p for p in fig.axes[0].patches if p.get_gid() == "panel"]
        assert len(panels) == 2
        xy = sorted((p.get_x() + 0.5, p.get_y() + 0.5) for p in panels)
        assert xy == [(5, 10), (101, 10)]  # (200 - 190) // 2, (150 - 130) // 2

    def test_byte_identical(self, tmp_path):
        lmap = synthetic.facade_label_map(synthetic.FacadeSpec(blank_m=3), 20.0)
        lay = best_layout_in_rect(PixelRect(200, 0, 40, 180), PANEL_L, 0.02, ScaleFactors(20, 20))
        a = render_overlay(tmp_path / "a.png", lmap, None, lay, title="x").read_bytes()
        b = render_overlay(tmp_path / "b.png", lmap, None, lay, title="x").read_bytes()
        assert a == b

    def test_batch_writes_overlays(self, demo, tmp_path):
        rep = run_batch(parse_manifest(demo), load_config(None, OFFLINE), out_dir=tmp_path)
        paths = pipeline.write_outputs(rep, tmp_path)
        assert sorted(p.name for p in (tmp_path / "overlays").iterdir()) == [f"{r['id']}.png" for r in rep.rows]
        assert paths["shares"].is_file() and paths["csv"].is_file()


class TestEvalManifest:
    def test_pairs(self, tmp_path):
        (tmp_path / "e.csv").write_text("pred,gt\np/a.png,g/a.png\n\np/b.png, g/b.png\n")
        pairs = pipeline.parse_eval_manifest(tmp_path / "e.csv")
        assert [(n, p.name, g.parent.name) for n, p, g in pairs] == [("a", "a.png", "g"), ("b", "b.png", "g")]

    def test_malformed(self, tmp_path):
        (tmp_path / "e.csv").write_text("p.png\n")
        with pytest.raises(ManifestParseError):
            pipeline.parse_eval_manifest(tmp_path / "e.csv")
