"""Batch orchestration: manifest in, per-facade rows and aggregates out."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import metrics, pvgis, raster
from .energy import annual_energy, peak_capacity
from .geometry import FacadeGeometry
from .layout import DEFAULT_CATALOG, DEFAULT_GAP_M, PanelSpec, best_layout, largest_rectangle, scale_factors
from .raster import LabelMap
from .render import render_overlay, save_figure, shares_figure
from .suitability import SuitabilityConfig, build_pv_mask, class_group_shares, facade_surface

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
MANIFEST_COLUMNS = ("id", "image", "width_m", "height_m", "azimuth_deg", "lat", "lon", "gt_image")
REQUIRED_COLUMNS = ("id", "image", "width_m", "height_m")
HIGH_FPV = 0.30

STATUS_OK = "ok"
STATUS_INFEASIBLE = "layout-infeasible"
STATUS_ERROR = "error"


class ConfigError(ValueError):
    pass


class ManifestParseError(ValueError):
    pass


@dataclass(frozen=True)
class YieldConfig:
    offline: bool = False
    offline_y_spec: float | None = None
    endpoint: str | None = None
    cache_dir: str | None = None
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 30.0
    max_in_flight: int = 2


@dataclass(frozen=True)
class PipelineConfig:
    suitability: SuitabilityConfig = field(default_factory=SuitabilityConfig)
    catalog: tuple[PanelSpec, ...] = DEFAULT_CATALOG
    panels: tuple[str, ...] = ("L", "S")
    gap_m: float = DEFAULT_GAP_M
    yield_: YieldConfig = field(default_factory=YieldConfig)
    class_mapping: Mapping[int, int] | None = None
    workers: int = 1
    seed: int = 0
    render: bool = True
    overlay_panel: str = "L"

    def __post_init__(self) -> None:
        names = [p.name for p in self.catalog]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate panel names in catalog")
        for p in self.panels:
            if p not in names:
                raise ConfigError(f"panel {p!r} not in catalog {names}")
        if not self.panels:
            raise ConfigError("no panels selected")
        if self.gap_m < 0:
            raise ConfigError("gap_m must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def selected(self) -> tuple[PanelSpec, ...]:
        by_name = {p.name: p for p in self.catalog}
        return tuple(by_name[n] for n in self.panels)

    def to_dict(self) -> dict[str, Any]:
        return {
            "suitability": self.suitability.to_dict(),
            "catalog": [
                {"name": p.name, "width_mm": p.width_mm, "height_mm": p.height_mm, "rating_wp": p.rating_wp}
                for p in self.catalog
            ],
            "panels": list(self.panels),
            "gap_m": self.gap_m,
            "yield": {
                "offline": self.yield_.offline,
                "offline_y_spec": self.yield_.offline_y_spec,
                "endpoint": self.yield_.endpoint,
            },
            "seed": self.seed,
        }


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Defaults, then the JSON config file, then ``overrides`` (CLI flags)."""
    data: dict[str, Any] = {}
    base_dir = Path(".")
    if path is not None:
        path = Path(path)
        base_dir = path.parent
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("yield."):
            data.setdefault("yield", {})[key.split(".", 1)[1]] = value
        else:
            data[key] = value
    return config_from_dict(data, base_dir)


def config_from_dict(data: Mapping[str, Any], base_dir: Path = Path(".")) -> PipelineConfig:
    data = dict(data)
    allowed = {"suitability", "catalog", "panels", "gap_m", "yield", "class_mapping", "workers", "seed",
               "render", "overlay_panel"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        kwargs: dict[str, Any] = {}
        if "catalog" in data:
            kwargs["catalog"] = tuple(PanelSpec(**p) for p in data["catalog"])
        catalog = kwargs.get("catalog", DEFAULT_CATALOG)
        if "panels" in data:
            panels = data["panels"]
            kwargs["panels"] = tuple(p.name for p in catalog) if panels == "both" else tuple(
                [panels] if isinstance(panels, str) else panels
            )
        gap = float(data.get("gap_m", DEFAULT_GAP_M))
        kwargs["gap_m"] = gap
        suit = SuitabilityConfig.from_dict(data.get("suitability", {}), {p.name: p for p in catalog})
        # one gap for grid fitting and the small-component threshold
        kwargs["suitability"] = replace(suit, gap_m=gap)
        if "yield" in data:
            kwargs["yield_"] = YieldConfig(**data["yield"])
        mapping = data.get("class_mapping")
        if isinstance(mapping, str):
            kwargs["class_mapping"] = raster.read_mapping_file(base_dir / mapping)
        elif isinstance(mapping, Mapping):
            kwargs["class_mapping"] = {int(k): raster.class_id(v) for k, v in mapping.items()}
        for key in ("workers", "seed"):
            if key in data:
                kwargs[key] = int(data[key])
        if "render" in data:
            kwargs["render"] = bool(data["render"])
        if "overlay_panel" in data:
            kwargs["overlay_panel"] = data["overlay_panel"]
        return PipelineConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


# -- manifest ------------------------------------------------------------------


@dataclass(frozen=True)
class FacadeRecord:
    id: str
    image: str
    label_map_path: Path
    geometry: FacadeGeometry | None
    gt_image: str | None = None
    gt_path: Path | None = None
    geometry_error: str | None = None


def _opt_float(row: Mapping[str, str], key: str) -> float | None:
    value = (row.get(key) or "").strip()
    return float(value) if value else None


def parse_manifest(path: str | Path) -> list[FacadeRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest_text(text, path.parent)


def parse_manifest_text(text: str, base_dir: Path = Path(".")) -> list[FacadeRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    fields = [f.strip() for f in reader.fieldnames]
    missing = [c for c in REQUIRED_COLUMNS if c not in fields]
    if missing:
        raise ManifestParseError(f"manifest lacks columns {missing}")
    extra = [c for c in fields if c not in MANIFEST_COLUMNS]
    if extra:
        raise ManifestParseError(f"unknown manifest columns {extra}")
    records: list[FacadeRecord] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(reader, 2):
        row = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
        fid = row.get("id", "")
        if not fid:
            raise ManifestParseError(f"line {lineno}: empty id")
        if fid in seen:
            raise ManifestParseError(f"line {lineno}: duplicate id {fid!r}")
        seen.add(fid)
        if not row.get("image"):
            raise ManifestParseError(f"line {lineno}: empty image path")
        geom, geom_err = None, None
        try:
            width, height = _opt_float(row, "width_m"), _opt_float(row, "height_m")
            if width is None or height is None:
                raise ValueError("width_m and height_m are required")
            geom = FacadeGeometry(width, height, _opt_float(row, "azimuth_deg"), _opt_float(row, "lat"),
                                  _opt_float(row, "lon"))
        except ValueError as exc:
            # bad geometry fails the row, not the batch
            geom_err = str(exc)
        gt = row.get("gt_image") or None
        records.append(
            FacadeRecord(
                id=fid,
                image=row["image"],
                label_map_path=(base_dir / row["image"]).resolve(),
                geometry=geom,
                gt_image=gt,
                gt_path=(base_dir / gt).resolve() if gt else None,
                geometry_error=geom_err,
            )
        )
    return records


# -- report --------------------------------------------------------------------


@dataclass
class BatchReport:
    rows: list[dict[str, Any]]
    aggregates: dict[str, Any]
    meta: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "meta": self.meta, "aggregates": self.aggregates,
                "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BatchReport":
        data = json.loads(text)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
        return cls(rows=data["rows"], aggregates=data["aggregates"], meta=data["meta"])


def _mean(values: Sequence[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def compute_aggregates(rows: Sequence[Mapping[str, Any]], panels: Sequence[str]) -> dict[str, Any]:
    done = [r for r in rows if r["status"] != STATUS_ERROR]
    agg: dict[str, Any] = {
        "n_facades": len(rows),
        "n_processed": len(done),
        "n_failed": len(rows) - len(done),
        "mean_wall_share": _mean([r["wall_share"] for r in done if r["wall_share"] is not None]),
        "mean_theoretical_share": _mean([r["f_pv"] for r in done]),
        "panels": {},
    }
    for name in panels:
        cells = [r["panels"][name] for r in done]
        kwh = [c["kwh_yr"] for c in cells if c["kwh_yr"] is not None]
        agg["panels"][name] = {
            "mean_practical_share": _mean([c["practical_share"] for c in cells]),
            "zero_panel_count": sum(1 for c in cells if c["n_modules"] == 0),
            "zero_panel_high_fpv_count": sum(
                1 for r, c in zip(done, cells) if c["n_modules"] == 0 and r["f_pv"] > HIGH_FPV
            ),
            "total_modules": sum(c["n_modules"] for c in cells),
            "total_kwp": math.fsum(c["kwp"] for c in cells),
            "total_kwh_yr": math.fsum(kwh) if kwh else None,
        }
    return agg


def _error_row(rec: FacadeRecord, message: str, panels: Sequence[str]) -> dict[str, Any]:
    return {
        "id": rec.id,
        "image": rec.image,
        "status": STATUS_ERROR,
        "error": message,
        "warnings": [],
        "panels": {},
    }


class YieldResolver:
    """Per-facade specific yield with offline fallback; never raises."""

    def __init__(self, cfg: YieldConfig, client: pvgis.PVGISClient | None = None):
        self.cfg = cfg
        self.client = client
        if client is None and not cfg.offline:
            kw: dict[str, Any] = dict(retries=cfg.retries, backoff_s=cfg.backoff_s, timeout_s=cfg.timeout_s,
                                      max_in_flight=cfg.max_in_flight)
            if cfg.endpoint:
                kw["endpoint"] = cfg.endpoint
            if cfg.cache_dir:
                kw["cache_dir"] = Path(cfg.cache_dir)
            self.client = pvgis.PVGISClient.from_env(**kw)

    def resolve(self, geom: FacadeGeometry, warnings: list[str]):
        if geom.azimuth_deg is None:
            warnings.append("no-azimuth: yield skipped")
            return None
        if geom.latitude_deg is None or geom.longitude_deg is None:
            warnings.append("no-location: yield skipped")
            return None
        if self.cfg.offline:
            y = pvgis.fetch_specific_yield(
                pvgis.YieldInputs(geom.latitude_deg, geom.longitude_deg, geom.azimuth_deg),
                offline=True, offline_y_spec=self.cfg.offline_y_spec,
            )
            if y is None:
                warnings.append("offline-no-yield: no offline specific yield configured")
            return y
        inputs = pvgis.YieldInputs(geom.latitude_deg, geom.longitude_deg, geom.azimuth_deg)
        try:
            return pvgis.fetch_specific_yield(inputs, 1.0, client=self.client)
        except pvgis.IrradianceServiceError as exc:
            kind = type(exc).__name__
            logger.warning("yield lookup failed (%s): %s", kind, exc)
            warnings.append(f"yield-unavailable: {kind}: {exc}")
            if self.cfg.offline_y_spec is not None:
                warnings.append("yield-fallback: offline specific yield used")
                return pvgis.offline_yield(self.cfg.offline_y_spec)
            return None


@dataclass
class FacadeResult:
    row: dict[str, Any]
    label_map: LabelMap | None = None
    mask: Any = None
    layouts: dict = field(default_factory=dict)


def process_facade(rec: FacadeRecord, cfg: PipelineConfig, yields: YieldResolver) -> FacadeResult:
    if rec.geometry is None:
        return FacadeResult(_error_row(rec, f"InvalidGeometry: {rec.geometry_error}", cfg.panels))
    geom = rec.geometry
    try:
        lm = raster.load_label_map(rec.label_map_path, cfg.class_mapping)
        suit = build_pv_mask(lm, cfg.suitability, geom)
    except (raster.RasterError, ValueError) as exc:
        return FacadeResult(_error_row(rec, f"{type(exc).__name__}: {exc}", cfg.panels))

    warnings: list[str] = list(suit.flags)
    sf = scale_factors(geom, lm.width_px, lm.height_px)
    rect = largest_rectangle(suit.mask)
    layouts = best_layout(suit.mask, cfg.selected, cfg.gap_m, sf, rect=rect)
    surface = facade_surface(lm)
    wall_share = class_group_shares(lm, surface)["wall"] if surface.any() else None

    y = yields.resolve(geom, warnings)
    panels: dict[str, Any] = {}
    for name, lay in layouts.items():
        cap = peak_capacity(lay.n_modules, lay.panel)
        energy = annual_energy(cap, y) if y is not None else None
        denom = suit.facade_denominator_px
        panels[name] = {
            "orientation": lay.orientation,
            "n_x": lay.n_x,
            "n_y": lay.n_y,
            "n_modules": lay.n_modules,
            "kwp": cap.p_dc_kwp,
            "kwh_yr": None if energy is None else energy.e_ann_kwh,
            "placed_area_px": lay.placed_area_px,
            "practical_share": lay.placed_area_px / denom if denom else 0.0,
            "installed_area_m2": lay.n_modules * lay.panel.area_m2,
            "leftover_area_px": lay.leftover_area_px,
        }
    infeasible = all(p["n_modules"] == 0 for p in panels.values())
    row: dict[str, Any] = {
        "id": rec.id,
        "image": rec.image,
        "status": STATUS_INFEASIBLE if infeasible else STATUS_OK,
        "error": None,
        "warnings": warnings,
        "width_m": geom.width_m,
        "height_m": geom.height_m,
        "azimuth_deg": geom.azimuth_deg,
        "lat": geom.latitude_deg,
        "lon": geom.longitude_deg,
        "width_px": lm.width_px,
        "height_px": lm.height_px,
        "scale_px_per_m": [sf.s_x, sf.s_y],
        "facade_px": suit.facade_denominator_px,
        "pv_px": suit.popcount,
        "f_pv": suit.pv_fraction,
        "a_pv_m2": suit.pv_area_m2,
        "wall_share": wall_share,
        "exclusion_log": [list(e) for e in suit.exclusion_log],
        "max_rect": {"x": rect.x, "y": rect.y, "w": rect.w, "h": rect.h},
        "y_spec_kwh_per_kwp_yr": None if y is None else y.y_spec_kwh_per_kwp_yr,
        "y_source": None if y is None else y.source,
        "panels": panels,
    }
    if rec.gt_path is not None:
        try:
            gt = raster.load_label_map(rec.gt_path, cfg.class_mapping)
            cm = metrics.confusion(lm, gt)
            gt_surface = facade_surface(gt)
            row["gt"] = {
                "wall_share": class_group_shares(gt, gt_surface)["wall"] if gt_surface.any() else None,
                "miou": metrics.miou(cm),
                "pixel_accuracy": metrics.pixel_accuracy(cm),
            }
        except (raster.RasterError, ValueError) as exc:
            warnings.append(f"gt-unavailable: {type(exc).__name__}: {exc}")
    return FacadeResult(row, lm, suit.mask, layouts)


def run_batch(
    records: Sequence[FacadeRecord],
    cfg: PipelineConfig,
    out_dir: str | Path | None = None,
    client: pvgis.PVGISClient | None = None,
) -> BatchReport:
    """Process every record; a failing record only marks its own row."""
    if not records:
        logger.warning("manifest has no facades; writing an empty report")
    yields = YieldResolver(cfg.yield_, client)
    overlay_dir = Path(out_dir) / "overlays" if out_dir is not None and cfg.render else None

    def work(rec: FacadeRecord) -> dict[str, Any]:
        try:
            res = process_facade(rec, cfg, yields)
        except Exception as exc:  # isolate anything unexpected to this row
            logger.exception("facade %s failed", rec.id)
            return _error_row(rec, f"{type(exc).__name__}: {exc}", cfg.panels)
        if overlay_dir is not None and res.label_map is not None:
            lay = res.layouts.get(cfg.overlay_panel) or next(iter(res.layouts.values()))
            try:
                render_overlay(overlay_dir / f"{rec.id}.png", res.label_map, res.mask, lay,
                               title=f"{rec.id}  {lay.panel.name}: {lay.n_modules} modules")
            except OSError as exc:
                res.row["warnings"].append(f"render-failed: {exc}")
        return res.row

    if cfg.workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(work, records))
    else:
        rows = [work(r) for r in records]
    rows.sort(key=lambda r: r["id"])
    meta = {"config": cfg.to_dict(), "panels": list(cfg.panels), "high_fpv_threshold": HIGH_FPV}
    return BatchReport(rows=rows, aggregates=compute_aggregates(rows, cfg.panels), meta=meta)


# -- export --------------------------------------------------------------------

CSV_BASE = ("id", "status", "error", "warnings", "width_m", "height_m", "azimuth_deg", "lat", "lon",
            "facade_px", "pv_px", "f_pv", "a_pv_m2", "wall_share", "y_spec_kwh_per_kwp_yr", "y_source")
CSV_PANEL = ("orientation", "n_modules", "kwp", "kwh_yr", "practical_share", "installed_area_m2")


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "; ".join(str(v) for v in value)
    return str(value)


def report_csv(report: BatchReport) -> str:
    panels = report.meta.get("panels", [])
    header = list(CSV_BASE) + [f"{p}_{k}" for p in panels for k in CSV_PANEL]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in report.rows:
        cells = [_csv_cell(row.get(k)) for k in CSV_BASE]
        for p in panels:
            cell = row.get("panels", {}).get(p, {})
            cells += [_csv_cell(cell.get(k)) for k in CSV_PANEL]
        writer.writerow(cells)
    return buf.getvalue()


def read_report_csv(text: str) -> list[dict[str, Any]]:
    """Parse a CSV export; numeric columns become floats, empty cells ``None``."""
    text_cols = {"id", "status", "error", "warnings", "y_source"}
    out = []
    for raw in csv.DictReader(io.StringIO(text)):
        row: dict[str, Any] = {}
        for k, v in raw.items():
            if v == "":
                row[k] = None
            elif k in text_cols or k.endswith("_orientation"):
                row[k] = v
            else:
                row[k] = float(v)
        out.append(row)
    return out


def export_report(report: BatchReport, path: str | Path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def write_outputs(report: BatchReport, out_dir: str | Path, figures: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "json": export_report(report, out / "report.json"),
        "csv": export_report(report, out / "report.csv"),
    }
    if figures:
        paths["shares"] = save_figure(shares_figure(report.rows, report.meta.get("panels", [])),
                                      out / "figures" / "shares.png")
    return paths


# -- evaluation ----------------------------------------------------------------


def parse_eval_manifest(path: str | Path) -> list[tuple[str, Path, Path]]:
    """``pred,gt`` path pairs, one per line; a ``pred,gt`` header is optional."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from exc
    pairs = []
    for lineno, row in enumerate(csv.reader(lines), 1):
        cells = [c.strip() for c in row]
        if not cells or not any(cells) or cells[0].startswith("#"):
            continue
        if lineno == 1 and [c.lower() for c in cells[:2]] == ["pred", "gt"]:
            continue
        if len(cells) != 2 or not all(cells):
            raise ManifestParseError(f"{path}:{lineno}: expected 'pred,gt'")
        pred, gt = (path.parent / c for c in cells)
        pairs.append((Path(cells[0]).stem, pred, gt))
    return pairs


def run_eval(
    pairs: Sequence[tuple[str, Path, Path]],
    mapping: Mapping[int, int] | None = None,
    baseline: str | None = None,
    seed: int = 0,
) -> tuple[metrics.MetricsReport, metrics.ShareErrorReport]:
    preds, gts, names = [], [], []
    for k, (name, pred_path, gt_path) in enumerate(pairs):
        gt = raster.load_label_map(gt_path, mapping)
        if baseline is None:
            pred = raster.load_label_map(pred_path, mapping)
        elif baseline == "uniform":
            pred = metrics.baseline_uniform_random(gt.shape, seed=seed + k)
        elif baseline == "majority":
            pred = metrics.baseline_majority(gt.shape)
        else:
            raise ValueError(f"unknown baseline {baseline!r}")
        names.append(name)
        preds.append(pred)
        gts.append(gt)
    report = metrics.evaluate(zip(names, preds, gts))
    return report, metrics.share_errors(preds, gts)
