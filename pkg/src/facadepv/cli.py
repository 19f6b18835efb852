"""Command line entry point: ``facadepv run | eval | render``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics, pipeline, raster
from .geometry import FacadeGeometry, InvalidGeometry
from .layout import best_layout, scale_factors
from .render import render_overlay
from .suitability import build_pv_mask

logger = logging.getLogger("facadepv")

EXIT_OK = 0
EXIT_CONFIG = 2


def _overrides(args: argparse.Namespace) -> dict:
    panels = getattr(args, "panel", None)
    out = {
        "panels": panels,
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "yield.offline": True if getattr(args, "offline", False) else None,
        "yield.offline_y_spec": getattr(args, "y_spec", None),
    }
    if getattr(args, "no_render", False):
        out["render"] = False
    return out


def cmd_run(args: argparse.Namespace) -> int:
    cfg = pipeline.load_config(args.config, _overrides(args))
    records = pipeline.parse_manifest(args.manifest)
    out = Path(args.out)
    report = pipeline.run_batch(records, cfg, out_dir=out)
    paths = pipeline.write_outputs(report, out, figures=cfg.render)
    for row in report.rows:
        for w in row["warnings"]:
            logger.warning("%s: %s", row["id"], w)
        if row["status"] == pipeline.STATUS_ERROR:
            logger.error("%s: %s", row["id"], row["error"])
    agg = report.aggregates
    print(f"facades: {agg['n_facades']} processed: {agg['n_processed']} failed: {agg['n_failed']}")
    for name, p in agg["panels"].items():
        share = p["mean_practical_share"]
        print(f"  panel {name}: modules={p['total_modules']} kWp={p['total_kwp']:.2f} "
              f"mean practical share={'-' if share is None else f'{100 * share:.2f}%'} "
              f"zero-panel facades={p['zero_panel_count']}")
    print(f"wrote {paths['json']}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    mapping = raster.read_mapping_file(args.mapping) if args.mapping else None
    pairs = pipeline.parse_eval_manifest(args.manifest)
    report, shares = pipeline.run_eval(pairs, mapping, baseline=args.baseline, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = report.to_dict()
    data["share_errors"] = shares.to_dict()
    data["baseline"] = args.baseline
    (out / "metrics.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    label = {None: "prediction", "uniform": "Baseline - Uniform Random",
             "majority": "Baseline - Majority Class"}[args.baseline]
    table = metrics.format_table({label: report})
    (out / "metrics.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    cfg = pipeline.load_config(args.config, _overrides(args))
    geom = FacadeGeometry(args.width_m, args.height_m, args.azimuth_deg)
    lm = raster.load_label_map(args.image, cfg.class_mapping)
    suit = build_pv_mask(lm, cfg.suitability, geom)
    sf = scale_factors(geom, lm.width_px, lm.height_px)
    layouts = best_layout(suit.mask, cfg.selected, cfg.gap_m, sf)
    lay = layouts.get(cfg.overlay_panel) or next(iter(layouts.values()))
    path = render_overlay(args.out, lm, suit.mask, lay, title=f"{lay.panel.name}: {lay.n_modules} modules")
    print(f"f_PV={suit.pv_fraction:.4f} A_PV={suit.pv_area_m2:.2f} m2 "
          f"{lay.panel.name}: {lay.n_x}x{lay.n_y} {lay.orientation} -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facadepv", description="Facade PV suitability, layout and yield")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a facade manifest")
    run.add_argument("manifest")
    run.add_argument("--config")
    run.add_argument("--out", default="out")
    run.add_argument("--offline", action="store_true", help="never contact the irradiance service")
    run.add_argument("--y-spec", type=float, help="offline specific yield, kWh/kWp/yr")
    run.add_argument("--panel", choices=("L", "S", "both"))
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--no-render", action="store_true")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="segmentation metrics over pred,gt pairs")
    ev.add_argument("manifest")
    ev.add_argument("--out", default="out")
    ev.add_argument("--mapping", help="value = class-name mapping file")
    ev.add_argument("--baseline", choices=("uniform", "majority"))
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_eval)

    rd = sub.add_parser("render", help="overlay for a single facade")
    rd.add_argument("image")
    rd.add_argument("--width-m", type=float, required=True)
    rd.add_argument("--height-m", type=float, required=True)
    rd.add_argument("--azimuth-deg", type=float)
    rd.add_argument("--config")
    rd.add_argument("--panel", choices=("L", "S"))
    rd.add_argument("--out", required=True)
    rd.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (pipeline.ConfigError, pipeline.ManifestParseError, InvalidGeometry) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (raster.RasterError, metrics.NoEvaluatedPixels, metrics.EmptyInput,
            metrics.DimensionMismatch) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
