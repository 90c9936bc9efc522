"""Command-line front end: extract, gen, eval, pipeline.

Output JSON is canonical — keys sorted, floats at 6 significant digits —
so identical inputs and configuration produce byte-identical files.
Exit codes: 0 success, 1 I/O or usage error, 2 nothing extracted or
evaluated.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import chartgen, evalstats, imgproc, pipeline, textscan
from .config import Config, ConfigError, load_config

GATE_NOTE = (
    "panel gating is structural (axes corner + at least two bars), "
    "not a learned image classifier"
)


def _six_sig(obj):
    """Copy of a JSON-able tree with every float at 6 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _six_sig(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_six_sig(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_six_sig(obj), sort_keys=True, indent=1) + "\n"


def _chart_dict(panel: pipeline.PanelResult, config_hash: str) -> dict:
    out = panel.model.to_dict()
    out["provenance"] = {
        "config_hash": config_hash,
        "gated_by": panel.gated_by,
        "warnings": list(panel.warnings),
    }
    return out


def _chart_csv(chart: dict) -> str:
    lines = ["category,group,value,value_source"]
    for b in chart["bars"]:
        v = "" if b["value"] is None else f"{b['value']:.6g}"
        lines.append(f"{b['category']},{b['group']},{v},{b['value_source']}")
    return "\n".join(lines) + "\n"


def _collect_pngs(paths: list[str]) -> list[Path]:
    out: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.png")))
        else:
            out.append(path)
    return out


def _load_config(path: str | None) -> Config:
    return load_config(path) if path else Config()


def _extract_one(path_str: str, config: Config, ocr_cmd: str | None):
    """Worker for per-file fan-out; must stay top-level for pickling."""
    engine = textscan.engine_from_env(ocr_cmd)
    img = chartgen.load_png(path_str)
    t0 = time.perf_counter()
    page = pipeline.extract_page(img, engine=engine, config=config)
    return path_str, page, time.perf_counter() - t0


def _write_debug(debug_dir: Path, stem: str, img) -> None:
    gray = imgproc.to_grayscale(img)
    binary, _ = imgproc.otsu_binarize(gray)
    edges = imgproc.canny(imgproc.gaussian_blur(gray, 5))
    debug_dir.mkdir(parents=True, exist_ok=True)
    chartgen.save_png(gray, debug_dir / f"{stem}.gray.png")
    chartgen.save_png((binary * 255).astype("uint8"), debug_dir / f"{stem}.binary.png")
    chartgen.save_png((edges * 255).astype("uint8"), debug_dir / f"{stem}.edges.png")


def run_extract(args) -> int:
    try:
        config = _load_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    inputs = _collect_pngs(args.inputs)
    if not inputs:
        print("error: no input files", file=sys.stderr)
        return 1
    for p in inputs:
        if not p.is_file():
            print(f"error: cannot read {p}", file=sys.stderr)
            return 1

    jobs = max(1, args.jobs)
    results = []
    try:
        if jobs == 1:
            for p in inputs:
                results.append(_extract_one(str(p), config, args.ocr_cmd))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                futs = [
                    ex.submit(_extract_one, str(p), config, args.ocr_cmd)
                    for p in inputs
                ]
                results = [f.result() for f in futs]
    except (OSError, ValueError, textscan.OcrEngineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    manifest = {"config_hash": config.hash, "gate": GATE_NOTE, "inputs": []}
    extracted = 0
    for path_str, page, elapsed in results:
        path = Path(path_str)
        outcomes = []
        kept = [p for p in page.panels if p.model is not None]
        for i, panel in enumerate(page.panels):
            if panel.model is None:
                outcomes.append(f"gated-out: {panel.gated_by}")
                continue
            outcomes.append("extracted")
            chart = _chart_dict(panel, config.hash)
            suffix = ".chart.json" if len(kept) == 1 else f".p{i}.chart.json"
            out_path = path.with_name(path.stem + suffix)
            out_path.write_text(canonical_json(chart))
            if args.csv:
                out_path.with_suffix(".csv").write_text(_chart_csv(chart))
            extracted += 1
        if args.debug_dir:
            _write_debug(Path(args.debug_dir), path.stem, chartgen.load_png(path))
        manifest["inputs"].append(
            {"path": path_str, "outcomes": outcomes, "seconds": round(elapsed, 3)}
        )
    print(json.dumps(manifest, indent=1))
    return 0 if extracted else 2


def run_gen(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        print(f"error: cannot write to {out_dir}: {e}", file=sys.stderr)
        return 1
    chartgen.generate_corpus(args.n, seed=args.seed, out_dir=out_dir)
    for i in range(args.n):
        print(f"{out_dir / f'{i:04d}.png'}\t{out_dir / f'{i:04d}.truth.json'}")
    return 0


def _eval_dirs(pred_dir: Path, truth_dir: Path, loa_z: float) -> int:
    truths = {p.name[: -len(".truth.json")]: p for p in sorted(truth_dir.glob("*.truth.json"))}
    preds = {p.name[: -len(".chart.json")]: p for p in sorted(pred_dir.glob("*.chart.json"))}
    common = sorted(set(truths) & set(preds))
    for stem in sorted(set(truths) ^ set(preds)):
        side = "prediction" if stem in truths else "truth"
        print(f"warning: no {side} file for {stem}, skipped", file=sys.stderr)
    if not common:
        print("error: no overlapping prediction/truth stems", file=sys.stderr)
        return 2

    rep = None
    for stem in common:
        truth = json.loads(truths[stem].read_text())
        pred = json.loads(preds[stem].read_text())
        r = evalstats.match(evalstats.truth_to_model(truth), pred)
        if rep is None:
            rep = r
        else:
            rep.merge(r)
    ba = evalstats.bland_altman(rep.pairs, z=loa_z) if rep.pairs else None

    report = evalstats.report_dict(rep, ba)
    report["n_charts"] = len(common)
    report["gate"] = GATE_NOTE
    (pred_dir / "report.json").write_text(canonical_json(report))

    text = evalstats.format_table(rep)
    if ba is not None:
        text += (
            f"\n\nBLAND-ALTMAN (n={ba.n}, z={ba.z:g})"
            f"\nbias {ba.bias:.6g}  sd {ba.sd:.6g}"
            f"\nlimits of agreement [{ba.loa_low:.6g}, {ba.loa_high:.6g}]"
            f"\nwithin limits {ba.pct_within:.6g}%"
        )
    text += f"\n\nnote: {GATE_NOTE}\n"
    (pred_dir / "report.txt").write_text(text)
    if ba is not None:
        (pred_dir / "bland_altman.csv").write_text(evalstats.scatter_csv(ba) + "\n")
    print(text)
    return 0


def run_eval(args) -> int:
    pred_dir, truth_dir = Path(args.pred_dir), Path(args.truth_dir)
    for d in (pred_dir, truth_dir):
        if not d.is_dir():
            print(f"error: not a directory: {d}", file=sys.stderr)
            return 1
    return _eval_dirs(pred_dir, truth_dir, args.loa_z)


def run_pipeline(args) -> int:
    rc = run_extract(args)
    if rc != 0:
        return rc
    target = Path(args.inputs[0])
    work_dir = target if target.is_dir() else target.parent
    if not any(work_dir.glob("*.truth.json")):
        return 0  # extraction only; nothing to evaluate against
    return _eval_dirs(work_dir, work_dir, args.loa_z)


def _add_extract_flags(sub) -> None:
    sub.add_argument("inputs", nargs="+", help="PNG files or directories")
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--ocr-cmd", help="external OCR command (see CHARTEX_OCR_CMD)")
    sub.add_argument("--debug-dir", help="write intermediate images here")
    sub.add_argument("--csv", action="store_true", help="also write bar values as CSV")
    sub.add_argument("--jobs", type=int, default=1, help="parallel workers over files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chartex", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    ext = subs.add_parser("extract", help="parse bar-chart PNGs into JSON models")
    _add_extract_flags(ext)
    ext.set_defaults(fn=run_extract)

    gen = subs.add_parser("gen", help="render a synthetic chart corpus with ground truth")
    gen.add_argument("n", type=int)
    gen.add_argument("out_dir")
    gen.add_argument("--seed", type=int, default=chartgen.DEFAULT_CORPUS_SEED)
    gen.set_defaults(fn=run_gen)

    ev = subs.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("pred_dir")
    ev.add_argument("truth_dir")
    ev.add_argument("--loa-z", type=float, default=2.0, help="limits-of-agreement z")
    ev.set_defaults(fn=run_eval)

    pipe = subs.add_parser("pipeline", help="extract a directory, then evaluate in place")
    _add_extract_flags(pipe)
    pipe.add_argument("--loa-z", type=float, default=2.0, help="limits-of-agreement z")
    pipe.set_defaults(fn=run_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
