"""Command-line entry point: synth, infer, eval, bias, colorfit.

Config precedence is CLI flag > config file > built-in default. Every
run drops a provenance JSON (config digest, seed, library versions)
next to its outputs so corpora can be reproduced byte for byte. Exit
codes: 0 success, 1 invalid usage/config, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import PIL
from PIL import Image

from . import __version__
from .classes import LabelMask
from .colors import ColorModel, fit_color_model, load_default_color_model
from .evaluation import aggregate, confusion, per_image_metrics, save_confusion_csv
from .inference import multiscale_infer, save_logits
from .synthesize import GenerationConfig, generate_corpus

logger = logging.getLogger("mapseg")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract says 1
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    ap = _Parser(prog="mapseg", description=__doc__)
    ap.add_argument("--version", action="version", version=f"mapseg {__version__}")
    ap.add_argument("--log-level", default="INFO",
                    choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate synthetic training pairs")
    synth.add_argument("--features", default=None, help="scene fixture dir (*.ndjson); omit for built-in demo scenes")
    synth.add_argument("--colors", default=None, help="color model JSON")
    synth.add_argument("--config", default=None, help="generation config JSON")
    synth.add_argument("--count", type=int, default=10)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.add_argument("--format", default=None, choices=["jpeg", "png"])
    synth.add_argument("--jobs", type=int, default=1)

    infer = sub.add_parser("infer", help="tiled multiscale inference on one image")
    infer.add_argument("--input", required=True)
    infer.add_argument("--backend", required=True,
                       help="oracle:PATH | heuristic:FILE | extern:CMD")
    infer.add_argument("--scales", default="1.0,0.5")
    infer.add_argument("--patch", type=int, default=768)
    infer.add_argument("--overlap", type=int, default=64)
    infer.add_argument("--out", required=True)
    infer.add_argument("--logits", default=None, help="also write averaged logits (.lgt)")
    infer.add_argument("--timeout", type=float, default=30.0, help="per-tile timeout for extern backends")
    infer.add_argument("--jobs", type=int, default=1)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--strategy", default="sample-normalized-macro")
    ev.add_argument("--report", required=True)
    ev.add_argument("--confusion", default=None, help="write 6x6 confusion CSV")
    ev.add_argument("--confusion-mode", default="per-prediction",
                    choices=["none", "per-prediction", "per-ground-truth"])
    ev.add_argument("--classes", default="geographic", choices=["geographic", "all"])

    bias = sub.add_parser("bias", help="metadata bias regression on an eval report")
    bias.add_argument("--metrics", required=True, help="eval report JSON with per-image entries")
    bias.add_argument("--metadata", required=True, help="CSV: id,partition,institution,pub_country,cov_country,scale_denominator,pub_year")
    bias.add_argument("--out", required=True)
    bias.add_argument("--min-count", type=int, default=5)

    cf = sub.add_parser("colorfit", help="fit per-class color mixtures from image/mask pairs")
    cf.add_argument("--images", required=True)
    cf.add_argument("--masks", required=True)
    cf.add_argument("--components", type=int, default=3)
    cf.add_argument("--max-iter", type=int, default=100)
    cf.add_argument("--tol", type=float, default=1e-6)
    cf.add_argument("--seed", type=int, default=0)
    cf.add_argument("--max-pixels-per-class", type=int, default=50_000)
    cf.add_argument("--out", required=True)
    return ap


def _write_provenance(out_path: Path, command: str, config: dict, seed) -> None:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    prov = {
        "command": command,
        "config_digest": hashlib.sha256(blob).hexdigest(),
        "config": config,
        "seed": seed,
        "versions": {"mapseg": __version__, "numpy": np.__version__, "pillow": PIL.__version__},
    }
    path = out_path / "provenance.json" if out_path.is_dir() else out_path.with_suffix(out_path.suffix + ".provenance.json")
    path.write_text(json.dumps(prov, indent=1, sort_keys=True), encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_synth(args) -> int:
    file_cfg = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = GenerationConfig.from_json(file_cfg) if file_cfg else GenerationConfig()
    if args.features is not None:
        cfg.features_dir = args.features
    if args.colors is not None:
        cfg.colors_path = args.colors
    if args.format is not None:
        cfg.image_format = args.format
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = generate_corpus(cfg, args.count, args.seed, out, jobs=args.jobs)
    _write_provenance(out, "synth", cfg.to_json(), args.seed)
    logger.info("wrote %d samples to %s", len(files), out)
    return 0


def _resolve_oracle_mask(path_spec: str, input_path: Path) -> LabelMask:
    p = Path(path_spec)
    if p.is_dir():
        stem = input_path.stem
        for candidate in (p / f"{stem}.mask.png", p / f"{stem}.png"):
            if candidate.exists():
                return LabelMask.load_png(candidate)
        raise FileNotFoundError(f"no mask for {stem!r} under {p}")
    return LabelMask.load_png(p)


def _make_backend(spec: str, input_path: Path, timeout: float):
    from .backends import ExternBackend, HeuristicBackend, OracleBackend

    kind, _, rest = spec.partition(":")
    if kind == "oracle":
        if not rest:
            raise UsageError("oracle backend needs oracle:PATH")
        return OracleBackend(_resolve_oracle_mask(rest, input_path))
    if kind == "heuristic":
        colors = ColorModel.load(rest) if rest else load_default_color_model()
        return HeuristicBackend(colors)
    if kind == "extern":
        if not rest:
            raise UsageError("extern backend needs extern:CMD")
        return ExternBackend(rest, timeout=timeout)
    raise UsageError(f"unknown backend spec {spec!r}")


def _cmd_infer(args) -> int:
    input_path = Path(args.input)
    image = np.asarray(Image.open(input_path).convert("RGB"), dtype=np.uint8)
    try:
        scales = [float(s) for s in args.scales.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --scales {args.scales!r}")
    if not scales or any(s <= 0 for s in scales):
        raise UsageError(f"scales must be positive, got {args.scales!r}")
    backend = _make_backend(args.backend, input_path, args.timeout)
    try:
        mask, logits = multiscale_infer(image, backend, scales=scales, patch=args.patch,
                                        overlap=args.overlap, jobs=args.jobs, return_logits=True)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mask.save_png(out)
    if args.logits:
        save_logits(args.logits, logits.scores)
    _write_provenance(out, "infer", {
        "input": str(input_path), "backend": args.backend, "scales": scales,
        "patch": args.patch, "overlap": args.overlap,
    }, None)
    logger.info("wrote %s", out)
    return 0


def _pair_mask_files(pred_dir: Path, gt_dir: Path) -> list[tuple[str, Path, Path]]:
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.png"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.png"))}
    common = sorted(set(pred_files) & set(gt_files))
    if not common:
        raise FileNotFoundError(f"no matching *.png mask names between {pred_dir} and {gt_dir}")
    out = []
    for name in common:
        stem = name[:-len(".mask.png")] if name.endswith(".mask.png") else name[:-len(".png")]
        out.append((stem, pred_files[name], gt_files[name]))
    return out


def _cmd_eval(args) -> int:
    pairs = _pair_mask_files(Path(args.pred), Path(args.gt))
    counts = []
    preds, gts = [], []
    for stem, pred_path, gt_path in pairs:
        pred = LabelMask.load_png(pred_path)
        gt = LabelMask.load_png(gt_path)
        counts.append(per_image_metrics(pred, gt, image_id=stem))
        preds.append(pred)
        gts.append(gt)
    class_ids = (2, 3, 4, 5) if args.classes == "geographic" else (0, 1, 2, 3, 4, 5)
    report = aggregate(counts, strategy=args.strategy, class_ids=class_ids, with_per_image=True)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_json(), indent=1, sort_keys=True), encoding="utf-8")
    if args.confusion:
        save_confusion_csv(confusion(preds, gts, mode=args.confusion_mode), args.confusion)
    _write_provenance(out, "eval", {
        "pred": args.pred, "gt": args.gt, "strategy": args.strategy, "classes": args.classes,
    }, None)
    print(f"mIoU={report.miou:.4f} mR={report.mr:.4f} mP={report.mp:.4f} "
          f"PRm={report.prm:.4f} F1={report.f1:.4f} Acc={report.acc:.4f} "
          f"({report.n_images} images, {report.strategy})")
    return 0


def _cmd_bias(args) -> int:
    from .bias import build_design, load_metadata_csv, ols_fit, records_from_report, save_result_json

    report = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
    rows = load_metadata_csv(args.metadata)
    records = records_from_report(rows, report)
    design = build_design(records, min_count=args.min_count)
    result = ols_fit(design)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_result_json(result, out)
    _write_provenance(out, "bias", {
        "metrics": args.metrics, "metadata": args.metadata, "min_count": args.min_count,
    }, None)
    print(f"R^2={result.r2:.4f} n={result.n} coefficients={len(result.coefficients)}")
    return 0


def _cmd_colorfit(args) -> int:
    images = sorted(p for p in Path(args.images).iterdir()
                    if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not images:
        raise FileNotFoundError(f"no images under {args.images}")
    masks_dir = Path(args.masks)
    rng = np.random.default_rng(args.seed)
    pixels: dict[int, list[np.ndarray]] = {k: [] for k in range(6)}
    for img_path in images:
        mask_path = None
        for candidate in (masks_dir / f"{img_path.stem}.mask.png", masks_dir / f"{img_path.stem}.png"):
            if candidate.exists():
                mask_path = candidate
                break
        if mask_path is None:
            continue
        img = np.asarray(Image.open(img_path).convert("RGB"), dtype=np.uint8)
        mask = LabelMask.load_png(mask_path).data
        if img.shape[:2] != mask.shape:
            raise ValueError(f"{img_path.name}: image {img.shape[:2]} vs mask {mask.shape}")
        for k in range(6):
            sel = img[mask == k]
            if len(sel):
                pixels[k].append(sel)
    samples = {}
    for k, chunks in pixels.items():
        if not chunks:
            continue
        arr = np.concatenate(chunks).astype(np.float64)
        if len(arr) > args.max_pixels_per_class:
            arr = arr[rng.choice(len(arr), size=args.max_pixels_per_class, replace=False)]
        samples[k] = arr
    model = fit_color_model(samples, components=args.components, max_iter=args.max_iter,
                            tol=args.tol, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    _write_provenance(out, "colorfit", {
        "images": args.images, "masks": args.masks, "components": args.components,
    }, args.seed)
    print(f"fitted {len(model.classes())} classes -> {out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "bias": _cmd_bias,
    "colorfit": _cmd_colorfit,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
