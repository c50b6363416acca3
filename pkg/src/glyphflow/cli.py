"""Command-line entry point.

Subcommands: gen-data, train-ocr, train, sample, eval, ablate, inspect.
Every run writes a resolved-config snapshot (config.json) into its output
directory and writes nothing outside it; stdout carries a human-readable
summary while machine-readable results go to files.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 convergence
failure, 5 invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import torch

from . import tensorio
from .canvas import TextLineSpec, compose_canvas
from .data import (
    GeneratorConfig,
    default_fonts,
    generate_samples,
    load_dataset,
    read_manifest,
    validate_config,
    write_dataset,
)
from .errors import (
    ConfigMismatch,
    ConvergenceFailure,
    CorruptDataset,
    GlyphflowError,
    InvariantViolation,
    NonFiniteLoss,
    ParseError,
    ShapeMismatch,
)
from .evaluation import (
    AblationSpec,
    blank_stub,
    evaluate,
    eval_items_from_samples,
    model_renderer,
    perfect_stub,
    render_table,
    run_ablation,
    variant_train_config,
    write_report,
)
from .fonts import load_bfont
from .images import read_ppm, write_ppm, to_bytes
from .model import DenoiserConfig, count_parameters
from .ocr import (
    OcrConfig,
    OcrTrainConfig,
    build_training_set,
    load_ocr,
    save_ocr,
    train_ocr,
)
from .sampling import SampleConfig, sample_images
from .training import (
    TrainConfig,
    build_state,
    codec_for_denoiser,
    load_checkpoint,
    load_model,
    parameter_summary,
    prepare_data,
    run_training,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONVERGENCE = 4
EXIT_INVARIANT = 5


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigMismatch(f"invalid JSON in {path}: {e}") from e


def _write_snapshot(out_dir, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _sample_config(args, seed_default: int = 0) -> SampleConfig:
    return SampleConfig(
        steps=args.steps,
        seed=args.seed if args.seed is not None else seed_default,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        use_glyph_init=not args.no_glyph_init,
        use_region_mask=not args.no_region_mask,
        use_canny=not args.no_canny,
        use_position=not args.no_position,
    )


def _add_sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=20, help="Euler integration steps")
    p.add_argument("--seed", type=int, default=None, help="noise seed")
    p.add_argument("--lambda1", type=float, default=0.9, help="init noise weight")
    p.add_argument("--lambda2", type=float, default=0.1, help="init glyph-latent weight")
    p.add_argument("--no-glyph-init", action="store_true", help="disable glyph-latent init")
    p.add_argument("--no-region-mask", action="store_true", help="disable residual gating")
    p.add_argument("--no-canny", action="store_true", help="zero the canny channels")
    p.add_argument("--no-position", action="store_true", help="zero the position channels")


# --- gen-data ---------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg_dict = _load_json(args.config) if args.config else {}
    try:
        gcfg = GeneratorConfig.from_dict(cfg_dict)
    except TypeError as e:
        raise ConfigMismatch(f"bad generator config: {e}") from e
    validate_config(gcfg)
    _write_snapshot(
        args.out,
        {
            "subcommand": "gen-data",
            "seed": args.seed,
            "count": args.count,
            "generator": gcfg.to_dict(),
        },
    )
    samples = (s for s, _ in generate_samples(args.seed, args.count, gcfg))
    manifest = write_dataset(
        samples, args.out, config={"seed": args.seed, "generator": gcfg.to_dict()}
    )
    print(f"wrote {manifest['count']} samples to {args.out}")
    print(f"config_hash {manifest['config_hash']}")
    return EXIT_OK


# --- train-ocr --------------------------------------------------------------

def cmd_train_ocr(args) -> int:
    cfg_dict = _load_json(args.config) if args.config else {}
    manifest = read_manifest(args.dataset)
    ocr_fields = dict(cfg_dict.get("ocr", {}))
    if "alphabet" not in ocr_fields:
        gen = (manifest.get("config") or {}).get("generator", {})
        if "alphabet" not in gen:
            raise ConfigMismatch(
                "no alphabet in --config and none recorded in the dataset manifest"
            )
        ocr_fields["alphabet"] = gen["alphabet"]
    try:
        model_cfg = OcrConfig(**ocr_fields)
        train_cfg = OcrTrainConfig(**cfg_dict.get("train", {}))
    except TypeError as e:
        raise ConfigMismatch(f"bad OCR config: {e}") from e
    _write_snapshot(
        args.out,
        {
            "subcommand": "train-ocr",
            "dataset": os.path.abspath(args.dataset),
            "ocr": model_cfg.to_dict(),
            "train": dataclasses.asdict(train_cfg),
        },
    )
    samples = load_dataset(args.dataset)
    crops, labels, texts = build_training_set(samples, model_cfg)
    print(f"training OCR proxy on {len(crops)} crops")
    model, report = train_ocr(
        crops, labels, texts, model_cfg, train_cfg,
        log=lambda m: print(
            f"epoch {m['epoch']:3d}  loss {m['train_loss']:.4f}  "
            f"holdout_char_acc {m['holdout_char_acc']:.4f}"
        ),
    )
    save_ocr(model, os.path.join(args.out, "ocr.ckpt"))
    write_report(os.path.join(args.out, "report.json"), report)
    print(f"holdout_char_acc {report['holdout_char_acc']:.4f}")
    return EXIT_OK


# --- train ------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg_dict = _load_json(args.config) if args.config else {}
    try:
        denoiser_cfg = DenoiserConfig.from_dict(cfg_dict.get("denoiser", {}))
        train_cfg = TrainConfig.from_dict(cfg_dict.get("train", {}))
    except TypeError as e:
        raise ConfigMismatch(f"bad train config: {e}") from e
    if args.stage2:
        train_cfg = train_cfg.stage2()
    codec = codec_for_denoiser(denoiser_cfg)
    ocr = load_ocr(args.ocr) if args.ocr else None
    if ocr is None and train_cfg.lambda_reward > 0:
        raise ConfigMismatch("lambda_reward > 0 requires --ocr weights")
    _write_snapshot(
        args.out,
        {
            "subcommand": "train",
            "dataset": os.path.abspath(args.dataset),
            "ocr": os.path.abspath(args.ocr) if args.ocr else None,
            "resume": os.path.abspath(args.resume) if args.resume else None,
            "denoiser": denoiser_cfg.to_dict(),
            "train": train_cfg.to_dict(),
        },
    )
    samples = load_dataset(args.dataset)
    data = prepare_data(samples, codec)
    if args.resume:
        state = load_checkpoint(args.resume, codec, ocr=ocr)
        print(f"resumed from {args.resume} at step {state.step}")
    else:
        state = build_state(denoiser_cfg, train_cfg, codec, ocr=ocr)
    counts = parameter_summary(state.model)
    print(
        f"model parameters: base {counts['base']}, control {counts['control']}, "
        f"total {counts['total']}"
    )
    every = max(1, state.cfg.max_steps // 20)

    def progress(m):
        if m["step"] % every == 0 or m["step"] == state.cfg.max_steps:
            print(
                f"step {m['step']:6d}  L_denoise {m['L_denoise']:.4f}  "
                f"L_reward {m['L_reward']:.4f}  L_total {m['L_total']:.4f}"
            )

    metrics = run_training(state, data, args.out, progress=progress)
    if metrics:
        print(f"finished at step {metrics[-1]['step']}")
    return EXIT_OK


# --- sample -----------------------------------------------------------------

def _parse_glyph_spec(payload: dict):
    try:
        size = tuple(payload["size"])
        lines = tuple(
            TextLineSpec(
                text=entry["text"],
                box=tuple(entry["box"]),
                color=tuple(entry.get("color", (0.0, 0.0, 0.0))),
                font_id=entry.get("font_id", "toylatin"),
            )
            for entry in payload["lines"]
        )
    except (KeyError, TypeError) as e:
        raise ConfigMismatch(f"bad glyph spec: {e}") from e
    if len(size) != 2:
        raise ConfigMismatch(f"glyph spec size must be [H, W], got {size}")
    return size, lines


def cmd_sample(args) -> int:
    model, header = load_model(args.weights)
    codec = codec_for_denoiser(model.cfg)
    payload = _load_json(args.glyph)
    size, lines = _parse_glyph_spec(payload)
    canvas = compose_canvas(lines, size, tracking=int(payload.get("tracking", 1)))
    scfg = _sample_config(args)
    _write_snapshot(
        args.out,
        {
            "subcommand": "sample",
            "weights": os.path.abspath(args.weights),
            "glyph": payload,
            "count": args.count,
            "sampling": scfg.to_dict(),
            "denoiser": model.cfg.to_dict(),
        },
    )
    images = sample_images(model, codec, [canvas] * args.count, scfg)
    for i, img in enumerate(images):
        path = os.path.join(args.out, f"sample_{i:03d}.ppm")
        write_ppm(path, to_bytes(img))
        print(f"wrote {path}")
    return EXIT_OK


# --- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    if args.weights is None and args.stub is None:
        raise ConfigMismatch("eval needs --weights or --stub")
    samples = load_dataset(args.dataset)
    if args.count is not None:
        samples = samples[: args.count]
    items = eval_items_from_samples(samples)
    ocr = load_ocr(args.ocr)
    scfg = _sample_config(args)
    if args.stub == "perfect":
        renderer, weights_path = perfect_stub, None
    elif args.stub == "blank":
        renderer, weights_path = blank_stub, None
    else:
        model, _ = load_model(args.weights)
        renderer, weights_path = model_renderer(model, codec_for_denoiser(model.cfg)), args.weights
    _write_snapshot(
        args.out,
        {
            "subcommand": "eval",
            "dataset": os.path.abspath(args.dataset),
            "ocr": os.path.abspath(args.ocr),
            "weights": os.path.abspath(weights_path) if weights_path else None,
            "stub": args.stub,
            "count": len(items),
            "sampling": scfg.to_dict(),
        },
    )
    report = evaluate(renderer, items, scfg, ocr)
    write_report(os.path.join(args.out, "report.json"), report.to_dict())
    print(f"items {report.n_items}  lines {report.n_lines}")
    print(
        f"sentence_acc {report.sentence_acc:.3f} "
        f"[{report.sentence_ci[0]:.3f}, {report.sentence_ci[1]:.3f}]"
    )
    print(
        f"char_acc {report.char_acc:.3f} "
        f"[{report.char_ci[0]:.3f}, {report.char_ci[1]:.3f}]"
    )
    return EXIT_OK


# --- ablate -----------------------------------------------------------------

def _parse_weight_args(entries: List[str], variants) -> Dict[str, str]:
    """Repeatable --weights [variant=]path; a bare path covers every
    variant."""
    paths: Dict[str, str] = {}
    for entry in entries:
        if "=" in entry:
            name, path = entry.split("=", 1)
            if name not in variants:
                raise ConfigMismatch(
                    f"--weights names unknown variant {name!r}; expected one of "
                    f"{list(variants)}"
                )
            paths[name] = path
        else:
            for name in variants:
                paths.setdefault(name, entry)
    missing = [v for v in variants if v not in paths]
    if missing:
        raise ConfigMismatch(f"no weights supplied for variants {missing}")
    return paths


def cmd_ablate(args) -> int:
    spec = AblationSpec.for_family(args.spec, eval_count=args.count, seed=args.seed or 0)
    paths = _parse_weight_args(args.weights, spec.variants)
    models = {}
    codec = None
    for variant, path in paths.items():
        model, _ = load_model(path)
        models[variant] = model
        codec = codec_for_denoiser(model.cfg)
    samples = load_dataset(args.dataset)[: spec.eval_count]
    items = eval_items_from_samples(samples)
    ocr = load_ocr(args.ocr)
    scfg = _sample_config(args)
    _write_snapshot(
        args.out,
        {
            "subcommand": "ablate",
            "spec": args.spec,
            "weights": {k: os.path.abspath(v) for k, v in paths.items()},
            "dataset": os.path.abspath(args.dataset),
            "ocr": os.path.abspath(args.ocr),
            "count": spec.eval_count,
            "sampling": scfg.to_dict(),
        },
    )
    result = run_ablation(spec, models, items, scfg, ocr, codec)
    table = render_table(result)
    write_report(os.path.join(args.out, "report.json"), result.to_dict())
    with open(os.path.join(args.out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table + "\n")
    print(table)
    return EXIT_OK


# --- inspect ----------------------------------------------------------------

def _inspect_weights(path) -> None:
    tensors, header = tensorio.read_weights(path)
    total = sum(int(np.prod(arr.shape)) for arr in tensors.values())
    print(f"{path}: weights container")
    print(f"config_hash {header['config_hash']}")
    print(f"tensors {len(tensors)}  parameters {total}")
    for name in sorted(tensors):
        arr = tensors[name]
        print(f"  {name}  {tuple(arr.shape)}  {arr.dtype}")


def cmd_inspect(args) -> int:
    path = args.path
    if os.path.isdir(path):
        manifest_path = os.path.join(path, "manifest.json")
        if not os.path.exists(manifest_path):
            print(f"error: {path}: no manifest.json", file=sys.stderr)
            return EXIT_IO
        path = manifest_path
    if path.endswith("manifest.json"):
        manifest = read_manifest(os.path.dirname(path) or ".")
        print(f"{path}: dataset manifest")
        print(f"count {manifest['count']}")
        print(f"config_hash {manifest.get('config_hash')}")
        return EXIT_OK
    with open(path, "rb") as f:
        head = f.read(8)
    if head.startswith(tensorio.WEIGHTS_MAGIC):
        _inspect_weights(path)
        return EXIT_OK
    if head.startswith(tensorio.TENSOR_MAGIC):
        arr = tensorio.read_tensor(path)
        print(f"{path}: tensor  shape {tuple(arr.shape)}  dtype {arr.dtype}")
        return EXIT_OK
    if head.startswith(b"BFONT"):
        font = load_bfont(path)
        print(
            f"{path}: BFONT  cell_height {font.cell_height}  "
            f"glyphs {len(font.glyphs)}"
        )
        return EXIT_OK
    if head.startswith(b"P6") or head.startswith(b"P5"):
        img = read_ppm(path) if head.startswith(b"P6") else None
        if img is None:
            from .images import read_pgm

            img = read_pgm(path)
        kind = "PPM" if head.startswith(b"P6") else "PGM"
        print(f"{path}: {kind} image  shape {img.shape}")
        return EXIT_OK
    print(f"error: {path}: unknown format", file=sys.stderr)
    return EXIT_IO


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glyphflow",
        description="Controllable visual text rendering: data synthesis, "
        "training, sampling, evaluation, ablations.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-ocr", help="train the frozen OCR proxy")
    p.add_argument("--config", help="JSON with 'ocr' and 'train' sections")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ocr)

    p = sub.add_parser("train", help="train the denoiser + control branch")
    p.add_argument("--config", help="JSON with 'denoiser' and 'train' sections")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ocr", help="OCR proxy weights (for the reward term)")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--stage2", action="store_true", help="apply stage-2 overrides")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="render text via the trained model")
    p.add_argument("--weights", required=True)
    p.add_argument("--glyph", required=True, help="JSON glyph spec (size, lines)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1, help="samples to draw")
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="evaluate text accuracy on a dataset")
    p.add_argument("--weights")
    p.add_argument("--stub", choices=("perfect", "blank"), help="oracle renderer stub")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ocr", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation family")
    p.add_argument(
        "--spec", required=True, choices=("conditions", "glyph_init", "region_mask")
    )
    p.add_argument(
        "--weights",
        action="append",
        required=True,
        help="repeatable [variant=]path; bare path covers all variants",
    )
    p.add_argument("--dataset", required=True)
    p.add_argument("--ocr", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="describe an artifact file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConvergenceFailure, NonFiniteLoss) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (InvariantViolation, ShapeMismatch) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (CorruptDataset, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (GlyphflowError, ValueError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
