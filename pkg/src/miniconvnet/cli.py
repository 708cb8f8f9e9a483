"""Command-line interface: train, eval, predict, augment-preview, make-glyphs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from .data import crop_from_keypoints, decode_ppm, encode_ppm, load_dataset, prepare_image, read_keypoints_file
from .exceptions import (ConfigError, CropError, DatasetError, FormatError, LayerNotFoundError, NumericError,
                         ShapeError, SplitError)
from .model import ARCHITECTURES, VGG16_BLOCKS, VGG_MINI_BLOCKS, predict
from .parallel import AUGMENT, INIT, stream
from .synthetic import write_glyph_corpus
from .training import TrainConfig, evaluate, export_curves, train
from .weights import load_weights, read_entries, save_weights

log = logging.getLogger("miniconvnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_INPUT = {"vgg-mini": (32, 32, 1), "vgg16": (224, 224, 3)}
_BLOCKS = {"vgg-mini": VGG_MINI_BLOCKS, "vgg16": VGG16_BLOCKS}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return value


def _non_negative(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _shape(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxWxC, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected HxWxC, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="miniconvnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model on a class-per-directory dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init")
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="vgg-mini")
    p.add_argument("--input-shape", type=_shape)
    p.add_argument("--freeze")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--batch", type=_positive_int)
    p.add_argument("--lr", type=_non_negative)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-split", type=_fraction)
    p.add_argument("--curves")
    p.add_argument("--config")

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="vgg-mini")
    p.add_argument("--input-shape", type=_shape)

    p = sub.add_parser("predict", help="classify one PPM image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--keypoints")
    p.add_argument("--margin", type=_non_negative, default=0.25)
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="vgg-mini")
    p.add_argument("--input-shape", type=_shape)

    p = sub.add_parser("augment-preview", help="write flip, shift and rotation outputs of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("make-glyphs", help="write a synthetic glyph corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=_positive_int, default=100)
    p.add_argument("--size", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    return parser


def parse_cli(argv) -> argparse.Namespace:
    """Parse and validate ``argv``; raises :class:`UsageError` on bad input."""
    args = build_parser().parse_args(argv)
    if args.command == "train":
        args.train_config = _train_config(args)
    return args


def _train_config(args) -> TrainConfig:
    values = {}
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    overrides = {"epochs": args.epochs, "batch_size": args.batch, "lr": args.lr, "seed": args.seed,
                 "val_split": args.val_split, "freeze_boundary": args.freeze}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig.from_dict(values)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def infer_input_shape(entries: dict, arch: str) -> tuple[int, int, int]:
    """Recover a square input shape from a weight file's kernel shapes."""
    blocks = _BLOCKS[arch]
    channels = entries["block1_conv1/kernel"].shape[2]
    last_block, convs, _ = blocks[-1]
    last_filters = entries[f"block{last_block}_conv{convs}/kernel"].shape[3]
    cells = entries["fc1/kernel"].shape[0] // last_filters
    side = math.isqrt(cells) * 2 ** len(blocks)
    return side, side, channels


def load_model(path, arch: str, input_shape=None):
    with open(path, "rb") as fh:
        entries = read_entries(fh)
    try:
        shape = tuple(input_shape) if input_shape else infer_input_shape(entries, arch)
        class_count = entries["predictions/kernel"].shape[1]
    except KeyError as exc:
        raise FormatError(f"{path} lacks {exc} needed for a {arch} model") from None
    model = ARCHITECTURES[arch](shape, class_count, initialize=False)
    with open(path, "rb") as fh:
        load_weights(model, fh, strict=True)
    return model


def _cmd_train(args) -> int:
    config = args.train_config
    shape = args.input_shape or DEFAULT_INPUT[args.arch]
    data = load_dataset(args.data, shape)
    if data.errors:
        sys.stderr.write(data.error_report())
    model = ARCHITECTURES[args.arch](shape, data.class_count, seed=stream(config.seed, INIT))
    if args.init:
        skipped = load_weights(model, args.init, strict=False)
        if skipped:
            log.info("not loaded from %s: %s", args.init, ", ".join(skipped))
    model, _, report = train(model, data, config)
    save_weights(model, args.out)
    if args.curves:
        with open(args.curves, "w", newline="") as fh:
            export_curves(report, fh)
    print(json.dumps({"epochs": len(report.records), **report.final}))
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_model(args.model, args.arch, args.input_shape)
    data = load_dataset(args.data, model.input_shape)
    if data.errors:
        sys.stderr.write(data.error_report())
    result = evaluate(model, data)
    confusion = {name: vars(c) for name, c in zip(data.class_names, result.confusion)}
    print(json.dumps({"loss": result.loss, "accuracy": result.accuracy, "confusion": confusion}))
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = load_model(args.model, args.arch, args.input_shape)
    raw = decode_ppm(Path(args.image).read_bytes())
    if args.keypoints:
        kps = read_keypoints_file(args.keypoints)
        image = crop_from_keypoints(prepare_image(raw, None), kps, args.margin, model.input_shape)
    else:
        image = prepare_image(raw, model.input_shape)
    label, probs = predict(model, image)
    name = chr(ord("a") + label) if model.class_count <= 26 else str(label)
    print(json.dumps({"label": label, "class": name, "probs": [float(p) for p in probs]}))
    return EXIT_OK


def _cmd_augment_preview(args) -> int:
    raw = decode_ppm(Path(args.image).read_bytes())
    h, w = raw.shape[:2]
    cfg = aug.AugmentConfig()
    rng = stream(args.seed, AUGMENT, 0, 0)
    dx = max(1, math.floor(cfg.max_shift_frac[0] * w)) * (1 if rng.random() < 0.5 else -1)
    dy = max(1, math.floor(cfg.max_shift_frac[1] * h)) * (1 if rng.random() < 0.5 else -1)
    angle = float(rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg))
    outputs = {
        "hflip.ppm": aug.hflip(raw),
        "shift_x.ppm": aug.shift(raw, dx, 0),
        "shift_y.ppm": aug.shift(raw, 0, dy),
        "rotate.ppm": aug.rotate(raw, angle),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, image in outputs.items():
        (out / name).write_bytes(encode_ppm(image))
    print(json.dumps({"dx": dx, "dy": dy, "angle": angle, "files": sorted(outputs)}))
    return EXIT_OK


def _cmd_make_glyphs(args) -> int:
    data = write_glyph_corpus(args.out, args.per_class, args.size, args.seed)
    print(json.dumps({"samples": len(data), "classes": data.class_names}))
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "augment-preview": _cmd_augment_preview,
    "make-glyphs": _cmd_make_glyphs,
}


def main(argv=None) -> int:
    try:
        args = parse_cli(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LayerNotFoundError as exc:
        print(f"unknown layer: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FormatError, CropError, SplitError, ShapeError, ConfigError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
