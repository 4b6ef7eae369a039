"""Command-line driver: synth / train / desmoke / eval / bench / params.

Configuration is a plain key=value file; any CLI flag with the same name
overrides it, and built-in defaults fill the rest (precedence: flag >
config file > default). Unknown keys and malformed values are rejected
with the offending key named. All randomness is keyed by --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from pfan import bench as bench_mod
from pfan import imageio, metrics, smoke
from pfan.layers import (WeightFormatError, WeightShapeError, count_params,
                         load_into, load_weights)
from pfan.model import Generator, PfanConfig
from pfan.train import TrainConfig, TrainError, train


class ConfigError(ValueError):
    """Raised for unknown keys or untypable values in config input."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_kernels(s) -> tuple:
    if isinstance(s, tuple):
        return s
    return tuple(int(x) for x in str(s).split(","))


# key -> (parser, default); defaults mirror PfanConfig / TrainConfig
_KEYS = {
    "base_channels": (int, 64),
    "n_mbi": (int, 4),
    "n_lat": (int, 2),
    "mbi_kernels": (_parse_kernels, (3, 7, 11)),
    "mbi_groups": (int, 64),
    "mbi_expand_ratio": (int, 4),
    "mbi_residual": (_parse_bool, False),
    "lat_window": (int, 8),
    "leff_expand_ratio": (int, 2),
    "use_global_input_skip": (_parse_bool, True),
    "disc_layers": (int, 3),
    "lr": (float, 2e-4),
    "beta1": (float, 0.5),
    "beta2": (float, 0.999),
    "batch": (int, 6),
    "crop": (int, 128),
    "d_warmup_epochs": (int, 1),
    "epochs": (int, 10),
    "lambda_l1": (float, 100.0),
    "adv_loss": (str, "least-squares"),
    "seed": (int, 0),
}

_PFAN_KEYS = ("base_channels", "n_mbi", "n_lat", "mbi_kernels", "mbi_groups",
              "mbi_expand_ratio", "mbi_residual", "lat_window",
              "leff_expand_ratio", "use_global_input_skip", "disc_layers")
_TRAIN_KEYS = ("lr", "beta1", "beta2", "batch", "crop", "d_warmup_epochs",
               "epochs", "lambda_l1", "seed", "adv_loss")


def read_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            parser, _ = _KEYS[key]
            try:
                values[key] = parser(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}")
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    merged = {k: default for k, (_, default) in _KEYS.items()}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key in _KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def build_pfan_config(merged: dict) -> PfanConfig:
    return PfanConfig(**{k: merged[k] for k in _PFAN_KEYS})


def build_train_config(merged: dict) -> TrainConfig:
    return TrainConfig(**{k: merged[k] for k in _TRAIN_KEYS})


def _add_config_flags(p: argparse.ArgumentParser, keys) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value config file")
    for key in keys:
        parser, default = _KEYS[key]
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=parser,
                       default=None, metavar=key.upper(),
                       help=f"override {key} (default {default})")


def _load_generator(merged: dict, weights_path) -> Generator:
    gen = Generator(build_pfan_config(merged), seed=merged["seed"])
    if weights_path is not None:
        load_into(gen.store, load_weights(weights_path))
    return gen


# -- subcommands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    merged = resolve_config(args)
    rows = smoke.generate_dataset(args.clean, args.out, args.pairs,
                                  seed=merged["seed"], density_tier=args.tier)
    counts = {s: sum(1 for r in rows if r["split"] == s)
              for s in ("train", "val", "test")}
    print(f"wrote {len(rows)} pairs to {args.out} "
          f"(train={counts['train']} val={counts['val']} test={counts['test']})")
    return 0


def cmd_train(args) -> int:
    merged = resolve_config(args)
    rows = smoke.read_manifest(args.manifest)
    root = Path(args.manifest).parent
    result = train(rows, root, build_pfan_config(merged),
                   build_train_config(merged), args.out,
                   max_steps=args.max_steps)
    print(f"trained {result['steps']} steps; "
          f"checkpoints and log in {args.out}")
    return 0


def cmd_desmoke(args) -> int:
    merged = resolve_config(args)
    gen = _load_generator(merged, args.weights)
    img = imageio.load_image(args.input)
    out = imageio.hwc(gen.infer(imageio.chw(img)))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    imageio.save_image(out, out_path)
    print(f"wrote {out_path}")
    return 0


def cmd_eval(args) -> int:
    merged = resolve_config(args)
    gen = _load_generator(merged, args.weights)
    rows = smoke.read_manifest(args.manifest)
    report = metrics.evaluate_dataset(gen, rows, Path(args.manifest).parent,
                                      split=args.split)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    print(report.to_table())
    return 0


def cmd_bench(args) -> int:
    merged = resolve_config(args)
    sizes = [(int(s), int(s)) for s in args.sizes.split(",")]
    records = bench_mod.run_attention_bench(sizes, c=args.channels,
                                            reps=args.reps, seed=merged["seed"])
    print(bench_mod.format_table(records))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "bench.jsonl", "w") as fh:
            for r in records:
                fh.write(json.dumps(r.to_dict()) + "\n")
    return 0


def cmd_params(args) -> int:
    merged = resolve_config(args)
    gen = Generator(build_pfan_config(merged), seed=merged["seed"])
    print(count_params(gen.store))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfan",
                                description="laparoscopic image desmoking toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic smoke-pair dataset")
    sp.add_argument("--clean", required=True, help="folder of clean images")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--pairs", type=int, required=True, help="number of pairs")
    sp.add_argument("--tier", default="random",
                    choices=["light", "medium", "heavy", "random"])
    _add_config_flags(sp, ("seed",))
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train the desmoking GAN")
    sp.add_argument("--manifest", required=True, help="dataset manifest.jsonl")
    sp.add_argument("--out", required=True, help="checkpoint/log directory")
    sp.add_argument("--max-steps", type=int, default=None,
                    help="stop after this many optimizer steps")
    _add_config_flags(sp, _KEYS.keys())
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("desmoke", help="run the generator on one image")
    sp.add_argument("input", help="input PNG")
    sp.add_argument("--weights", required=True, help="generator weight file")
    sp.add_argument("--out", required=True, help="output PNG path")
    _add_config_flags(sp, _PFAN_KEYS + ("seed",))
    sp.set_defaults(func=cmd_desmoke)

    sp = sub.add_parser("eval", help="score a trained generator on a dataset split")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", required=True, help="report output directory")
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    _add_config_flags(sp, _PFAN_KEYS + ("seed",))
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="attention FLOP/time scaling benchmark")
    sp.add_argument("--sizes", default="8,16,32,64",
                    help="comma-separated square map sizes")
    sp.add_argument("--channels", type=int, default=64)
    sp.add_argument("--reps", type=int, default=5)
    sp.add_argument("--out", default=None, help="directory for bench.jsonl")
    _add_config_flags(sp, ("seed",))
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("params", help="print the generator parameter count")
    _add_config_flags(sp, _PFAN_KEYS + ("seed",))
    sp.set_defaults(func=cmd_params)

    return p


_ERRORS = (ConfigError, WeightFormatError, WeightShapeError, TrainError,
           smoke.EmptySourceError, smoke.ExtentError,
           metrics.EmptyManifestError, metrics.MetricShapeError,
           imageio.ImageDecodeError, bench_mod.BenchSizeError,
           FileNotFoundError, NotADirectoryError, PermissionError, ValueError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"pfan: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
