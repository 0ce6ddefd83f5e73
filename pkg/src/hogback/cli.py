"""Command-line front end.

Commands: train-gauss, train-pair, invert, glyph, bench, sweep, stats.
Exit codes: 0 success, 2 invalid flags, 3 missing model or input file,
4 geometry / numerical / corrupt-data errors. Every command that takes
--seed is end-to-end deterministic.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    CorruptError,
    DimensionError,
    EmptyCorpusError,
    GeometryError,
    HogbackError,
    IoError,
    NumericalError,
    VersionError,
)
from .gaussian import (
    MaterializedGaussian,
    StationaryModel,
    fit_stationary,
    image_eigenbasis,
    materialize,
    ridge_invert,
)
from .hog import HogConfig, HogDescriptor, compute_hog, positive_part, render_glyph
from .image import Image, load_image, luminance, resize, save_image
from .store import (
    config_hash,
    load_corpus,
    load_model,
    read_container,
    save_model,
    write_container,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_DATA = 4


def _log(args, message):
    if getattr(args, "verbose", False):
        print(message, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hogback",
        description="Invert HOG descriptors back to images.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("train-gauss", help="fit the stationary Gaussian model")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--max-cells", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-pair", help="train the paired dictionaries")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--patch-cells", type=int, default=5)
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("invert", help="invert a descriptor or an image's HOG")
    common(p)
    p.add_argument("--model", required=True, help="trained model container")
    p.add_argument("--algo", choices=("pair", "ridge", "elda", "direct"), default=None)
    p.add_argument("--image", help="input image; its HOG is inverted")
    p.add_argument("--box", help="x,y,w,h crop of --image before HOG")
    p.add_argument("--descriptor", help="container with a single tensor 'hog'")
    p.add_argument("--manifest", help="detection corpus (elda only)")
    p.add_argument("--template-cells", type=int, default=None,
                   help="ridge/elda template size (default: model limit)")
    p.add_argument("--k", type=int, default=100, help="detections to average (elda)")
    p.add_argument("--restarts", type=int, default=3, help="direct restarts")
    p.add_argument("--sweeps", type=int, default=30, help="direct sweeps")
    p.add_argument("--positive-part", action="store_true")
    p.add_argument("--side-by-side", action="store_true",
                   help="write original|glyph|inversion montage")
    p.add_argument("--out", required=True)

    p = sub.add_parser("glyph", help="render the HOG glyph diagram")
    common(p)
    p.add_argument("--image")
    p.add_argument("--descriptor")
    p.add_argument("--cell-pixels", type=int, default=20)
    p.add_argument("--positive-part", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="benchmark inverters on annotated patches")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--algos", default="pair,ridge")
    p.add_argument("--pair-model")
    p.add_argument("--gauss-model")
    p.add_argument("--cells", type=int, default=8)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-md", required=True)

    p = sub.add_parser("sweep", help="template-size sensitivity sweep")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--algo", choices=("pair", "ridge"), required=True)
    p.add_argument("--pair-model")
    p.add_argument("--gauss-model")
    p.add_argument("--sizes", default="5,10,20")
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="inspect a model container")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")

    return parser


def _load_descriptor(path, config) -> HogDescriptor:
    tensors, _meta = read_container(path)
    if "hog" not in tensors:
        raise CorruptError(f"{path}: descriptor container must hold a tensor 'hog'")
    data = np.asarray(tensors["hog"], dtype=np.float64)
    if data.ndim != 3:
        raise DimensionError(f"{path}: descriptor tensor must be 3-D, got {data.shape}")
    return HogDescriptor(data, cell_size=config.cell_size)


def _input_descriptor(args, config):
    """Resolve --image/--box or --descriptor into (descriptor, source gray)."""
    if (args.image is None) == (args.descriptor is None):
        raise ConfigError("provide exactly one of --image or --descriptor")
    if args.descriptor is not None:
        return _load_descriptor(args.descriptor, config), None
    gray = luminance(load_image(args.image).data)
    if getattr(args, "box", None):
        try:
            x, y, w, h = (int(v) for v in args.box.split(","))
        except ValueError as exc:
            raise ConfigError(f"--box must be x,y,w,h integers: {args.box}") from exc
        if w <= 0 or h <= 0 or y + h > gray.shape[0] or x + w > gray.shape[1]:
            raise GeometryError(f"--box {args.box} outside the image")
        gray = gray[y : y + h, x : x + w]
    return compute_hog(gray, config), gray


def _infer_algo(model, flag):
    if flag is not None:
        return flag
    from .paired import PairedDictionary

    if isinstance(model, PairedDictionary):
        return "pair"
    if isinstance(model, StationaryModel):
        return "ridge"
    raise ConfigError(
        f"cannot infer an algorithm from model type {type(model).__name__}; use --algo"
    )


def _ridge_gaussian(model, y, template_cells):
    if not isinstance(model, StationaryModel):
        raise ConfigError("--algo ridge/elda/direct needs a stationary Gaussian model")
    cells = template_cells or min(model.max_cells, y.cells_y, y.cells_x)
    cells = min(cells, y.cells_y, y.cells_x, model.max_cells)

    # Materialization is the slow step; cache it per model config and
    # geometry when FVTB_CACHE points at a directory.
    cache_dir = os.environ.get("FVTB_CACHE")
    if cache_dir:
        key = config_hash({"model": model.config_dict(), "cells": cells})
        path = os.path.join(cache_dir, f"materialized_{key}.fvtb")
        if os.path.exists(path):
            return load_model(path)
        g = materialize(model, cells, cells)
        os.makedirs(cache_dir, exist_ok=True)
        save_model(g, path)
        return g
    return materialize(model, cells, cells)


def cmd_invert(args) -> int:
    config = HogConfig()
    model = load_model(args.model)
    y, source = _input_descriptor(args, config)
    if args.positive_part:
        y = positive_part(y)
    algo = _infer_algo(model, args.algo)
    _log(args, f"inverting {y.cells_y}x{y.cells_x} cells with {algo}")

    if algo == "pair":
        from .paired import invert as paired_invert

        out = paired_invert(model, y, threads=args.threads)
    elif algo == "ridge":
        out = ridge_invert(_ridge_gaussian(model, y, args.template_cells), y)
    elif algo == "elda":
        from .elda import elda_invert

        if not args.manifest:
            raise ConfigError("--algo elda needs --manifest for the detection corpus")
        g = _ridge_gaussian(model, y, args.template_cells or min(y.cells_y, y.cells_x))
        if (g.height_cells, g.width_cells) != (y.cells_y, y.cells_x):
            raise GeometryError(
                "elda template must match the descriptor; pass --template-cells"
            )
        corpus = load_corpus(args.manifest).require_nonempty()
        out = elda_invert(g, y, corpus, k=args.k, config=config)
    else:
        from .directopt import DirectConfig, direct_invert

        if not isinstance(model, StationaryModel):
            raise ConfigError("--algo direct needs a stationary Gaussian model")
        basis = image_eigenbasis(model, template_pixels=y.pixel_shape)
        cfg = DirectConfig(
            restarts=args.restarts,
            sweeps=args.sweeps,
            seed=args.seed,
            threads=args.threads,
        )
        out = direct_invert(basis, y, cfg, config, mean_image=model.mu_pixel).image

    if args.side_by_side:
        out = _montage(source, y, out, config)
    save_image(out, args.out)
    _log(args, f"wrote {args.out}")
    return EXIT_OK


def _montage(source, y, inversion, config):
    """original | glyph | inversion strip; panels share the inversion size."""
    h, w = inversion.data.shape[:2]
    panels = []
    if source is not None:
        panels.append(resize(source, h, w))
    glyph = render_glyph(y, cell_pixels=max(8, config.cell_size), config=config)
    panels.append(resize(glyph.data, h, w))
    panels.append(luminance(inversion.data))
    sep = np.ones((h, 2))
    strip = []
    for i, p in enumerate(panels):
        if i:
            strip.append(sep)
        strip.append(np.clip(p, 0.0, 1.0))
    return Image(np.hstack(strip))


def cmd_glyph(args) -> int:
    config = HogConfig()
    y, _ = _input_descriptor(args, config)
    if args.positive_part:
        y = positive_part(y)
    save_image(render_glyph(y, cell_pixels=args.cell_pixels, config=config), args.out)
    return EXIT_OK


def cmd_train_gauss(args) -> int:
    corpus = load_corpus(args.manifest).require_nonempty()
    model = fit_stationary(corpus, max_cells=args.max_cells, seed=args.seed)
    save_model(model, args.out)
    _log(args, f"wrote {args.out} (hash {config_hash(model.config_dict())})")
    return EXIT_OK


def cmd_train_pair(args) -> int:
    from .paired import train_paired

    corpus = load_corpus(args.manifest).require_nonempty()
    pd = train_paired(
        list(corpus),
        patch_cells=args.patch_cells,
        k=args.k,
        lam=args.lam,
        n_samples=args.n_samples,
        channels=args.channels,
        epochs=args.epochs,
        seed=args.seed,
        threads=args.threads,
    )
    save_model(pd, args.out)
    _log(args, f"wrote {args.out} (hash {config_hash(pd.config_dict())})")
    return EXIT_OK


def _bench_algorithms(args, names) -> dict:
    from .paired import invert as paired_invert

    algos = {}
    for name in names.split(","):
        name = name.strip()
        if name == "pair":
            if not args.pair_model:
                raise ConfigError("algorithm 'pair' needs --pair-model")
            pd = load_model(args.pair_model)
            algos["pair"] = lambda y, pd=pd: paired_invert(pd, y, threads=args.threads)
        elif name == "ridge":
            if not args.gauss_model:
                raise ConfigError("algorithm 'ridge' needs --gauss-model")
            model = load_model(args.gauss_model)
            algos["ridge"] = lambda y, m=model: ridge_invert(
                _ridge_gaussian(m, y, None), y
            )
        else:
            raise ConfigError(f"unknown benchmark algorithm {name!r}")
    return algos


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    corpus = load_corpus(args.manifest).require_nonempty()
    report = run_benchmark(
        corpus, _bench_algorithms(args, args.algos), seed=args.seed, cells=args.cells
    )
    report.write(csv_path=args.out_csv, md_path=args.out_md)
    for name in sorted({a for _, a in report.rows}):
        print(f"{name}: mean NCC {report.mean_over(name):.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .bench import size_sweep

    corpus = load_corpus(args.manifest).require_nonempty()
    algos = _bench_algorithms(args, args.algo)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    result = size_sweep(corpus, algos[args.algo], sizes=sizes)
    payload = {str(k): v for k, v in result.items()}
    with open(args.out, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
    for size in sorted(result):
        row = result[size]
        print(f"{size}x{size}: mean NCC {row['mean']:.4f} over {row['count']} patches")
    return EXIT_OK


def cmd_stats(args) -> int:
    tensors, meta = read_container(args.model)
    info = {
        "model_type": meta.get("model_type", "unknown"),
        "config": meta.get("config", {}),
        "config_hash": config_hash(meta.get("config", {})),
        "tensors": {
            name: {"shape": list(t.shape), "dtype": str(t.dtype)}
            for name, t in sorted(tensors.items())
        },
    }
    if args.json:
        print(json.dumps(info, indent=1, sort_keys=True))
    else:
        print(f"model type: {info['model_type']}")
        print(f"config hash: {info['config_hash']}")
        for name, t in info["tensors"].items():
            dims = "x".join(str(s) for s in t["shape"])
            print(f"  {name}: {dims} ({t['dtype']})")
        if info["config"]:
            print(f"config: {json.dumps(info['config'], sort_keys=True)}")
    return EXIT_OK


COMMANDS = {
    "train-gauss": cmd_train_gauss,
    "train-pair": cmd_train_pair,
    "invert": cmd_invert,
    "glyph": cmd_glyph,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IoError, EmptyCorpusError) as exc:
        # CorruptError/VersionError subclass IoError but signal bad data
        if isinstance(exc, (CorruptError, VersionError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (GeometryError, DimensionError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HogbackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
