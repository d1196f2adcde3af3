"""Command-line front end: generation, features, segmentation, evaluation,
table reproduction, and the theory experiments.

Every command writes a manifest.json next to its outputs recording the
command line, seed, and parameters; re-running the same command line
reproduces TEXF/TEXC/CSV outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, formats, pipeline
from .clustering import KMeansParams, LinkageParams, theoretical_threshold
from .features import PatchParams, all_features, default_half_width
from .fields import KernelSizeField, MAModel, MAVariant
from .mosaic import RegionGeometry, compose_mosaic, load_grayscale_image

MA_TOKENS = {
    "ma1": MAVariant.DIAG,
    "ma2": MAVariant.ANTIDIAG,
    "ma3": MAVariant.VERT,
    "ma4": MAVariant.HORIZ,
}

BRODATZ_FILES = ("D4", "D6", "D20", "D21", "D34", "D52", "D55", "D77")

TABLE1_PAIRS = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
TABLE2_PAIRS = [("D21", "D55"), ("D21", "D77"), ("D55", "D77")]
TABLE4_QUADS = [
    ("D4", "D6", "D20", "D52"),
    ("D21", "D34", "D55", "D77"),
    ("D6", "D21", "D34", "D77"),
]


class CliError(ValueError):
    pass


def _parse_source(token: str, size: int, model_width: int):
    token = token.strip()
    if token in MA_TOKENS:
        return MAModel(MA_TOKENS[token], half_width=model_width)
    if token.startswith("kernel:"):
        parts = [float(p) for p in token[len("kernel:"):].split(",")]
        if len(parts) == 1:
            a, b, d = parts[0], 0.0, parts[0]
        elif len(parts) == 3:
            a, b, d = parts
        else:
            raise CliError(f"kernel source wants 'kernel:a' or 'kernel:a,b,d', got {token!r}")
        return KernelSizeField.constant(np.array([[a, b], [b, d]]), size, size)
    if Path(token).exists():
        return token
    raise CliError(f"unknown texture source {token!r} (ma1..ma4, kernel:..., or a file)")


def _geometry(args) -> RegionGeometry:
    if args.geom == "disk":
        return RegionGeometry("disk", radius=args.radius)
    if args.geom == "mask":
        if not getattr(args, "mask", None):
            raise CliError("--geom mask requires --mask PATH")
        return RegionGeometry("mask", mask_path=args.mask)
    return RegionGeometry(args.geom)


def _load_field(path) -> np.ndarray:
    return load_grayscale_image(path)


def _half_width(args, n: int) -> int:
    return args.m if args.m is not None else default_half_width(n)


def _thread_count(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("TEXSEG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise CliError(f"bad TEXSEG_THREADS value {env!r}") from exc
    return 1


def _write_manifest(out_dir: Path, args, outputs, started: float) -> Path:
    params = {k: v for k, v in vars(args).items()
              if k not in ("func", "_argv") and v is not None}
    manifest = {
        "command": ["texseg"] + list(getattr(args, "_argv", sys.argv[1:])),
        "seed": getattr(args, "seed", None),
        "parameters": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "outputs": [str(p) for p in outputs],
        "duration_seconds": time.time() - started,
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    started = time.time()
    out = _out_dir(args)
    size = args.size
    model_width = args.model_width if args.model_width is not None else default_half_width(size)
    sources = [_parse_source(tok, size, model_width) for tok in args.models.split(",")]
    field, mask = compose_mosaic(sources, _geometry(args), size, size, args.seed)
    outputs = [out / "mosaic.texf", out / "mosaic.pgm", out / "truth.pgm"]
    formats.write_texf(outputs[0], field)
    formats.write_pgm_preview(outputs[1], field)
    formats.write_pgm(outputs[2], mask)
    outputs.append(_write_manifest(out, args, outputs, started))
    print(f"generate: wrote {len(outputs)} files to {out}")
    return 0


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def cmd_features(args) -> int:
    started = time.time()
    out = _out_dir(args)
    field = _load_field(args.input)
    m = _half_width(args, min(field.shape))
    feats = all_features(field, PatchParams(m, args.padding), with_location=args.with_location)
    outputs = [out / "features.texc"]
    formats.write_texc(outputs[0], feats.values)
    outputs.append(_write_manifest(out, args, outputs, started))
    print(f"features: m={m} len={feats.values.shape[2]} -> {outputs[0]}")
    return 0


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------

def _segment_field(field, args, m: int, seed: int):
    """Run one segmentation algorithm; returns (label map, summary result)."""
    rows, cols = field.shape
    if args.algo in ("kmeans", "ward", "slink-k") and args.k is None:
        raise CliError(f"--algo {args.algo} requires --k")
    patch = PatchParams(m, args.padding)
    if args.algo == "kmeans":
        feats = all_features(field, patch, with_location=args.with_location)
        params = KMeansParams(k=args.k, restarts=args.restarts,
                              min_cluster_size=args.min_size, seed=seed)
        return pipeline.kmeans_segment(feats, params)
    if args.algo == "ward":
        feats = all_features(field, patch, with_location=args.with_location)
        return pipeline.sampled_agglomerative_segment(
            feats, args.k, "ward", stride=args.sample_stride,
            min_cluster_size=args.min_size, seed=seed)
    if args.algo == "slink-threshold":
        b = args.b if args.b is not None else theoretical_threshold(rows, args.beta)
        params = LinkageParams(mode="threshold", b=b, metric=args.metric)
        return pipeline.grid_single_linkage_segment(
            field, m, params, padding=args.padding,
            with_location=args.with_location, seed=seed)
    if args.algo == "slink-k":
        params = LinkageParams(mode="cut", k=args.k, metric=args.metric,
                               min_cluster_size=args.min_size)
        return pipeline.grid_single_linkage_segment(
            field, m, params, padding=args.padding,
            with_location=args.with_location, seed=seed)
    raise CliError(f"unknown algorithm {args.algo!r}")


def _write_labels(out: Path, labels: np.ndarray):
    paths = [out / "labels.pgm", out / "labels.csv"]
    formats.write_pgm(paths[0], labels)
    rows, cols = labels.shape
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    cells = np.stack([r.ravel(), c.ravel(), labels.ravel()], axis=1)
    formats.write_csv(paths[1], ["row", "col", "label"], cells.tolist())
    return paths


def cmd_segment(args) -> int:
    started = time.time()
    out = _out_dir(args)
    field = _load_field(args.input)
    m = _half_width(args, min(field.shape))
    labels, result = _segment_field(field, args, m, args.seed)
    outputs = _write_labels(out, labels)
    summary = out / "summary.csv"
    formats.write_csv(
        summary,
        ["objective_sq_euclid", "objective_sq_linf", "iterations", "restart_index", "seed"],
        [[result.objective_sq_euclid, result.objective_sq_linf,
          result.iterations, result.restart_index, result.seed]],
    )
    outputs.append(summary)
    outputs.append(_write_manifest(out, args, outputs, started))
    print(f"segment: {args.algo} m={m} clusters={int(labels.max()) + 1} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    started = time.time()
    est = formats.read_pgm_raw(args.est).astype(np.int64)
    truth = formats.read_pgm_raw(args.truth).astype(np.int64)
    if est.shape != truth.shape:
        raise CliError(f"shape mismatch: est {est.shape} vs truth {truth.shape}")
    report = evaluation.best_permutation_match(est, truth, k=args.k)
    print(f"accuracy={report.accuracy:.4f} error_rate={report.error_rate:.4f} "
          f"mismatched={report.mismatched_count} of {report.total}")
    if args.out:
        out = _out_dir(args)
        path = out / "match.csv"
        formats.write_csv(
            path,
            ["accuracy", "error_rate", "mismatched_count", "total", "permutation"],
            [[report.accuracy, report.error_rate, report.mismatched_count,
              report.total, ";".join(map(str, report.permutation))]],
        )
        _write_manifest(out, args, [path], started)
    return 0


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

def _accuracy(labels, truth) -> float:
    k = int(max(labels.max(), truth.max())) + 1
    return evaluation.best_permutation_match(labels, truth, k=k).accuracy


def _reproduce_mosaic(field, truth, k: int, m: int, seed: int, restarts: int):
    """Run the three size-constrained algorithms on one mosaic."""
    n_pix = field.size
    feats = all_features(field, PatchParams(m, "reflect"), with_location=True)
    km_params = KMeansParams(k=k, restarts=restarts,
                             min_cluster_size=n_pix // 20, seed=seed)
    km_labels, _ = pipeline.kmeans_segment(feats, km_params)
    sample_n = len(pipeline.sample_coords(*field.shape, 4))
    ward_labels, _ = pipeline.sampled_agglomerative_segment(
        feats, k, "ward", stride=4, min_cluster_size=max(2, sample_n // 20), seed=seed)
    slink_params = LinkageParams(mode="cut", k=k, metric="linf", min_cluster_size=2)
    slink_labels, _ = pipeline.grid_single_linkage_segment(
        field, m, slink_params, with_location=True, seed=seed)
    return (_accuracy(slink_labels, truth), _accuracy(ward_labels, truth),
            _accuracy(km_labels, truth))


def _brodatz_path(directory: Path, name: str) -> Path:
    for candidate in (name, f"D{int(name[1:]):02d}", name.lower()):
        path = directory / f"{candidate}.pgm"
        if path.exists():
            return path
    raise CliError(
        f"missing Brodatz texture {name}.pgm in {directory}; tables 2-4 need "
        + ", ".join(BRODATZ_FILES) + " as PGM"
    )


def _table_spec(args):
    if args.table == 1:
        mosaics = [(f"Model {i} vs Model {j}",
                    [MAModel(MA_TOKENS[f"ma{i}"], half_width=args.model_width or 11),
                     MAModel(MA_TOKENS[f"ma{j}"], half_width=args.model_width or 11)])
                   for i, j in TABLE1_PAIRS]
        return mosaics, RegionGeometry("vsplit"), 128, 2
    if args.brodatz_dir is None:
        raise CliError(
            f"table {args.table} requires --brodatz-dir with "
            + ", ".join(BRODATZ_FILES) + " as PGM (album images are not bundled)"
        )
    directory = Path(args.brodatz_dir)
    if args.table in (2, 3):
        mosaics = [(f"{a} vs {b}", [_brodatz_path(directory, a), _brodatz_path(directory, b)])
                   for a, b in TABLE2_PAIRS]
        geom = RegionGeometry("vsplit" if args.table == 2 else "disk")
        return mosaics, geom, 160, 2
    mosaics = [("+".join(quad), [_brodatz_path(directory, name) for name in quad])
               for quad in TABLE4_QUADS]
    return mosaics, RegionGeometry("quadrants"), 160, 4


def cmd_reproduce(args) -> int:
    started = time.time()
    out = _out_dir(args)
    mosaics, geom, size, k = _table_spec(args)
    m = args.m if args.m is not None else default_half_width(size)

    def run(item):
        index, (name, sources) = item
        field, truth = compose_mosaic(sources, geom, size, size, args.seed + index)
        accs = _reproduce_mosaic(field, truth, k, m, args.seed + index, args.restarts)
        return name, accs

    with ThreadPoolExecutor(max_workers=_thread_count(args)) as pool:
        results = list(pool.map(run, enumerate(mosaics)))
    rows = [[name, f"{s:.4f}", f"{w:.4f}", f"{km:.4f}"] for name, (s, w, km) in results]
    means = np.array([accs for _, accs in results]).mean(axis=0)
    rows.append(["Mean Value"] + [f"{v:.4f}" for v in means])
    path = out / f"table{args.table}.csv"
    formats.write_csv(path, ["mosaic", "single_linkage", "ward_linkage", "k_means"],
                      rows, seed=args.seed)
    _write_manifest(out, args, [path], started)
    for row in rows:
        print("reproduce: " + " ".join(str(v) for v in row))
    return 0


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------

def _parse_n_list(text: str):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _ma_model(token: str, width: int) -> MAModel:
    if token not in MA_TOKENS:
        raise CliError(f"model must be one of {sorted(MA_TOKENS)}, got {token!r}")
    return MAModel(MA_TOKENS[token], half_width=width)


def cmd_theory(args) -> int:
    started = time.time()
    out = _out_dir(args)
    path = out / f"{args.experiment}.csv"
    if args.experiment == "concentration":
        model = _ma_model(args.models.split(",")[0], args.model_width)
        rows = evaluation.concentration_experiment(
            model, _parse_n_list(args.n_list), args.a, args.replicates, args.seed)
        formats.write_csv(path, ["n", "m", "frequency"], rows, seed=args.seed)
    elif args.experiment == "consistency":
        tokens = args.models.split(",")
        if len(tokens) != 2:
            raise CliError("consistency needs --models with two entries, e.g. ma1,ma2")
        model0 = _ma_model(tokens[0], args.model_width)
        model1 = _ma_model(tokens[1], args.model_width)
        rows = evaluation.consistency_experiment(
            model0, model1, _parse_n_list(args.n_list), args.replicates,
            args.seed, beta=args.beta, restarts=args.restarts)
        formats.write_csv(
            path,
            ["n", "m", "mean_error_rate", "envelope", "envelope_fitted", "degenerate"],
            rows, seed=args.seed)
    elif args.experiment == "theorem2":
        sizes0 = KernelSizeField.constant(args.sigma0 * np.eye(2), args.n, args.n)
        sizes1 = KernelSizeField.constant(args.sigma1 * np.eye(2), args.n, args.n)
        report = evaluation.theorem2_experiment(
            sizes0, sizes1, args.n, args.beta, args.seed,
            replicates=args.replicates, b=args.b, scale=args.kernel_scale)
        rows = [[i, f] for i, f in enumerate(report.fractions)]
        rows.append(["mean", report.mean_fraction])
        rows.append(["degenerate", int(report.degenerate)])
        formats.write_csv(path, ["replicate", "fraction"], rows, seed=args.seed)
        print(f"theory: theorem2 mean covered-set accuracy {report.mean_fraction:.4f} "
              f"(b={report.b:.4f}, covered {report.covered_pixels}/{report.total_pixels})")
    elif args.experiment == "lemma3":
        rows = evaluation.lemma3_experiment(
            _parse_n_list(args.n_list), args.seed, pairs=args.pairs,
            scale=args.kernel_scale)
        formats.write_csv(path, ["n", "m", "max_ratio", "median_ratio", "pairs"],
                          rows, seed=args.seed)
    else:
        raise CliError(f"unknown experiment {args.experiment!r}")
    _write_manifest(out, args, [path], started)
    print(f"theory: wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(sub, *, seed=True, out=True):
    if seed:
        sub.add_argument("--seed", type=int, default=0, help="RNG seed")
    if out:
        sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker cap (env TEXSEG_THREADS); results unchanged")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="texseg",
        description="Texture segmentation via patch autocovariance features")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a synthetic mosaic + truth mask")
    gen.add_argument("--models", required=True,
                     help="comma list: ma1..ma4, kernel:a[,b,d], or image paths")
    gen.add_argument("--geom", default="vsplit",
                     choices=["vsplit", "hsplit", "disk", "quadrants", "mask"])
    gen.add_argument("--mask", help="label-map PGM for --geom mask")
    gen.add_argument("--size", type=int, default=128)
    gen.add_argument("--radius", type=float, default=None, help="disk radius")
    gen.add_argument("--model-width", type=int, default=None,
                     help="moving-average half width (default round(sqrt(size)))")
    _add_common(gen)
    gen.set_defaults(func=cmd_generate)

    feat = subs.add_parser("features", help="write per-pixel feature stack (TEXC)")
    feat.add_argument("--input", required=True)
    feat.add_argument("--m", type=int, default=None, help="patch half width")
    feat.add_argument("--padding", default="reflect", choices=["reflect", "wrap", "shrink"])
    feat.add_argument("--with-location", action=argparse.BooleanOptionalAction, default=True)
    _add_common(feat, seed=False)
    feat.set_defaults(func=cmd_features)

    seg = subs.add_parser("segment", help="segment a field into textured regions")
    seg.add_argument("--input", required=True)
    seg.add_argument("--algo", required=True,
                     choices=["kmeans", "slink-threshold", "slink-k", "ward"])
    seg.add_argument("--k", type=int, default=None)
    seg.add_argument("--m", type=int, default=None)
    seg.add_argument("--with-location", action=argparse.BooleanOptionalAction, default=True)
    seg.add_argument("--b", type=float, default=None, help="single-linkage radius")
    seg.add_argument("--beta", type=float, default=1.5)
    seg.add_argument("--min-size", type=int, default=0)
    seg.add_argument("--restarts", type=int, default=10)
    seg.add_argument("--padding", default="reflect", choices=["reflect", "wrap", "shrink"])
    seg.add_argument("--metric", default="linf", choices=["linf", "l2"])
    seg.add_argument("--sample-stride", type=int, default=4)
    _add_common(seg)
    seg.set_defaults(func=cmd_segment)

    ev = subs.add_parser("evaluate", help="permutation-matched accuracy of a labeling")
    ev.add_argument("--est", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--k", type=int, default=None)
    ev.add_argument("--out", default=None)
    ev.add_argument("--threads", type=int, default=None)
    ev.set_defaults(func=cmd_evaluate)

    rep = subs.add_parser("reproduce", help="re-run a results table")
    rep.add_argument("--table", type=int, required=True, choices=[1, 2, 3, 4])
    rep.add_argument("--brodatz-dir", default=None)
    rep.add_argument("--m", type=int, default=None)
    rep.add_argument("--model-width", type=int, default=None)
    rep.add_argument("--restarts", type=int, default=5)
    _add_common(rep)
    rep.set_defaults(func=cmd_reproduce)

    theo = subs.add_parser("theory", help="Monte-Carlo checks of the theory")
    theo.add_argument("--experiment", required=True,
                      choices=["concentration", "consistency", "theorem2", "lemma3"])
    theo.add_argument("--models", default="ma3")
    theo.add_argument("--model-width", type=int, default=2)
    theo.add_argument("--n-list", default="36,64,100,144")
    theo.add_argument("--n", type=int, default=49)
    theo.add_argument("--m", type=int, default=None, help="patch half width (theorem2)")
    theo.add_argument("--restarts", type=int, default=4)
    theo.add_argument("--a", type=float, default=0.3)
    theo.add_argument("--replicates", type=int, default=200)
    theo.add_argument("--beta", type=float, default=1.5)
    theo.add_argument("--b", type=float, default=None)
    theo.add_argument("--sigma0", type=float, default=1.0)
    theo.add_argument("--sigma1", type=float, default=9.0)
    theo.add_argument("--kernel-scale", type=float, default=None)
    theo.add_argument("--pairs", type=int, default=60)
    _add_common(theo)
    theo.set_defaults(func=cmd_theory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
