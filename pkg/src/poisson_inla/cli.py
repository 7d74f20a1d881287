"""Command-line front end: corrupt, restore, evaluate, pipeline.

Every command stages its outputs in a hidden sibling directory and moves it
into place only after all files are written, so a failure never leaves a
half-populated output directory behind.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DimensionMismatch, InlaError, InvalidConfig, IoError, ValidationError
from .gmrf import GridGraph
from .imaging import (
    GENERATOR,
    POISSON_SAMPLER,
    ContrastParams,
    PixelImage,
    corrupt_poisson,
    intensity_forward,
    intensity_inverse,
    read_pgm,
    smooth_test_image,
    write_pgm,
)
from .inla import InlaConfig, run_inla
from .mcmc import ChainConfig, run_chain
from .metrics import evaluate as evaluate_metrics

log = logging.getLogger("poisson_inla")

SCHEMA_VERSION = "1.0"
MARGINAL_POINTS = 201

RESTORE_DEFAULTS = {
    "engine": "inla",
    "strategy": "ccd",
    "delta_z": 1.0,
    "delta_pi": 2.5,
    "f0": math.sqrt(2.0),
    "workers": 1,
    "ordering": "natural",
    "prior": "flat",
    "theta": None,
    "steps": 2000,
    "burn_in": 1000,
    "step_size": 0.1,
    "chain_seed": 0,
    "theta_mode": "fixed",
    "hist_bins": 50,
    "pixels": [],
    "truth": None,
    "space": "latent",
}


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def _read_json(path) -> dict:
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_matrix(path: Path, arr, integer: bool = False) -> None:
    fmt = "%d" if integer else "%.17g"
    np.savetxt(path, np.atleast_2d(arr), fmt=fmt, delimiter=",")


def read_matrix(path, integer: bool = False) -> np.ndarray:
    text = _read_bytes(path).decode("ascii", errors="replace")
    try:
        rows = [[float(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
    except ValueError:
        raise ValidationError(f"{path} contains a non-numeric entry") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path} is empty or ragged")
    arr = np.array(rows)
    if integer:
        if np.any(arr != np.round(arr)) or np.any(arr < 0):
            raise ValidationError(f"{path} must hold non-negative integers")
        return arr.astype(np.int64)
    return arr


@contextlib.contextmanager
def staged_dir(out):
    """Yield a temporary directory that replaces ``out`` on clean exit."""
    out = Path(out)
    parent = out.parent if str(out.parent) else Path(".")
    try:
        parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=parent))
    except OSError as exc:
        raise IoError(f"cannot create output directory next to {out}: {exc}") from None
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    old = None
    try:
        if out.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old.", dir=parent))
            os.replace(out, old / "prev")
        os.replace(tmp, out)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise IoError(f"cannot move outputs into {out}: {exc}") from None
    finally:
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)


def load_schema() -> dict:
    return json.loads(resources.files("poisson_inla").joinpath("schemas/report.schema.json").read_text())


def _parse_pair(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = [v for v in str(text).split(",") if v.strip()]
    try:
        a, b = (float(v) for v in vals)
    except ValueError:
        raise InvalidConfig(f"expected two comma-separated numbers, got {text!r}") from None
    return a, b


def _parse_pixels(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(p) for p in text]
    try:
        return [int(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise InvalidConfig(f"pixel list must be comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# corrupt
# ---------------------------------------------------------------------------


def corrupt(image: PixelImage, contrast: ContrastParams, seed: int, out, source: str = "") -> dict:
    """Map ``image`` to rates, draw counts, and write the noisy directory."""
    if not 0 <= int(seed) < 2**64:
        raise InvalidConfig("seed must be a non-negative 64-bit integer")
    x, lo, hi = intensity_forward(image, contrast)
    counts = corrupt_poisson(x, int(seed))
    meta = {
        "seed": int(seed),
        "lambda_min": contrast.lambda_min,
        "lambda_max": contrast.lambda_max,
        "i_min": lo,
        "i_max": hi,
        "rows": image.rows,
        "cols": image.cols,
        "generator": GENERATOR,
        "poisson_sampler": POISSON_SAMPLER,
        "source": source,
        "library_version": __version__,
    }
    with staged_dir(out) as tmp:
        write_matrix(tmp / "counts.csv", counts, integer=True)
        (tmp / "view.pgm").write_bytes(write_pgm(np.minimum(counts, 255)))
        (tmp / "meta.json").write_text(_dump_json(meta))
    return meta


def cmd_corrupt(args) -> int:
    contrast = ContrastParams(args.lmin, args.lmax)
    image = read_pgm(_read_bytes(args.input))
    corrupt(image, contrast, args.seed, args.out, source=os.path.basename(args.input))
    return 0


# ---------------------------------------------------------------------------
# restore
# ---------------------------------------------------------------------------


def _load_noisy(in_dir) -> tuple[np.ndarray, dict]:
    in_dir = Path(in_dir)
    meta_path = in_dir / "meta.json"
    if not meta_path.is_file():
        raise IoError(f"missing transform sidecar {meta_path}")
    meta = _read_json(meta_path)
    for key in ("lambda_min", "lambda_max", "i_min", "i_max", "rows", "cols", "seed"):
        if key not in meta:
            raise ValidationError(f"{meta_path} lacks '{key}'")
    counts = read_matrix(in_dir / "counts.csv", integer=True)
    if counts.shape != (meta["rows"], meta["cols"]):
        raise ValidationError(f"counts are {counts.shape}, sidecar says {meta['rows']}x{meta['cols']}")
    return counts, meta


def _transform_of(meta: dict) -> dict:
    return {k: meta[k] for k in ("lambda_min", "lambda_max", "i_min", "i_max", "rows", "cols")}


def resolve_restore_options(config: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, a config mapping and explicit overrides, then validate."""
    opts = dict(RESTORE_DEFAULTS)
    for src in (config or {}), (overrides or {}):
        for key, val in src.items():
            if key not in RESTORE_DEFAULTS:
                raise InvalidConfig(f"unknown restore option {key!r}")
            if val is not None:
                opts[key] = val
    if opts["engine"] not in ("inla", "mcmc"):
        raise InvalidConfig(f"engine must be 'inla' or 'mcmc', got {opts['engine']!r}")
    if opts["space"] not in ("latent", "pixel"):
        raise InvalidConfig(f"space must be 'latent' or 'pixel', got {opts['space']!r}")
    opts["pixels"] = _parse_pixels(opts["pixels"])
    if opts["theta"] is not None:
        opts["theta"] = list(_parse_pair(opts["theta"]))
    _inla_config(opts).validate()
    if opts["engine"] == "mcmc":
        _chain_config(opts, opts["theta"] or (1.0, 1.0)).validate()
    return opts


def _inla_config(opts: dict, strategy: str | None = None) -> InlaConfig:
    return InlaConfig(
        strategy=strategy or opts["strategy"],
        delta_z=float(opts["delta_z"]),
        delta_pi=float(opts["delta_pi"]),
        f0=float(opts["f0"]),
        workers=int(opts["workers"]),
        ordering=opts["ordering"],
        prior=opts["prior"],
        fixed_theta=None if opts["theta"] is None else tuple(opts["theta"]),
    )


def _chain_config(opts: dict, theta) -> ChainConfig:
    return ChainConfig(
        steps=int(opts["steps"]),
        burn_in=int(opts["burn_in"]),
        step_size=float(opts["step_size"]),
        seed=int(opts["chain_seed"]),
        theta_mode=opts["theta_mode"],
        theta=tuple(float(t) for t in theta),
        prior=opts["prior"],
        hist_bins=int(opts["hist_bins"]),
    )


def _metrics_against(truth: PixelImage, latent: np.ndarray, meta: dict, space: str) -> dict:
    contrast = ContrastParams(meta["lambda_min"], meta["lambda_max"])
    if truth.values.shape != latent.shape:
        raise DimensionMismatch(f"truth is {truth.values.shape}, estimate is {latent.shape}")
    if space == "latent":
        ref, _, _ = intensity_forward(truth, contrast, meta["i_min"], meta["i_max"])
        est = latent
    else:
        ref = truth.values
        est = intensity_inverse(latent, meta["i_min"], meta["i_max"], contrast)
    return evaluate_metrics(ref, est, space=space).to_dict()


def restore(in_dir, out, opts: dict) -> dict:
    """Run one engine on a noisy directory and write the restored directory.

    Returns the report dictionary that was written to ``report.json``.
    """
    counts, meta = _load_noisy(in_dir)
    rows, cols = counts.shape
    truth = read_pgm(_read_bytes(opts["truth"])) if opts["truth"] else None
    bad = [p for p in opts["pixels"] if not 0 <= p < rows * cols]
    if bad:
        raise InvalidConfig(f"pixel indices out of range: {bad}")
    g = GridGraph(rows, cols)
    contrast = ContrastParams(meta["lambda_min"], meta["lambda_max"])
    y = counts.ravel()
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    report = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "engine": opts["engine"],
        "seed": int(meta["seed"]),
        "transform": _transform_of(meta),
        "config": {k: v for k, v in opts.items() if k != "truth"},
        "chain": None,
    }
    marginal_rows = None

    if opts["engine"] == "inla":
        res = run_inla(g, y, _inla_config(opts), on_phase=lambda p: log.info("inla phase: %s", p))
        timings.update(res.timings)
        eap = res.marginals.eap
        theta = res.theta_mode
        report["strategy"] = res.strategy
        report["n_points"] = len(res.points)
        report["hyper_points"] = [
            {"sigma2": float(p.theta[0]), "d": float(p.theta[1]), "weight": float(p.weight), "log_post": float(p.log_post)}
            for p in res.points
        ]
        report["clamped_pixels"] = int(sum(int(p.approx.clamped.sum()) for p in res.points[:1]))
        report["n_evaluations"] = int(res.n_evaluations)
        if opts["pixels"]:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["pixel", "abscissa", "density"])
            for p in opts["pixels"]:
                m, s = float(res.marginals.eap[p]), float(res.marginals.sd[p])
                xs = np.linspace(m - 6 * s, m + 6 * s, MARGINAL_POINTS)
                for a, dens in zip(xs, res.marginals.density(p, xs)):
                    w.writerow([p, repr(float(a)), repr(float(dens))])
            marginal_rows = buf.getvalue()
    else:
        theta_source = "user"
        theta = opts["theta"]
        if theta is None:
            res = run_inla(g, y, _inla_config(opts, strategy="eb"))
            theta = res.theta_mode
            timings["mode"] = res.timings["mode"]
            theta_source = "inla-mode"
        t1 = time.perf_counter()
        summary = run_chain(g, y, _chain_config(opts, theta))
        timings["chain"] = time.perf_counter() - t1
        eap = summary.mean
        report["strategy"] = None
        report["n_points"] = None
        report["chain"] = {
            "steps": int(opts["steps"]),
            "burn_in": int(opts["burn_in"]),
            "seed": int(summary.seed),
            "acceptance_rate": float(summary.acceptance_rate),
            "step_size": float(summary.step_size),
            "n_retained": int(summary.n_retained),
            "sampler": summary.sampler,
            "theta_source": theta_source,
            "theta_mean": None if summary.theta_mean is None else list(summary.theta_mean),
            "theta_acceptance": summary.theta_acceptance,
        }
        if opts["pixels"]:
            marginal_rows = summary.histogram_csv(opts["pixels"], index_column="pixel")

    theta = [float(t) for t in theta]
    report["theta_mode"] = {"sigma2": theta[0], "d": theta[1]}
    eap = np.asarray(eap, dtype=float).reshape(rows, cols)
    report["metrics"] = _metrics_against(truth, eap, meta, opts["space"]) if truth is not None else None
    timings["total"] = time.perf_counter() - t0
    report["timings"] = timings

    restored = intensity_inverse(eap, meta["i_min"], meta["i_max"], contrast)
    with staged_dir(out) as tmp:
        (tmp / "restored.pgm").write_bytes(write_pgm(restored))
        write_matrix(tmp / "eap.csv", eap)
        (tmp / "meta.json").write_text(_dump_json(meta))
        (tmp / "report.json").write_text(_dump_json(report))
        if marginal_rows is not None:
            (tmp / "marginals.csv").write_text(marginal_rows)
    return report


def cmd_restore(args) -> int:
    config = _read_json(args.config) if args.config else {}
    overrides = {
        "engine": args.engine,
        "strategy": args.strategy,
        "delta_z": args.delta_z,
        "delta_pi": args.delta_pi,
        "f0": args.f0,
        "workers": args.workers,
        "ordering": args.ordering,
        "theta": args.theta,
        "steps": args.steps,
        "burn_in": args.burnin,
        "step_size": args.step_size,
        "chain_seed": args.chain_seed,
        "theta_mode": args.theta_mode,
        "pixels": args.pixels,
        "truth": args.truth,
        "space": args.space,
    }
    opts = resolve_restore_options(config, overrides)
    report = restore(args.input, args.out, opts)
    log.info("restored with theta sigma2=%.6g d=%.6g", report["theta_mode"]["sigma2"], report["theta_mode"]["d"])
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _estimate_latent(path: Path) -> tuple[np.ndarray | None, dict | None]:
    """Latent field and transform stored in a restore or corrupt directory."""
    meta = _read_json(path / "meta.json") if (path / "meta.json").is_file() else None
    if (path / "eap.csv").is_file():
        return read_matrix(path / "eap.csv"), meta
    if (path / "counts.csv").is_file():
        return read_matrix(path / "counts.csv", integer=True).astype(float), meta
    return None, meta


def evaluate_paths(original, estimate, meta_path=None, space: str | None = None, c1=None, c2=None) -> dict:
    """Metrics between an original PGM and an estimate (PGM file or output directory)."""
    truth = read_pgm(_read_bytes(original))
    est_path = Path(estimate)
    meta = _read_json(meta_path) if meta_path else None
    if est_path.is_dir():
        latent, dir_meta = _estimate_latent(est_path)
        meta = meta or dir_meta
        if latent is None:
            raise IoError(f"{est_path} holds neither eap.csv nor counts.csv")
        if meta is None:
            raise IoError(f"no transform sidecar for {est_path}; pass --meta")
        space = space or "latent"
        if truth.values.shape != latent.shape:
            raise DimensionMismatch(f"original is {truth.values.shape}, estimate is {latent.shape}")
        contrast = ContrastParams(meta["lambda_min"], meta["lambda_max"])
        if space == "latent":
            ref, _, _ = intensity_forward(truth, contrast, meta["i_min"], meta["i_max"])
            est = latent
        else:
            ref = truth.values
            est = intensity_inverse(latent, meta["i_min"], meta["i_max"], contrast)
    else:
        other = read_pgm(_read_bytes(est_path))
        if meta is not None and space != "pixel":
            contrast = ContrastParams(meta["lambda_min"], meta["lambda_max"])
            ref, _, _ = intensity_forward(truth, contrast, meta["i_min"], meta["i_max"])
            est, _, _ = intensity_forward(other, contrast, meta["i_min"], meta["i_max"])
            space = "latent"
        else:
            ref, est, space = truth.values, other.values, "pixel"
    if np.shape(ref) != np.shape(est):
        raise DimensionMismatch(f"original is {np.shape(ref)}, estimate is {np.shape(est)}")
    return evaluate_metrics(ref, est, c1, c2, space=space).to_dict()


def cmd_evaluate(args) -> int:
    result = evaluate_paths(args.original, args.estimate, args.meta, args.space, args.c1, args.c2)
    text = _dump_json(result)
    if args.out:
        try:
            tmp = Path(args.out).with_name(f".{Path(args.out).name}.tmp")
            tmp.write_text(text)
            os.replace(tmp, args.out)
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc}") from None
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ["engine", "strategy", "psnr", "ssim", "mse", "time_s", "sigma2", "d", "n_points", "status", "error"]


def _pipeline_runs(config: dict) -> list[dict]:
    runs = config.get("runs")
    if runs is None:
        engines = config.get("engines", ["inla"])
        runs = [{"engine": e} for e in engines]
    if not isinstance(runs, list) or not runs:
        raise InvalidConfig("pipeline config needs a non-empty 'runs' or 'engines' list")
    shared = config.get("restore", {})
    return [resolve_restore_options({**shared, **run}) for run in runs]


def _run_tag(opts: dict, used: set) -> str:
    base = opts["engine"] if opts["engine"] == "mcmc" else f"inla-{opts['strategy']}"
    tag, k = base, 2
    while tag in used:
        tag, k = f"{base}-{k}", k + 1
    used.add(tag)
    return tag


def pipeline(config: dict, out) -> dict:
    """Corrupt once, restore with every configured engine, tabulate metrics."""
    contrast = ContrastParams(config.get("lambda_min", 2.0), config.get("lambda_max", 25.0))
    if "seed" not in config:
        raise InvalidConfig("pipeline config needs a 'seed'")
    seed = int(config["seed"])
    space = config.get("space", "latent")
    runs = _pipeline_runs(config)
    if config.get("input"):
        image = read_pgm(_read_bytes(config["input"]))
        source = os.path.basename(config["input"])
    else:
        syn = config.get("synthetic", {})
        image = smooth_test_image(int(syn.get("size", 32)), syn.get("cols"), syn.get("kind", "sinusoid"))
        source = f"synthetic:{syn.get('kind', 'sinusoid')}"

    rows_out = []
    worst = 0
    with staged_dir(out) as tmp:
        truth_path = tmp / "truth.pgm"
        truth_path.write_bytes(write_pgm(image))
        corrupt(image, contrast, seed, tmp / "noisy", source=source)
        noisy = evaluate_paths(truth_path, tmp / "noisy", space=space)
        used: set = set()
        for opts in runs:
            tag = _run_tag(opts, used)
            opts = {**opts, "truth": str(truth_path), "space": space}
            row = {c: None for c in TABLE_COLUMNS}
            row.update(engine=opts["engine"], strategy=opts["strategy"] if opts["engine"] == "inla" else None)
            try:
                report = restore(tmp / "noisy", tmp / "runs" / tag, opts)
            except InlaError as exc:
                log.error("%s failed: %s", tag, exc)
                row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                worst = max(worst, exc.exit_code)
            else:
                m = report["metrics"]
                row.update(
                    psnr=m["psnr"],
                    ssim=m["ssim"],
                    mse=m["mse"],
                    time_s=report["timings"]["total"],
                    sigma2=report["theta_mode"]["sigma2"],
                    d=report["theta_mode"]["d"],
                    n_points=report["n_points"],
                    status="ok",
                )
            row["run"] = tag
            rows_out.append(row)
        table = {
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "seed": seed,
            "space": space,
            "source": source,
            "noisy": noisy,
            "rows": rows_out,
        }
        (tmp / "table.json").write_text(_dump_json(table))
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["run", *TABLE_COLUMNS], lineterminator="\n")
        w.writeheader()
        for row in rows_out:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
        (tmp / "table.csv").write_text(buf.getvalue())
    table["exit_code"] = worst
    return table


def cmd_pipeline(args) -> int:
    config = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        config["seed"] = args.seed
    if args.input:
        config["input"] = args.input
    if args.engines:
        config["engines"] = [e for e in args.engines.split(",") if e]
        config.pop("runs", None)
    out = args.out or config.get("out")
    if not out:
        raise InvalidConfig("pipeline needs --out or an 'out' entry in the config")
    table = pipeline(config, out)
    for row in table["rows"]:
        print(f"{row['run']:<14} {row['status']:<7} psnr={row['psnr']} ssim={row['ssim']} time={row['time_s']}")
    return table["exit_code"]


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    img = smooth_test_image(args.size, args.cols, args.kind)
    data = write_pgm(img)
    try:
        tmp = Path(args.out).with_name(f".{Path(args.out).name}.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, args.out)
    except OSError as exc:
        raise IoError(f"cannot write {args.out}: {exc}") from None
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poisson-inla", description="Bayesian restoration of Poisson-corrupted images.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("corrupt", help="map an image to rates and draw Poisson counts")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--lmin", type=float, default=2.0)
    c.add_argument("--lmax", type=float, default=25.0)
    c.add_argument("--seed", type=int, required=True)
    c.set_defaults(func=cmd_corrupt)

    r = sub.add_parser("restore", help="estimate the latent intensities from counts")
    r.add_argument("--in", dest="input", required=True, help="directory written by 'corrupt'")
    r.add_argument("--out", required=True)
    r.add_argument("--config", help="JSON file with restore options")
    r.add_argument("--engine", choices=["inla", "mcmc"])
    r.add_argument("--strategy", choices=["ccd", "grid", "eb", "fixed"])
    r.add_argument("--delta-z", type=float)
    r.add_argument("--delta-pi", type=float)
    r.add_argument("--f0", type=float)
    r.add_argument("--workers", type=int)
    r.add_argument("--ordering", choices=["natural", "band-reducing"])
    r.add_argument("--theta", help="sigma2,d for strategy 'fixed' or the chain")
    r.add_argument("--steps", type=int)
    r.add_argument("--burnin", type=int)
    r.add_argument("--step-size", type=float)
    r.add_argument("--chain-seed", type=int)
    r.add_argument("--theta-mode", choices=["fixed", "sample"])
    r.add_argument("--pixels", help="comma-separated pixel indices for marginals.csv")
    r.add_argument("--truth", help="original PGM; adds metrics to the report")
    r.add_argument("--space", choices=["latent", "pixel"])
    r.set_defaults(func=cmd_restore)

    e = sub.add_parser("evaluate", help="MSE, PSNR and SSIM against an original")
    e.add_argument("--original", required=True)
    e.add_argument("--estimate", required=True, help="PGM file, or a restore/corrupt output directory")
    e.add_argument("--meta", help="transform sidecar, when the estimate lacks one")
    e.add_argument("--space", choices=["latent", "pixel"])
    e.add_argument("--c1", type=float)
    e.add_argument("--c2", type=float)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("pipeline", help="corrupt, restore with several engines, tabulate")
    pl.add_argument("--config")
    pl.add_argument("--in", dest="input")
    pl.add_argument("--out")
    pl.add_argument("--seed", type=int)
    pl.add_argument("--engines", help="comma-separated, e.g. inla,mcmc")
    pl.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("synth", help="write a smooth 8-bit test pattern")
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--cols", type=int)
    s.add_argument("--kind", choices=["sinusoid", "ramp", "blob"], default="sinusoid")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except InlaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
