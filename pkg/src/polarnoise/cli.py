"""``polarnoise`` command line.

Every run writes its outputs and one ``manifest.json`` under ``--out``.
Options can also come from a JSON ``--config`` file whose keys are option
names (dashes or underscores); explicit flags win over the file, the file wins
over defaults. The manifest records the merged result.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import default_threads, ordered_map
from .burst_stats import ImageStack, StackMeta, accumulate, model_maps, report, validation_histograms
from .errors import DataError, NumericError
from .metrics import evaluate
from .montecarlo import compare_aolp, compare_dolp
from .mosaic import MosaicPattern, demosaic_bilinear, superpixels
from .noise_model import SensorNoiseParams, aolp_density, rician_pdf
from .stokes import PolarQuad, props, reconstruct
from .synth import SynthConfig, generate, write_sample
from .tensor_io import EXTENSION, TensorFile, normalize_raw, read_tensor, write_tensor

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# options that never change what is computed; kept out of the manifest so it is reproducible
_RUNTIME_OPTIONS = {"out", "threads", "error_json", "config", "func", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sub = self.prog.partition(" ")[2]
        raise UsageError(f"{sub}: {message}" if sub else message)


def _count(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not numbers: {text!r}") from None


def _json_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, tuple):
        return [_json_value(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _write_manifest(args, out: Path, inputs, outputs):
    config = {k: _json_value(v) for k, v in sorted(vars(args).items()) if k not in _RUNTIME_OPTIONS}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "tool": "polarnoise",
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(out)): _sha256(p) for p in sorted(outputs)},
        "timestamp": _timestamp(),
    }
    return _write_json(out / "manifest.json", manifest)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args) -> int:
    return default_threads() if args.threads is None else args.threads


def _load_linear(path):
    """Tensor as float64; u16 payloads are linearized with the header's black/white levels."""
    tf = read_tensor(path)
    data = tf.data
    if data.dtype == np.uint16:
        if "black_level" not in tf.meta or "white_level" not in tf.meta:
            raise DataError(f"{path}: u16 tensors need black_level and white_level in the header")
        data = normalize_raw(data, tf.meta["black_level"], tf.meta["white_level"])
    return tf, np.asarray(data, dtype=np.float64)


def _group_names(pattern: MosaicPattern) -> list[str]:
    return ["mono"] if pattern.n_channels == 4 else ["R", "G", "B"]


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_stokes(args):
    out = _out_dir(args)
    if out is None:
        raise UsageError("stokes: --out is required")
    pattern = MosaicPattern.named(args.pattern)
    _, raw = _load_linear(args.raw)
    img = demosaic_bilinear(raw, pattern)
    g = img.reshape(img.shape[:-1] + (-1, 4))
    s = reconstruct(PolarQuad(g[..., 0], g[..., 1], g[..., 2], g[..., 3]))
    p = props(s, on_degenerate="nan")
    names = _group_names(pattern)
    stokes = np.stack([s.s0, s.s1, s.s2], axis=-1).reshape(img.shape[0], img.shape[1], -1)
    outputs = [
        write_tensor(out / "stokes.pten", TensorFile(stokes.astype(np.float32),
                     [f"{c}_{n}" for n in names for c in ("s0", "s1", "s2")], {"pattern": pattern.name})),
        write_tensor(out / "s0.pten", TensorFile(np.asarray(s.s0, np.float32), names)),
        write_tensor(out / "dolp.pten", TensorFile(np.asarray(p.dolp, np.float32), names)),
        write_tensor(out / "aolp.pten", TensorFile(np.asarray(p.aolp, np.float32), names, {"unit": "rad"})),
    ]
    _write_manifest(args, out, [args.raw], outputs)
    return 0


def cmd_pdf(args):
    if args.kind == "dolp":
        if args.snr is None or not args.snr > 0:
            raise UsageError("pdf dolp: --snr (s0 / sigma_v) must be positive")
        sigma = 1.0 / args.snr
        upper = args.upper if args.upper is not None else args.psi + 10.0 * sigma
        x = np.linspace(0.0, upper, args.points)
        with np.errstate(all="ignore"):
            y = rician_pdf(x, args.psi, sigma)
        header = ["psi_hat", "density"]
    else:
        if args.snr is None or args.snr < 0:
            raise UsageError("pdf aolp: --snr (s_pol / sigma_v) must be non-negative")
        x = np.linspace(-0.5 * math.pi, 0.5 * math.pi, args.points)
        y = aolp_density(x, args.snr)
        if args.unit == "deg":
            x, y = np.degrees(x), y * (math.pi / 180.0)
        header = [f"aolp_error_{args.unit}", f"density_per_{args.unit}"]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericError("density is not finite on the requested grid")
    rows = zip(x.tolist(), np.asarray(y, dtype=float).tolist())
    out = _out_dir(args)
    if out is None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for a, b in rows:
            w.writerow([repr(a), repr(b)])
        sys.stdout.write(buf.getvalue())
        return 0
    path = _write_csv(out / f"pdf_{args.kind}.csv", header, rows)
    _write_manifest(args, out, [], [path])
    return 0


def cmd_validate(args):
    threads = _threads(args)
    dolp = compare_dolp(args.psi, args.snr, args.samples, args.seed, bins=args.bins, threads=threads)
    snr_pol = args.psi * args.snr
    aolp = compare_aolp(snr_pol, args.samples, args.seed + 1, bins=args.aolp_bins, threads=threads)
    rep = {
        "dolp": dolp.summary(),
        "aolp": aolp.summary(),
        "tv_threshold": args.tv_threshold,
        "pass": bool(dolp.tv < args.tv_threshold and aolp.tv < args.tv_threshold),
    }
    text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(text)
        return 0
    outputs = [out / "report.json"]
    outputs[0].write_text(text)
    for name, c in (("dolp", dolp), ("aolp", aolp)):
        outputs.append(_write_csv(out / f"{name}_hist.csv", ["bin_low", "bin_high", "mc_prob", "analytic_prob"], c.rows()))
    _write_manifest(args, out, [], outputs)
    sys.stdout.write(text)
    return 0


def _load_stack(args) -> ImageStack:
    tf, data = _load_linear(args.stack)
    raw = args.raw or tf.meta.get("kind") == "raw_burst"
    if raw:
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise DataError(f"raw bursts must be N x H x W, got {data.shape}")
        pattern = MosaicPattern.named(tf.meta.get("pattern", args.pattern))
        data = np.stack([superpixels(f, pattern) for f in data])
    elif data.ndim == 3:
        data = data[None]
    meta = {k: tf.meta[k] for k in ("exposure", "gain") if k in tf.meta}
    return ImageStack(data, StackMeta(**meta))


def cmd_burst_stats(args):
    out = _out_dir(args)
    if out is None:
        raise UsageError("burst-stats: --out is required")
    stack = _load_stack(args)
    p = SensorNoiseParams(*args.sensor) if args.sensor is not None else None
    source = args.noise_source
    if source is None and stack.n_frames < 2:
        source = "sensor"
    if source == "sensor" and p is None:
        raise UsageError("burst-stats: --sensor is required for a single frame or --noise-source sensor")
    ps = accumulate(stack.data, require_variance=source != "sensor")
    n_eff = 1 if args.single else args.n_frames
    maps = model_maps(ps, p, noise_source=source, n_frames=n_eff, saturation=args.saturation, threads=_threads(args))
    rep = report(maps, s0_peak=args.s0_peak, metadata={"frames": stack.n_frames})
    outputs = rep.write(out)
    c = ps.mean.shape[-1]
    outputs.append(write_tensor(out / "pixel_stats.pten", TensorFile(
        np.concatenate([ps.mean, ps.var], axis=-1).astype(np.float32),
        [f"mean_{i}" for i in range(c)] + [f"var_{i}" for i in range(c)], {"count": ps.count})))
    g = maps.dolp_bias.shape[-1]
    outputs.append(write_tensor(out / "maps.pten", TensorFile(
        np.concatenate([maps.dolp_bias, maps.dolp_std, maps.aolp_std], axis=-1).astype(np.float32),
        [f"{m}_{i}" for m in ("dolp_bias", "dolp_std", "aolp_std") for i in range(g)],
        {"n_frames": maps.n_frames, "noise_source": maps.noise_source})))
    if args.validation:
        if stack.n_frames < 2 and p is None:
            raise UsageError("burst-stats: --validation needs at least two frames or --sensor")
        vh = validation_histograms(stack, ps if ps.has_variance else None, p=p, noise_source=source)
        outputs.extend(vh.write_csv(out))
    _write_manifest(args, out, [args.stack], outputs)
    sys.stdout.write(json.dumps(rep.to_dict()["threshold_pcts"], sort_keys=True) + "\n")
    return 0


_SYNTH_FIELDS = ("num_frames", "translation_range", "rotation_range_deg", "downsample_factor", "crop_size",
                 "pattern", "sigma_s_sq_range", "sigma_r_sq_range", "noise", "aligned")


def cmd_synth(args):
    out = _out_dir(args)
    if out is None:
        raise UsageError("synth: --out is required")
    src_dir = Path(args.source_dir)
    if not src_dir.is_dir():
        raise DataError(f"{src_dir} is not a directory")
    sources = sorted(src_dir.glob(f"*{EXTENSION}"))
    if not sources:
        raise DataError(f"no {EXTENSION} files in {src_dir}")
    cfg = SynthConfig(**{k: getattr(args, k) for k in _SYNTH_FIELDS}, seed=args.seed)
    tasks = [(i * args.samples_per_source + j, path) for i, path in enumerate(sources)
             for j in range(args.samples_per_source)]

    def work(task):
        index, path = task
        _, src = _load_linear(path)
        sample = generate(src, cfg, index=index)
        return write_sample(sample, out / f"sample_{index:05d}", cfg)

    outputs = [p for paths in ordered_map(work, tasks, _threads(args)) for p in paths]
    _write_manifest(args, out, sources, outputs)
    return 0


def cmd_metrics(args):
    _, pred = _load_linear(args.pred)
    _, gt = _load_linear(args.gt)
    res = evaluate(pred, gt, s0_peak=args.s0_peak, clamp_dolp=args.clamp_dolp)
    text = json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n"
    out = _out_dir(args)
    if out is not None:
        path = out / "metrics.json"
        path.write_text(text)
        _write_manifest(args, out, [args.pred, args.gt], [path])
    sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: $POLARNOISE_THREADS or 1)")
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--error-json", action="store_true", help="report failures as JSON on stderr")

    parser = _Parser(prog="polarnoise", description="Noise analysis for polarization cameras.")
    parser.add_argument("--version", action="version", version=f"polarnoise {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stokes", parents=[common], help="demosaic a raw mosaic and compute s0/DoLP/AoLP")
    p.add_argument("raw")
    p.add_argument("--pattern", choices=("mono", "rgb"), default="mono")
    p.set_defaults(func=cmd_stokes)

    p = sub.add_parser("pdf", parents=[common], help="tabulate the analytic DoLP or AoLP density")
    p.add_argument("kind", choices=("dolp", "aolp"))
    p.add_argument("--psi", type=float, default=0.0, help="true DoLP (dolp only)")
    p.add_argument("--snr", type=float, default=None, help="s0/sigma_v for dolp, s_pol/sigma_v for aolp")
    p.add_argument("--points", type=_count, default=181)
    p.add_argument("--upper", type=float, default=None, help="upper end of the DoLP axis")
    p.add_argument("--unit", choices=("rad", "deg"), default="rad", help="AoLP axis unit")
    p.set_defaults(func=cmd_pdf)

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo vs analytic distributions")
    p.add_argument("--psi", type=float, required=True)
    p.add_argument("--snr", type=float, required=True, help="s0/sigma_v")
    p.add_argument("--samples", type=_count, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=_count, default=200)
    p.add_argument("--aolp-bins", type=_count, default=180)
    p.add_argument("--tv-threshold", type=float, default=0.02)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("burst-stats", parents=[common], help="per-pixel burst statistics and quality report")
    p.add_argument("stack")
    p.add_argument("--sensor", type=_pair, default=None, metavar="SIGMA_S_SQ,SIGMA_R_SQ")
    p.add_argument("--noise-source", choices=("fit", "pixel", "sensor"), default=None)
    p.add_argument("--n-frames", type=_count, default=None, help="frames averaged in the assessed image")
    p.add_argument("--single", action="store_true", help="assess a single capture (same as --n-frames 1)")
    p.add_argument("--saturation", type=float, default=None)
    p.add_argument("--s0-peak", type=float, default=1.0)
    p.add_argument("--raw", action="store_true", help="stack holds N x H x W raw mosaics (analysed per superpixel)")
    p.add_argument("--pattern", choices=("mono", "rgb"), default="mono")
    p.add_argument("--validation", action="store_true", help="also write observed-vs-analytic histograms")
    p.set_defaults(func=cmd_burst_stats)

    d = SynthConfig()
    p = sub.add_parser("synth", parents=[common], help="generate synthetic burst/ground-truth pairs")
    p.add_argument("source_dir")
    p.add_argument("--samples-per-source", type=_count, default=1)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--num-frames", type=_count, default=d.num_frames)
    p.add_argument("--translation-range", type=float, default=d.translation_range)
    p.add_argument("--rotation-range-deg", type=float, default=d.rotation_range_deg)
    p.add_argument("--downsample-factor", type=_count, default=d.downsample_factor)
    p.add_argument("--crop-size", type=_count, default=d.crop_size)
    p.add_argument("--pattern", choices=("mono", "rgb"), default=d.pattern)
    p.add_argument("--sigma-s-sq-range", type=_pair, default=d.sigma_s_sq_range)
    p.add_argument("--sigma-r-sq-range", type=_pair, default=d.sigma_r_sq_range)
    p.add_argument("--noise", action=argparse.BooleanOptionalAction, default=d.noise)
    p.add_argument("--aligned", action=argparse.BooleanOptionalAction, default=d.aligned)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("metrics", parents=[common], help="PSNR of a reconstruction against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--s0-peak", type=float, default=1.0)
    p.add_argument("--clamp-dolp", action="store_true")
    p.set_defaults(func=cmd_metrics)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config``."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        loaded = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(loaded, dict):
        raise UsageError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in subparser._actions}
    values = {k.replace("-", "_"): v for k, v in loaded.items()}
    unknown = sorted(set(values) - dests - {"help"})
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {unknown}")
    for k in ("sigma_s_sq_range", "sigma_r_sq_range", "sensor"):
        if isinstance(values.get(k), list):
            values[k] = tuple(values[k])
    subparser.set_defaults(**values)
    return parser.parse_args(argv)


def _fail(message: str, kind: str, code: int, as_json: bool) -> int:
    if as_json:
        sys.stderr.write(json.dumps({"error": {"type": kind, "message": message, "exit_code": code}}) + "\n")
    else:
        sys.stderr.write(f"polarnoise: error: {message}\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--error-json" in argv
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        return _fail(str(exc), "UsageError", EXIT_USAGE, as_json)
    except (DataError, OSError) as exc:
        return _fail(str(exc), type(exc).__name__, EXIT_DATA, as_json)
    except (NumericError, ArithmeticError) as exc:
        return _fail(str(exc), type(exc).__name__, EXIT_NUMERIC, as_json)
    except ValueError as exc:
        return _fail(str(exc), type(exc).__name__, EXIT_USAGE, as_json)


if __name__ == "__main__":
    sys.exit(main())
