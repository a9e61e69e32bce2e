"""``aem`` command-line entry point.

Subcommands: gen-data, train, eval, sample, calibrate, grid, is-demo. Every
subcommand that draws random numbers takes ``--seed`` and is deterministic.
"""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import data as data_mod
from .config import load_config
from .errors import AEMError, ConfigurationError
from .model import estimate_log_prob, kde_log_prob, sir_sample, tune_kde
from .quadrature import calibrate, is_scaling_demo
from .train import train

log = logging.getLogger("aem")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_data(path, has_header=False):
    return data_mod.load_csv(path, has_header=has_header)


def _load_model(path):
    return ckpt_io.load(path).to_model()


def cmd_gen_data(args):
    x = data_mod.generate(args.kind, args.n, args.seed, image_path=args.image)
    data_mod.save_csv(args.out, x)
    log.info("wrote %d rows to %s", x.shape[0], args.out)


def cmd_train(args):
    model_cfg, train_cfg = load_config(args.config)
    if args.seed is not None:
        train_cfg.seed = args.seed
    x = _load_data(args.data, args.header)
    if x.shape[1] != model_cfg.dim:
        raise ConfigurationError(f"config dim {model_cfg.dim} does not match data dimension {x.shape[1]}")
    if args.val:
        x_train, x_val = x, _load_data(args.val, args.header)
    else:
        split = data_mod.split_standardize(x, (0.9, 0.05, 0.05), seed=train_cfg.seed)
        x_train, x_val = split.train, split.validation
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    result = train(model_cfg, train_cfg, x_train, x_val, log_path=log_path)
    ckpt_io.save(result.checkpoint, args.out)
    print(f"best validation metric {result.checkpoint.best_metric:.6f} at step {result.checkpoint.step}")


def _mean_2se(values):
    values = np.asarray(values)
    se = values.std(ddof=1) / math.sqrt(values.size) if values.size > 1 else float("nan")
    return float(values.mean()), 2.0 * se


def cmd_eval(args):
    model = _load_model(args.ckpt)
    x = _load_data(args.data, args.header)
    if args.rows:
        x = x[: args.rows]
    rng = np.random.default_rng(args.seed)
    if args.kde:
        if not args.val:
            raise ConfigurationError("--kde needs --val data for tuning the bandwidth and proposal weight")
        x_val = _load_data(args.val, args.header)[: args.val_rows]
        kde, _ = tune_kde(model, x_val, rng, n_samples=args.samples)
        log.info("KDE bandwidth %g proposal weight %g", kde.bandwidth, kde.proposal_weight)
        values = kde_log_prob(model, x, kde, rng)
        label = "KDE"
    else:
        values = estimate_log_prob(model, x, args.samples, rng).log_p
        label = "AEM"
    mean, two_se = _mean_2se(values)
    q_mean, q_two_se = _mean_2se(model.proposal_log_prob(x))
    print(f"{label} log likelihood: {mean:.4f} +/- {two_se:.4f} nats ({x.shape[0]} rows)")
    print(f"proposal log likelihood: {q_mean:.4f} +/- {q_two_se:.4f} nats")


def cmd_sample(args):
    model = _load_model(args.ckpt)
    x = sir_sample(model, args.n, np.random.default_rng(args.seed), pool=args.pool)
    data_mod.save_csv(args.out, x)


def cmd_calibrate(args):
    model = _load_model(args.ckpt)
    x = _load_data(args.data, args.header)[: args.rows]
    report = calibrate(model, x, args.s_grid, np.random.default_rng(args.seed),
                       n_conditionals=args.conditionals)
    Path(args.out).write_text(report.to_csv())
    print(report.to_csv(), end="")


def write_pgm(path, image):
    """Binary 8-bit PGM from a (rows, cols) uint8 array."""
    image = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(image.tobytes())


def density_grid(model, bounds, res, n_samples, rng):
    """Log density on a ``res x res`` grid; returns (x1 grid, x2 grid, log p) each (res, res).

    Row ``i`` holds ``x2 = x2_lo + i * step``; column ``j`` holds ``x1``.
    """
    if model.dim != 2:
        raise ConfigurationError(f"density grid needs a 2-D model, got D={model.dim}")
    (a0, a1), (b0, b1) = bounds
    g1, g2 = np.meshgrid(np.linspace(a0, a1, res), np.linspace(b0, b1, res))
    pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
    log_p = estimate_log_prob(model, pts, n_samples, rng).log_p.reshape(res, res)
    return g1, g2, log_p


def render_density(log_p):
    """Grayscale image of ``exp(log_p)`` scaled to [0, 255], top row = largest x2."""
    finite = np.isfinite(log_p)
    img = np.zeros(log_p.shape)
    if finite.any():
        img[finite] = np.exp(log_p[finite] - log_p[finite].max())
    return np.round(255.0 * img[::-1]).astype(np.uint8)


def cmd_grid(args):
    model = _load_model(args.ckpt)
    if args.bounds:
        b = args.bounds
        if len(b) != 4:
            raise ConfigurationError("--bounds needs x1lo,x1hi,x2lo,x2hi")
        bounds = ((b[0], b[1]), (b[2], b[3]))
    elif args.data:
        x = _load_data(args.data, args.header)
        lo, hi = x.min(axis=0), x.max(axis=0)
        bounds = ((lo[0], hi[0]), (lo[1], hi[1]))
    else:
        raise ConfigurationError("grid needs --data (bounding box) or --bounds")
    g1, g2, log_p = density_grid(model, bounds, args.res, args.samples, np.random.default_rng(args.seed))
    data_mod.save_csv(args.out, np.stack([g1.ravel(), g2.ravel(), log_p.ravel()], axis=1),
                      header="x1,x2,log_density")
    pgm = args.pgm or str(Path(args.out).with_suffix(".pgm"))
    write_pgm(pgm, render_density(log_p))


def cmd_is_demo(args):
    trials = is_scaling_demo(args.dims, np.random.default_rng(args.seed), trials=args.trials,
                             n_samples=args.samples)
    lines = ["dim,trial,log_z_hat"]
    for d, values in trials.items():
        lines += [f"{d},{i},{v!r}" for i, v in enumerate(values.tolist())]
    Path(args.out).write_text("\n".join(lines) + "\n")
    for d, values in trials.items():
        print(f"D={d}: median log Z_hat {np.median(values):.4f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="aem", description="Autoregressive energy machines")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic 2-D dataset as CSV")
    p.add_argument("--kind", required=True, choices=data_mod.KINDS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image", help="8-bit PGM for --kind image")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--val", help="validation CSV; default is a seeded 5%% holdout of --data")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = add("eval", cmd_eval, "mean test log likelihood +/- 2 standard errors")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--kde", action="store_true", help="use the tuned KDE-normalised density")
    p.add_argument("--val", help="validation CSV for KDE tuning")
    p.add_argument("--val-rows", type=int, default=1000)
    p.add_argument("--rows", type=int, help="evaluate only the first ROWS rows")
    p.add_argument("--seed", type=int, default=0)

    p = add("sample", cmd_sample, "draw SIR samples")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pool", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("calibrate", cmd_calibrate, "compare importance-sampled log Z with quadrature")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="validation CSV")
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--s-grid", type=_int_list, default=[20, 200, 2000, 20000])
    p.add_argument("--conditionals", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("grid", cmd_grid, "density on a 2-D grid as CSV plus a PGM rendering")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="CSV whose bounding box defines the grid")
    p.add_argument("--bounds", type=_float_list, help="x1lo,x1hi,x2lo,x2hi")
    p.add_argument("--res", type=int, default=200)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="image path (default: <out>.pgm)")

    p = add("is-demo", cmd_is_demo, "importance-sampling bias versus dimension")
    p.add_argument("--dims", type=_int_list, default=[1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    for name in ("train", "eval", "calibrate", "grid"):
        sub.choices[name].add_argument("--header", action="store_true",
                                       help="skip the first line of every input CSV")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        args.func(args)
    except (AEMError, ValueError, OSError) as exc:
        print(f"aem {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
