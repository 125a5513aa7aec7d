"""Command-line entry point: ``pnpkit deblur | verify | sweep``.

Exit codes: 0 success, 1 a cell or check failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from pnpkit import bench
from pnpkit.core import psnr, ssim
from pnpkit.diagnostics import write_trace_csv
from pnpkit.io import load_image, write_png, write_pnpk


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _gamma(text: str):
    return text if text in ("auto", "sigma2") else _positive(text)


def _sigma(text: str):
    return text if text == "noise" else _positive(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnpkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deblur", help="blur, corrupt and restore one image")
    p.add_argument("--image", default="squares", help="builtin name or .pnpk/.png path")
    p.add_argument("--kernel", default="gaussian:1.6,9", help="name[:params]")
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--solver", choices=bench.SOLVERS, default="admm")
    p.add_argument("--denoiser", choices=bench.DENOISERS, default="gmm_mmse")
    p.add_argument("--gamma", type=_gamma, default="sigma2", help="auto, sigma2 or a value")
    p.add_argument("--sigma", type=_sigma, default="noise", help="noise or a value")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="deblur_out")

    p = sub.add_parser("verify", help="run the convergence-theory checks")
    p.add_argument("--suite", choices=("theorem1", "prox", "tweedie", "all"), default="all")
    p.add_argument("--gamma", type=_positive, default=None,
                   help="override the automatic step size of the theorem1 suite")
    p.add_argument("--sample-margin", type=_positive, default=None,
                   help="half-width added around the iterate hull when sampling M")

    p = sub.add_parser("sweep", help="run an experiment grid from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    return parser


def cmd_deblur(args) -> int:
    if args.noise < 0:
        raise bench.ConfigError("noise must be non-negative")
    if args.max_iter < 1:
        raise bench.ConfigError("max-iter must be at least 1")
    cfg = bench.ExperimentConfig(
        images=[args.image], kernels=[args.kernel], noise_levels=[max(args.noise, 1e-12)],
        solvers=[args.solver], denoisers=[args.denoiser], gamma=args.gamma, sigma=args.sigma,
        max_iter=args.max_iter, seed=args.seed,
    )
    try:
        truth = load_image(args.image)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load image {args.image!r}: {exc}", file=sys.stderr)
        return 1
    trace, y, x_hat, gamma, sigma = bench.run_single(
        truth, bench.make_kernel(args.kernel), args.noise, args.solver, args.denoiser, cfg,
        bench.noise_seed(args.seed, 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    write_pnpk(out / "observed.pnpk", y)
    write_pnpk(out / "restored.pnpk", x_hat)
    write_png(out / "observed.png", y)
    write_png(out / "restored.png", x_hat)
    rel = trace.column("rel_change")
    print(f"gamma = {gamma:.6g}, sigma = {sigma:.6g}, iterations = {trace.n_records - 1}")
    print(f"PSNR input {psnr(y, truth):.2f} dB -> output {psnr(x_hat, truth):.2f} dB")
    if min(truth.shape[:2]) >= 11:
        print(f"SSIM input {ssim(y, truth):.4f} -> output {ssim(x_hat, truth):.4f}")
    print(f"final relative change {rel[-2]:.3g}; trace written to {out / 'trace.csv'}")
    return 0


def cmd_verify(args) -> int:
    return bench.verify_theory(args.suite, gamma=args.gamma, box_margin=args.sample_margin)


def cmd_sweep(args) -> int:
    cfg = bench.ExperimentConfig.load(args.config)
    table, runs = bench.run_experiment(cfg, args.out)
    print(table.to_text(), end="")
    failed = [r for r in runs if r["status"] != "ok"]
    for r in failed:
        print(f"error in {r['cell']}: {r['error']}", file=sys.stderr)
    print(f"{len(runs) - len(failed)}/{len(runs)} cells ok; results in "
          f"{args.out or cfg.out or 'results'}")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"deblur": cmd_deblur, "verify": cmd_verify, "sweep": cmd_sweep}[args.command](args)
    except bench.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
