"""Command-line interface.

Subcommands:
    verify       run the named check suite, one line per check
    bench        time convolution implementations, CSV output
    cpsim        run a communication scheme on random data, export its log
    flops        closed-form multiply counts, CSV output
    smoke-train  tiny training run; exits 0 when the loss at least halves

Exit codes: 0 success, 1 a check or tolerance failed, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import cpsim
from .bench import BENCH_OPS, CSV_HEADER, BenchRecord, bench_op
from .blockconv import two_stage_flops
from .config import ConfigError, RunConfig, load_config, resolve
from .core import direct_causal_conv
from .rand import make_rng
from .smoketrain import smoke_train
from .testing import random_explicit_groups, random_seq
from .verify import VerifySettings, run_verify

CPSIM_SCHEMES = ("a2a", "a2a-pipe", "p2p", "p2p-overlap", "p2p-fft")
_SEQ_ONLY = ("p2p", "p2p-overlap", "p2p-fft")


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _load(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return RunConfig()


def parse_len_sweep(text: str) -> list[int]:
    """Either a single integer or 'A..B', which doubles from A up to B."""
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad sweep {text!r}: need 1 <= A <= B")
        out = []
        while lo <= hi:
            out.append(lo)
            lo *= 2
        return out
    return [int(text)]


def _emit_rows(rows: list[str], path: str | None) -> None:
    text = "\n".join([CSV_HEADER, *rows]) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands

def cmd_verify(args) -> int:
    cfg = _load(args)
    settings = VerifySettings(
        seed=resolve(args.seed, cfg.seed, 0),
        length=resolve(args.len, cfg.len, 128),
        filter_len=resolve(args.filter_len, cfg.filter_len, 9),
        block_size=resolve(args.block_size, cfg.block_size, 8),
        width=resolve(args.width, cfg.width, 8),
        group_size=resolve(args.group_size, cfg.group_size, 2),
        ranks=resolve(args.ranks, cfg.ranks, 4),
        layout=resolve(args.layout, cfg.layout, "sequential"),
        pipe=resolve(args.pipe, cfg.pipe, 2),
    )
    results = run_verify(settings)
    for r in results:
        err = "" if r.err is None else f" err={abs(r.err):.3e}"
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}{err} [{r.note}]")
    passed = sum(r.ok for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return 0 if passed == len(results) else 1


def cmd_bench(args) -> int:
    cfg = _load(args)
    lengths = parse_len_sweep(resolve(args.len, str(cfg.len) if cfg.len else None, "1024"))
    ops = BENCH_OPS if args.op == "all" else (args.op,)
    seed = resolve(args.seed, cfg.seed, 0)
    rows = []
    for length in lengths:
        for op in ops:
            rec = bench_op(
                op,
                d=resolve(args.width, cfg.width, 8),
                length=length,
                filter_len=resolve(args.filter_len, cfg.filter_len, 9),
                block_size=resolve(args.block_size, cfg.block_size, 16),
                seed=seed,
                reps=args.reps,
            )
            rows.append(rec.csv_row())
    _emit_rows(rows, resolve(args.csv, cfg.csv, None))
    return 0


def cmd_flops(args) -> int:
    cfg = _load(args)
    lengths = parse_len_sweep(resolve(args.len, str(cfg.len) if cfg.len else None, "1024"))
    lb = resolve(args.block_size, cfg.block_size, 128)
    d = resolve(args.width, cfg.width, 64)
    rows = [
        BenchRecord(op="two_stage", l=length, lb=lb, d=d,
                    flops=two_stage_flops(length, lb, d)).csv_row()
        for length in lengths
    ]
    _emit_rows(rows, resolve(args.csv, cfg.csv, None))
    return 0


def _run_scheme(scheme: str, x, groups, grp, ranks: int, layout: str, pipe: int):
    if scheme == "p2p-fft":
        y = cpsim.p2p_fft_causal_wrapper(x, groups.taps_per_channel(), ranks, grp)
        return y.data
    xs = cpsim.shard(x, ranks, layout)
    run = {
        "a2a": lambda: cpsim.a2a_conv(xs, groups, grp),
        "a2a-pipe": lambda: cpsim.a2a_conv_pipelined(xs, groups, grp, pipe),
        "p2p": lambda: cpsim.p2p_conv(xs, groups, grp),
        "p2p-overlap": lambda: cpsim.p2p_conv_overlapped(xs, groups, grp),
    }[scheme]
    return cpsim.gather(run()).data


def cmd_cpsim(args) -> int:
    cfg = _load(args)
    scheme = resolve(args.scheme, cfg.scheme, "a2a")
    if scheme not in CPSIM_SCHEMES:
        raise ConfigError(f"scheme must be one of {', '.join(CPSIM_SCHEMES)}, got {scheme!r}")
    layout = resolve(args.layout, cfg.layout, "sequential")
    if scheme in _SEQ_ONLY and layout != "sequential":
        raise ConfigError(f"scheme {scheme} only supports the sequential layout")

    seed = resolve(args.seed, cfg.seed, 0)
    ranks = resolve(args.ranks, cfg.ranks, 4)
    width = resolve(args.width, cfg.width, 8)
    length = resolve(args.len, cfg.len, 128)
    filter_len = resolve(args.filter_len, cfg.filter_len, 9)
    group_size = resolve(args.group_size, cfg.group_size, 1)
    pipe = resolve(args.pipe, cfg.pipe, 2)
    dtype = resolve(args.dtype, cfg.dtype, "f64")
    log_path = resolve(args.csv, cfg.csv, "cpsim_log.txt")

    rng = make_rng(seed, stream=0)
    groups = random_explicit_groups(rng, width, group_size, filter_len)
    x = random_seq(rng, width, length, dtype=dtype)
    grp = cpsim.SimGroup(ranks)

    got = _run_scheme(scheme, x, groups, grp, ranks, layout, pipe)
    err = float(np.max(np.abs(got - direct_causal_conv(x, groups).data)))
    grp.export_log(log_path)
    rounds = sum(grp.scheme_rounds.values())
    print(f"scheme={scheme} layout={layout} ranks={ranks} width={width} len={length} "
          f"filter_len={filter_len} max_abs_err={err:.3e} messages={grp.total_messages()} "
          f"elements={grp.total_elements()} rounds={rounds} log={log_path}")
    tol = 1e-8 if dtype == "f64" else 1e-3
    if err > tol:
        print(f"error: max_abs_err {err:.3e} above {tol:g}", file=sys.stderr)
        return 1
    return 0


def cmd_smoke_train(args) -> int:
    cfg = _load(args)
    try:
        res = smoke_train(
            steps=args.steps,
            seed=resolve(args.seed, cfg.seed, 0),
            lr=args.lr,
            width=resolve(args.width, cfg.width, 8),
            length=resolve(args.len, cfg.len, 32),
        )
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"steps={args.steps} initial={res.initial:.6e} final={res.final:.6e} "
          f"ratio={res.ratio:.4f}")
    if not np.isfinite(res.ratio) or res.ratio > 0.5:
        print(f"error: loss ratio {res.ratio:.4f} above 0.5", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser

def _dim_flags(p: argparse.ArgumentParser, sweep_len: bool = False) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key = value file; flags override it")
    if sweep_len:
        p.add_argument("--len", help="length or doubling sweep A..B")
    else:
        p.add_argument("--len", type=int)
    p.add_argument("--filter-len", type=int, dest="filter_len")
    p.add_argument("--block-size", type=int, dest="block_size")
    p.add_argument("--width", type=int)
    p.add_argument("--group-size", type=int, dest="group_size")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convhybrid", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the named check suite")
    _dim_flags(p)
    p.add_argument("--ranks", type=int)
    p.add_argument("--layout", choices=("seq", "zigzag"))
    p.add_argument("--pipe", type=int)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="wall-clock timings as CSV")
    _dim_flags(p, sweep_len=True)
    p.add_argument("--op", choices=(*BENCH_OPS, "all"), default="all")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--csv", help="write rows to this file instead of stdout")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("cpsim", help="simulate one communication scheme")
    _dim_flags(p)
    p.add_argument("--scheme", choices=CPSIM_SCHEMES)
    p.add_argument("--ranks", type=int)
    p.add_argument("--layout", choices=("seq", "zigzag"))
    p.add_argument("--pipe", type=int)
    p.add_argument("--dtype", choices=("f32", "f64"))
    p.add_argument("--csv", help="message-log export path (default cpsim_log.txt)")
    p.set_defaults(fn=cmd_cpsim)

    p = sub.add_parser("flops", help="closed-form multiply counts as CSV")
    _dim_flags(p, sweep_len=True)
    p.add_argument("--csv", help="write rows to this file instead of stdout")
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("smoke-train", help="tiny gradient-descent fit")
    _dim_flags(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.set_defaults(fn=cmd_smoke_train)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "layout", None) == "seq":
        args.layout = "sequential"
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
