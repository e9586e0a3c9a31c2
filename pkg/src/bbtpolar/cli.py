"""Command-line entry point: ``bbtpolar <subcommand> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 when a command fails
while running.  CSV and JSON outputs start with ``#`` comment lines holding
the invocation and the resolved configuration (including seeds).  The
``--threads`` flag is left out of the echo so that files produced with
different worker counts are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import NoiseModel, fer_upper_bound, iterative_lower_bound
from .bp import BpConfig, BpDecoder
from .codec import encode, load_spec, sc_decode, spec_from_order
from .sim import (SimConfig, band_fraction, bec_construct, mc_construct, reliability_order, run_fer,
                  write_fer_csv)
from .spectrum import brute_force_wef, estimate_wef, mhw_spectrum
from .channels import parse_channel
from .tree import build_normal_graph, build_tree


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def _bits(text: str, what: str) -> np.ndarray:
    text = text.strip()
    if any(ch not in "01" for ch in text):
        raise UsageError(f"{what} must be a string of 0/1 characters, got {text!r}")
    return np.array([int(ch) for ch in text], dtype=np.uint8)


def _range(text: str) -> list[float]:
    """``a:b:step`` (inclusive), ``a:b`` (step 1), a single value or a comma list."""
    if "," in text:
        return [float(v) for v in text.split(",")]
    parts = [float(v) for v in text.split(":")]
    if len(parts) == 1:
        return parts
    if len(parts) not in (2, 3):
        raise UsageError(f"bad range {text!r}; expected a:b:step")
    a, b = parts[0], parts[1]
    step = parts[2] if len(parts) == 3 else 1.0
    if step <= 0 or b < a:
        raise UsageError(f"bad range {text!r}; need a <= b and step > 0")
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 10) for i in range(count)]


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--band expects lo:hi, got {text!r}") from None
    return lo, hi


def _count(text: str) -> int:
    v = float(text)
    if v != int(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(v)


def _rate(text: str) -> float:
    return float(Fraction(text))


def _bp_config(args) -> BpConfig:
    return BpConfig(args.imax, args.lmax, not args.no_early_stop, args.f_mode)


def _echo_args(argv: list[str]) -> list[str]:
    """The invocation minus ``--threads``, which never changes any output."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--threads":
            skip = True
        elif not a.startswith("--threads="):
            out.append(a)
    return out


class _Output:
    """Collects output lines and writes them to ``--out`` or stdout."""

    def __init__(self, args, argv):
        self.path = getattr(args, "out", None)
        self.lines: list[str] = []
        self.argv = argv

    def header(self, config: dict):
        self.lines.append("# " + " ".join(["bbtpolar"] + [shlex.quote(a) for a in _echo_args(self.argv)]))
        self.lines.append("# config: " + json.dumps(config, sort_keys=True))

    def add(self, text: str):
        self.lines.extend(text.rstrip("\n").split("\n"))

    def flush(self):
        body = "\n".join(self.lines) + "\n"
        if self.path:
            Path(self.path).write_text(body)
        else:
            sys.stdout.write(body)


# --------------------------------------------------------------------------- commands


def cmd_construct(args, out: _Output):
    if args.import_order:
        order = [int(v) for v in Path(args.import_order).read_text().split()]
        n = len(order)
        if args.n is not None and args.n != n:
            raise UsageError(f"--n {args.n} disagrees with the imported order of length {n}")
        source = {"import": args.import_order}
    else:
        if args.n is None or args.channel is None:
            raise UsageError("construct needs --n and --channel (or --import)")
        n = args.n
        kind, value = parse_channel(args.channel)
        if kind == "bec" and not args.monte_carlo:
            _, order = bec_construct(n, value)
            source = {"channel": args.channel, "method": "bec-exact"}
        else:
            rate = args.k / n if args.k else 1.0
            _, order = mc_construct(n, args.channel, args.trials, args.seed, args.conv, rate,
                                    threads=args.threads)
            source = {"channel": args.channel, "method": "genie-sc", "trials": args.trials,
                      "seed": args.seed, "conv": args.conv}
    if not 0 <= args.k <= n:
        raise UsageError(f"--k must lie in 0..{n}")
    spec = spec_from_order(n, args.k, order, args.flavor, args.interleaver_seed)
    out.header({**source, "n": n, "k": args.k, "flavor": args.flavor,
                "interleaver_seed": args.interleaver_seed})
    out.add(json.dumps(spec.to_json()))


def cmd_encode(args, out: _Output):
    spec = load_spec(args.spec)
    msg = _bits(args.msg, "--msg")
    if msg.size != spec.dimension:
        raise UsageError(f"--msg has {msg.size} bits but the code has K={spec.dimension}")
    out.add("".join(map(str, encode(spec, msg))))


def _read_llr_frames(args) -> list[np.ndarray]:
    if args.llr is not None:
        return [np.array([float(v) for v in args.llr.replace(",", " ").split()])]
    text = sys.stdin.read() if args.llr_file == "-" else Path(args.llr_file).read_text()
    return [np.array([float(v) for v in ln.replace(",", " ").split()])
            for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def cmd_decode(args, out: _Output):
    spec = load_spec(args.spec)
    if args.llr is None and args.llr_file is None:
        raise UsageError("decode needs --llr or --llr-file")
    dec = BpDecoder(spec, _bp_config(args)) if args.algo == "bp" else None
    for llr in _read_llr_frames(args):
        if dec is None:
            msg, cw = sc_decode(spec, llr, args.f_mode)
            record = {"message": "".join(map(str, msg)), "codeword": "".join(map(str, cw))}
        else:
            cw, msg, metrics, ok, _ = dec.decode(llr)
            record = {"message": "".join(map(str, msg)), "codeword": "".join(map(str, cw)),
                      "converged": ok,
                      "metrics": dict(zip(("iters", "layers", "adds", "mults", "cmps", "luts"),
                                          (int(v) for v in metrics.as_tuple())))}
        out.add(json.dumps(record) if args.json else record["message"])


def cmd_simulate(args, out: _Output):
    spec = load_spec(args.spec)
    decoder = _bp_config(args) if args.decoder == "bp" else "sc"
    cfg = SimConfig(tuple(_range(args.snr)), args.conv, args.frames, args.errors, args.seed, decoder,
                    args.chunk, args.threads)
    points = run_fer(spec, cfg)
    config = {"spec": spec.to_json(), "snr": list(cfg.snr_points), "conv": cfg.snr_convention,
              "frames": cfg.max_frames, "errors": cfg.max_frame_errors, "seed": cfg.seed,
              "decoder": args.decoder, "chunk": cfg.chunk_frames}
    if args.decoder == "bp":
        config.update(imax=args.imax, lmax=args.lmax, f_mode=args.f_mode,
                      early_stop=not args.no_early_stop)
    out.header(config)
    out.add(write_fer_csv(points))


def _fmt(a) -> str:
    if isinstance(a, Fraction):
        return str(a.numerator) if a.denominator == 1 else f"{a.numerator}/{a.denominator}"
    return f"{a:.12g}"


def cmd_spectrum(args, out: _Output):
    spec = load_spec(args.spec)
    wef = brute_force_wef(spec) if args.brute_force else estimate_wef(spec, exact=args.exact)
    out.header({"spec": spec.to_json(), "exact": args.exact, "brute_force": args.brute_force})
    out.add("w,A_w")
    for w, a in enumerate(wef.coeffs):
        out.add(f"{w},{_fmt(a)}")


def cmd_mhw(args, out: _Output):
    rec = mhw_spectrum(load_spec(args.spec))
    d = {"is_non_zero": rec.is_non_zero}
    if rec.is_non_zero:
        d.update(w_min=rec.w_min, multiplicity=rec.multiplicity)
    out.add(json.dumps(d, separators=(",", ":")))


def cmd_bounds(args, out: _Output):
    spec = load_spec(args.spec)
    rate = _rate(args.rate_ref) if args.rate_ref else spec.rate
    wef = estimate_wef(spec)
    out.header({"spec": spec.to_json(), "snr_db": args.snr_db, "rate_ref": rate,
                "convention": "ebn0" if rate != 1.0 else "esn0"})
    out.add("snr_db,fer_ub,fer_lb,w_star")
    for snr in _range(args.snr_db):
        noise = NoiseModel.from_snr_db(snr, rate)
        ub = fer_upper_bound(wef, noise)
        lb = iterative_lower_bound(wef, noise).value if wef.nonzero_min_weight() else 0.0
        out.add(f"{snr:g},{ub.value:.10g},{lb:.10g},{ub.optimizer}")


def cmd_polarize(args, out: _Output):
    lo, hi = _band(args.band)
    kind, value = parse_channel(args.channel)
    if kind == "bec" and not args.monte_carlo:
        rates, _ = bec_construct(args.n, value)
        label = "erasure_prob"
    else:
        rates, _ = mc_construct(args.n, args.channel, args.trials, args.seed, args.conv, args.rate,
                                threads=args.threads)
        label = "error_rate"
    order = reliability_order(rates)
    out.header({"n": args.n, "channel": args.channel, "trials": args.trials, "seed": args.seed,
                "conv": args.conv, "rate": args.rate, "band": [lo, hi]})
    out.add(f"rank,leaf,{label}")
    for r, leaf in enumerate(order):
        out.add(f"{r},{leaf},{rates[leaf]:.10g}")
    out.add(f"# band_fraction[{lo:g},{hi:g}]={band_fraction(rates, lo, hi):.6f}")


def cmd_graph(args, out: _Output):
    if args.spec:
        graph = load_spec(args.spec).graph
    elif args.n:
        graph = build_normal_graph(build_tree(args.n), args.interleaver_seed)
    else:
        raise UsageError("graph needs --spec or --n")
    for rec in graph.dump_lines():
        out.add(json.dumps(rec, separators=(",", ":")))


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bbtpolar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)

    def bp_flags(q):
        q.add_argument("--imax", type=int, default=50, help="maximum BP iterations")
        q.add_argument("--lmax", type=int, default=1, help="maximum leaf-subcode length")
        q.add_argument("--f-mode", choices=("exact", "min_sum"), default="exact")
        q.add_argument("--no-early-stop", action="store_true")

    q = sub.add_parser("construct", parents=[common], help="build a code spec")
    q.add_argument("--n", type=int)
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--channel", help="bec:<e>, bsc:<p> or awgn:<snr_db>")
    q.add_argument("--trials", type=_count, default=10_000)
    q.add_argument("--seed", type=int, default=1)
    q.add_argument("--conv", choices=("esn0", "ebn0"), default="esn0",
                   help="SNR convention of an awgn channel literal (ebn0 uses rate k/n)")
    q.add_argument("--monte-carlo", action="store_true", help="use genie-aided SC even for BEC")
    q.add_argument("--import", dest="import_order", help="file with a reliability order, best first")
    q.add_argument("--flavor", choices=("bbt", "ibbt"), default="bbt")
    q.add_argument("--interleaver-seed", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_construct)

    q = sub.add_parser("encode", parents=[common], help="encode one message")
    q.add_argument("--spec", required=True)
    q.add_argument("--msg", required=True)
    q.set_defaults(func=cmd_encode)

    q = sub.add_parser("decode", parents=[common], help="decode channel LLRs")
    q.add_argument("--spec", required=True)
    q.add_argument("--llr", help="comma or space separated LLRs of one frame")
    q.add_argument("--llr-file", help="one frame per line ('-' for stdin)")
    q.add_argument("--algo", choices=("sc", "bp"), default="sc")
    q.add_argument("--json", action="store_true", help="emit one JSON record per frame")
    bp_flags(q)
    q.set_defaults(func=cmd_decode)

    q = sub.add_parser("simulate", parents=[common], help="Monte-Carlo FER/BER over AWGN")
    q.add_argument("--spec", required=True)
    q.add_argument("--snr", required=True, help="a:b:step in dB")
    q.add_argument("--conv", choices=("ebn0", "esn0"), default="ebn0")
    q.add_argument("--decoder", choices=("sc", "bp"), default="sc")
    q.add_argument("--frames", type=_count, default=10_000)
    q.add_argument("--errors", type=_count, default=None, help="stop a point after this many frame errors")
    q.add_argument("--seed", type=int, default=1)
    q.add_argument("--chunk", type=int, default=500, help="frames per random-stream chunk")
    q.add_argument("--out")
    bp_flags(q)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("spectrum", parents=[common], help="estimated (or exact) weight enumerator")
    q.add_argument("--spec", required=True)
    q.add_argument("--exact", action="store_true", help="rational arithmetic")
    q.add_argument("--brute-force", action="store_true", help="enumerate the concrete code instead")
    q.add_argument("--out")
    q.set_defaults(func=cmd_spectrum)

    q = sub.add_parser("mhw", parents=[common], help="minimum-weight recursion")
    q.add_argument("--spec", required=True)
    q.set_defaults(func=cmd_mhw)

    q = sub.add_parser("bounds", parents=[common], help="ML FER upper/lower bounds")
    q.add_argument("--spec", required=True)
    q.add_argument("--snr-db", required=True)
    q.add_argument("--rate-ref", help="rate K/N for Eb/N0 (default: the code rate; 1 means Es/N0)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_bounds)

    q = sub.add_parser("polarize", parents=[common], help="sorted bit-channel error rates")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--channel", required=True)
    q.add_argument("--trials", type=_count, default=10_000)
    q.add_argument("--seed", type=int, default=1)
    q.add_argument("--conv", choices=("esn0", "ebn0"), default="esn0")
    q.add_argument("--rate", type=_rate, default=1.0, help="code rate used by --conv ebn0")
    q.add_argument("--band", default="0.1:0.4")
    q.add_argument("--monte-carlo", action="store_true")
    q.add_argument("--out")
    q.set_defaults(func=cmd_polarize)

    q = sub.add_parser("graph", parents=[common], help="dump the normal-graph connections as JSON lines")
    q.add_argument("--spec")
    q.add_argument("--n", type=int)
    q.add_argument("--interleaver-seed", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_graph)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        out = _Output(args, argv)
        args.func(args, out)
        out.flush()
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
