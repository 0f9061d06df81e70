"""Batch command-line front door.

Subcommands dispatch the analytic and simulation APIs and emit CSV or JSON
tables.  Output is deterministic given the seed; files are written atomically
(temp file + rename).  Exit codes: 0 success, 2 invalid input, 3 a supported
computation limit was hit (enumeration cap, unstable queue), 4 I/O failure.
Validation failures also print a one-line JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import approx, latency, simulate, wireless
from .errors import ConsrelError
from .exact import ClusterParams, exact_reliability, exact_reliability_iid
from .protocols import (
    BUILTIN_NAMES,
    builtin_protocol,
    default_fault_threshold,
    parse_json,
    protocol_family,
)

THREADS_ENV = "CONSENSUS_RELIAB_THREADS"

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_LIMIT = 3
EXIT_IO = 4

_LIMIT_CODES = {"N_TOO_LARGE", "UNSTABLE_QUEUE"}


class _CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = EXIT_BAD_INPUT):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError("BAD_ARGUMENTS", message)


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    tmp = f"{output}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, output)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise _CliError("IO_ERROR", str(exc), EXIT_IO) from exc


def _read_file(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise _CliError("IO_ERROR", str(exc), EXIT_IO) from exc


def _csv(rows: list[list], header: list[str]) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(c) for c in row) for row in rows]
    return "\r\n".join(lines) + "\r\n"


def _table(rows: list[list], header: list[str], fmt: str) -> str:
    if fmt == "csv":
        return _csv(rows, header)
    return json.dumps([dict(zip(header, row)) for row in rows], separators=(",", ":")) + "\n"


def _success_prob(args, stem: str, default: float = 1.0) -> float:
    """Resolve a probability given as success (--p-x) or failure (--p-x-fail)."""
    ok = getattr(args, stem)
    fail = getattr(args, f"{stem}_fail")
    if ok is not None and fail is not None:
        raise _CliError("BAD_ARGUMENTS", f"give only one of --{stem.replace('_', '-')} and --{stem.replace('_', '-')}-fail")
    if fail is not None:
        return 1.0 - fail
    return default if ok is None else ok


def _add_prob_pair(parser, stem: str, help_base: str):
    flag = stem.replace("_", "-")
    parser.add_argument(f"--{flag}", type=float, dest=stem, help=f"{help_base} (success probability)")
    parser.add_argument(f"--{flag}-fail", type=float, dest=f"{stem}_fail", help=f"{help_base} (failure probability)")


def _resolve_protocol(args):
    if getattr(args, "structure", None):
        g = parse_json(_read_file(args.structure))
        if args.f is None:
            raise _CliError("BAD_ARGUMENTS", "--f is required with --structure")
        return g, args.f
    g = builtin_protocol(args.protocol)
    f = args.f if args.f is not None else default_fault_threshold(protocol_family(args.protocol), args.n)
    return g, f


def _parse_range(text: str) -> np.ndarray:
    """Grid syntax: 'lo:hi:logN' or 'lo:hi:linN', or a single value."""
    parts = text.split(":")
    if len(parts) == 1:
        return np.array([float(parts[0])])
    if len(parts) != 3 or not (parts[2].startswith("log") or parts[2].startswith("lin")):
        raise _CliError("BAD_ARGUMENTS", f"bad range {text!r}, expected lo:hi:logN or lo:hi:linN")
    lo, hi, spec = float(parts[0]), float(parts[1]), parts[2]
    count = int(spec[3:])
    if count < 1:
        raise _CliError("BAD_ARGUMENTS", f"bad range count in {text!r}")
    if spec.startswith("log"):
        if lo <= 0 or hi <= 0:
            raise _CliError("BAD_ARGUMENTS", "log range needs positive bounds")
        return np.logspace(np.log10(lo), np.log10(hi), count)
    return np.linspace(lo, hi, count)


def _n_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise _CliError("BAD_ARGUMENTS", f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(value, 1)


def _cmd_reliability(args) -> str:
    g, f = _resolve_protocol(args)
    p_n = _success_prob(args, "p_node")
    p_l = _success_prob(args, "p_link")
    if args.method == "iid":
        res = exact_reliability_iid(g, args.n, f, p_n, p_l)
    else:
        res = exact_reliability(g, ClusterParams.iid(args.n, f, p_n, p_l))
    row = [g.name, args.n, f, res.method, _fmt(res.p_c), _fmt(res.p_f)]
    return _table([row], ["protocol", "n", "f", "method", "p_c", "p_f"], args.format)


def _cmd_approx(args) -> str:
    g, f = _resolve_protocol(args)
    p_n = _success_prob(args, "p_node")
    p_l = _success_prob(args, "p_link")
    tree = approx.tree_decomposed_failure(g, ClusterParams.iid(args.n, f, p_n, p_l))
    ojf = approx.overall_joint_failure_rate_iid(g, args.n, f, p_n, p_l)
    first = approx.iid_first_order_failure(args.n, f, ojf.value)
    rows = [
        [g.name, args.n, f, "tree_approx", _fmt(tree.p_f), _fmt(ojf.value)],
        [g.name, args.n, f, "iid_first_order", _fmt(first), _fmt(ojf.value)],
    ]
    return _table(rows, ["protocol", "n", "f", "method", "p_f", "p_jfr"], args.format)


def _cmd_gains(args) -> str:
    header = ["kind", "family", "slope", "intercept", "delta_f", "predicted_log_pf"]
    rg = approx.reliability_gain(args.n, args.f)
    rows = [["reliability", "-", _fmt(rg.slope), _fmt(rg.intercept), _fmt(rg.delta_f), "-"]]
    if args.p_jfr is not None:
        if args.family is None or args.n_form is None:
            raise _CliError("BAD_ARGUMENTS", "--family and --n-form are required with --p-jfr")
        tg = approx.tolerance_gain(args.family, args.n_form, args.f, args.p_jfr)
        rows.append(["tolerance", tg.family, _fmt(tg.slope), _fmt(tg.intercept), _fmt(tg.delta_f), _fmt(tg.predicted_log_pf)])
    return _table(rows, header, args.format)


def _cmd_latency(args) -> str:
    params = latency.LatencyParams(args.lc, args.pf, args.arrival, args.timeout)
    rep = latency.queuing_latency(params)
    row = [_fmt(rep.e_transmission), _fmt(rep.e_queuing), _fmt(rep.e_serve),
           _fmt(rep.var_serve), _fmt(rep.utilization), _fmt(rep.e_total)]
    return _table([row], ["e_transmission", "e_queuing", "e_serve", "var_serve", "utilization", "e_total"], args.format)


def _cmd_optimize(args) -> str:
    scenario = wireless.load_scenario(_read_file(args.scenario))
    baseline = wireless.equal_split_allocation(scenario)
    result = wireless.optimize_power(scenario, seed=args.seed)
    if args.format == "json":
        doc = {
            "p_tr_w": [float(x) for x in result.p_tr],
            "link_loss": [float(x) for x in result.link_loss],
            "joint_failure": [float(x) for x in result.joint_failure],
            "p_f": result.p_f,
            "p_f_equal_split": baseline.p_f,
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"
    header = ["node", "p_tr_w", "link_loss", "joint_failure", "p_f", "p_f_equal_split"]
    rows = [
        [i, _fmt(result.p_tr[i]), _fmt(result.link_loss[i]), _fmt(result.joint_failure[i]),
         _fmt(result.p_f), _fmt(baseline.p_f)]
        for i in range(scenario.n)
    ]
    return _csv(rows, header)


def _cmd_simulate_trials(args) -> str:
    g, f = _resolve_protocol(args)
    p_n = _success_prob(args, "p_node")
    p_l = _success_prob(args, "p_link")
    p_hat, se = simulate.simulate_consensus_trials(
        g, ClusterParams.iid(args.n, f, p_n, p_l), args.trials, seed=args.seed
    )
    row = [g.name, args.n, f, "monte_carlo", _fmt(p_hat), _fmt(se)]
    return _table([row], ["protocol", "n", "f", "method", "p_hat", "stderr"], args.format)


def _cmd_simulate_latency(args) -> str:
    if args.lc is not None:
        l_c = args.lc
    elif args.link_latency is not None:
        l_c = 2.0 * args.link_latency
    else:
        raise _CliError("BAD_ARGUMENTS", "give --lc or --link-latency")
    kwargs = dict(
        arrival_rate=args.arrival,
        l_c=l_c,
        l_timeout=args.timeout if args.timeout is not None else l_c,
        seed=args.seed,
    )
    if args.duration is not None:
        kwargs["duration"] = args.duration
    else:
        kwargs["instance_count"] = args.instances
    if args.protocol is not None or args.structure is not None:
        if args.n is None:
            raise _CliError("BAD_ARGUMENTS", "--n is required with a protocol failure source")
        g, f = _resolve_protocol(args)
        p_n = _success_prob(args, "p_node")
        p_l = _success_prob(args, "p_link")
        kwargs["structure"] = g
        kwargs["params"] = ClusterParams.iid(args.n, f, p_n, p_l)
    else:
        kwargs["p_f"] = args.pf
    trace = simulate.simulate_raft_latency(simulate.SimConfig(**kwargs))
    return simulate.format_trace_csv(trace)


def _sweep_point(g, n: int, f: int, p_n: float, p_lf: float):
    p_l = 1.0 - p_lf
    exact = exact_reliability_iid(g, n, f, p_n, p_l)
    tree = approx.tree_decomposed_failure(g, ClusterParams.iid(n, f, p_n, p_l))
    ojf = approx.overall_joint_failure_rate_iid(g, n, f, p_n, p_l)
    first = approx.iid_first_order_failure(n, f, ojf.value)
    return [g.name, n, f, _fmt(1.0 - p_n), _fmt(p_lf), _fmt(exact.p_f), _fmt(tree.p_f), _fmt(first)]


def _cmd_sweep(args) -> str:
    names = list(BUILTIN_NAMES[:4]) if args.protocol == "all" else [args.protocol]
    p_n = _success_prob(args, "p_node")
    if args.p_link is not None and args.p_link_fail is not None:
        raise _CliError("BAD_ARGUMENTS", "give only one of --p-link and --p-link-fail")
    if args.p_link_fail is not None:
        grid = _parse_range(args.p_link_fail)
    elif args.p_link is not None:
        grid = 1.0 - _parse_range(args.p_link)
    else:
        raise _CliError("BAD_ARGUMENTS", "a --p-link or --p-link-fail grid is required")
    jobs = []
    for name in names:
        g = builtin_protocol(name)
        f = args.f if args.f is not None else default_fault_threshold(protocol_family(name), args.n)
        for p_lf in grid:
            jobs.append((g, args.n, f, p_n, float(p_lf)))
    threads = _n_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda j: _sweep_point(*j), jobs))
    else:
        rows = [_sweep_point(*j) for j in jobs]
    header = ["protocol", "n", "f", "p_node_fail", "p_link_fail", "p_f_exact", "p_f_tree", "p_f_first_order"]
    return _table(rows, header, args.format)


def _build_parser() -> _Parser:
    parser = _Parser(prog="consrel", description="Consensus reliability, latency and power-allocation analytics")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--output", help="write to this path (atomic); default stdout")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    def cluster(p, need_n=True):
        p.add_argument("--protocol", choices=BUILTIN_NAMES)
        p.add_argument("--structure", help="path to a protocol-description JSON file")
        p.add_argument("--n", type=int, required=need_n)
        p.add_argument("--f", type=int)
        _add_prob_pair(p, "p_node", "per-node reliability")
        _add_prob_pair(p, "p_link", "per-link reliability")

    p = sub.add_parser("reliability", help="exact consensus reliability")
    cluster(p)
    p.add_argument("--method", choices=("exact", "iid"), default="exact")
    common(p)
    p.set_defaults(run=_cmd_reliability)

    p = sub.add_parser("approx", help="tree-decomposed and first-order failure rates")
    cluster(p)
    common(p)
    p.set_defaults(run=_cmd_approx)

    p = sub.add_parser("gains", help="reliability and tolerance gain coefficients")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--p-jfr", type=float, dest="p_jfr")
    p.add_argument("--family", choices=("cft", "bft"))
    p.add_argument("--n-form", choices=("2f", "2f+1", "3f", "3f+1", "3f+2"), dest="n_form")
    common(p)
    p.set_defaults(run=_cmd_gains)

    p = sub.add_parser("latency", help="analytic transmission and queueing latency")
    p.add_argument("--pf", type=float, required=True)
    p.add_argument("--lc", type=float, required=True)
    p.add_argument("--arrival", type=float, required=True)
    p.add_argument("--timeout", type=float)
    common(p)
    p.set_defaults(run=_cmd_latency)

    p = sub.add_parser("optimize", help="transmit-power allocation for a wireless scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    common(p)
    p.set_defaults(run=_cmd_optimize)

    sim = sub.add_parser("simulate", help="Monte Carlo validation").add_subparsers(
        dest="sim_command", required=True
    )
    p = sim.add_parser("trials", help="phase-level consensus trials")
    cluster(p)
    p.add_argument("--trials", type=int, required=True)
    common(p)
    p.set_defaults(run=_cmd_simulate_trials)

    p = sim.add_parser("latency", help="log-replication latency trace")
    p.add_argument("--arrival", type=float, required=True)
    p.add_argument("--link-latency", type=float, dest="link_latency", help="single-link latency; one attempt takes two links")
    p.add_argument("--lc", type=float, help="single-attempt latency (overrides --link-latency)")
    p.add_argument("--timeout", type=float)
    p.add_argument("--pf", type=float, help="fixed per-attempt failure rate")
    p.add_argument("--instances", type=int)
    p.add_argument("--duration", type=float)
    cluster(p, need_n=False)
    common(p)
    p.set_defaults(run=_cmd_simulate_latency)

    p = sub.add_parser("sweep", help="figure-style table over a link-loss grid")
    p.add_argument("--protocol", choices=BUILTIN_NAMES + ("all",), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int)
    _add_prob_pair(p, "p_node", "per-node reliability")
    p.add_argument("--p-link", dest="p_link", help="success-probability grid lo:hi:logN|linN")
    p.add_argument("--p-link-fail", dest="p_link_fail", help="failure-probability grid lo:hi:logN|linN")
    common(p)
    p.set_defaults(run=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        text = args.run(args)
        _emit(text, args.output)
        return EXIT_OK
    except _CliError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except ConsrelError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_LIMIT if exc.code in _LIMIT_CODES else EXIT_BAD_INPUT
    except OSError as exc:
        print(json.dumps({"error": "IO_ERROR", "message": str(exc)}), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
