"""coopsim command line: outage sweeps, policy runs, ensembles, MAC
emulation and config validation.

Every subcommand accepts --config FILE to run a full experiment document;
the direct flags below cover the common single-experiment cases. Exit
codes: 0 success, 2 config/validation error, 3 runtime error.
"""
import argparse
import json
import os
import sys

import yaml

from . import __version__, ensemble, experiments, macemu, netsim, outage, selection
from .experiments import (ConfigParseError, ValidationError, _fmt,
                          _resolve_params, _resolve_schedule, _subset_str,
                          _write_csv)
from .rng import named_rng
from .topology import load_topology


def _add_common(p):
    p.add_argument("--config", help="experiment config file (overrides flags)")
    p.add_argument("--seed", type=int, default=None,
                   help="root seed (default: config's seed, else 0)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", default=None)


def _build_parser():
    parser = argparse.ArgumentParser(prog="coopsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("outage", help="best-subnetwork outage sweep")
    _add_common(p)
    p.add_argument("--topology")
    p.add_argument("--rate", type=float)
    p.add_argument("--k", help="comma list of subnetwork sizes, e.g. 0,1,2")
    p.add_argument("--method", choices=["analytic", "montecarlo"], default="analytic")
    p.add_argument("--snr-grid", help="start:stop:step in dB, or comma list")
    p.add_argument("--normalization", choices=["per_node", "total_power"],
                   default="per_node")
    p.add_argument("--out", default="outage.csv")

    p = sub.add_parser("run", help="run one selection policy over a schedule")
    _add_common(p)
    p.add_argument("--policy")
    p.add_argument("--schedule")
    p.add_argument("--strategy", default="DIQIF")
    p.add_argument("--rate", type=float)
    p.add_argument("--params", help="YAML file with SPA/LEARN parameters")
    p.add_argument("--out", default="runlog.csv")

    p = sub.add_parser("ensemble", help="ensemble-average policy comparison")
    _add_common(p)
    p.add_argument("--topologies", help="comma list of topology files")
    p.add_argument("--policies", help="comma list of policies")
    p.add_argument("--strategy", default="DIQIF")
    p.add_argument("--rate", type=float)
    p.add_argument("--frames-per-topology", type=int, default=860)
    p.add_argument("--transitions", type=int, default=4)
    p.add_argument("--segment-len", type=int, default=172)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--params")
    p.add_argument("--out", default="ensemble.csv")

    p = sub.add_parser("mac", help="trace-driven MAC emulation")
    _add_common(p)
    p.add_argument("--coop-trace", help="PHY trace CSV to deliver packets over")
    p.add_argument("--path-traces", help="per-hop path trace CSV for genie routing")
    p.add_argument("--max-retx", type=int, default=2)
    p.add_argument("--max-retx-per-link", type=int, default=4)
    p.add_argument("--out", default="packets.csv")

    p = sub.add_parser("validate", help="validate an experiment config")
    p.add_argument("config", nargs="?")
    p.add_argument("--list", action="store_true", help="list experiment kinds")
    return parser


def _write_manifest(out_path, doc, seed, outputs):
    manifest = {
        "kind": doc.get("kind", "cli"),
        "seed": seed,
        "version": __version__,
        "config": doc,
        "outputs": [os.path.basename(p) for p in outputs],
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _require(args, *flags):
    for flag in flags:
        if getattr(args, flag.replace("-", "_")) is None:
            raise ConfigParseError(
                f"{args.command}: --{flag} is required without --config")


def _out_path(args, name):
    return os.path.join(args.out_dir, name) if args.out_dir else name


def _cmd_outage(args):
    _require(args, "topology", "rate", "k", "snr-grid")
    seed = 0 if args.seed is None else args.seed
    if ":" in args.snr_grid:
        start, stop, step = (float(v) for v in args.snr_grid.split(":"))
        grid_doc = {"start": start, "stop": stop, "step": step}
    else:
        grid_doc = [float(v) for v in args.snr_grid.split(",")]
    grid = experiments._snr_grid(grid_doc, "<flags>")
    template = load_topology(args.topology)
    k_values = [int(v) for v in args.k.split(",")]
    rows = outage.outage_sweep(template, k_values, args.rate, grid,
                               normalization=args.normalization,
                               method=args.method, seed=seed)
    out = _out_path(args, args.out)
    _write_csv(out, ["snr_db", "k", "subset", "outage", "method"],
               [[_fmt(r["snr_db"]), r["k"], _subset_str(r["subset"]),
                 _fmt(r["outage"]), r["method"]] for r in rows])
    doc = {"kind": "outage_sweep", "topology": args.topology, "rate": args.rate,
           "k_values": k_values, "snr_grid": grid_doc, "method": args.method,
           "normalization": args.normalization}
    return [out, _write_manifest(out, doc, seed, [out])]


def _cmd_run(args):
    _require(args, "policy", "schedule", "rate")
    seed = 0 if args.seed is None else args.seed
    schedule, topologies = _resolve_schedule(
        args.schedule, os.path.dirname(os.path.abspath(args.schedule)) or ".",
        args.schedule)
    params_doc = {}
    if args.params:
        with open(args.params, "r", encoding="utf-8") as fh:
            params_doc = yaml.safe_load(fh) or {}
    params = _resolve_params({"params": params_doc}, args.params or "<flags>")
    n = next(iter(topologies.values())).n_relays
    modes = netsim.enumerate_modes(n)
    executor = experiments._schedule_executor(
        schedule, topologies, netsim.Strategy.parse(args.strategy), args.rate,
        named_rng(seed, "frames", args.policy))
    log = selection.run_policy(args.policy, executor, modes, params,
                               total_frames=schedule.total_frames,
                               rng=named_rng(seed, "policy", args.policy))
    out = _out_path(args, args.out)
    _write_csv(out, ["frame_index", "mode", "category", "phase",
                     "cumulative_switches"], log.to_rows())
    doc = {"kind": "adaptive_compare", "schedule": args.schedule,
           "policies": [args.policy], "strategy": args.strategy,
           "rate": args.rate, "params": params_doc}
    return [out, _write_manifest(out, doc, seed, [out])]


def _cmd_ensemble(args):
    _require(args, "topologies", "policies", "rate")
    seed = 0 if args.seed is None else args.seed
    topologies = [load_topology(p) for p in args.topologies.split(",")]
    params_doc = {}
    if args.params:
        with open(args.params, "r", encoding="utf-8") as fh:
            params_doc = yaml.safe_load(fh) or {}
    params = _resolve_params({"params": params_doc}, args.params or "<flags>")
    dataset = ensemble.record_dataset(
        topologies, netsim.Strategy.parse(args.strategy), args.rate,
        args.frames_per_topology, named_rng(seed, "dataset"))
    samples = ensemble.make_ensemble(dataset, args.samples, args.transitions,
                                     args.segment_len, seed)
    summary = []
    sample_rows = []
    for policy in args.policies.split(","):
        res = ensemble.evaluate_on_ensemble(policy, samples, dataset, params,
                                            seed=seed)
        summary.append([res.policy, _fmt(res.avg_fer), _fmt(res.avg_switches)])
        for idx, fer, switches, n_frames in res.rows:
            sample_rows.append([res.policy, idx, _fmt(fer), switches, n_frames])
    out = _out_path(args, args.out)
    _write_csv(out, ["policy", "avg_fer", "avg_switches"], summary)
    stem, ext = os.path.splitext(out)
    out2 = f"{stem}_samples{ext}"
    _write_csv(out2, ["policy", "sample", "fer", "switches", "n_frames"],
               sample_rows)
    doc = {"kind": "ensemble", "topologies": args.topologies.split(","),
           "policies": args.policies.split(","), "strategy": args.strategy,
           "rate": args.rate, "frames_per_topology": args.frames_per_topology,
           "n_transitions": args.transitions, "segment_len": args.segment_len,
           "n_samples": args.samples, "params": params_doc}
    return [out, out2, _write_manifest(out, doc, seed, [out, out2])]


def _cmd_mac(args):
    seed = 0 if args.seed is None else args.seed
    policy = macemu.MacPolicy(max_retx_coop=args.max_retx,
                              max_retx_per_link=args.max_retx_per_link)
    wrote = []
    if args.coop_trace:
        results = macemu.coop_mac_deliver(netsim.read_trace(args.coop_trace), policy)
        out = _out_path(args, args.out)
        macemu.write_packet_csv(out, results)
        wrote.append(out)
        print(f"coop: {len(results)} packets, drop_rate="
              f"{macemu.drop_rate(results):.6f}")
    if args.path_traces:
        traces = macemu.read_path_traces(args.path_traces)
        results = macemu.genie_route(traces, policy)
        stem, ext = os.path.splitext(_out_path(args, args.out))
        out = f"{stem}_genie{ext}" if args.coop_trace else _out_path(args, args.out)
        macemu.write_packet_csv(out, results)
        wrote.append(out)
        print(f"genie: {len(results)} packets, drop_rate="
              f"{macemu.drop_rate(results):.6f}")
    if not wrote:
        raise ConfigParseError(
            "mac: need --coop-trace and/or --path-traces (or --config)")
    doc = {"kind": "mac", "coop_trace": args.coop_trace,
           "path_traces": args.path_traces, "max_retx": args.max_retx,
           "max_retx_per_link": args.max_retx_per_link}
    wrote.append(_write_manifest(wrote[0], doc, seed, list(wrote)))
    return wrote


_FLAG_COMMANDS = {
    "outage": _cmd_outage,
    "run": _cmd_run,
    "ensemble": _cmd_ensemble,
    "mac": _cmd_mac,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            if args.list:
                for kind, desc in experiments.list_experiments():
                    print(f"{kind}: {desc}")
                return 0
            if not args.config:
                raise ConfigParseError("validate: config path required")
            print(experiments.validate_config(args.config))
            return 0
        if getattr(args, "config", None):
            files = experiments.run_config(args.config, out_dir=args.out_dir,
                                           seed=args.seed, threads=args.threads)
        else:
            files = _FLAG_COMMANDS[args.command](args)
        for f in files:
            print(f)
        return 0
    except (ConfigParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
