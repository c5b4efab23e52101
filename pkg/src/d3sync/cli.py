"""Command-line front end: ``simulate``, ``analyze``, ``reproduce``, ``rerun``.

Every command writes its data files plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 validation error, 2 some trial hit the interaction
cap, 3 closed form and linear solve disagree.  Data files depend only on the
arguments; manifests also carry wall-clock timestamps unless
``SOURCE_DATE_EPOCH`` is set.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, harness, markov
from .ring import GapVector

EXIT_OK, EXIT_INVALID, EXIT_CAPPED, EXIT_MISMATCH = 0, 1, 2, 3
SOLVE_RTOL = 1e-9
TIMESTAMP_FIELDS = ("started_at", "finished_at")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# -- output helpers ----------------------------------------------------------


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])


def _now() -> str:
    # SOURCE_DATE_EPOCH pins timestamps so whole output directories can be byte-compared
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.isoformat(timespec="seconds")


def _manifest(command: str, argv: list[str], config, seed, outputs: list[str], started: str) -> dict:
    return {
        "tool": "d3sync",
        "version": __version__,
        "command": command,
        "argv": argv,
        "seed": seed,
        "config": config,
        "outputs": sorted(outputs),
        "started_at": started,
        "finished_at": _now(),
    }


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def _replace_flag(argv: list[str], flag: str, value: str) -> list[str]:
    out, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == flag:
            skip = True
            continue
        if a.startswith(flag + "="):
            continue
        out.append(a)
    return out + [flag, value]


def _parse_range(text: str) -> list[int]:
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise UsageError(f"expected a range like 3..25, got {text!r}") from None
    if hi < lo:
        raise UsageError(f"empty range {text!r}")
    return list(range(lo, hi + 1))


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def load_initial(path: str) -> tuple[tuple[int, ...], int]:
    """Read ``{"gaps": [...], "edge": k}``, a JSON list, or whitespace-separated ints."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = [int(t) for t in text.split()]
    if isinstance(obj, dict):
        return tuple(obj["gaps"]), int(obj.get("edge", 0))
    return tuple(obj), 0


# -- simulate ----------------------------------------------------------------


def _config_from_args(args) -> harness.ExperimentConfig:
    gaps, edge, mode = None, args.initial_edge, args.init
    if mode.startswith("file:"):
        gaps, file_edge = load_initial(mode[5:])
        GapVector(gaps)
        edge = file_edge if args.initial_edge is None else args.initial_edge
        mode = "explicit"
    elif mode not in ("random", "worst-case"):
        raise UsageError(f"--init must be random, worst-case or file:PATH, got {mode!r}")
    return harness.ExperimentConfig(
        n_nodes=args.nodes,
        n_slots=args.slots,
        alpha=args.alpha,
        trials=args.trials,
        seed=args.seed,
        max_interactions=args.max_interactions,
        init_mode=mode,
        initial_gaps=gaps,
        initial_edge=edge or 0,
        record_trajectory=args.trajectory,
    )


TRIAL_FIELDS = [
    "trial_index",
    "initial_edge",
    "interactions",
    "rounds",
    "absorbed",
    "n_null",
    "n_swap",
    "n_compression",
    "initial_gaps",
    "final_gaps",
]
SUMMARY_FIELDS = ["n_trials", "n_absorbed", "n_capped", "mean", "stderr", "min", "max", "mean_rounds", "theory_eq41", "bound_eq13"]


def cmd_simulate(args, argv, out: Path) -> int:
    started = _now()
    config = _config_from_args(args)
    summary = harness.run_experiment(config)
    outputs = []
    if args.format == "json":
        write_json(out / "summary.json", summary.to_dict(include_records=True))
        outputs.append("summary.json")
    else:
        d = summary.to_dict(include_records=False)
        write_csv(out / "summary.csv", ["N", "L", "alpha"] + SUMMARY_FIELDS, [[config.n_nodes, config.n_slots, config.alpha] + [d[k] for k in SUMMARY_FIELDS]])
        rows = []
        for r in summary.records:
            rd = r.to_dict()
            rows.append([rd[k] if not isinstance(rd[k], list) else " ".join(map(str, rd[k])) for k in TRIAL_FIELDS])
        write_csv(out / "trials.csv", TRIAL_FIELDS, rows)
        outputs += ["summary.csv", "trials.csv"]
    if config.record_trajectory:
        N = config.n_nodes
        header = ["trial", "step", "edge", "outcome"] + [f"g_{i + 1}" for i in range(N)] + ["V", "range"]
        rows = []
        for r in summary.records:
            for row in r.trajectory:
                rows.append([r.trial_index, row["step"], row["edge"], row["outcome"], *row["gaps"], row["V"], row["range"]])
        write_csv(out / "trajectories.csv", header, rows)
        outputs.append("trajectories.csv")
    write_json(out / "manifest.json", _manifest("simulate", argv, config.to_dict(), config.seed, outputs, started))
    return EXIT_CAPPED if summary.n_capped else EXIT_OK


# -- analyze -----------------------------------------------------------------


def cmd_analyze(args, argv, out: Path) -> int:
    started = _now()
    nodes = _parse_range(args.nodes_range)
    alphas = _parse_floats(args.alpha_list)
    if min(nodes) < 3:
        raise UsageError("chain analysis needs N >= 3")
    if args.bound and args.slots is None:
        raise UsageError("--bound needs --slots")
    if args.slots is not None and args.slots < max(nodes):
        raise UsageError("--slots must be at least the largest N")
    header = ["N", "alpha", "tbar_closed_form"]
    if args.solve:
        header += ["tbar_solve_mean", "tbar_solve_max", "rel_deviation", "recursion_residual"]
    if args.bound:
        header += ["L", "bound_eq13"]
    rows, worst = [], 0.0
    for a in alphas:
        for N in nodes:
            closed = markov.tbar_closed_form(N, a)
            row = [N, a, closed]
            if args.solve:
                sol = markov.absorption_solve(markov.build_outlier_chain(N, a))
                rel = abs(sol.mean - closed) / closed
                rep = markov.recursion_check(N, a, sol)
                worst = max(worst, rel, rep.max_residual)
                row += [sol.mean, sol.max, rel, rep.max_residual]
            if args.bound:
                row += [args.slots, markov.absorption_upper_bound(N, args.slots, a)]
            rows.append(row)
    if args.format == "json":
        write_json(out / "analysis.json", {"columns": header, "rows": rows})
        outputs = ["analysis.json"]
    else:
        write_csv(out / "analysis.csv", header, rows)
        outputs = ["analysis.csv"]
    cfg = {"nodes": nodes, "alphas": alphas, "slots": args.slots, "bound": args.bound, "solve": args.solve}
    write_json(out / "manifest.json", _manifest("analyze", argv, cfg, None, outputs, started))
    if args.solve and worst > SOLVE_RTOL:
        print(f"oracle mismatch: worst relative deviation {worst:.3e}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


# -- reproduce ---------------------------------------------------------------


def _rows_to_csv(path: Path, rows: list[dict]) -> None:
    header = list(rows[0])
    write_csv(path, header, [[r[k] for k in header] for r in rows])


def cmd_reproduce(args, argv, out: Path) -> int:
    started = _now()
    fig = args.figure
    seed = args.seed
    outputs = []
    capped = 0
    if fig in ("fig4a", "fig4b"):
        L = args.slots or (60 if fig == "fig4a" else 57)
        alpha = args.alpha if args.alpha is not None else 0.2
        res = harness.fig4(L, n_nodes=args.nodes or 6, alpha=alpha, seed=seed, post_rounds=args.post_rounds)
        N = res.n_nodes
        header = ["N", "L", "alpha", "absorbed_event", "absorbed_round", "n_tdm_states", "distinct_tdm_visited", "post_rounds", "all_visited_tdm"]
        header += [f"final_g_{i + 1}" for i in range(N)]
        row = [N, L, alpha, res.absorbed_event, res.absorbed_round, res.n_tdm_states, res.distinct_tdm_visited, res.post_rounds, res.all_visited_tdm, *res.final_gaps]
        write_csv(out / f"{fig}_summary.csv", header, [row])
        snap_rows = [[s["round"], node + 1, s["counters"][node], s["node_gaps"][node], s["tdm"]]
                     for s in res.snapshots for node in range(N)]
        write_csv(out / f"{fig}_snapshots.csv", ["round", "node", "counter", "gap", "tdm"], snap_rows)
        outputs += [f"{fig}_summary.csv", f"{fig}_snapshots.csv"]
        capped = int(res.absorbed_event is None)
        cfg = {"figure": fig, "N": N, "L": L, "alpha": alpha, "post_rounds": args.post_rounds}
    elif fig == "fig5a":
        alpha = args.alpha if args.alpha is not None else 0.2
        slots = _parse_range(args.slots_range) if args.slots_range else list(range(20, 61))
        N = args.nodes or 10
        rows = harness.fig5a(n_nodes=N, slots=slots, alpha=alpha, trials=args.trials or 5000, seed=seed)
        _rows_to_csv(out / "fig5a.csv", rows)
        outputs.append("fig5a.csv")
        capped = sum(r["n_capped"] for r in rows)
        cfg = {"figure": fig, "N": N, "slots": slots, "alpha": alpha, "trials": args.trials or 5000}
    else:
        alphas = _parse_floats(args.alpha_list) if args.alpha_list else [0.2, 0.5]
        nodes = _parse_ints(args.nodes_list) if args.nodes_list else [4, 6, 8, 10, 12]
        if min(nodes) < 3:
            raise UsageError("worst-case runs need N >= 3")
        tpp = args.trials or 250
        rows = harness.fig5b(nodes=nodes, alphas=alphas, trials_per_placement=tpp, seed=seed)
        _rows_to_csv(out / "fig5b.csv", rows)
        outputs.append("fig5b.csv")
        capped = sum(r["n_capped"] for r in rows)
        cfg = {"figure": fig, "nodes": nodes, "alphas": alphas, "trials_per_placement": tpp}
    write_json(out / "manifest.json", _manifest("reproduce", argv, cfg, seed, outputs, started))
    return EXIT_CAPPED if capped else EXIT_OK


# -- rerun -------------------------------------------------------------------


def cmd_rerun(args, argv, out: Path) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    again = _replace_flag(list(manifest["argv"]), "--out", str(out))
    return main(again)


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="d3sync", description="Slot-grid desynchronization with dithered updates: simulate and analyze")
    p.add_argument("--version", action="version", version=f"d3sync {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo runs to absorption")
    s.add_argument("--nodes", type=int, required=True)
    s.add_argument("--slots", type=int, required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--init", default="random", help="random | worst-case | file:PATH")
    s.add_argument("--initial-edge", type=int, default=None)
    s.add_argument("--max-interactions", type=int)
    s.add_argument("--trajectory", action="store_true")
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.add_argument("--out", required=True)

    a = sub.add_parser("analyze", help="closed form, linear solve and bound over (N, alpha)")
    a.add_argument("--nodes-range", required=True, help="A..B")
    a.add_argument("--alpha-list", required=True, help="comma-separated")
    a.add_argument("--slots", type=int)
    a.add_argument("--bound", action="store_true")
    a.add_argument("--solve", action="store_true")
    a.add_argument("--format", choices=["json", "csv"], default="csv")
    a.add_argument("--out", required=True)

    r = sub.add_parser("reproduce", help="figure presets")
    r.add_argument("figure", choices=["fig4a", "fig4b", "fig5a", "fig5b"])
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--nodes", type=int)
    r.add_argument("--slots", type=int)
    r.add_argument("--alpha", type=float)
    r.add_argument("--trials", type=int, help="per L (fig5a) or per placement (fig5b)")
    r.add_argument("--slots-range", help="fig5a frame lengths, A..B")
    r.add_argument("--alpha-list", help="fig5b alphas")
    r.add_argument("--nodes-list", help="fig5b node counts")
    r.add_argument("--post-rounds", type=int, default=100)

    rr = sub.add_parser("rerun", help="re-run the command recorded in a manifest")
    rr.add_argument("manifest")
    rr.add_argument("--out", required=True)
    return p


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "reproduce": cmd_reproduce, "rerun": cmd_rerun}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "seed") and args.command in ("simulate", "reproduce"):
        if args.seed is None:
            args.seed = _resolve_seed(None)
            argv = _replace_flag(argv, "--seed", str(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, argv, out)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        parser.print_usage(sys.stderr)
        print(f"d3sync {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
