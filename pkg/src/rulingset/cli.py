"""Command-line driver: ``rulingset {simulate,check,modelcheck,color,solve}``.

Every command prints one JSON document on stdout.  Settings come from an
optional ``key = value`` file (``--config``) and are overridden by flags.

Exit codes: 0 success, 1 invalid result, 2 usage error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .graph import Graph, GraphError, generate, graph_from_json, parse_edge_list
from .layered import default_layers, extract_coloring, run_coloring, verify_coloring
from .localsim import PipelineError, solve_pipeline
from .modelcheck import DEFAULT_BUDGET, BudgetExceeded, StateSpace, verify_closure, \
    verify_reachability
from .protocol import Configuration, ProtocolParams, random_configuration
from .scheduler import make_daemon, run
from .verifier import is_legitimate, is_ruling_set, leaders

log = logging.getLogger("rulingset")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- configuration -------------------------------------------------------------------------

def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` comments; keys use ``_`` or ``-``."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _parse_inject(text: str) -> tuple[int, int]:
    step, sep, m = text.partition(":")
    if not sep or not step.strip().isdigit() or not m.strip().isdigit():
        raise UsageError(f"--inject expects STEP:M, got {text!r}")
    return int(step), int(m)


_TYPES = {"k": int, "n": int, "max_degree": int, "graph_seed": int, "rows": int, "cols": int,
          "leaves": int, "p": float, "seed": int, "max_steps": int, "runs": int, "jobs": int,
          "layers": int, "distance": int, "budget": int}


def merge_settings(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Config-file values where the flag was left at its default."""
    settings = vars(args).copy()
    if args.config:
        try:
            file_values = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        for key, value in file_values.items():
            if key not in settings:
                raise UsageError(f"unknown config key {key!r}")
            if settings[key] != parser.get_default(key):
                continue
            if key == "inject":
                settings[key] = value.split()
            else:
                try:
                    settings[key] = _TYPES.get(key, str)(value)
                except ValueError as exc:
                    raise UsageError(f"config key {key}: {exc}") from exc
    settings["inject"] = [_parse_inject(x) for x in settings.get("inject") or []]
    if settings.get("k") is not None and settings["k"] < 3:
        raise UsageError("k must be >= 3")
    return settings


def load_graph(s: dict) -> Graph:
    try:
        if s.get("graph"):
            path = Path(s["graph"])
            if not path.exists():
                raise UsageError(f"graph file {path} does not exist")
            text = path.read_text()
            return graph_from_json(text) if path.suffix == ".json" else parse_edge_list(text)
        kind = s.get("gen")
        if not kind:
            raise UsageError("give --graph FILE or --gen KIND")
        params = {key: s[key] for key in ("n", "rows", "cols", "leaves") if s.get(key) is not None}
        if kind in ("random", "random_bounded_degree"):
            params.update(max_degree=s.get("max_degree") or 4, seed=s.get("graph_seed") or 0)
        return generate(kind, **params)
    except (GraphError, KeyError) as exc:
        raise UsageError(f"bad graph: {exc}") from exc


def _daemon(s: dict):
    try:
        return make_daemon(s["daemon"], s["p"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _map_seeds(fn, s: dict, seeds: list[int]) -> list:
    jobs = max(1, s.get("jobs") or 1)
    if jobs == 1 or len(seeds) == 1:
        return [fn(s, seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, [s] * len(seeds), seeds))


def _seeds(s: dict) -> list[int]:
    return [s["seed"] + i for i in range(max(1, s.get("runs") or 1))]


# -- commands --------------------------------------------------------------------------------

def _simulate_one(s: dict, seed: int) -> dict:
    g = load_graph(s)
    k = s["k"]
    cfg0 = random_configuration(g, ProtocolParams(k), seed)
    trace = s.get("trace") if (s.get("runs") or 1) == 1 else False
    res = run(g, cfg0, _daemon(s), cap=s["max_steps"], seed=seed, faults=s["inject"],
              trace=trace or False)
    S = leaders(res.final)
    verdict = res.legitimate and is_ruling_set(g, S, k, k - 1)
    out = {"seed": seed, **res.summary(), "leaders": S, "ruling_set": verdict}
    out.pop("trace", None)
    return out


def cmd_simulate(s: dict) -> tuple[dict, int]:
    results = _map_seeds(_simulate_one, s, _seeds(s))
    ok = all(r["ruling_set"] for r in results)
    doc = results[0] if len(results) == 1 else {"runs": results, "all_valid": ok}
    return doc, EXIT_OK if ok else EXIT_INVALID


def cmd_check(s: dict) -> tuple[dict, int]:
    g = load_graph(s)
    if not s.get("state"):
        raise UsageError("check needs --state FILE")
    try:
        cfg = Configuration.from_json(Path(s["state"]).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read state: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad state file: {exc}") from exc
    if cfg.n != g.n:
        raise UsageError(f"state has {cfg.n} nodes, graph has {g.n}")
    report = is_legitimate(g, cfg)
    return report.to_json(), EXIT_OK if report.legitimate else EXIT_INVALID


def cmd_modelcheck(s: dict) -> tuple[dict, int]:
    g = load_graph(s)
    params = ProtocolParams(s["k"])
    budget = s.get("budget") or DEFAULT_BUDGET
    space = StateSpace.build(g, params, budget)
    closure = verify_closure(g, params, space=space)
    reach = verify_reachability(g, params, space=space)
    doc = {"closure": closure.to_json(), "reachability": reach.to_json()}
    return doc, EXIT_OK if closure.ok and reach.ok else EXIT_INVALID


def _color_one(s: dict, seed: int) -> dict:
    g = load_graph(s)
    k = s["k"]
    L = s.get("layers") or default_layers(g.max_degree, k)
    K = s.get("distance") or k - 1
    res = run_coloring(g, k, L, _daemon(s), seed=seed, cap=s["max_steps"], faults=s["inject"])
    coloring = extract_coloring(res.final)
    check = verify_coloring(g, coloring, K, k=k)
    return {"seed": seed, **res.summary(), "layers": L, "distance": K,
            **coloring.to_json(), "valid": check.ok and res.legitimate,
            "problems": check.problems}


def cmd_color(s: dict) -> tuple[dict, int]:
    results = _map_seeds(_color_one, s, _seeds(s))
    ok = all(r["valid"] for r in results)
    doc = results[0] if len(results) == 1 else {"runs": results, "all_valid": ok}
    return doc, EXIT_OK if ok else EXIT_INVALID


def cmd_solve(s: dict) -> tuple[dict, int]:
    g = load_graph(s)
    try:
        res = solve_pipeline(g, s["problem"], _daemon(s), seed=s["seed"], cap=s["max_steps"])
    except PipelineError as exc:
        return {"problem": s["problem"], "error": str(exc)}, EXIT_INVALID
    return res.to_json(), EXIT_OK if res.valid else EXIT_INVALID


COMMANDS = {"simulate": cmd_simulate, "check": cmd_check, "modelcheck": cmd_modelcheck,
            "color": cmd_color, "solve": cmd_solve}


# -- parser ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--graph", help="edge list, or .json graph")
    common.add_argument("--gen", help="generator: path, cycle, grid, star, random")
    common.add_argument("--n", type=int, help="node count for path, cycle, random")
    common.add_argument("--rows", type=int)
    common.add_argument("--cols", type=int)
    common.add_argument("--leaves", type=int, help="leaf count for star")
    common.add_argument("--max-degree", type=int, help="degree bound for random (default 4)")
    common.add_argument("--graph-seed", type=int, help="random graph seed (default 0)")
    common.add_argument("--k", type=int, default=3, help="protocol parameter, k >= 3")
    common.add_argument("--daemon", default="subset-random",
                        help="subset-random, central, synchronous, round-robin")
    common.add_argument("--p", type=float, default=0.5, help="subset-random selection probability")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--max-steps", type=int, default=10**6, help="step cap per run")
    common.add_argument("--inject", action="append", metavar="STEP:M",
                        help="scramble M nodes at STEP (repeatable)")
    common.add_argument("--runs", type=int, default=1, help="seeds seed..seed+runs-1")
    common.add_argument("--jobs", type=int, default=1, help="worker processes across runs")
    common.add_argument("--output", help="also write the JSON result here")

    parser = argparse.ArgumentParser(prog="rulingset", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices
    p = sub.add_parser("simulate", parents=[common], help="run the ruling-set protocol")
    p.add_argument("--trace", help="write a JSONL trace (single run only)")
    p = sub.add_parser("check", parents=[common], help="check a configuration file")
    p.add_argument("--state", help="configuration JSON")
    p = sub.add_parser("modelcheck", parents=[common], help="exhaustive closure and reachability")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="configuration count limit")
    p = sub.add_parser("color", parents=[common], help="layered distance-K coloring")
    p.add_argument("--layers", type=int, help="L (default from max degree and k)")
    p.add_argument("--distance", type=int, help="K (default k - 1)")
    p = sub.add_parser("solve", parents=[common], help="MIS or (Δ+1)-coloring via ball maps")
    p.add_argument("--problem", choices=("mis", "coloring"), default="mis")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("RULINGSET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser.subcommands[args.command]
    try:
        settings = merge_settings(args, sub)
        log.info("running %s with %s", args.command, settings)
        doc, code = COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"rulingset: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(json.dumps({"error": "budget exceeded", "detail": str(exc)}))
        return EXIT_BUDGET
    text = json.dumps(doc)
    print(text)
    if settings.get("output"):
        Path(settings["output"]).write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
