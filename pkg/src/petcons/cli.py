"""Command line entry point: ``petcons {synth,run,verify,batch}``.

Exit codes: 0 ok, 2 invalid config, 3 infeasible design, 4 guarantee
violated, 5 state divergence.

CSV outputs (numbers with 17 significant digits, so they round-trip):

* trajectory.csv: t, agent, x1..xn, u1..um (one row per agent per instant)
* events.csv: t, agent
* metrics.csv: t, V, envelope, max_disagreement
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, config, netsim, verify
from .errors import DivergenceError, InfeasibleDesignError, PetconsError
from .synthesis import report

OUT_ENV = "PETCONS_OUT_DIR"
NUM = "%.17g"


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _default_out(cfg) -> Path:
    return Path(os.environ.get(OUT_ENV, "petcons_out")) / cfg.name


def _fail(exc: PetconsError) -> int:
    msg = str(exc)
    if isinstance(exc, InfeasibleDesignError) and exc.max_feasible_d is not None:
        msg += f" (maximal feasible d = {exc.max_feasible_d:.17g} s)"
    print(f"error: {msg}", file=sys.stderr)
    return exc.exit_code


# ---------------------------------------------------------------- writers

def _write_csv(path: Path, header, rows: np.ndarray, fmt):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if rows.size:
            np.savetxt(fh, rows, fmt=fmt, delimiter=",")


def write_trajectory(path: Path, logs: netsim.SimLogs):
    steps = logs.steps_done
    _, N, n = logs.X.shape
    m = logs.U.shape[2]
    header = ["t", "agent"] + [f"x{k + 1}" for k in range(n)] + [f"u{k + 1}" for k in range(m)]
    t = np.repeat(np.arange(steps) * logs.h, N)
    agent = np.tile(np.arange(N), steps)
    rows = np.column_stack([t, agent, logs.X[:steps].reshape(-1, n), logs.U[:steps].reshape(-1, m)])
    _write_csv(path, header, rows, [NUM, "%d"] + [NUM] * (n + m))


def write_events(path: Path, logs: netsim.SimLogs):
    ev = sorted(logs.events)
    rows = np.array([[s * logs.h, i] for s, i in ev], dtype=float).reshape(-1, 2)
    _write_csv(path, ["t", "agent"], rows, [NUM, "%d"])


def write_metrics(path: Path, m: netsim.MetricsReport | None, logs: netsim.SimLogs):
    k = logs.steps_done
    if m is None:
        rows = np.column_stack([logs.t, np.zeros(k), np.full(k, np.nan), np.zeros(k)])
    else:
        env = m.envelope if m.envelope is not None else np.full(len(m.t), np.nan)
        rows = np.column_stack([m.t, m.V, env, m.max_disagreement])
    _write_csv(path, ["t", "V", "envelope", "max_disagreement"], rows.reshape(-1, 4), NUM)


def _summary(res: netsim.RunResult) -> dict:
    m = res.metrics
    if m is None:
        return {}
    return {
        "flags": {k: bool(v) for k, v in m.flags.items()},
        "envelope_violations": m.envelope_violations,
        "min_inter_event_interval": [None if not np.isfinite(v) else v for v in m.min_interval],
        "event_counts_per_agent": [len(res.logs.event_steps(i)) for i in range(res.config.N)],
        "tail_max_disagreement": m.tail_max_disagreement,
        "disagreement_bound": m.disagreement_bound,
    }


def execute_run(cfg, out_dir: Path, baseline: bool = False) -> int:
    """Run one scenario and write its outputs; returns the exit code."""
    out_dir.mkdir(parents=True, exist_ok=True)
    start = _now()
    code = 0
    error = None
    try:
        res = netsim.continuous_baseline(cfg) if baseline else netsim.run(cfg)
        logs, m = res.logs, (None if baseline else res.metrics)
        if m is not None and m.violated:
            code = 4
    except DivergenceError as exc:
        logs, m, res, code, error = exc.logs, None, None, exc.exit_code, str(exc)
    files = {"trajectory": out_dir / "trajectory.csv", "events": out_dir / "events.csv",
             "metrics": out_dir / "metrics.csv"}
    if logs is not None:
        write_trajectory(files["trajectory"], logs)
        write_events(files["events"], logs)
        write_metrics(files["metrics"], m, logs)
    manifest = {
        "config_hash": cfg.source_hash, "config_name": cfg.name, "seed": cfg.seed,
        "duration": cfg.duration, "mode": "baseline" if baseline else cfg.mode,
        "version": __version__, "start": start, "end": _now(), "exit_code": code,
        "files": {k: str(v) for k, v in files.items() if logs is not None},
    }
    if error:
        manifest["error"] = error
    if res is not None and not baseline:
        manifest.update(_summary(res))
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if code == 4:
        print("guarantee violated: " + ", ".join(k for k, v in m.flags.items() if v),
              file=sys.stderr)
    elif error:
        print(f"error: {error}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    cfg = config.load(args.config)
    syn = netsim.synthesize_config(cfg)
    text = json.dumps(report(syn), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    cfg = config.load(args.config)
    cfg = cfg.with_overrides(seed=args.seed, duration=args.duration)
    out = Path(args.out_dir) if args.out_dir else _default_out(cfg)
    code = execute_run(cfg, out, baseline=args.baseline)
    print(f"wrote {out}")
    return code


def cmd_verify(args) -> int:
    ok = True
    for res in verify.run_suite(args.suite, args.seed):
        print("\n".join(res.lines()), flush=True)
        ok &= res.ok
    return 0 if ok else 1


def _batch_one(path: str, out_root: str) -> tuple[str, int]:
    try:
        cfg = config.load(path)
        return path, execute_run(cfg, Path(out_root) / Path(path).stem)
    except PetconsError as exc:
        return path, _fail(exc)


def cmd_batch(args) -> int:
    paths = sorted(str(p) for p in Path(args.dir).glob("*.json"))
    if not paths:
        print(f"error: no *.json scenarios in {args.dir}", file=sys.stderr)
        return 2
    out_root = args.out_dir or os.environ.get(OUT_ENV, "petcons_out")
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(_batch_one, paths, [out_root] * len(paths)))
    for path, code in results:
        print(f"{code}  {path}")
    return max(code for _, code in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="petcons",
                                 description="Periodic event-triggered consensus with delays")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="design gains and trigger constants, print JSON report")
    p.add_argument("config")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="simulate a scenario and write CSV logs")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV}/<name>)")
    p.add_argument("--baseline", action="store_true",
                   help="broadcast every step with coupling c instead of the event rule")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run randomized property suites")
    p.add_argument("--suite", choices=verify.SUITES + ("all",), default="all")
    p.add_argument("--seed", type=int, default=verify.DEFAULT_SEED)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("batch", help="run every *.json scenario in a directory")
    p.add_argument("dir")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_batch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PetconsError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
