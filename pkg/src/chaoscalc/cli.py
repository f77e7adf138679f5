"""Command-line front door.

    chaoscalc demo NAME            worked examples (wick-square, skorohod-cube, clark-ocone, resolvent-exp, moments)
    chaoscalc solve KIND --config  configured problems (bsde, meanfield, bsvie, lq, cashflow)
    chaoscalc selftest [--quick | --full]

Exit codes: 0 success, 1 numerical/solver failure (or failed identity), 2 usage/config error.
Every artifact records seed, path count, truncation, grid and the git description
of the source tree; CSV bodies are byte-identical across reruns with the same
inputs (12 significant digits, '.' decimal separator).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import acceptance
from .errors import ChaosCalcError, ConfigError, DomainError, UnsupportedError

__all__ = ["main", "RunConfig", "format_number", "write_artifact", "git_describe", "DEMOS", "SOLVERS"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def format_number(x) -> str:
    """12 significant digits, locale-independent; bools as true/false, None as empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def _round12(x):
    if isinstance(x, dict):
        return {str(k): _round12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round12(v) for v in x]
    if isinstance(x, np.ndarray):
        return _round12(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not math.isfinite(x) else float(format(x, ".12g"))
    if hasattr(x, "to_dict"):
        return _round12(x.to_dict())
    return x


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        from importlib.metadata import version
        return f"artifact-{version('artifact')}"
    except Exception:   # noqa: BLE001 - metadata is best effort
        return "unknown"


@dataclass
class RunConfig:
    command: str
    name: str
    config_path: str | None = None
    seed: int = 2024
    n_paths: int | None = None
    truncation: dict = field(default_factory=dict)
    out_dir: Path = Path("chaoscalc_out")
    fmt: str = "csv"

    def meta(self, grid=None, extra: dict | None = None) -> dict:
        m = {"command": self.command, "name": self.name, "seed": self.seed, "n_paths": self.n_paths,
             "truncation": self.truncation or None, "grid": grid.to_dict() if grid is not None else None,
             "config": self.config_path, "git_describe": git_describe()}
        if extra:
            m.update(extra)
        return m


def _columns(rows: Sequence[dict]) -> list[str]:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def write_artifact(run: RunConfig, stem: str, rows: Sequence[dict], meta: dict, summary: dict | None = None) -> list[Path]:
    """Write ``rows`` as CSV (metadata in leading '#' lines) or JSON, plus a JSON summary."""
    run.out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if run.fmt == "csv":
        buf = io.StringIO()
        for k, v in meta.items():
            buf.write(f"# {k}: {json.dumps(_round12(v), sort_keys=True)}\n")
        cols = _columns(rows)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([format_number(r.get(c)) for c in cols])
        path = run.out_dir / f"{stem}.csv"
        path.write_text(buf.getvalue(), encoding="utf-8")
        written.append(path)
        if summary is not None:
            sp = run.out_dir / f"{stem}_summary.json"
            sp.write_text(json.dumps(_round12({"meta": meta, "summary": summary}), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
            written.append(sp)
    else:
        path = run.out_dir / f"{stem}.json"
        doc = {"meta": meta, "rows": list(rows)}
        if summary is not None:
            doc["summary"] = summary
        path.write_text(json.dumps(_round12(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    return written


def _write_error(run: RunConfig, exc: BaseException, grid=None) -> Path:
    run.out_dir.mkdir(parents=True, exist_ok=True)
    report = {"meta": run.meta(grid), "error": type(exc).__name__, "message": str(exc)}
    for attr in ("report", "norm", "delta", "residual", "tol", "dropped_mass"):
        if hasattr(exc, attr):
            report[attr] = getattr(exc, attr)
    path = run.out_dir / "error.json"
    path.write_text(json.dumps(_round12(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# demos
# ---------------------------------------------------------------------------

def _criterion_demo(number: int) -> Callable[[RunConfig], tuple]:
    def run(cfg: RunConfig):
        res = acceptance.run_criterion(number, "full", cfg.seed, corrupt=False, paths=cfg.n_paths)
        rows = res.metrics.get("rows") or [{k: v for k, v in res.metrics.items() if not isinstance(v, (dict, list))}]
        return rows, res.to_dict(), res.passed
    return run


def _demo_moments(cfg: RunConfig):
    """Mean, variance and 4th moment of B(t): completed path and K-term chaos synthesis."""
    from .chaos_core import HermiteBasis, TimeGrid, brownian_chaos
    from .pathwise_mc import brownian_path, build_ensemble, evaluate, mc_mean
    K = int(cfg.truncation.get("K", 100))
    n = cfg.n_paths or 100_000
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(K, g)
    ens = build_ensemble(cfg.seed, n, K, g, basis=b)
    rows = []
    for t in (0.25, 0.5, 1.0):
        v = float(np.sum(b.E(t) ** 2))
        for source, x, tail in (("path", brownian_path(ens, t), 0.0),
                                (f"chaos K={K}", evaluate(brownian_chaos(t, b), ens), t - v)):
            for moment, vals, target, slack in (("mean", x, 0.0, 0.0), ("var", x ** 2, t, tail),
                                                ("4th", x ** 4, 3 * t * t, 3 * (t * t - v * v) if tail else 0.0)):
                est = mc_mean(vals, ens.seed)
                rows.append({"t": t, "source": source, "moment": moment, "estimate": est.estimate,
                             "target": target, "stderr": est.stderr, "tolerance": 3 * est.stderr + slack,
                             "K_tail_allowance": slack, "passed": est.within(target, slack=slack)})
    ok = all(r["passed"] for r in rows)
    return rows, {"passed": ok, "K": K, "n_paths": n,
                  "tolerance": "|estimate - target| <= 3 stderr (+ K-tail allowance for the chaos rows)"}, ok


def _demo_resolvent_exp(cfg: RunConfig):
    from .bsvie import VolterraKernel, resolvent_psi
    from .chaos_core import TimeGrid
    g = TimeGrid(1.0, 63)
    P = resolvent_psi(VolterraKernel.exp_decay(1.0), g)
    rows = [{"t": r["t"], "r": r["r"], "Psi": r["value"], "error": r["value"] - 1.0} for r in P.table()]
    err = max(abs(r["error"]) for r in rows)
    ok = err <= 1e-8
    return rows, {"max_abs_error": err, "tolerance": 1e-8, "passed": ok, "terms": P.info["terms"],
                  "identity_residual": P.info["identity_residual"], "grid_points": len(g.points)}, ok


# truncation each demo runs at (recorded in its artifacts); only "moments" honours --truncation K=...
DEMO_TRUNCATION = {"wick-square": {"K": 30, "N": 2}, "skorohod-cube": {"K": 30, "N": 3},
                   "clark-ocone": {"K": 30, "N": 3}, "resolvent-exp": {"p": 32, "q": 32, "tol": 1e-12},
                   "moments": {"K": 100, "N": 1}}

DEMOS: dict[str, Callable[[RunConfig], tuple]] = {
    "wick-square": _criterion_demo(3),
    "skorohod-cube": _criterion_demo(4),
    "clark-ocone": _criterion_demo(7),
    "resolvent-exp": _demo_resolvent_exp,
    "moments": _demo_moments,
}


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _ensemble(cfg: RunConfig, grid, levy):
    from .pathwise_mc import build_ensemble
    K = int(cfg.truncation.get("K", 8))
    return build_ensemble(cfg.seed, cfg.n_paths, K, grid, levy=levy)


def _solve_bsde(cfg: RunConfig, d: dict):
    from .linear_bsde import LinearBSDESpec
    spec = LinearBSDESpec.from_config(d, allow_meanfield=False)
    return spec.grid, lambda: _run_bsde(cfg, spec)


def _run_bsde(cfg, spec):
    from .linear_bsde import linear_bsde_solve
    sol = linear_bsde_solve(spec, _ensemble(cfg, spec.grid, spec.levy))
    return {"bsde": sol.table()}, sol.summary()


def _solve_meanfield(cfg: RunConfig, d: dict):
    from .linear_bsde import LinearBSDESpec
    spec = LinearBSDESpec.from_config(d)

    def run():
        from .linear_bsde import meanfield_bsde_solve
        S = meanfield_bsde_solve(spec, _ensemble(cfg, spec.grid, spec.levy))
        rows = S.V.table()
        if S.Y is not None:
            for i, r in enumerate(rows):
                r["Y_mc_mean"] = float(S.Y[:, i].mean())
        return {"meanfield": rows}, S.summary()
    return spec.grid, run


def _solve_bsvie(cfg: RunConfig, d: dict):
    from .bsvie import BSVIESpec
    spec = BSVIESpec.from_config(d)

    def run():
        from .bsvie import bsvie_solve_Y, bsvie_solve_ZK
        ens = _ensemble(cfg, spec.grid, spec.levy)
        sol = bsvie_solve_Y(spec, ens)
        zk = bsvie_solve_ZK(spec, ens, sol)
        return {"bsvie": sol.table(), "bsvie_ZK": zk.table()}, sol.summary()
    return spec.grid, run


def _solve_lq(cfg: RunConfig, d: dict):
    from .control_mp import ControlProblemLQ
    pb = ControlProblemLQ.from_config(d)

    def run():
        from .control_mp import analytic_value, lq_solve, stationarity_check
        ens = _ensemble(cfg, pb.grid, pb.levy)
        it = lq_solve(pb, ens)
        rows = it.table()
        names = ["c1", "cX", "cX2", "cX3"][: it.policy.degree + 1] + (["cN"] if it.policy.with_jumps else [])
        for r, coef in zip(rows, it.policy.coef):
            r.update({f"policy_{n}": c for n, c in zip(names, coef)})
        st = stationarity_check(it)
        summary = it.summary()
        summary.update({"analytic_unconstrained_value": analytic_value(pb), "stationarity_passed": st.passed,
                        "monotone_improvement": it.monotone_improvement()})
        return {"lq_policy": rows, "lq_iterations": it.iterations_table()}, summary
    return pb.grid, run


def _solve_cashflow(cfg: RunConfig, d: dict):
    from .control_mp import SVIEControlSpec
    spec = SVIEControlSpec.from_config(d)

    def run():
        from .control_mp import cashflow_solve
        res = cashflow_solve(spec, _ensemble(cfg, spec.grid, spec.levy))
        return {"cashflow": res.table()}, res.summary()
    return spec.grid, run


SOLVERS: dict[str, Callable[[RunConfig, dict], tuple]] = {
    "bsde": _solve_bsde,
    "meanfield": _solve_meanfield,
    "bsvie": _solve_bsvie,
    "lq": _solve_lq,
    "cashflow": _solve_cashflow,
}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_demo(cfg: RunConfig) -> int:
    if cfg.name not in DEMOS:
        print(f"error: unknown demo {cfg.name!r}; choose from {sorted(DEMOS)}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.n_paths is None:
        cfg.n_paths = 100_000
    user_K = cfg.truncation.get("K")
    cfg.truncation = dict(DEMO_TRUNCATION[cfg.name])
    if cfg.name == "moments" and user_K:
        cfg.truncation["K"] = user_K
    t0 = time.perf_counter()
    try:
        rows, summary, ok = DEMOS[cfg.name](cfg)
    except ChaosCalcError as e:
        print(f"error: {type(e).__name__}: {e} (report: {_write_error(cfg, e)})", file=sys.stderr)
        return EXIT_FAIL
    from .chaos_core import TimeGrid
    meta = cfg.meta(TimeGrid(1.0, 63 if cfg.name == "resolvent-exp" else 64))
    summary = dict(summary, runtime_s=round(time.perf_counter() - t0, 3))
    paths = write_artifact(cfg, f"demo_{cfg.name.replace('-', '_')}", rows, meta, summary)
    print(f"demo {cfg.name}: {'PASS' if ok else 'FAIL'}; wrote {', '.join(map(str, paths))}")
    return EXIT_OK if ok else EXIT_FAIL


def _load_config(path: str | None) -> dict:
    if path is None:
        raise ConfigError("--config is required for solve")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r} is not valid JSON: {e}") from e
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a JSON object")
    return d


def cmd_solve(cfg: RunConfig) -> int:
    if cfg.name not in SOLVERS:
        print(f"error: unknown problem kind {cfg.name!r}; choose from {sorted(SOLVERS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        d = _load_config(cfg.config_path)
        grid, run = SOLVERS[cfg.name](cfg, d)
    except (ConfigError, DomainError, UnsupportedError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.n_paths is None:
        cfg.n_paths = 20_000
    cfg.truncation.setdefault("K", 8)
    t0 = time.perf_counter()
    try:
        tables, summary = run()
    except ChaosCalcError as e:
        print(f"solver error: {type(e).__name__}: {e} (report: {_write_error(cfg, e, grid)})", file=sys.stderr)
        return EXIT_FAIL
    summary = dict(summary, runtime_s=round(time.perf_counter() - t0, 3))
    meta = cfg.meta(grid)
    written = []
    for i, (stem, rows) in enumerate(tables.items()):
        written += write_artifact(cfg, stem, rows, meta, summary if i == 0 else None)
    print(f"solve {cfg.name}: ok; wrote {', '.join(map(str, written))}")
    return EXIT_OK


def cmd_selftest(cfg: RunConfig, level: str) -> int:
    """Run the acceptance suite; documented known deviations are marked FAIL* and do not fail the run."""
    results = acceptance.run_acceptance(level, seed=cfg.seed,
                                        progress=lambda r: print(acceptance.format_line(r), flush=True))
    rows = [{"criterion": r.number, "name": r.name, "passed": r.passed, "known_deviation": r.known_deviation,
             "tolerance": r.tolerance, "runtime_s": round(r.runtime, 3), "note": r.note} for r in results]
    meta = cfg.meta(extra={"level": level, "n_paths": acceptance.SCALES[level].paths})
    cfg.fmt = "json" if level == "full" else cfg.fmt
    write_artifact(cfg, f"acceptance_{level}", rows, meta, {"criteria": [r.to_dict() for r in results]})
    unexpected = [r for r in results if not r.passed and not r.known_deviation]
    known = [r for r in results if r.known_deviation]
    for r in known:
        print(f"known deviation, criterion {r.number}: {r.note}")
    if unexpected:
        print("failing criteria: " + ", ".join(f"{r.number} ({r.name})" for r in unexpected), file=sys.stderr)
        return EXIT_FAIL
    print(f"selftest {level}: {sum(r.passed for r in results)}/{len(results)} passed"
          + (f", {len(known)} documented deviation(s)" if known else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):        # usage errors exit with 2 (argparse's default, made explicit)
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}")
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _truncation(s: str) -> dict:
    """'K=30' or 'K=30,N=3'."""
    out = {}
    for part in s.split(","):
        k, _, v = part.partition("=")
        if k.strip() not in ("K", "N") or not v.strip().isdigit():
            raise argparse.ArgumentTypeError(f"expected K=<int>[,N=<int>], got {s!r}")
        out[k.strip()] = int(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=2024, help="RNG seed (default 2024)")
    common.add_argument("--paths", type=_positive_int, default=None, help="number of Monte Carlo paths")
    common.add_argument("--out", default="chaoscalc_out", help="output directory (default ./chaoscalc_out)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format (default csv)")
    common.add_argument("--truncation", type=_truncation, default={}, help="override, e.g. K=30")

    p = _Parser(prog="chaoscalc", description="Wiener chaos calculus, BSDE/BSVIE solvers and control examples.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    d = sub.add_parser("demo", parents=[common], help="run a worked example")
    d.add_argument("name", help="one of: " + ", ".join(DEMOS))
    s = sub.add_parser("solve", parents=[common], help="solve a configured problem")
    s.add_argument("kind", help="one of: " + ", ".join(SOLVERS))
    s.add_argument("--config", required=True, help="JSON problem configuration")
    t = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    g = t.add_mutually_exclusive_group()
    g.add_argument("--quick", dest="level", action="store_const", const="quick", help="reduced sample sizes (default)")
    g.add_argument("--full", dest="level", action="store_const", const="full", help="reference sample sizes")
    t.set_defaults(level="quick")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    name = getattr(args, "name", None) or getattr(args, "kind", None) or args.command
    cfg = RunConfig(args.command, name, getattr(args, "config", None), args.seed, args.paths, dict(args.truncation),
                    Path(args.out), args.format)
    if args.command == "demo":
        return cmd_demo(cfg)
    if args.command == "solve":
        return cmd_solve(cfg)
    return cmd_selftest(cfg, args.level)


if __name__ == "__main__":      # pragma: no cover
    sys.exit(main())
