"""Command-line interface: ``dnfmilp {generate,solve,ireland,pareto,bench}``.

Every command writes ``manifest.json`` into its output directory before any
result file.  Options may also come from a ``key=value`` file given with
``--config``; flags on the command line win.  Exit status is 0 for completed
runs (time limits and memory aborts are recorded as data), 1 for input/output
problems and 2 for usage errors.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import itertools
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .dataset import (BinaryDataset, DatasetError, GeneratorConfig, RetentionError,
                      generate_synthetic, load_csv, save_csv, write_rule_sidecar)
from .formulations import BP, FormulationError, FormulationId, ModelDims, build, extract_rule
from .ireland import (DEFAULT_UB_FRACTIONS, IrelandConfig, IrelandError, read_pool, run,
                      write_pool, write_trace)
from .milp import Status, export_lp, solve_branch_and_bound
from .pareto import CurveConfig, ParetoError, trade_off_curve, write_curve
from .rules import balanced_error, normalized

log = logging.getLogger("dnfmilp")

ABORTED = {Status.MEMORY_ABORT, Status.TIME_LIMIT, Status.NUMERICAL_FAILURE, Status.CANCELLED,
           Status.INFEASIBLE, Status.UNBOUNDED}


INDEX_NAME = "collection.csv"  # written by generate, skipped by bench


class CliError(Exception):
    """Bad input detected before any solver runs (exit status 1)."""


# -- helpers ------------------------------------------------------------------

def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    def __init__(self, out: Path, command: str, config: dict, inputs: Sequence[Path] = ()):
        self.path = out / "manifest.json"
        self.data = {
            "command": command,
            "version": __version__,
            "config": config,
            "seed": config.get("seed"),
            "inputs": {str(p): _digest(p) for p in inputs},
            "started": _now(),
            "finished": None,
        }
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n",
                             encoding="utf-8")

    def finish(self, **extra):
        self.data.update(extra)
        self.data["finished"] = _now()
        self.write()


def _ints(text) -> List[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text) -> List[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ub_list(text) -> List[float]:
    vals = _floats(text)
    return [int(v) if all(float(u).is_integer() for u in vals) else v for v in vals]


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{0.0 if abs(v) < 1e-9 else v:.10g}"
    return str(v)


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def _load(path: str) -> BinaryDataset:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"dataset not found: {p}")
    try:
        return load_csv(p)
    except DatasetError as e:
        raise CliError(str(e)) from None


def _sidecar_km(path: Path):
    """K_true and M_true recorded next to a generated dataset, if any."""
    side = path.with_suffix(".rule.txt")
    if not side.is_file():
        return None
    vals = {}
    for ln in side.read_text(encoding="utf-8").splitlines():
        if ln.startswith("# ") and "=" in ln:
            k, v = ln[2:].split("=", 1)
            vals[k.strip()] = v.strip()
    try:
        return int(vals["K_true"]), int(vals["M_true"])
    except (KeyError, ValueError):
        return None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _ireland_cfg(args, ds: BinaryDataset, K: int, M: int) -> IrelandConfig:
    ubs = tuple(args.ub)
    tau = tuple(args.tau) if args.tau is not None else None
    if tau is not None and len(tau) != len(ubs):
        raise CliError(f"--tau has {len(tau)} values but --ub has {len(ubs)}")
    if M > ds.J:
        raise CliError(f"M={M} exceeds the {ds.J} features of the dataset")
    parallel = args.parallel if args.parallel else len(ubs)
    try:
        return IrelandConfig(upper_bounds=ubs, K=K, M=M, N_s=args.ns,
                             per_solve_time_limit=args.per_solve_limit, tau=tau,
                             global_time_budget=args.budget, seed=args.seed, parallel=parallel)
    except IrelandError as e:
        raise CliError(str(e)) from None


def _km(args, data_path: Path):
    K, M = args.K, args.M
    if K is None or M is None:
        side = _sidecar_km(data_path)
        K = K if K is not None else (side[0] if side else 2)
        M = M if M is not None else (side[1] if side else 2)
    if K < 1 or M < 1:
        raise CliError("K and M must be positive")
    return K, M


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    grid = list(itertools.product(args.N, args.J, args.K_true, args.M_true, args.noise,
                                  range(args.reps)))
    configs = []
    for i, (N, J, K, M, f, rep) in enumerate(grid):
        try:
            cfg = GeneratorConfig(N, J, K, M, noise_rate=f, density=args.density,
                                  seed=args.seed + i, max_attempts=args.max_attempts)
        except DatasetError as e:
            raise CliError(f"invalid generator settings N={N} J={J} K={K} M={M} noise={f}: {e}")
        name = f"N{N}_J{J}_K{K}_M{M}_e{f:g}_r{rep}" if len(grid) > 1 else args.name
        configs.append((name, cfg))
    out = _out_dir(args)
    man = Manifest(out, "generate", _config_echo(args))
    rows = []
    for name, cfg in configs:
        try:
            ds, rule = generate_synthetic(cfg)
        except RetentionError as e:
            rows.append((name, "dropped", cfg.N, cfg.J, cfg.K_true, cfg.M_true, cfg.noise_rate,
                         cfg.seed, "", ""))
            log.warning("%s dropped: %s", name, e)
            continue
        save_csv(ds, out / f"{name}.csv")
        write_rule_sidecar(out / f"{name}.rule.txt", rule, cfg)
        rows.append((name, "ok", cfg.N, cfg.J, cfg.K_true, cfg.M_true, cfg.noise_rate, cfg.seed,
                     ds.n_cases, ds.n_controls))
    _write_rows(out / INDEX_NAME,
                ("name", "status", "N", "J", "K_true", "M_true", "noise_rate", "seed",
                 "n_cases", "n_controls"), rows)
    man.finish(generated=sum(r[1] == "ok" for r in rows), dropped=sum(r[1] == "dropped" for r in rows))
    return 0


SOLVE_HEADER = ("formulation", "status", "objective", "normalized_objective", "best_bound",
                "rule_balanced_error", "nodes", "n_constraints", "n_binary", "n_continuous",
                "runtime")


def cmd_solve(args) -> int:
    data = Path(args.data)
    ds = _load(args.data)
    K, M = _km(args, data)
    try:
        fid = FormulationId.parse(args.formulation, relax_safe_vars=args.relax,
                                  use_combined_bp4=args.combined_bp4)
        model = build(fid, ds, K, M)
    except (FormulationError, DatasetError) as e:
        raise CliError(str(e)) from None
    out = _out_dir(args)
    man = Manifest(out, "solve", _config_echo(args), [data])
    if args.export_lp:
        export_lp(model, out / "model.lp")
    res = solve_branch_and_bound(model, args.time_limit, max_open_nodes=args.max_nodes)
    dims = ModelDims.of(model)
    rule_err = ""
    if res.has_solution:
        rule = extract_rule(model, res.x)
        rule_err = float(balanced_error(rule.predict(ds.X), ds))
        (out / "rule.txt").write_text(rule.to_text() or "FALSE\n", encoding="utf-8")
    obj = res.objective if res.has_solution else math.nan
    _write_rows(out / "result.csv", SOLVE_HEADER,
                [(fid.bp.value, res.status.value, obj, obj / ds.N, res.best_bound, rule_err,
                  res.node_count, dims.n_constraints, dims.n_binary, dims.n_continuous,
                  round(res.runtime, 6))])
    man.finish(status=res.status.value)
    return 0


def cmd_ireland(args) -> int:
    data = Path(args.data)
    ds = _load(args.data)
    K, M = _km(args, data)
    cfg = _ireland_cfg(args, ds, K, M)
    out = _out_dir(args)
    man = Manifest(out, "ireland", _config_echo(args), [data])
    res = run(ds, cfg)
    (out / "rule.txt").write_text(res.rule.to_text() or "FALSE\n", encoding="utf-8")
    write_pool(res.pool, out / "pool.txt")
    write_trace(res.trace, out / "trace.csv")
    _write_rows(out / "result.csv",
                ("objective", "normalized_objective", "n_clauses", "pool_size", "master_status",
                 "budget_limited", "runtime"),
                [(float(res.objective), float(res.normalized_objective), len(res.rule),
                  len(res.pool), res.master_status, int(res.budget_limited),
                  round(res.runtime, 6))])
    man.finish(budget_limited=res.budget_limited)
    return 0


def cmd_pareto(args) -> int:
    data = Path(args.data)
    ds = _load(args.data)
    K, M = _km(args, data)
    try:
        ccfg = CurveConfig(eps_gap=args.eps, K=K, per_solve_time_limit=args.per_solve_limit,
                           time_budget=args.budget)
    except ParetoError as e:
        raise CliError(str(e)) from None
    inputs = [data]
    pool = None
    if args.pool:
        pp = Path(args.pool)
        if not pp.is_file():
            raise CliError(f"pool file not found: {pp}")
        try:
            pool = read_pool(ds, pp)
        except Exception as e:  # malformed clause text or out-of-range feature
            raise CliError(f"{pp}: {e}") from None
        if len(pool) == 0:
            raise CliError(f"{pp}: the clause pool is empty")
        inputs.append(pp)
        icfg = None
    else:
        icfg = _ireland_cfg(args, ds, K, M)
    out = _out_dir(args)
    man = Manifest(out, "pareto", _config_echo(args), inputs)
    if pool is None:
        pool = run(ds, icfg).pool
        write_pool(pool, out / "pool.txt")
        if len(pool) == 0:
            man.finish(error="empty pool")
            raise CliError("IRELAND produced an empty clause pool")
    curve = trade_off_curve(pool, ds, ccfg)
    write_curve(curve, out / "curve.csv")
    man.finish(points=len(curve.points), complete=curve.complete)
    return 0


BENCH_HEADER = ("dataset", "method", "status", "normalized_objective", "runtime")


def _bench_one(method: str, ds: BinaryDataset, K: int, M: int, args):
    budget = args.budget
    if method == "ireland":
        cfg = IrelandConfig(upper_bounds=tuple(args.ub), K=K, M=M, N_s=args.ns,
                            per_solve_time_limit=min(args.per_solve_limit, budget),
                            global_time_budget=budget, seed=args.seed,
                            parallel=args.parallel or 1)
        res = run(ds, cfg)
        status = "budget-limited" if res.budget_limited else "completed"
        return status, float(res.normalized_objective), res.runtime
    fid = FormulationId.parse(method, relax_safe_vars=args.relax)
    t0 = time.perf_counter()
    model = build(fid, ds, K, M)
    res = solve_branch_and_bound(model, budget, max_open_nodes=args.max_nodes)
    if res.status in ABORTED or not res.has_solution:
        return res.status.value, 1.0, budget
    rule = extract_rule(model, res.x)
    obj = float(normalized(balanced_error(rule.predict(ds.X), ds), ds))
    return res.status.value, obj, time.perf_counter() - t0


def cmd_bench(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise CliError(f"corpus directory not found: {corpus}")
    files = sorted(f for f in corpus.glob("*.csv") if f.name != INDEX_NAME)
    if not files:
        raise CliError(f"no dataset CSV files in {corpus}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m != "ireland":
            try:
                BP(m.upper())
            except ValueError:
                raise CliError(f"unknown method {m!r}; expected BP1..BP6 or ireland") from None
    out = _out_dir(args)
    man = Manifest(out, "bench", _config_echo(args), files)
    rows = []
    for f in files:
        try:
            ds = load_csv(f)
            K, M = _km(args, f)
            M = min(M, ds.J)
        except Exception as e:  # isolate unreadable datasets
            for m in methods:
                rows.append((f.stem, m, f"error: {e}", 1.0, args.budget))
            continue
        for m in methods:
            try:
                status, obj, rt = _bench_one(m, ds, K, M, args)
            except Exception as e:
                log.warning("%s/%s failed: %s", f.stem, m, e)
                status, obj, rt = f"error: {type(e).__name__}", 1.0, args.budget
            rows.append((f.stem, m, status, obj, round(rt, 6)))
    _write_rows(out / "bench.csv", BENCH_HEADER, rows)
    man.finish(rows=len(rows))
    return 0


# -- parser -------------------------------------------------------------------

def _add_km(p):
    p.add_argument("--K", type=int, default=None,
                   help="max clauses (default: K_true from the sidecar, else 2)")
    p.add_argument("--M", type=int, default=None,
                   help="max features per clause (default: M_true from the sidecar, else 2)")


def _add_ireland(p):
    p.add_argument("--ub", type=_ub_list, default=list(DEFAULT_UB_FRACTIONS),
                   help="false-positive budgets: integers are counts, fractions scale the "
                        "number of controls (default: %(default)s)")
    p.add_argument("--tau", type=_ints, default=None,
                   help="tolerated false negatives per budget (default: 0 each)")
    p.add_argument("--ns", type=int, default=100, help="case subsample size (default: 100)")
    p.add_argument("--per-solve-limit", type=float, default=120.0,
                   help="seconds per master/sub problem solve (default: 120)")
    p.add_argument("--budget", type=float, default=14400.0,
                   help="total seconds (default: 14400)")
    p.add_argument("--parallel", type=int, default=0,
                   help="worker threads (default: one per budget)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnfmilp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file with option defaults")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")

    g = sub.add_parser("generate", help="synthetic datasets with a planted rule")
    common(g)
    g.add_argument("--N", type=_ints, default=[100], help="samples, comma list (default: 100)")
    g.add_argument("--J", type=_ints, default=[10], help="features, comma list (default: 10)")
    g.add_argument("--K-true", type=_ints, default=[2], help="planted clauses (default: 2)")
    g.add_argument("--M-true", type=_ints, default=[2], help="planted clause size (default: 2)")
    g.add_argument("--noise", type=_floats, default=[0.0],
                   help="label flip rates, comma list (default: 0)")
    g.add_argument("--density", type=float, default=0.5, help="P(bit = 1) (default: 0.5)")
    g.add_argument("--reps", type=int, default=1, help="datasets per grid cell (default: 1)")
    g.add_argument("--max-attempts", type=int, default=25,
                   help="redraws before a setting is dropped (default: 25)")
    g.add_argument("--name", default="dataset", help="file stem for a single dataset")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one of BP1..BP6 exactly")
    common(s)
    s.add_argument("--formulation", default="BP1", help="BP1..BP6 (default: BP1)")
    s.add_argument("--data", required=True)
    _add_km(s)
    s.add_argument("--time-limit", type=float, default=300.0, help="seconds (default: 300)")
    s.add_argument("--max-nodes", type=int, default=200_000,
                   help="open-node cap before a memory abort (default: 200000)")
    s.add_argument("--relax", action="store_true", help="relax the provably safe binaries")
    s.add_argument("--combined-bp4", action="store_true", help="BP4 with the merged OR/AND row")
    s.add_argument("--export-lp", action="store_true", help="also write model.lp")
    s.set_defaults(func=cmd_solve)

    i = sub.add_parser("ireland", help="run the IRELAND heuristic")
    common(i)
    i.add_argument("--data", required=True)
    _add_km(i)
    _add_ireland(i)
    i.set_defaults(func=cmd_ireland)

    p = sub.add_parser("pareto", help="sensitivity/specificity trade-off curve")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--pool", help="clause pool file (default: run IRELAND first)")
    p.add_argument("--eps", type=float, default=0.02, help="gap threshold (default: 0.02)")
    _add_km(p)
    _add_ireland(p)
    p.set_defaults(func=cmd_pareto)

    b = sub.add_parser("bench", help="compare methods over a dataset directory")
    common(b)
    b.add_argument("--corpus", required=True)
    b.add_argument("--methods", default="BP1,ireland", help="comma list (default: BP1,ireland)")
    _add_km(b)
    _add_ireland(b)
    b.add_argument("--max-nodes", type=int, default=200_000)
    b.add_argument("--relax", action="store_true")
    b.set_defaults(func=cmd_bench)
    return ap


def _read_config(path: str) -> Dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    vals = {}
    for n, ln in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        s = ln.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise CliError(f"{p}:{n}: expected key=value")
        k, v = s.split("=", 1)
        vals[k.strip().replace("-", "_")] = v.strip()
    return vals


def _config_path(argv: List[str]) -> Optional[str]:
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_config(ap: argparse.ArgumentParser, argv: List[str]) -> argparse.Namespace:
    """Parse ``argv``, taking missing options from the ``--config`` file if one is given."""
    path = _config_path(argv)
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub.choices), None)
    if path is None or command is None:
        return ap.parse_args(argv)
    conf = _read_config(path)
    sp = sub.choices[command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for k, v in conf.items():
        act = actions.get(k)
        if act is None or k in ("config", "help"):
            raise CliError(f"unknown config key {k!r} for '{command}'")
        if isinstance(act, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        elif act.type is not None:
            try:
                defaults[k] = act.type(v)
            except (argparse.ArgumentTypeError, ValueError) as e:
                raise CliError(f"config key {k!r}: {e}") from None
        else:
            defaults[k] = v
        act.required = False
    sp.set_defaults(**defaults)
    return ap.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(ap, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
