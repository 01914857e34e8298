"""Command-line front end: ``ssrlab run|preset|power|critvals|conddist``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from scipy import stats

from .config import parse_config
from .conddist import CondParams, chisq_2n2_sample, oracle_sample_v2star, sample_v2star_mixture
from .critvals import MC_SEED, CritKey, CritTable, default_table
from .errors import ConfigError, DomainError
from .finaltests import Sidedness, TestKind
from .mc import ScenarioConfig, ks_bound, power_curve, run_scenario_multi
from .presets import POWER_GRID, POWER_PANELS, PRESETS, get_preset, power_panel_config
from .statdist import RngStream

__all__ = ["main", "RESULT_COLUMNS", "result_row", "format_rows"]

RESULT_COLUMNS = (
    "scenario_id", "design", "n1", "rule", "final_test", "alpha", "side", "mu_true", "reps", "seed",
    "reject_rate", "se", "p_stage2", "reject_given_stage2", "reject_given_stage1_only", "mean_n2",
    "degenerate_count",
)

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 2, 3


def _num(v):
    """Round floats to 10 significant digits so CSV and JSON carry the same value."""
    if isinstance(v, float):
        return None if math.isnan(v) else float(f"{v:.10g}")
    return v


def result_row(cfg: ScenarioConfig, kind: TestKind, est, scenario_id=None) -> dict:
    row = {
        "scenario_id": scenario_id or cfg.scenario_id,
        "design": cfg.design.value,
        "n1": cfg.n1,
        "rule": cfg.rule_name(),
        "final_test": kind.value,
        "alpha": float(cfg.alpha),
        "side": cfg.side.value,
        "mu_true": float(cfg.mu_true),
        "reps": est.reps,
        "seed": cfg.seed,
        "reject_rate": est.reject_rate,
        "se": est.se,
        "p_stage2": est.p_stage2,
        "reject_given_stage2": est.reject_given_stage2,
        "reject_given_stage1_only": est.reject_given_stage1_only,
        "mean_n2": est.mean_n2,
        "degenerate_count": est.degenerate_count,
    }
    return {k: _num(v) for k, v in row.items()}


def format_rows(rows, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow(["nan" if r[c] is None else (f"{r[c]:.10g}" if isinstance(r[c], float) else r[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _override(cfg: ScenarioConfig, args) -> ScenarioConfig:
    kw = {}
    if args.reps is not None:
        kw["reps"] = args.reps
    if args.seed is not None:
        kw["seed"] = args.seed
    return replace(cfg, **kw) if kw else cfg


def _run_config(cfg, tests, args):
    est = run_scenario_multi(cfg, tests, workers=args.workers)
    return [result_row(cfg, k, est[k]) for k in tests], est


def cmd_run(args) -> int:
    cfg = _override(parse_config(args.config), args)
    rows, _ = _run_config(cfg, (cfg.final_test,), args)
    _emit(format_rows(rows, args.format), args.out)
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.list:
        for p in PRESETS.values():
            print(f"{p.id}\t{p.description}")
        return EXIT_OK
    if not args.id:
        raise ConfigError("preset: give a preset id (or --list)")
    try:
        preset = get_preset(args.id)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), field="id") from None
    cfg = _override(preset.config, args)
    tests = preset.tests or (cfg.final_test,)
    rows, est = _run_config(cfg, tests, args)
    _emit(format_rows(rows, args.format), args.out)
    if not args.check:
        return EXIT_OK
    ok_all = True
    for ok, line in preset.evaluate(est):
        ok_all &= ok
        print(f"{'PASS' if ok else 'FAIL'} {preset.id}: {line}", file=sys.stderr)
    return EXIT_OK if ok_all else EXIT_CHECK


def _grid(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"--grid: cannot parse {text!r}", field="grid") from None


def cmd_power(args) -> int:
    grid = _grid(args.grid) if args.grid else POWER_GRID
    tests = tuple(TestKind(t) for t in args.tests.split(","))
    if args.config:
        bases = [_override(parse_config(args.config), args)]
    else:
        n1s = [int(v) for v in args.n1.split(",")] if args.n1 else POWER_PANELS
        bases = [_override(power_panel_config(n1, grid[0], mu=args.mu), args) for n1 in n1s]
    rows = []
    for base in bases:
        for delta, kind, est in power_curve(base, grid, tests, workers=args.workers):
            c = replace(base, rule=replace(base.rule, delta_assumed=delta))
            rows.append(result_row(c, kind, est, scenario_id=f"{base.scenario_id}-d{delta:g}"))
    _emit(format_rows(rows, args.format), args.out)
    return EXIT_OK


def _ints(text, name):
    try:
        out = []
        for part in text.split(","):
            if "-" in part:
                a, b = part.split("-")
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
        return out
    except ValueError:
        raise ConfigError(f"--{name}: cannot parse {text!r}", field=name) from None


def cmd_critvals(args) -> int:
    side = Sidedness(args.side)
    if args.method == "mc" and args.draws == 1_000_000 and args.table_seed == MC_SEED:
        table = default_table()
    else:
        table = CritTable(args.method, draws=args.draws, seed=args.table_seed)
    for n1 in _ints(args.n1, "n1"):
        n2s = _ints(args.n2, "n2")
        for n2 in n2s:
            CritKey(n1, n2, args.alpha, side)  # validates
        table.lookup_many(n1, n2s, args.alpha, side)
    if table.path is not None:
        table.save()
    keys = {(n1, n2) for n1 in _ints(args.n1, "n1") for n2 in _ints(args.n2, "n2")}
    lines = [
        ln for ln in table.format_records(only_current=True).splitlines()
        if ln and (int(ln.split(",")[0]), int(ln.split(",")[1])) in keys
        and float(ln.split(",")[2]) == args.alpha and ln.split(",")[3] == side.value
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        table.save(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_conddist(args) -> int:
    """KS distances of the exact mixture against the direct oracle and against chi2(2 n2)."""
    n1s = _ints(args.n1, "n1")
    n2s = _ints(args.n2, "n2")
    d1s = _grid(args.d1)
    deltas = _grid(args.delta)
    seed = args.seed if args.seed is not None else 7
    m = args.draws
    bound = ks_bound(m, m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n1", "n2", "D1", "Delta", "draws", "ks_mixture_vs_oracle", "ks_mixture_vs_chisq2n2", "ks_bound_1pct"])
    stream = 0
    for n1 in n1s:
        for n2 in n2s:
            for d1 in d1s:
                for dl in deltas:
                    p = CondParams(n1, n2, d1, dl)
                    mix = sample_v2star_mixture(p, RngStream(seed, stream), m)
                    orc = oracle_sample_v2star(p, RngStream(seed, stream + 1), m)
                    chi = chisq_2n2_sample(p, RngStream(seed, stream + 2), m)
                    stream += 3
                    k1 = stats.ks_2samp(mix, orc).statistic
                    k2 = stats.ks_2samp(mix, chi).statistic
                    w.writerow([n1, n2, f"{d1:.10g}", f"{dl:.10g}", m, f"{k1:.10g}", f"{k2:.10g}", f"{bound:.10g}"])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _common(sp, seed=True):
    sp.add_argument("--reps", type=int, help="replicates (default from scenario)")
    if seed:
        sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--workers", type=int, default=1, help="worker processes; results do not depend on it")
    sp.add_argument("--out", help="write output here instead of stdout")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssrlab", description="Two-stage designs with blinded sample size re-estimation.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="simulate a scenario file")
    sp.add_argument("config")
    _common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("preset", help="simulate a named published scenario")
    sp.add_argument("id", nargs="?")
    sp.add_argument("--list", action="store_true")
    sp.add_argument("--check", action="store_true", help="exit 3 if a published figure is missed")
    _common(sp)
    sp.set_defaults(func=cmd_preset)

    sp = sub.add_parser("power", help="power over a grid of assumed effects")
    sp.add_argument("--config", help="scenario file with a kf rule (default: built-in panels)")
    sp.add_argument("--grid", help="comma-separated assumed effects")
    sp.add_argument("--n1", help="comma-separated stage-1 sizes for the built-in panels")
    sp.add_argument("--mu", type=float, default=0.2, help="true effect for the built-in panels")
    sp.add_argument("--tests", default="unmodified_t,tcomb,fisher")
    _common(sp)
    sp.set_defaults(func=cmd_power)

    sp = sub.add_parser("critvals", help="critical values of the weighted t combination")
    sp.add_argument("--n1", required=True, help="size or list/range, e.g. 5 or 2-10")
    sp.add_argument("--n2", required=True)
    sp.add_argument("--alpha", type=float, default=0.025)
    sp.add_argument("--side", choices=[s.value for s in Sidedness], default="one_sided")
    sp.add_argument("--method", choices=("mc", "quadrature"), default="mc")
    sp.add_argument("--draws", type=int, default=1_000_000)
    sp.add_argument("--table-seed", type=int, default=MC_SEED)
    sp.add_argument("--out", help="write the full table file here")
    sp.set_defaults(func=cmd_critvals)

    sp = sub.add_parser("conddist", help="KS report: exact mixture vs oracle and vs chi2(2 n2)")
    sp.add_argument("--n1", default="2,5,10")
    sp.add_argument("--n2", default="2,5,10")
    sp.add_argument("--d1", default="-2,0,2")
    sp.add_argument("--delta", default="0,0.5")
    sp.add_argument("--draws", type=int, default=100_000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_conddist)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        where = f" (line {exc.line})" if getattr(exc, "line", None) else ""
        print(f"ssrlab: error{where}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
