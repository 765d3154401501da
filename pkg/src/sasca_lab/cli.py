"""Command-line front end.

Each subcommand writes ``result.json`` and/or ``table.csv`` plus
``manifest.json`` under ``<outdir>/<subcommand>-<seed>/``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .field import FieldParams, mlkem, toy
from .graph import build_graph, treewidth_upper_bound, validate_graph
from .harness import (
    CSV_COLUMNS,
    NO_L1_VARIANTS,
    FULL_GRID,
    ExperimentConfig,
    ablate,
    genie_summary,
    no_l1_campaign,
    sweep,
    trajectory_experiment,
)
from .io import RunWriter, csv_text, dumps
from .leakage import estimate_snr, generate_class_traces, generate_traces, tvla_ttest
from .margin import (
    MiBudgetSpec,
    composite_table,
    mi_budget,
    mixed_estimate,
    scenario_row,
    sensitivity_rows,
    waterfall,
)
from .selftest import run_selftest
from .shuffle import ShuffleSpec, enumeration_cost, ordering_entropy, overhead_curve, rp_entropy

DESK_TRIAL_CAP = 30  # full-graph trials allowed without --long-running


class InvariantError(RuntimeError):
    pass


def _layers(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("--seed", type=int, default=None, help="base seed (default 42)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    common.add_argument("--outdir", default="runs", help="output root directory")
    common.add_argument("--long-running", action="store_true", help="allow full-scale trial budgets")
    common.add_argument("--format", choices=("json", "csv", "both"), default="both")

    p = argparse.ArgumentParser(prog="sasca-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("selftest", parents=[common], help="round-trip and oracle checks")

    s = sub.add_parser("graph", parents=[common], help="build and validate the INTT factor graph")
    s.add_argument("--instance", choices=("ml-kem", "k8"), default="ml-kem")
    s.add_argument("--no-treewidth", action="store_true")

    for name, helptext in (("sweep", "SNRxN sweep"), ("trajectory", "per-iteration convergence")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--snr-grid", type=_floats)
        s.add_argument("--trials", type=int)
        s.add_argument("--layers", type=_layers)

    s = sub.add_parser("ablate", parents=[common], help="observed-layer subset ablation")
    s.add_argument("--subsets", default="1,3,5,7;1,2,3,4", help="semicolon-separated layer lists")
    s.add_argument("--snr", type=float, default=5000.0)
    s.add_argument("--trials", type=int)

    s = sub.add_parser("no-l1", parents=[common], help="campaign over layer-1-free topologies")
    s.add_argument("--variants", help="semicolon-separated layer lists")
    s.add_argument("--snr", type=float, default=50_000.0)
    s.add_argument("--trials", type=int)

    s = sub.add_parser("shuffle", parents=[common], help="shuffling entropy, cost and CPA overhead")
    s.add_argument("--bias-grid", type=_floats, default=(0.0, 0.1, 0.2, 0.3, 0.5))
    s.add_argument("--S", type=int, default=64)
    s.add_argument("--layers", type=int, default=7)

    s = sub.add_parser("tvla", parents=[common], help="synthetic fixed-vs-random TVLA")
    s.add_argument("--model", choices=("HW", "HD"), default="HD")
    s.add_argument("--snr", type=float, default=0.0027)
    s.add_argument("--n-traces", type=int, default=1000)

    s = sub.add_parser("mi-budget", parents=[common], help="MI trace budget")
    s.add_argument("--no-halving", action="store_true")
    s.add_argument("--snrs", type=_floats, help="group SNRs")

    s = sub.add_parser("margin", parents=[common], help="scenario margins and composite table")
    s.add_argument("--scenario", choices=("A", "B", "C", "mixed", "all"), default="all")
    s.add_argument("--alg", choices=("ml-dsa", "ml-kem"), default="ml-dsa")

    sub.add_parser("waterfall", parents=[common], help="margin waterfall steps")
    return p


def _load_config(args) -> dict:
    if not args.config:
        return {}
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def _experiment_config(args, cfg: dict) -> ExperimentConfig:
    c = ExperimentConfig.from_dict(cfg)
    if args.seed is not None:
        c = replace(c, base_seed=args.seed)
    if getattr(args, "trials", None):
        c = replace(c, trials=args.trials)
    if getattr(args, "snr_grid", None):
        c = replace(c, snr_grid=args.snr_grid)
    elif args.long_running and args.command == "sweep" and "snr_grid" not in cfg:
        c = replace(c, snr_grid=FULL_GRID, trials=cfg.get("trials", 15))
    if getattr(args, "layers", None) and args.command in ("sweep", "trajectory"):
        c = replace(c, observed_layers=args.layers)
    return c


def _guard(args, c: ExperimentConfig, n_trials: int) -> None:
    if args.long_running or c.q * c.n < 3329 * 256:
        return
    if n_trials > DESK_TRIAL_CAP:
        raise ValueError(f"{n_trials} full-graph trials exceeds the desk cap of {DESK_TRIAL_CAP}; "
                         "pass --long-running")


def _sweep_table(rows) -> list[dict]:
    out = []
    for r in rows:
        d = r.to_dict(with_trials=False)
        d["wilson_lo"], d["wilson_hi"] = d.pop("wilson_ci")
        out.append(d)
    return out


def cmd_selftest(args, cfg):
    res = run_selftest(args.seed or 0)
    if not res["passed"]:
        raise InvariantError(f"selftest failed: {[c['name'] for c in res['checks'] if not c['passed']]}")
    return res, res["checks"], None


def cmd_graph(args, cfg):
    params = mlkem() if args.instance == "ml-kem" else _k8()
    g = build_graph(params)
    rng = np.random.default_rng(args.seed or 42)
    sat, total = validate_graph(g, rng.integers(0, params.q, params.n))
    if sat != total:
        raise InvariantError(f"only {sat}/{total} butterfly constraints satisfied")
    res = {
        "instance": params.describe(),
        "n_variables": g.n_variables,
        "n_factors": g.n_factors,
        "constraints_satisfied": [sat, total],
        "treewidth_upper_bound": None if args.no_treewidth else treewidth_upper_bound(g),
        "rsi_enumeration": enumeration_cost(64, params.K, True),
        "graph": json.loads(g.to_json()),
    }
    row = {k: res[k] for k in ("n_variables", "n_factors", "treewidth_upper_bound")}
    return res, [row], None


def _k8() -> FieldParams:
    # eight layers need an element of order 512; q = 7681 has one
    return toy(7681, 256, 8)


def cmd_sweep(args, cfg):
    c = _experiment_config(args, cfg)
    _guard(args, c, c.trials * len(c.snr_grid))
    rows = sweep(c, args.jobs)
    table = _sweep_table(rows)
    res = {"config": c.to_dict(), "rows": [r.to_dict() for r in rows], "genie": genie_summary(c)}
    return res, table, CSV_COLUMNS


def cmd_trajectory(args, cfg):
    c = _experiment_config(args, cfg)
    if "snr_grid" not in cfg and not getattr(args, "snr_grid", None):
        c = replace(c, snr_grid=(3000.0, 10000.0))
    if "trials" not in cfg and not args.trials:
        c = replace(c, trials=3)
    c = replace(c, early_stop=False)
    _guard(args, c, c.trials * len(c.snr_grid))
    rows = trajectory_experiment(c, args.jobs)
    return {"config": c.to_dict(), "rows": rows}, rows, ["snr_n", "iteration", "entropy_bits", "mi_bits"]


def _subsets(text: str) -> list[tuple]:
    return [_layers(part) for part in text.split(";")]


def _ablation_table(rows) -> list[dict]:
    out = []
    for r in rows:
        d = {k: v for k, v in r.items() if k not in ("trials", "nc", "wilson_ci")}
        d["layers"] = "+".join(str(x) for x in r["layers"])
        d["wilson_lo"], d["wilson_hi"] = r["wilson_ci"]
        d.update({k: r["nc"][k] for k in ("nc1", "nc2", "nc3", "nc4")})
        out.append(d)
    return out


def cmd_ablate(args, cfg):
    c = _experiment_config(args, cfg)
    subsets = _subsets(args.subsets)
    _guard(args, c, c.trials * len(subsets))
    rows = ablate(c, subsets, args.snr, args.jobs)
    return {"config": c.to_dict(), "snr_n": args.snr, "rows": rows}, _ablation_table(rows), None


def cmd_no_l1(args, cfg):
    c = _experiment_config(args, cfg)
    variants = _subsets(args.variants) if args.variants else list(NO_L1_VARIANTS)
    _guard(args, c, c.trials * len(variants))
    rep = no_l1_campaign(c, variants, args.snr, args.jobs)
    return {"config": c.to_dict(), **rep}, _ablation_table(rep["variants"]), None


def cmd_shuffle(args, cfg):
    curve = overhead_curve(args.bias_grid, S=args.S)
    res = {
        "rsi_orderings": args.S,
        "rsi_entropy_bits": ordering_entropy(ShuffleSpec(S=args.S, chunk_starts=args.S // 4)),
        "rp_entropy_bits": rp_entropy(args.S),
        "enumeration": enumeration_cost(args.S, args.layers, True),
        "enumeration_unrounded": enumeration_cost(args.S, args.layers, False),
        "overhead_curve": curve,
    }
    return res, curve, None


def cmd_tvla(args, cfg):
    params = mlkem()
    rng = np.random.default_rng(args.seed if args.seed is not None else 42)
    fixed_in = rng.integers(0, params.q, params.n)
    fixed = generate_traces(params, args.model, args.snr, args.n_traces, fixed_in, rng)
    rand = generate_traces(params, args.model, args.snr, args.n_traces, None, rng,
                           noise_sigma=fixed.meta["noise_sigma"])
    rep = tvla_ttest(fixed, rand)
    classes = generate_class_traces(params, args.model, args.snr, 64, max(2, args.n_traces // 64), rng)
    snr = estimate_snr(classes)
    res = {**rep.to_dict(), "model": args.model, "target_snr": args.snr,
           "snr_mean": float(snr.mean()), "snr_peak": float(snr.max())}
    rows = [{"sample": i, "t": float(t)} for i, t in enumerate(rep.t)]
    return res, rows, None


def cmd_mi_budget(args, cfg):
    spec = MiBudgetSpec(per_coeff_halving=not args.no_halving)
    if args.snrs:
        spec = MiBudgetSpec(group_snrs={f"group_{i}": s for i, s in enumerate(args.snrs)},
                            per_coeff_halving=not args.no_halving)
    res = mi_budget(spec)
    row = {k: v for k, v in res.items() if k != "mi_per_group"}
    return res, [row], None


def cmd_margin(args, cfg):
    rows = []
    if args.scenario in ("A", "B", "C"):
        rows.append(scenario_row(args.scenario, args.alg))
    elif args.scenario == "mixed":
        rows.append({"scenario": "mixed", "alg": "ml-dsa", **mixed_estimate()})
    else:
        for alg in ("ml-dsa", "ml-kem"):
            for name in "ABC":
                rows.append(scenario_row(name, alg))
        rows.append({"scenario": "mixed", "alg": "ml-dsa", **mixed_estimate()})
    res = {
        "scenarios": rows,
        "composite": [composite_table("conservative"), composite_table("moderate")],
        "sensitivity": sensitivity_rows(),
    }
    for r in rows:
        print(f"{r['scenario']} ({r['alg']}): {r['bits']:.1f} bits")
    return res, rows, ["scenario", "alg", "bits", "rounded", "band", "units"]


def cmd_waterfall(args, cfg):
    steps = waterfall()
    return {"steps": steps}, steps, None


COMMANDS = {
    "selftest": cmd_selftest,
    "graph": cmd_graph,
    "sweep": cmd_sweep,
    "trajectory": cmd_trajectory,
    "ablate": cmd_ablate,
    "no-l1": cmd_no_l1,
    "shuffle": cmd_shuffle,
    "tvla": cmd_tvla,
    "mi-budget": cmd_mi_budget,
    "margin": cmd_margin,
    "waterfall": cmd_waterfall,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    seed = args.seed if args.seed is not None else 42
    try:
        cfg = _load_config(args)
        writer = RunWriter(args.outdir, args.command, seed, argv, cfg, __version__)
        result, table, columns = COMMANDS[args.command](args, cfg)
        if args.format in ("json", "both"):
            writer.write("result.json", dumps(result))
        if args.format in ("csv", "both") and table:
            writer.write("table.csv", csv_text(table, columns))
        writer.finish()
    except InvariantError as exc:
        print(json.dumps({"error": "invariant_violation", "detail": str(exc)}), file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 2
    print(str(writer.root))
    return 0


if __name__ == "__main__":
    sys.exit(main())
