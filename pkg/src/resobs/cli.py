"""Batch command-line interface.

Three subcommands share one scenario file:

    resobs design   --scenario s.toml [--out DIR] [--gamma G] [--gamma-bar G]
    resobs simulate --scenario s.toml [--out DIR] [--seed S] ...
    resobs verify   --scenario s.toml [--out DIR] ...

``design`` writes the design report (JSON) and the gain trajectories (npz),
``simulate`` additionally writes the closed-loop trace as CSV, ``verify``
runs the full pipeline plus the detector-error reference and writes the
verification report (JSON), exiting 0 only when every check passes.

Exit codes: 0 ok (and, for verify, all checks passed), 1 usage, parse or
validation error or failed verification checks, 2 design infeasible at the
requested attenuation levels, 3 simulation divergence.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .designer import TimeGrid, design, find_min_gamma
from .errors import (
    DivergenceError,
    InfeasibilityError,
    ResobsError,
    ScenarioError,
)
from .metrics import build_report
from .scenario import (
    build_attacks,
    build_disturbances,
    build_system,
    load_scenario,
)
from .simulator import simulate, simulate_error_system_oracle

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3


def _design_from_scenario(sc, gamma=None, gamma_bar=None):
    model, topo, shapers = build_system(sc)
    grid = TimeGrid.for_horizon(sc.sim["T"], sc.sim["h"])
    g = gamma if gamma is not None else sc.design["gamma"]
    gb = gamma_bar if gamma_bar is not None else sc.design["gamma_bar"]
    kwargs = dict(
        P=sc.design.get("P"),
        margin=sc.design["margin"],
        X=[nd.get("X") for nd in sc.nodes]
        if any("X" in nd for nd in sc.nodes) else None,
        X_check=[nd.get("X_check") for nd in sc.nodes]
        if any("X_check" in nd for nd in sc.nodes) else None,
        X_bar=[nd.get("X_bar") for nd in sc.nodes]
        if any("X_bar" in nd for nd in sc.nodes) else None,
        bound_cap_factor=sc.design["bound_cap_factor"],
    )
    for key in ("X", "X_check", "X_bar"):
        if kwargs[key] is not None:
            dims = {
                "X": topo.n, "X_bar": topo.n,
            }
            fill = []
            for i, val in enumerate(kwargs[key]):
                if val is None:
                    dim = dims.get(key, model.n_f(i))
                    val = np.eye(dim)
                fill.append(np.asarray(val, dtype=float))
            kwargs[key] = fill
    if sc.design.get("search_gamma"):
        g = find_min_gamma(
            model, topo, shapers, grid, stage="detector", gamma0=g,
            margin=sc.design["margin"], X=kwargs["X"],
            X_check=kwargs["X_check"],
            bound_cap_factor=sc.design["bound_cap_factor"],
        )
    if sc.design.get("search_gamma_bar"):
        gb = find_min_gamma(
            model, topo, shapers, grid, stage="observer", gamma0=gb,
            P=sc.design.get("P"), margin=sc.design["margin"],
            X_bar=kwargs["X_bar"],
            bound_cap_factor=sc.design["bound_cap_factor"],
        )
    art = design(model, topo, shapers, grid, g, gb, **kwargs)
    return model, topo, shapers, art


def _save_artifacts(art, out_dir):
    payload = {
        "grid_h": art.grid.h,
        "grid_steps": art.grid.steps,
        "gamma": art.gamma,
        "gamma_bar": art.gamma_bar,
        "P": art.P,
        "r": art.r,
        "rbar": art.rbar,
    }
    for i, nd in enumerate(art.nodes):
        payload[f"node{i}_joint_gain"] = nd.det.stack
        payload[f"node{i}_observer_gain"] = nd.obs.stack
        payload[f"node{i}_innovation_gain"] = nd.bar.stack
        payload[f"node{i}_col_offsets"] = nd.det.col_offsets
        payload[f"node{i}_lam_det"] = nd.lam_det
        payload[f"node{i}_lam_obs"] = nd.lam_obs
    np.savez_compressed(out_dir / "design_artifacts.npz", **payload)


def run_pipeline(sc, command, out_dir, gamma=None, gamma_bar=None, seed=None):
    """Run one subcommand on a loaded scenario; returns the exit code."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model, topo, shapers, art = _design_from_scenario(sc, gamma, gamma_bar)
    report = art.report_dict()
    with open(out_dir / "design_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    if command == "design":
        _save_artifacts(art, out_dir)
        print(f"design ok: gamma={art.gamma:g} gamma_bar={art.gamma_bar:g} "
              f"r={art.r:g} rbar={art.rbar:g}")
        print(f"wrote {out_dir / 'design_report.json'}")
        return EXIT_OK

    dist = build_disturbances(sc, model, topo, seed=seed)
    attacks = build_attacks(sc)
    xi = sc.sim.get("xi")
    T, h = sc.sim["T"], sc.sim["h"]
    trace = simulate(model, topo, art, dist, attacks, T, h, xi=xi)
    if command == "simulate":
        trace.to_csv(out_dir / "trace.csv")
        print(f"simulated {len(trace.t)} points over [0, {T}]")
        print(f"wrote {out_dir / 'trace.csv'}")
        return EXIT_OK

    # verify
    oracle = simulate_error_system_oracle(
        model, topo, art, dist, attacks, T, h, xi=xi,
        refine=sc.sim["oracle_refine"],
    )
    calib = trace
    if attacks:
        calib = simulate(model, topo, art, dist, [], T, h, xi=xi)
    decay_required = not attacks and not sc.disturbances
    rep = build_report(
        trace, oracle, art, topo, attacks=attacks,
        calibration_trace=calib, decay_required=decay_required,
    )
    with open(out_dir / "verify_report.json", "w") as fh:
        json.dump(rep, fh, indent=2)
    ok = rep["all_checks_passed"]
    res = rep["resilience_bound"]
    print(f"resilience bound: lhs={res['lhs']:.6g} rhs={res['rhs']:.6g} "
          f"{'ok' if res['satisfied'] else 'VIOLATED'}")
    for nd in rep["nodes"]:
        rate = nd["decay"]["rate"]
        rate_str = "reached zero" if rate is None else f"{rate:.4g}"
        print(f"node {nd['node']}: tracks={nd['tracking']['tracks']} "
              f"local_bound={'ok' if nd['local_bound']['satisfied'] else 'VIOLATED'} "
              f"decay_rate={rate_str}")
    print(f"wrote {out_dir / 'verify_report.json'}")
    print("verification " + ("PASSED" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_USAGE


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="resobs",
        description="Design, simulate and verify resilient distributed "
                    "observer networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("design", "simulate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--gamma", type=float, default=None,
                       help="override the detector attenuation level")
        p.add_argument("--gamma-bar", type=float, default=None,
                       help="override the observer attenuation level")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")

    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else 0

    try:
        sc = load_scenario(args.scenario)
        out_dir = args.out or sc.output.get("dir", "out")
        return run_pipeline(
            sc, args.command, out_dir,
            gamma=args.gamma, gamma_bar=args.gamma_bar, seed=args.seed,
        )
    except ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibilityError as err:
        print(f"design infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DivergenceError as err:
        print(f"simulation diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except ResobsError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
