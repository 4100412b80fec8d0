"""Command-line front end.

Commands ``simulate``, ``estimate``, ``landscape``, ``analyze`` and
``example`` read a scenario file (``--config``) or fall back to the
built-in example.  Exit status is 2 for configuration errors and 3 when
an integration overflows.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import default_config, dump_config, load_config
from .errors import ConfigError, NonFinite
from .example import run_batch, run_expanding, run_landscape, simulate_scenario
from .tables import write_csv

EXIT_CONFIG = 2
EXIT_NONFINITE = 3


def _fmt(v):
    return format(float(v), ".10g")


def _result_line(res):
    theta = ",".join(_fmt(v) for v in res.theta_hat)
    return f"theta_hat={theta} cost={_fmt(res.cost)} evals={res.evals}"


def _prepare(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.mode is not None:
        cfg.set("estimation", "mode", args.mode)
    if args.out is not None:
        cfg.set("output", "dir", args.out)
    if args.seed is not None:
        cfg.set("estimation", "seed", int(args.seed))
    if args.noise_std is not None:
        if args.noise_std < 0:
            raise ConfigError("--noise-std: must be nonnegative")
        cfg.set("output", "noise_std", float(args.noise_std))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.toml")
    return cfg, out


def _columns(times, values, prefix):
    values = np.asarray(values).reshape(len(times), -1)
    head = ["t"] + [f"{prefix}{j + 1}" for j in range(values.shape[1])]
    return head, [times] + [values[:, j] for j in range(values.shape[1])]


def cmd_simulate(cfg, out):
    data = simulate_scenario(cfg.scenario())
    t = data.times
    for name, vals, pre in (("trajectory.csv", data.trajectory.states, "x"),
                            ("output.csv", data.y.values, "y"),
                            ("zeta.csv", data.extension.zeta.values, "zeta")):
        head, cols = _columns(t, vals, pre)
        write_csv(out / name, head, cols)
    print(f"samples={t.size} theta=" + ",".join(_fmt(v) for v in data.theta))
    return data


def _landscape(cfg, out, data=None):
    ls = cfg["landscape"]
    res = run_landscape(cfg.scenario(), t_prime=ls["t_prime"], grid=int(ls["grid"]),
                        span=float(ls["span"]), out=out, data=data)
    inst = ",".join(_fmt(v) for v in res.t_prime)
    print(f"landscape t_prime={inst} basins={res.n_basins}")
    return res


def cmd_estimate(cfg, out):
    if cfg.mode == "landscape":
        return _landscape(cfg, out)
    run = (run_expanding if cfg.mode == "expanding" else run_batch)(cfg.scenario(), out=out)
    print(_result_line(run.result))
    return run


def cmd_landscape(cfg, out):
    return _landscape(cfg, out)


def cmd_analyze(cfg, out):
    a = cfg["analysis"]
    scen = cfg.scenario()
    model, design, box = scen.plant(), scen.design(), scen.box
    vals = np.linspace(float(a["sweep_lower"]), float(a["sweep_upper"]), int(a["sweep_points"]))
    sweep = analysis.rank_sweep(model, a["base"], int(a["sweep_axis"]), vals, float(a["time"]),
                                int(a["order"]), analysis.ObsConfig(
                                    integrator=cfg.integrator()))
    rep = sweep.report
    head = [f"x{j + 1}" for j in range(rep.n)] + ["rank", "sigma_min", "sigma_max", "flagged"]
    rank = np.where(sweep.flagged, np.minimum(rep.ranks, rep.n - 1), rep.ranks)
    write_csv(out / "obs_rank.csv", head,
              [rep.states[:, j] for j in range(rep.n)]
              + [rank, rep.singular_values[:, -1], rep.singular_values[:, 0], sweep.flagged])
    ev = scen.make_evaluator()
    gram = analysis.gramian_W_phi(model, design, a["gramian_x"], float(a["gramian_T"]),
                                  cfg.integrator(), evaluator=ev,
                                  t_start=float(a["gramian_start"]))
    gram.to_csv(out / "gramian.csv")
    inj = analysis.injectivity_sweep(ev, box, a["t_grid"], grid=int(a["injectivity_grid"]))
    inj.to_csv(out / "injectivity.csv")
    roots = ",".join(_fmt(r) for r in sweep.roots)
    print(f"rank_loss_roots={roots} gramian={gram.verdict} t_star={_fmt(inj.t_star)}")
    return sweep, gram, inj


def cmd_example(cfg, out):
    """Landscape at one and two instants, batch and expanding runs."""
    scen = cfg.scenario()
    data = simulate_scenario(scen)
    ls = cfg["landscape"]
    for sub, tp in (("landscape", ls["t_prime"][:1]), ("landscape_pooled", [0.2, 0.4])):
        res = run_landscape(scen, t_prime=tp, grid=int(ls["grid"]), span=float(ls["span"]),
                            out=out / sub, data=data)
        print(f"landscape t_prime={','.join(_fmt(v) for v in tp)} basins={res.n_basins}")
    for sub, fn in (("batch", run_batch), ("expanding", run_expanding)):
        run = fn(scen, out=out / sub, data=data)
        tt = np.max(np.abs(run.theta_tilde))
        print(f"{sub}: {_result_line(run.result)} theta_tilde_max={_fmt(tt)}")


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "landscape": cmd_landscape,
            "analyze": cmd_analyze, "example": cmd_example}


def build_parser():
    ap = argparse.ArgumentParser(prog="pebo", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="scenario file (TOML); built-in example when omitted")
    ap.add_argument("--mode", choices=("batch", "expanding", "landscape"))
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="seed for noise and jitter")
    ap.add_argument("--noise-std", type=float, dest="noise_std",
                    help="output noise standard deviation")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _prepare(args)
        with np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFinite as exc:
        print(f"non-finite: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    return 0


if __name__ == "__main__":
    sys.exit(main())
