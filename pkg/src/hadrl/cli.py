"""Command-line entry point: training, baselines, validation, timing, plots.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .neural import ActorCriticParams, ShapeError
from .sim import SimConfig, default_warmup, make_agent, run_simulation, timed_placements, validation_run
from .topology import PsnGraph, TopologyError, build_reference_psn, generate_embb_nspr

log = logging.getLogger("hadrl")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

ACCEPTANCE_COLUMNS = ["agent", "rho", "seed", "phase", "accepted", "arrivals", "acceptance_ratio"]
STEADY_COLUMNS = ["agent", "rho", "seed", "warmup_phases", "steady_state_acceptance"]
VALIDATION_COLUMNS = ["agent", "arrival", "accepted_total", "cumulative_acceptance"]
TIMING_COLUMNS = ["sweep", "num_vnfs", "num_servers", "agent", "mean_seconds", "max_seconds", "mean_steps",
                  "accepted_fraction"]


class Recorder:
    """Collects outputs and writes ``manifest.json`` whatever the outcome."""

    def __init__(self, out_dir: Path, command: str, argv):
        self.out_dir = out_dir
        self.data = {
            "command": command, "argv": list(argv), "version": __version__,
            "started": _now(), "outputs": [], "seeds": [], "status": "running",
        }

    def output(self, path: Path):
        self.data["outputs"].append(str(path.relative_to(self.out_dir)))

    def write(self):
        self.data["finished"] = _now()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def write_csv(path: Path, columns, rows):
    """Write atomically so a failed run never leaves a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    os.replace(tmp, path)


def load_topology(path) -> PsnGraph:
    if path is None:
        return build_reference_psn()
    try:
        return PsnGraph.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read topology: {exc.strerror}", str(path)) from None
    except (TopologyError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid topology: {exc}", str(path)) from None


def load_checkpoint(path, psn: PsnGraph) -> ActorCriticParams:
    try:
        return ActorCriticParams.load(path, psn.num_nodes)
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint: {exc.strerror}", str(path)) from None
    except (ShapeError, ValueError, KeyError) as exc:
        raise ConfigError(f"checkpoint does not fit this topology: {exc}", str(path)) from None


def _sim_config(cfg: RunConfig, kind: str, rho: float, phases: int, beta: float | None = None,
                train: bool = True) -> SimConfig:
    training = cfg.training if beta is None else replace(cfg.training, beta=beta)
    s = cfg.simulation
    return SimConfig(rho=rho, mean_lifetime=s.mean_lifetime, phase_size=s.phase_size,
                     arrivals=phases * s.phase_size, seed=s.seed, agent=kind, train=train,
                     training=training, p2c=cfg.heuristic)


def _phase_rows(label, rho, seed, metrics):
    for i, (acc, n) in enumerate(zip(metrics.phase_accepts, metrics.phase_arrivals), start=1):
        yield {"agent": label, "rho": rho, "seed": seed, "phase": i, "accepted": acc, "arrivals": n,
               "acceptance_ratio": acc / n}


def agent_label(kind: str, beta: float | None) -> str:
    return f"hadrl-beta{beta:g}" if kind == "hadrl" else kind


def cmd_train(args, cfg: RunConfig, rec: Recorder) -> int:
    psn = load_topology(cfg.topology)
    init = load_checkpoint(args.checkpoint, psn) if args.checkpoint else None
    kind = cfg.agent.kind
    betas = [None] if kind == "drl" else cfg.agent.betas
    rows = []
    for beta in betas:
        label = agent_label(kind, beta)
        sim_cfg = _sim_config(cfg, kind, cfg.simulation.rho, cfg.simulation.phases, beta)
        log.info("training %s for %d arrivals", label, sim_cfg.arrivals)
        result = run_simulation(sim_cfg, psn.copy(), init.copy() if init else None)
        rows.extend(_phase_rows(label, sim_cfg.rho, sim_cfg.seed, result.metrics))
        ckpt = args.out_dir / "checkpoints" / f"{label}.npz"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        result.params.save(ckpt)
        rec.output(ckpt)
        rec.data["seeds"].append({"agent": label, "seed": sim_cfg.seed})
    path = args.out_dir / "acceptance.csv"
    write_csv(path, ACCEPTANCE_COLUMNS, rows)
    rec.output(path)
    return EXIT_OK


def cmd_baseline_heu(args, cfg: RunConfig, rec: Recorder) -> int:
    psn = load_topology(cfg.topology)
    rows, steady = [], []
    for rho in cfg.baseline.rhos:
        sim_cfg = _sim_config(cfg, "heu", rho, cfg.baseline.phases)
        result = run_simulation(sim_cfg, psn.copy())
        rows.extend(_phase_rows("heu", rho, sim_cfg.seed, result.metrics))
        warmup = cfg.baseline.warmup_phases
        if warmup is None:
            warmup = default_warmup(len(result.metrics.phase_arrivals))
        ratio = result.metrics.steady_state(warmup)
        steady.append({"agent": "heu", "rho": rho, "seed": sim_cfg.seed, "warmup_phases": warmup,
                       "steady_state_acceptance": ratio})
        rec.data["seeds"].append({"agent": "heu", "rho": rho, "seed": sim_cfg.seed})
        print(f"heu rho={rho:g} steady-state acceptance {ratio:.4f} (first {warmup} phases discarded)")
    for name, cols, data in (("acceptance.csv", ACCEPTANCE_COLUMNS, rows), ("steady_state.csv", STEADY_COLUMNS, steady)):
        path = args.out_dir / name
        write_csv(path, cols, data)
        rec.output(path)
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig, rec: Recorder) -> int:
    psn = load_topology(cfg.topology)
    kind = args.agent or cfg.agent.kind
    params = None
    if kind != "heu":
        if not args.checkpoint:
            raise ConfigError("validate needs --checkpoint for drl/hadrl agents", "<command line>")
        params = load_checkpoint(args.checkpoint, psn)
    label = args.checkpoint.stem if params is not None else kind
    v = cfg.validation
    sim_cfg = SimConfig(rho=v.rho, mean_lifetime=cfg.simulation.mean_lifetime, phase_size=cfg.simulation.phase_size,
                        arrivals=v.arrivals, seed=cfg.simulation.seed, agent=kind, train=False,
                        use_heuristic=v.use_heuristic, training=cfg.training, p2c=cfg.heuristic)
    series = validation_run(params, sim_cfg, psn)
    rows = [{"agent": label, "arrival": i, "accepted_total": round(c * i), "cumulative_acceptance": c}
            for i, c in enumerate(series, start=1)]
    path = args.out_dir / "validation.csv"
    write_csv(path, VALIDATION_COLUMNS, rows)
    rec.output(path)
    rec.data["seeds"].append({"agent": label, "seed": sim_cfg.seed})
    print(f"{label} final cumulative acceptance {series[-1]:.4f} over {len(series)} arrivals "
          f"(heuristic {'on' if v.use_heuristic and kind == 'hadrl' else 'off'})")
    return EXIT_OK


def cmd_timing(args, cfg: RunConfig, rec: Recorder) -> int:
    t = cfg.timing
    base = load_topology(cfg.topology)
    ckpt = args.checkpoint
    points = [("vnfs", n, 1.0) for n in t.vnf_counts] + [("servers", None, s) for s in t.server_scales]
    rows = []
    for sweep, n_vnf, scale in points:
        psn = base if (scale == 1.0 and cfg.topology) else build_reference_psn(servers_scale=scale)
        n_vnf = n_vnf or 5
        rng = np.random.default_rng(cfg.simulation.seed)
        params = None
        if ckpt:
            try:
                params = ActorCriticParams.load(ckpt, psn.num_nodes)
            except ShapeError:
                log.info("checkpoint does not fit %d nodes; using fresh parameters", psn.num_nodes)
        if params is None:
            params = ActorCriticParams.create(psn.num_nodes, rng, dtype=cfg.training.precision)
        nsprs = [generate_embb_nspr(i, 0.0, 1.0, num_vnfs=n_vnf) for i in range(t.batch)]
        sim_cfg = _sim_config(cfg, "hadrl", cfg.simulation.rho, 1, train=False)
        for kind in ("heu", "drl", "hadrl"):
            seeds = np.random.SeedSequence(cfg.simulation.seed).spawn(3)
            agent, _ = make_agent(kind, psn, params, replace(sim_cfg, agent=kind), seeds)
            res = timed_placements(agent, psn, nsprs)
            secs = [r.seconds for r in res]
            rows.append({"sweep": sweep, "num_vnfs": n_vnf, "num_servers": len(psn.servers), "agent": kind,
                         "mean_seconds": float(np.mean(secs)), "max_seconds": float(np.max(secs)),
                         "mean_steps": float(np.mean([r.steps for r in res])),
                         "accepted_fraction": float(np.mean([r.accepted for r in res]))})
            log.info("%s %s vnfs=%d servers=%d mean %.4fs", sweep, kind, n_vnf, len(psn.servers), rows[-1]["mean_seconds"])
    path = args.out_dir / "timing.csv"
    write_csv(path, TIMING_COLUMNS, rows)
    rec.output(path)
    return EXIT_OK


def cmd_plot(args, cfg: RunConfig, rec: Recorder) -> int:
    from .plots import PlotError, render_csv

    for src in args.csv:
        try:
            out = render_csv(Path(src), args.out_dir)
        except PlotError as exc:
            raise ConfigError(str(exc), str(src)) from None
        rec.output(out)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "baseline-heu": cmd_baseline_heu,
    "validate": cmd_validate,
    "timing": cmd_timing,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--out-dir", type=Path, default=Path("runs"), help="output directory (default: runs)")
    common.add_argument("--seed", type=int)
    common.add_argument("--topology", help="PSN JSON file (default: built-in reference topology)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    heu = argparse.ArgumentParser(add_help=False)
    heu.add_argument("--w-bw", type=float, help="heuristic hop-count weight")
    heu.add_argument("--w-lb", type=float, help="heuristic load-balance weight")
    heu.add_argument("--heu-trace", action="store_true", help="log every heuristic candidate score")

    modifier = argparse.ArgumentParser(add_help=False)
    modifier.add_argument("--beta", type=float)
    modifier.add_argument("--xi", type=float)
    modifier.add_argument("--eta", type=float)

    p = argparse.ArgumentParser(prog="hadrl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common, heu, modifier], help="train DRL or HA-DRL agents")
    t.add_argument("--agent", choices=["drl", "hadrl"])
    t.add_argument("--rho", type=float)
    t.add_argument("--phases", type=int)
    t.add_argument("--checkpoint", type=Path, help="initial parameters")

    b = sub.add_parser("baseline-heu", parents=[common, heu], help="heuristic-only acceptance baseline")
    b.add_argument("--rho", type=float, nargs="+", help="one or more loads (default: 0.5 0.8 0.9 1.0)")
    b.add_argument("--phases", type=int)

    v = sub.add_parser("validate", parents=[common, heu, modifier], help="frozen-agent validation run")
    v.add_argument("--agent", choices=["drl", "hadrl", "heu"])
    v.add_argument("--checkpoint", type=Path)
    v.add_argument("--rho", type=float)
    v.add_argument("--arrivals", type=int)
    onoff = v.add_mutually_exclusive_group()
    onoff.add_argument("--enable-heu-at-eval", dest="heu_at_eval", action="store_true", default=None,
                       help="keep the heuristic modifier active (hadrl)")
    onoff.add_argument("--disable-heu-at-eval", dest="heu_at_eval", action="store_false",
                       help="run the actor alone (default)")

    tm = sub.add_parser("timing", parents=[common, heu, modifier], help="placement wall-clock sweep")
    tm.add_argument("--checkpoint", type=Path)
    tm.add_argument("--batch", type=int)
    tm.add_argument("--vnf-counts", type=int, nargs="+")
    tm.add_argument("--server-scales", type=float, nargs="+")

    pl = sub.add_parser("plot", parents=[common], help="render PNG charts from result CSVs")
    pl.add_argument("csv", nargs="+", help="acceptance, validation or timing CSV files")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    get = lambda name: getattr(args, name, None)  # noqa: E731
    rho = get("rho")
    overrides = {
        "simulation__seed": get("seed"),
        "simulation__phases": get("phases") if args.command == "train" else None,
        "simulation__rho": rho if args.command == "train" else None,
        "baseline__rhos": rho if args.command == "baseline-heu" else None,
        "baseline__phases": get("phases") if args.command == "baseline-heu" else None,
        "validation__rho": rho if args.command == "validate" else None,
        "validation__arrivals": get("arrivals"),
        "validation__use_heuristic": get("heu_at_eval"),
        "agent__kind": get("agent") if args.command == "train" else None,
        "agent__betas": [get("beta")] if get("beta") is not None and args.command == "train" else None,
        "training__beta": get("beta"),
        "training__xi": get("xi"),
        "training__eta": get("eta"),
        "heuristic__w_bw": get("w_bw"),
        "heuristic__w_lb": get("w_lb"),
        "heuristic__trace": True if get("heu_trace") else None,
        "timing__batch": get("batch"),
        "timing__vnf_counts": get("vnf_counts"),
        "timing__server_scales": get("server_scales"),
    }
    cfg = apply_overrides(cfg, **overrides)
    if get("topology") is not None:
        cfg.topology = args.topology
    if cfg.agent.kind == "drl" and args.command == "train" and get("xi"):
        log.warning("pure DRL ignores --xi; the modifier is disabled")
    return cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    rec = Recorder(args.out_dir, args.command, argv)
    code = EXIT_RUNTIME
    try:
        cfg = resolve_config(args)
        rec.data["config"] = cfg.to_dict()
        code = COMMANDS[args.command](args, cfg, rec)
        rec.data["status"] = "ok"
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        rec.data.update(status="config-error", error=str(exc))
        code = EXIT_CONFIG
    except Exception as exc:  # reported in the manifest, then surfaced via the exit code
        log.exception("run failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        rec.data.update(status="runtime-error", error=f"{type(exc).__name__}: {exc}")
        code = EXIT_RUNTIME
    finally:
        rec.write()
    return code


if __name__ == "__main__":
    sys.exit(main())
