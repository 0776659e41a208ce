"""Command-line runner.

    bosonforge <task> [--config run.yaml] [--plots] [--section.key value ...]

Exit codes: 0 success, 2 optimizer non-convergence, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__, gatebased, optimizer, pipeline, tomography
from .config import TASKS, ConfigError, RunConfig, parse_overrides
from .dynamics import LambDickeParams, NoiseModel, ground_hybrid, hybrid_fidelity, propagate_lamb_dicke, propagate_master, propagate_unitary
from .targets import TABLE_INFIDELITIES, TABLE_STATES, GkpSpec, SqueezeSpec, target_state
from .waveform import Waveform

log = logging.getLogger("bosonforge")

EXIT_OK, EXIT_NONCONVERGENCE, EXIT_INVALID = 0, 2, 3


def _tail_kw(spec):
    return {"tail_tol": 1e-2} if isinstance(spec, (GkpSpec, SqueezeSpec)) else {}


# --- tasks ----------------------------------------------------------------------------------


def run_optimize(cfg: RunConfig) -> int:
    spec = cfg.target_spec()
    o = cfg["optimizer"]
    dim = int(cfg["space"]["dim"])
    q0 = o["initial_qubit"]
    if q0 == "auto":
        q0 = pipeline.initial_qubit_for(target_state(spec, dim, **_tail_kw(spec)))
    code = EXIT_OK
    try:
        pulse = optimizer.optimize(
            spec, dim, cost_cfg=cfg.cost(), robust=cfg.robustness(), constraints=cfg.constraints(),
            seed=int(cfg.seed), settings=cfg.settings(), n_seg_opt=int(o["n_seg_opt"]),
            n_seg_out=int(o["n_seg_out"]), omega_hz=float(o["omega_hz"]), initial_qubit=q0,
        )
    except optimizer.NonConvergence as exc:
        log.error("%s", exc)
        pulse, code = exc.best, EXIT_NONCONVERGENCE
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    pulse.waveform.meta.update(pipeline.provenance(cfg.hash()))
    pulse.waveform.save(out / "waveform.json")
    rep = pulse.report()
    rep["converged"] = code == EXIT_OK
    pipeline.write_json(out / "optimizer_report.json", rep, cfg.hash())
    log.info("f_th = %.6f at T = %.1f us", pulse.f_th, pulse.duration * 1e6)
    return code


def run_propagate(cfg: RunConfig) -> int:
    path = cfg["inputs"]["waveform"]
    if path is None:
        raise ConfigError("propagate needs inputs.waveform")
    wf = Waveform.load(path)
    spec = cfg.target_spec()
    dim = int(cfg["space"]["dim"])
    noise = cfg.noise()
    q0 = cfg["optimizer"]["initial_qubit"]
    ref = target_state(spec, dim, **_tail_kw(spec))
    if q0 == "auto":
        q0 = pipeline.initial_qubit_for(ref)
    ld = cfg["lamb_dicke"]
    if ld["enabled"]:
        params = LambDickeParams(float(ld["eta"]), 2 * np.pi * float(ld["mode_hz"]), int(ld["order"]))
        state = propagate_lamb_dicke(wf, params, ground_hybrid(dim, q0))
    elif noise.gamma > 0 or noise.delta != 0:
        state = propagate_master(wf, noise, ground_hybrid(dim, q0, noise.nbar))
    else:
        state = propagate_unitary(wf, ground_hybrid(dim, q0, noise.nbar))
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "state.npy", state)
    pipeline.write_json(out / "propagate_report.json",
                        {"fidelity": hybrid_fidelity(state, ref), "dim": dim, "initial_qubit": q0}, cfg.hash())
    return EXIT_OK


def run_tomography(cfg: RunConfig) -> int:
    spec = cfg.target_spec()
    dim = int(cfg["space"]["dim"])
    s = cfg["sdf"]
    if cfg["inputs"]["state"] is not None:
        state, hybrid = np.load(cfg["inputs"]["state"]), True
    else:
        state, hybrid = target_state(spec, dim, **_tail_kw(spec)), False
    if s["extent"] is None:
        quad = tomography.default_quadrant(spec, int(s["quadrant_n"]))
    else:
        quad = tomography.quadrant_points(int(s["quadrant_n"]), float(s["extent"]), tomography.grid_scale(spec))
    grid = tomography.sdf_measure(state, quad, cfg.sdf(), rng_seed=int(cfg.seed), hybrid=hybrid)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    grid.to_csv(out / "chi_quadrant.csv")
    pipeline.stamp_csv(out / "chi_quadrant.csv", cfg.hash())
    full = tomography.symmetrize(grid)
    full.to_csv(out / "chi_grid.csv")
    pipeline.stamp_csv(out / "chi_grid.csv", cfg.hash())
    return EXIT_OK


def run_reconstruct(cfg: RunConfig, plots: bool = False) -> int:
    path = cfg["inputs"]["grid"]
    if path is None:
        raise ConfigError("reconstruct needs inputs.grid")
    grid = tomography.ChiGrid.from_csv(path)
    spec = cfg.target_spec()
    dims = [int(d) for d in cfg["reconstruct"]["dims"]]
    ref = target_state(spec, max(dims), **_tail_kw(spec))
    rec, f = tomography.reconstruct_escalating(grid, ref, dims, max_iter=int(cfg["reconstruct"]["max_iter"]))
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "rho.npy", rec.rho)
    x = np.linspace(-5, 5, 81)
    w = tomography.wigner(rec.rho, x, x)
    tomography.wigner_to_csv(out / "wigner.csv", x, x, w)
    pipeline.stamp_csv(out / "wigner.csv", cfg.hash())
    pipeline.write_json(out / "reconstruction_report.json",
                        {"fidelity": f, "dim": rec.dim, "residual": rec.residual, "iterations": rec.iterations},
                        cfg.hash())
    if plots:
        _plot_wigner(out / "wigner.png", x, w)
    return EXIT_OK


def run_analyze(cfg: RunConfig) -> int:
    spec = cfg.target_spec()
    inputs = cfg["inputs"]
    if inputs["rho"] is not None:
        source = np.load(inputs["rho"])
    elif inputs["grid"] is not None:
        source = tomography.ChiGrid.from_csv(inputs["grid"])
    else:
        raise ConfigError("analyze needs inputs.rho or inputs.grid")
    rep = pipeline.analyze(source, spec, int(cfg["space"]["dim"]))
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_json(out / "metrics_report.json", rep, cfg.hash())
    return EXIT_OK


def run_compare_gates(cfg: RunConfig, plots: bool = False) -> int:
    g = cfg["gates"]
    hastrup = None
    if cfg["inputs"]["hastrup"] is not None:
        hastrup = gatebased.load_hastrup_params(cfg["inputs"]["hastrup"])
    rows = pipeline.compare_gates([float(d) for d in g["db"]], int(cfg.seed), int(g["dim"]), bool(g["optimized"]), hastrup)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    gatebased.write_comparison_csv(out / "comparison.csv", rows)
    pipeline.stamp_csv(out / "comparison.csv", cfg.hash())
    if plots:
        _plot_comparison(out / "comparison.png", rows)
    return EXIT_OK


def run_error_budget(cfg: RunConfig, plots: bool = False) -> int:
    b = cfg["budget"]
    names = list(b["states"])
    unknown = [n for n in names if n not in TABLE_STATES]
    if unknown:
        raise ConfigError(f"unknown budget states {unknown}")
    noise = NoiseModel(float(b["gamma"]), 2 * np.pi * float(b["delta_hz"]), float(b["nbar"]))
    inputs = []
    for i, name in enumerate(names):
        pulse = pipeline.table_pulse(name, seed=int(cfg.seed) + i)
        dim = pipeline.TABLE_DIMS[name]
        q0 = pipeline.initial_qubit_for(target_state(TABLE_STATES[name], dim, **_tail_kw(TABLE_STATES[name])))
        inputs.append(pipeline.BudgetInputs(name, pulse.waveform, dim, q0, noise, recon=bool(b["recon"])))
    rows = pipeline.error_budget(inputs)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_error_budget(out / "error_budget.csv", rows, cfg.hash(), TABLE_INFIDELITIES)
    if plots:
        _plot_budget(out / "error_budget.png", rows)
    return EXIT_OK


# --- optional plots -------------------------------------------------------------------------


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib is not installed; skipping plots")
        return None
    return plt


def _plot_wigner(path, x, w):
    plt = _pyplot()
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(4, 4))
    lim = np.abs(w).max()
    ax.pcolormesh(x, x, w.T, cmap="RdBu_r", vmin=-lim, vmax=lim, shading="auto")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_comparison(path, rows):
    plt = _pyplot()
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in sorted({r[0] for r in rows}):
        pts = [(r[3], r[2]) for r in rows if r[0] == method]
        ax.scatter(*zip(*pts), label=method)
    ax.set_yscale("log")
    ax.set_xlabel("duration (us)")
    ax.set_ylabel("infidelity")
    ax.legend()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def _plot_budget(path, rows):
    plt = _pyplot()
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bottom = np.zeros(len(rows))
    names = [r["state"] for r in rows]
    for col in pipeline.BUDGET_COLUMNS:
        vals = np.array([max(r[col], 0.0) for r in rows])
        ax.bar(names, vals, bottom=bottom, label=col)
        bottom += vals
    ax.set_ylabel("infidelity")
    ax.tick_params(axis="x", rotation=45)
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


# --- entry point -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosonforge", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"bosonforge {__version__}")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--plots", action="store_true", help="also render PNG figures (needs matplotlib)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(cfg: RunConfig, plots: bool = False) -> int:
    task = cfg.task
    if task == "optimize":
        return run_optimize(cfg)
    if task == "propagate":
        return run_propagate(cfg)
    if task == "tomography":
        return run_tomography(cfg)
    if task == "reconstruct":
        return run_reconstruct(cfg, plots)
    if task == "analyze":
        return run_analyze(cfg)
    if task == "compare-gates":
        return run_compare_gates(cfg, plots)
    return run_error_budget(cfg, plots)


def main(argv=None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config, parse_overrides(rest), task=args.task)
        return run(cfg, args.plots)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
