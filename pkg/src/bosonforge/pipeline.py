"""Multi-step studies built from the core modules: error budget, noisy
squeezed-state reconstruction, gate-sequence comparison, artifact stamping."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, fock, gatebased, metrics, optimizer, tomography
from .dynamics import (
    EXPERIMENT_NOISE,
    LambDickeParams,
    NoiseModel,
    ground_hybrid,
    hybrid_fidelity,
    propagate_lamb_dicke,
    propagate_master,
    propagate_unitary,
)
from .targets import (
    TABLE_DURATIONS_US,
    TABLE_STATES,
    BinomialSpec,
    GkpSpec,
    Lattice,
    SqueezeSpec,
    delta_from_db,
    target_state,
)

log = logging.getLogger(__name__)

BUDGET_COLUMNS = ["pulse", "thermal", "dephasing_prep", "dephasing_recon", "lamb_dicke"]

# Fock truncation used for each experimental state
TABLE_DIMS = {
    "squeezed": 60,
    "gkp_s_0.247": 60,
    "gkp_s_0.301": 50,
    "gkp_h_0.301": 50,
    "bin_s1_+z": 30,
    "bin_s2_+z": 30,
    "bin_s2_-z": 30,
}


def max_workers() -> int:
    env = os.environ.get("BOSONFORGE_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def parallel_map(fn, items):
    """Ordered map, run in worker processes when more than one worker is allowed."""
    items = list(items)
    n = min(max_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# --- artifact stamping -------------------------------------------------------------------


def provenance(config_hash: str | None) -> dict:
    return {"version": __version__, "config_hash": config_hash}


def write_json(path, data: dict, config_hash: str | None) -> None:
    out = dict(metrics._jsonable(data))
    out["provenance"] = provenance(config_hash)
    Path(path).write_text(json.dumps(out, indent=1, sort_keys=True))


def stamp_csv(path, config_hash: str | None) -> None:
    """Prefix a CSV with a '#' provenance line (readers here skip such lines)."""
    p = Path(path)
    p.write_text(f"# bosonforge {__version__} config {config_hash}\n" + p.read_text())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# --- pulses for the table states ---------------------------------------------------------


def initial_qubit_for(psi) -> str:
    """Qubit start state whose joint parity with |0⟩ matches |↓⟩⊗ψ."""
    psi = np.asarray(psi)
    odd = float(np.sum(np.abs(psi[1::2]) ** 2))
    even = float(np.sum(np.abs(psi[0::2]) ** 2))
    if min(odd, even) > 1e-12:
        raise ValueError("target mixes Fock parities and is unreachable from a parity eigenstate")
    return "up" if odd > even else "down"


def table_pulse(name: str, seed: int, n_starts: int = 2, robust=optimizer.NON_ROBUST,
                constraints=optimizer.ConstraintConfig(), duration_us: float | None = None,
                dim: int | None = None, maxiter: int = 3000) -> optimizer.OptimizedPulse:
    """Optimise the pulse for one experimental state at its listed duration."""
    spec = TABLE_STATES[name]
    dim = dim or TABLE_DIMS[name]
    t = (duration_us or TABLE_DURATIONS_US[name]) * 1e-6
    q0 = initial_qubit_for(target_state(spec, dim, **_tail_kw(spec)))
    settings = optimizer.OptimizerSettings(n_starts=n_starts, t_grid=(t,), maxiter=maxiter)
    try:
        return optimizer.optimize(spec, dim, robust=robust, constraints=constraints, seed=seed,
                                  settings=settings, initial_qubit=q0)
    except optimizer.NonConvergence as exc:
        log.warning("%s: %s", name, exc)
        return exc.best


def _tail_kw(spec):
    return {"tail_tol": 1e-2} if isinstance(spec, (GkpSpec, SqueezeSpec)) else {}


# --- error budget -------------------------------------------------------------------------


@dataclass
class BudgetInputs:
    name: str
    waveform: object
    dim: int
    initial_qubit: str = "down"
    noise: NoiseModel = EXPERIMENT_NOISE
    lamb_dicke: LambDickeParams = LambDickeParams()
    recon: bool = True
    recon_dim: int = 60
    sim_pad: int = 40
    quadrant_n: int = 25


def _reference(spec, dim):
    return target_state(spec, dim, **_tail_kw(spec))


def error_budget_row(inp: BudgetInputs) -> dict:
    """Five-source infidelity decomposition for one pulse.

    Each noise row is the extra infidelity over the noiseless pulse.
    """
    spec = TABLE_STATES[inp.name]
    n = inp.dim
    wf = inp.waveform
    ref = _reference(spec, n)
    q0 = inp.initial_qubit
    psi0 = ground_hybrid(n, q0)
    out_pure = propagate_unitary(wf, psi0)
    base = 1 - hybrid_fidelity(out_pure, ref)
    row = {"state": inp.name, "pulse": base}

    if inp.noise.nbar > 0:
        rho_th = propagate_unitary(wf, ground_hybrid(n, q0, inp.noise.nbar))
        row["thermal"] = (1 - hybrid_fidelity(rho_th, ref)) - base
    else:
        row["thermal"] = 0.0

    deph = replace(inp.noise, nbar=0.0)
    if deph.gamma > 0 or deph.delta != 0:
        rho_d = propagate_master(wf, deph, psi0)
        row["dephasing_prep"] = (1 - hybrid_fidelity(rho_d, ref)) - base
    else:
        row["dephasing_prep"] = 0.0

    row["dephasing_recon"] = _recon_row(spec, out_pure, deph, inp) if inp.recon else 0.0

    if inp.lamb_dicke is not None:
        psi_ld = propagate_lamb_dicke(wf, inp.lamb_dicke, psi0)
        row["lamb_dicke"] = (1 - hybrid_fidelity(psi_ld, ref)) - base
    else:
        row["lamb_dicke"] = 0.0
    row["total"] = float(sum(row[k] for k in BUDGET_COLUMNS))
    return row


def _recon_row(spec, prepared, noise: NoiseModel, inp: BudgetInputs) -> float:
    """Fidelity lost when the SDF readout itself dephases, via full reconstruction."""
    quad = tomography.default_quadrant(spec, inp.quadrant_n)
    ref = _reference(spec, max(inp.recon_dim, 2))
    clean = tomography.symmetrize(tomography.sdf_measure(prepared, quad))
    cfg = tomography.SdfConfig(noise=noise, sim_dim=inp.dim + inp.sim_pad)
    noisy = tomography.symmetrize(tomography.sdf_measure(prepared, quad, cfg))
    a = tomography.measurement_matrix(clean.betas, inp.recon_dim)
    f_clean = fock.state_fidelity(tomography.reconstruct_density(clean, inp.recon_dim, a_matrix=a).rho, ref)
    f_noisy = fock.state_fidelity(tomography.reconstruct_density(noisy, inp.recon_dim, a_matrix=a).rho, ref)
    return f_clean - f_noisy


def error_budget(inputs) -> list[dict]:
    return parallel_map(error_budget_row, inputs)


def write_error_budget(path, rows, config_hash=None, measured=None) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["state", *BUDGET_COLUMNS, "total", "measured"])
        for r in rows:
            m = "" if measured is None or r["state"] not in measured else f"{measured[r['state']]:.4f}"
            wr.writerow([r["state"], *(f"{r[k]:.6g}" for k in BUDGET_COLUMNS), f"{r['total']:.6g}", m])
    stamp_csv(path, config_hash)


# --- noisy squeezed-state reconstruction ----------------------------------------------------


def squeezed_reconstruction_study(
    r: float = 1.55,
    noise: NoiseModel = NoiseModel(18.0, 2 * np.pi * 18.0),
    prep_dim: int = 120,
    sim_dim: int = 160,
    recon_dim: int = 60,
    ref_dim: int = 200,
    quadrant_n: int = 25,
) -> dict:
    """Ideal squeezed vacuum read out through dephased SDF pulses, then analysed both ways."""
    spec = SqueezeSpec(r)
    psi = target_state(spec, prep_dim, tail_tol=1e-2)
    ref = target_state(spec, ref_dim)
    quad = tomography.default_quadrant(spec, quadrant_n)
    cfg = tomography.SdfConfig(noise=noise, sim_dim=sim_dim)
    grid = tomography.sdf_measure(psi, quad, cfg, hybrid=False)
    fit = metrics.fit_squeezed(grid, amplitude=1.0)
    rec = tomography.reconstruct_density(tomography.symmetrize(grid), recon_dim)
    return {
        "chi_fit_db": fit.db,
        "chi_fit_axis_db": fit.axis_db,
        "recon_fidelity": fock.state_fidelity(rec.rho, ref[:recon_dim]),
        "recon_db": metrics.density_squeezing(rec.rho),
        "ideal_db": spec.db,
        "recon_residual": rec.residual,
    }


# --- gate-sequence comparison ----------------------------------------------------------------


def _deneve_point(args):
    db, dim = args
    d = delta_from_db(db)
    seq = gatebased.deneve_sequence(float(np.log(1 / d)))
    res = gatebased.evaluate_sequence(seq, GkpSpec(Lattice.SQUARE, 1, d), dim)
    return ("deneve", db, res.infidelity, res.duration * 1e6)


def _optimized_point(args):
    db, seed, duration_us, dim, n_seg = args
    d = delta_from_db(db)
    spec = GkpSpec(Lattice.SQUARE, 1, d)
    settings = optimizer.OptimizerSettings(n_starts=2, t_grid=(duration_us * 1e-6,))
    try:
        p = optimizer.optimize(spec, dim, cost_cfg=optimizer.CostConfig(1e-2), robust=optimizer.NON_ROBUST,
                               constraints=optimizer.ConstraintConfig(enabled=False), seed=seed,
                               settings=settings, n_seg_opt=n_seg)
    except optimizer.NonConvergence as exc:
        p = exc.best
    return ("optimized", db, 1 - p.f_th, p.duration * 1e6)


def optimized_duration_us(db: float) -> float:
    """Pulse length used for the optimised points, growing with target squeezing."""
    return float(np.clip(1000 + 100 * (db - 10), 900, 1500))


def compare_gates(dbs, seed: int, gate_dim: int = 150, optimized: bool = True, hastrup=None) -> list[tuple]:
    """Rows (method, target dB, infidelity, duration µs) for the fidelity-vs-duration comparison."""
    rows = parallel_map(_deneve_point, [(db, gate_dim) for db in dbs])
    if optimized:
        jobs = [(db, seed + i, optimized_duration_us(db), 50 if db <= 11 else 60, 80 if db <= 11 else 90)
                for i, db in enumerate(dbs)]
        rows += parallel_map(_optimized_point, jobs)
    if hastrup is not None:
        seq = gatebased.hastrup_sequence(hastrup["u"], hastrup["w"], hastrup["v"], float(hastrup.get("r", 0.0)))
        for db in dbs:
            d = delta_from_db(db)
            res = gatebased.evaluate_sequence(seq, GkpSpec(Lattice.SQUARE, 1, d), gate_dim)
            rows.append((seq.label, db, res.infidelity, res.duration * 1e6))
    return rows


# --- analysis dispatch ---------------------------------------------------------------------


def analyze(source, spec, dim: int = 60) -> dict:
    """Metrics for a reconstructed ρ or a χ grid, chosen by the target family."""
    is_grid = isinstance(source, tomography.ChiGrid)
    out: dict = {"target": type(spec).__name__}
    if isinstance(spec, GkpSpec):
        tgt = None if is_grid else target_state(spec, np.asarray(source).shape[0], tail_tol=1e-2)
        out.update(metrics.gkp_report(source, spec, target=tgt, effective=not is_grid))
    elif isinstance(spec, SqueezeSpec):
        if is_grid:
            fit = metrics.fit_squeezed(source)
            out.update({"chi_fit_r": fit.r, "chi_fit_db": fit.db, "chi_fit_axis_db": fit.axis_db})
        else:
            rho = np.asarray(source)
            out["fidelity"] = fock.state_fidelity(rho, target_state(spec, rho.shape[0], tail_tol=1e-2))
            out["density_db"] = metrics.density_squeezing(rho)
    elif isinstance(spec, BinomialSpec):
        if is_grid:
            th = tomography.exact_grid(target_state(spec, dim), source.betas)
            out["pseudo_fidelity"] = metrics.pseudo_fidelity(source, th)
        else:
            rho = np.asarray(source)
            out["fidelity"] = fock.state_fidelity(rho, target_state(spec, rho.shape[0]))
    return out
