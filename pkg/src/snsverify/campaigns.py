"""Verification campaigns behind the CLI subcommands.

Each campaign returns (report_dict, {csv_name: text}).  Reports are pure
functions of the configuration (timestamps live elsewhere), embed the full
hypothesis report, and carry a top-level "pass" flag the CLI turns into an
exit code.
"""

from __future__ import annotations

import csv as _csv
import io as _io
import math

import numpy as np

from .bilinear import (
    bilinear_b,
    bilinear_b_batch,
    bilinear_b_same,
    bilinear_reference,
)
from .bounds import bound_constants, constants_report, hypothesis_report
from .config import ExperimentConfig
from .coupling import run_coupled, trajectory_to_csv
from .dynamics import path_rng, path_to_csv, simulate_x
from .estimators import (
    SimSettings,
    dgamma_distance_bounds,
    entropy_estimate,
    exp_moment_check,
    gradient_probe,
    make_report,
    mlh_check,
    zh_moment_decay,
)
from .engine import run_coupled_batch, run_direct_batch
from .spectral import (
    FourierField,
    field_to_csv,
    leray_project,
    make_grid,
    velocity_coeffs,
)


def _sanitize(obj):
    """Make a report JSON-ready: numpy scalars/arrays to plain Python."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _inner_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * np.sum(a.real * b.real + a.imag * b.imag, axis=1)


def _norm_batch(a: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * np.sum(np.abs(a) ** 2, axis=1))


def _sobolev_batch(alpha: float, a: np.ndarray, ksq: np.ndarray) -> np.ndarray:
    w = ksq.astype(np.float64) ** (2.0 * alpha)
    return np.sqrt(2.0 * np.sum(w * np.abs(a) ** 2, axis=1))


# ---------------------------------------------------------------------------
# verify-identities

def identities_report(cfg: ExperimentConfig) -> tuple[dict, dict]:
    grid = cfg.make_grid()
    params = cfg.make_params()
    noise = cfg.make_noise()
    consts = bound_constants(grid, params, noise)
    n = cfg.estimators.n_triples
    rng = path_rng(cfg.estimators.seed, 0x1DE7)
    m = grid.n_modes
    ksq = grid.ksq.astype(np.float64)
    n0 = params.n_forced

    def rand_amps(count):
        g = rng.standard_normal((count, m, 2))
        return (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)

    checks = []

    def add_check(name, violation, tol, count=n):
        checks.append({
            "name": name, "n": int(count), "max_violation": float(violation),
            "tolerance": float(tol), "pass": bool(violation <= tol),
        })

    x, y, z = rand_amps(n), rand_amps(n), rand_amps(n)
    nmax = grid.n_max
    bxy_z = bilinear_b_batch(y, z, nmax)
    byx = bilinear_b_batch(y, x, nmax)

    # skew symmetry <x,B(y,z)> = -<z,B(y,x)>, relative to the pairing scale
    lhs = _inner_batch(x, bxy_z)
    rhs = -_inner_batch(z, byx)
    scale = np.maximum(np.abs(lhs) + np.abs(rhs), 1e-300)
    add_check("skew_symmetry", np.max(np.abs(lhs - rhs) / scale), 1e-10)

    # energy neutrality <x,B(y,x)> = 0, relative to |x||B(y,x)|
    neut = np.abs(_inner_batch(x, byx)) / np.maximum(_norm_batch(x) * _norm_batch(byx), 1e-300)
    add_check("energy_neutrality", np.max(neut), 1e-10)

    # certified trilinear bounds: zero violations allowed
    r1 = np.abs(lhs) / np.maximum(
        _norm_batch(x) * _norm_batch(y) * _sobolev_batch(1.5, z, ksq), 1e-300)
    add_check("c1_certificate", np.max(r1) / consts.c1, 1.0)
    den2 = (
        np.sqrt(_norm_batch(x) * _sobolev_batch(0.5, x, ksq))
        * np.sqrt(_norm_batch(y) * _sobolev_batch(0.5, y, ksq))
        * _sobolev_batch(0.5, z, ksq)
    )
    add_check("c2_certificate", np.max(np.abs(lhs) / np.maximum(den2, 1e-300)) / consts.c2, 1.0)

    # low-band bilinear bound |B_low(x,y)| <= C1 N0^3 |x||y|
    cut = grid.band_size(n0)
    blow = bxy_z.copy()
    blow[:, cut:] = 0.0
    rlow = _norm_batch(blow) / np.maximum(_norm_batch(y) * _norm_batch(z), 1e-300)
    add_check("low_band_bound", np.max(rlow) / (consts.c1 * n0**3), 1.0)

    # band split inequalities for fractional powers
    worst = 0.0
    for alpha in (0.25, 0.5, 1.0, 1.5):
        wl = ksq[:cut] ** (2 * alpha)
        low_norm = np.sqrt(2.0 * np.sum(wl * np.abs(x[:, :cut]) ** 2, axis=1))
        low_plain = _norm_batch(x[:, :cut].copy()) if cut else np.zeros(n)
        bound = (n0 ** (2 * alpha)) * low_plain
        worst = max(worst, float(np.max(low_norm - bound * (1 + 1e-12))))
        wh = ksq[cut:] ** (2 * alpha)
        high_norm = np.sqrt(2.0 * np.sum(wh * np.abs(x[:, cut:]) ** 2, axis=1))
        high_plain = _norm_batch(x[:, cut:].copy())
        bound_h = (n0 ** (2 * alpha)) * high_plain
        worst = max(worst, float(np.max(bound_h * (1 - 1e-12) - high_norm)))
    add_check("band_split_inequalities", max(worst, 0.0), 0.0)

    # Cauchy-Schwarz for the inner product
    cs = np.abs(_inner_batch(x, y)) / np.maximum(_norm_batch(x) * _norm_batch(y), 1e-300)
    add_check("cauchy_schwarz", max(float(np.max(cs)) - 1.0, 0.0), 1e-12)

    # fractional power composition A^a A^b = A^{a+b}
    a1 = x * (ksq ** 0.7)
    a2 = a1 * (ksq ** 0.55)
    direct = x * (ksq ** 1.25)
    comp = np.max(np.abs(a2 - direct) / np.maximum(np.abs(direct), 1e-300))
    add_check("stokes_composition", float(comp), 1e-12)

    # Poincare: |A^alpha u| >= |u| for alpha > 0
    poin = _norm_batch(x) - _sobolev_batch(0.5, x, ksq)
    add_check("poincare", max(float(np.max(poin)), 0.0), 1e-12)

    # Leray projection: orthogonality per mode, idempotence, field round-trip
    raw = rng.standard_normal((min(n, 2000), m, 2, 2))
    wvec = raw[..., 0] + 1j * raw[..., 1]
    k = grid.half_k.astype(np.float64)
    kabs = grid.kabs
    proj_amp = (-k[:, 1] * wvec[:, :, 0] + k[:, 0] * wvec[:, :, 1]) / kabs
    u1 = proj_amp * (-k[:, 1] / kabs)
    u2 = proj_amp * (k[:, 0] / kabs)
    if cfg.flags.corrupt_projection:
        u1 = u1 + 0.02 * (k[:, 0] / kabs)
        u2 = u2 + 0.02 * (k[:, 1] / kabs)
    dot = np.abs(k[:, 0] * u1 + k[:, 1] * u2)
    scale_w = np.maximum(np.abs(wvec[:, :, 0]) + np.abs(wvec[:, :, 1]), 1e-300)
    add_check("leray_orthogonality", float(np.max(dot / (kabs * scale_w))), 1e-12,
              count=wvec.shape[0])
    reproj = (-k[:, 1] * u1 + k[:, 0] * u2) / kabs
    idem = np.max(np.abs(reproj - proj_amp) / np.maximum(np.abs(proj_amp), 1e-300))
    add_check("leray_idempotence", float(idem), 1e-12, count=wvec.shape[0])

    rt_rng = path_rng(cfg.estimators.seed, 0x0F13)
    rt_worst = 0.0
    for _ in range(50):
        g2 = rt_rng.standard_normal((m, 2))
        u = FourierField(grid, (g2[:, 0] + 1j * g2[:, 1]) / np.sqrt(2.0))
        back = leray_project(grid, velocity_coeffs(u))
        rt_worst = max(rt_worst, float(np.max(np.abs(back.amps - u.amps))))
    add_check("leray_roundtrip", rt_worst, 1e-12, count=50)

    # symmetric fast path == general table on B(u,u)
    sym_worst = 0.0
    for i in range(min(200, n)):
        u = FourierField(grid, x[i])
        d = np.max(np.abs(bilinear_b(u, u).amps - bilinear_b_same(u).amps))
        sym_worst = max(sym_worst, d / max(np.max(np.abs(bilinear_b(u, u).amps)), 1e-300))
    add_check("symmetric_table", sym_worst, 1e-12, count=min(200, n))

    # brute-force oracle at a small truncation
    g4 = make_grid(4)
    br_rng = path_rng(cfg.estimators.seed, 0x0B0B)
    br_worst = 0.0
    n_oracle = 100
    for _ in range(n_oracle):
        ga = br_rng.standard_normal((g4.n_modes, 2))
        gb = br_rng.standard_normal((g4.n_modes, 2))
        u = FourierField(g4, (ga[:, 0] + 1j * ga[:, 1]) / np.sqrt(2.0))
        v = FourierField(g4, (gb[:, 0] + 1j * gb[:, 1]) / np.sqrt(2.0))
        tbl = bilinear_b(u, v)
        ref = bilinear_reference(u, v)
        br_worst = max(br_worst, float(
            np.max(np.abs(tbl.amps - ref.amps)) / max(np.max(np.abs(ref.amps)), 1e-300)))
    add_check("bruteforce_oracle_n4", br_worst, 1e-12, count=n_oracle)

    report = {
        "command": "verify-identities",
        "config": cfg.to_dict(),
        "hypotheses": hypothesis_report(params, noise, consts, cfg.estimators.p_list),
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
    }
    csvs = {
        "identities.csv": _csv_text(
            ["check", "n", "max_violation", "tolerance", "pass"],
            [(c["name"], c["n"], c["max_violation"], c["tolerance"], c["pass"]) for c in checks],
        )
    }
    return _sanitize(report), csvs


# ---------------------------------------------------------------------------
# verify-moments

def moments_report(cfg: ExperimentConfig) -> tuple[dict, dict]:
    grid = cfg.make_grid()
    params = cfg.make_params()
    noise = cfg.make_noise()
    consts = bound_constants(grid, params, noise)
    settings = cfg.make_settings()
    x0 = cfg.make_x0()
    y0 = cfg.make_y0()

    t_exp = cfg.integrator.t_final
    exp_report = exp_moment_check(x0, t_exp, settings, params, noise)

    t_grid = list(cfg.estimators.t_grid)
    batch = run_coupled_batch(
        x0, y0, max(t_grid), settings.dt, params, noise, settings.n_paths,
        settings.seed, record_times=t_grid, nu_in_control=settings.nu_in_control,
        chunk_paths=settings.chunk_paths, block_steps=settings.block_steps)
    decay_reports = [
        zh_moment_decay(p, x0, y0, t_grid, settings, params, noise, consts, batch=batch)
        for p in cfg.estimators.p_list
    ]

    rows = []
    for rep in decay_reports:
        for t, est, env, ok in zip(rep.t_grid, rep.moments, rep.envelopes, rep.point_passed):
            rows.append((rep.p, t, est.mean, est.stderr, env, ok))

    overall = exp_report.passed and all(
        r.all_passed and (math.isnan(r.fitted_rate) or r.fitted_rate < 0)
        for r in decay_reports)
    report = {
        "command": "verify-moments",
        "config": cfg.to_dict(),
        "hypotheses": hypothesis_report(params, noise, consts, cfg.estimators.p_list),
        "exp_moment": exp_report.to_dict(),
        "zh_decay": [r.to_dict() for r in decay_reports],
        "pass": bool(overall),
    }
    csvs = {
        "zh_decay.csv": _csv_text(
            ["p", "t", "moment_mean", "moment_stderr", "envelope", "pass"], rows),
    }
    return _sanitize(report), csvs


# ---------------------------------------------------------------------------
# verify-mlh

def mlh_report(cfg: ExperimentConfig) -> tuple[dict, dict]:
    grid = cfg.make_grid()
    params = cfg.make_params()
    noise = cfg.make_noise()
    consts = bound_constants(grid, params, noise)
    settings = cfg.make_settings()
    x0 = cfg.make_x0()
    fs = cfg.make_test_functions()
    times = sorted(cfg.estimators.mlh_times)
    shrink = cfg.flags.constant_shrink

    direct = run_direct_batch(
        x0, max(times), settings.dt, params, noise, settings.n_paths, settings.seed,
        record_times=times, nonlinear=settings.nonlinear,
        chunk_paths=settings.chunk_paths, block_steps=settings.block_steps)

    cells = []
    entropy_rows = []
    for sep in cfg.estimators.mlh_separations:
        y0 = cfg.make_y0(sep)
        coupled = run_coupled_batch(
            x0, y0, max(times), settings.dt, params, noise, settings.n_paths,
            settings.seed, record_times=times, nu_in_control=settings.nu_in_control,
            chunk_paths=settings.chunk_paths, block_steps=settings.block_steps)

        ent = entropy_estimate(x0, y0, max(times), settings, params, noise, batch=coupled)
        env = consts.entropy_envelope(y0.norm(), (y0 - x0).norm())
        forms_gap = abs(ent.primary.mean - ent.cross_check.mean)
        forms_tol = 3.0 * math.hypot(ent.primary.stderr, ent.cross_check.stderr)
        ent_check = make_report(
            "coupling_entropy_bound", ent.primary, env,
            inputs={"z_norm": (y0 - x0).norm(), "y0_norm": y0.norm(), "t": max(times)},
            extra={"cross_check": ent.cross_check.to_dict(), "ess": ent.ess,
                   "forms_agree": bool(forms_gap <= forms_tol),
                   "forms_gap": forms_gap, "forms_tolerance": forms_tol},
        )
        entropy_rows.append({"separation": sep, "estimate": ent.to_dict(),
                             "bound": ent_check.to_dict()})
        for t in times:
            for f in fs:
                rep = mlh_check(f, x0, y0, t, settings, params, noise, consts,
                                shrink=shrink, coupled=coupled, direct=direct)
                cells.append({"separation": sep, "t": t, "f": f.label,
                              "report": rep.to_dict()})

    probe_settings = SimSettings(
        dt=settings.dt, n_paths=min(settings.n_paths, 2000), seed=settings.seed,
        nonlinear=settings.nonlinear, nu_in_control=settings.nu_in_control)
    directions = [cfg.separation_field(1.0)]
    probe = gradient_probe(fs[0], x0, directions, times[0], cfg.estimators.probe_eps,
                           probe_settings, params, noise, consts)

    overall = (
        all(c["report"]["pass"] for c in cells)
        and all(e["bound"]["pass"] and e["bound"]["extra"]["forms_agree"]
                for e in entropy_rows)
        and probe.all_passed
    )
    report = {
        "command": "verify-mlh",
        "config": cfg.to_dict(),
        "hypotheses": hypothesis_report(params, noise, consts, cfg.estimators.p_list),
        "constants": constants_report(grid, params, noise,
                                      y_norm=cfg.make_y0().norm(),
                                      z_norm=cfg.initial.separation.norm,
                                      p_list=cfg.estimators.p_list),
        "cells": cells,
        "entropy": entropy_rows,
        "gradient_probe": probe.to_dict(),
        "pass": bool(overall),
    }
    csvs = {
        "mlh_matrix.csv": _csv_text(
            ["separation", "t", "f", "lhs_mean", "lhs_stderr", "rhs", "margin", "pass"],
            [(c["separation"], c["t"], c["f"], c["report"]["lhs"]["mean"],
              c["report"]["lhs"]["stderr"], c["report"]["rhs"], c["report"]["margin"],
              c["report"]["pass"]) for c in cells]),
    }
    return _sanitize(report), csvs


# ---------------------------------------------------------------------------
# asf-probe

def asf_report(cfg: ExperimentConfig) -> tuple[dict, dict]:
    grid = cfg.make_grid()
    params = cfg.make_params()
    noise = cfg.make_noise()
    consts = bound_constants(grid, params, noise)
    settings = cfg.make_settings()
    x0 = cfg.make_x0()
    y0 = cfg.make_y0()
    times = sorted(cfg.estimators.asf_times)

    batch_x = run_direct_batch(
        x0, max(times), settings.dt, params, noise, settings.n_paths, settings.seed,
        record_times=times, nonlinear=settings.nonlinear,
        chunk_paths=settings.chunk_paths, block_steps=settings.block_steps)
    batch_y = run_direct_batch(
        y0, max(times), settings.dt, params, noise, settings.n_paths, settings.seed,
        record_times=times, nonlinear=settings.nonlinear,
        chunk_paths=settings.chunk_paths, block_steps=settings.block_steps)

    table = []
    for t in times:
        for gamma in cfg.estimators.gamma_list:
            upper, lower, extra = dgamma_distance_bounds(
                x0, y0, t, gamma, settings, params, noise,
                dictionary_size=cfg.estimators.dictionary_size,
                batches=(batch_x, batch_y))
            table.append({"t": t, "gamma": gamma, "upper": upper.to_dict(),
                          "lower": lower.to_dict(), **extra})

    monotone = True
    for gamma in cfg.estimators.gamma_list:
        seq = [row["upper"]["mean"] for row in table if row["gamma"] == gamma]
        monotone = monotone and all(b <= a for a, b in zip(seq, seq[1:]))
    sandwich = all(row["sandwich_ok"] for row in table)

    report = {
        "command": "asf-probe",
        "config": cfg.to_dict(),
        "hypotheses": hypothesis_report(params, noise, consts, cfg.estimators.p_list),
        "separation_norm": (y0 - x0).norm(),
        "table": table,
        "upper_monotone_in_t": bool(monotone),
        "sandwich_ok": bool(sandwich),
        "pass": bool(monotone and sandwich),
    }
    csvs = {
        "asf_table.csv": _csv_text(
            ["t", "gamma", "upper_mean", "upper_stderr", "lower_mean", "lower_stderr",
             "sandwich_ok"],
            [(r["t"], r["gamma"], r["upper"]["mean"], r["upper"]["stderr"],
              r["lower"]["mean"], r["lower"]["stderr"], r["sandwich_ok"]) for r in table]),
    }
    return _sanitize(report), csvs


# ---------------------------------------------------------------------------
# simulate

def simulate_report(cfg: ExperimentConfig) -> tuple[dict, dict]:
    params = cfg.make_params()
    noise = cfg.make_noise()
    x0 = cfg.make_x0()
    T, dt = cfg.integrator.t_final, cfg.integrator.dt
    seed = cfg.estimators.seed

    path = simulate_x(x0, T, dt, params, noise, seed=seed)
    csvs = {
        "path.csv": path_to_csv(path),
        "x_final.csv": field_to_csv(path.states[-1]),
        "x0.csv": field_to_csv(x0),
    }
    summary = {
        "command": "simulate",
        "config": cfg.to_dict(),
        "hypotheses": hypothesis_report(params, noise,
                                        bound_constants(cfg.make_grid(), params, noise),
                                        cfg.estimators.p_list),
        "final_energy": path.states[-1].norm() ** 2,
        "final_dissipation": float(path.dissipation[-1]),
        "pass": True,
    }
    if cfg.initial.separation.norm > 0:
        y0 = cfg.make_y0()
        traj = run_coupled(x0, y0, T, dt, params, noise, seed=seed,
                           nu_in_control=cfg.flags.nu_in_control)
        csvs["trajectory.csv"] = trajectory_to_csv(traj)
        summary["final_log_weight"] = float(traj.log_weight[-1])
        summary["final_v_energy"] = float(traj.v_energy[-1])
        summary["final_zh_sq"] = traj.zh_states[-1].norm() ** 2
    return _sanitize(summary), csvs
