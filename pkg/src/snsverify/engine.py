"""Batched Monte Carlo engine: all paths of an estimate advance together.

The kernels below are the hot loop of every estimator: one path-step of the
direct simulation costs one symmetric-table convolution, one coupled
path-step costs two (B(X) and B(Y) with Y = X + Z; the residual drift is
their difference, since B(Y) - B(X) = B(Z) + B(Z,X) + B(X,Z)).  Paths are
independent, so the kernels parallelize over the path axis; every write
lands in a per-path slot and reductions happen afterwards in fixed order,
which keeps results bit-identical across thread counts and re-runs.

Randomness: path i draws from a counter-based stream keyed by
(master_seed, path_offset + i), pre-generated per block of steps in the
same step-major order as the single-path reference implementation, so the
two agree path by path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .bilinear import make_workspace
from .dynamics import BLOWUP_NORM, BlowUpError, NoiseOperator, n_steps, path_rng
from .spectral import FourierField, PhysicsParams, split_low_high

_BLOWUP_SQ = BLOWUP_NORM**2


def set_threads(n: int) -> None:
    """Cap the kernel thread pool (results do not depend on it)."""
    import numba

    numba.set_num_threads(max(1, int(n)))


@njit(cache=True)
def _build_full(a_row, h_row, zl_band, use_zh, fac, nf, cfull):
    """Full-lattice amplitudes of X (+ optional Z) for one path."""
    m = a_row.shape[0]
    for j in range(m):
        val = a_row[j]
        if use_zh:
            val = val + h_row[j]
            if j < nf:
                val = val + fac * zl_band[j]
        cfull[j] = val
        cfull[m + j] = -np.conj(val)


@njit(cache=True)
def _contract(cfull, sym_out, sym_p, sym_q, sym_c, w):
    w[:] = 0.0
    for e in range(sym_out.shape[0]):
        w[sym_out[e]] += sym_c[e] * cfull[sym_p[e]] * cfull[sym_q[e]]


@njit(cache=True, parallel=True)
def _direct_block(
    a, diss, ens_prev, status,
    noise_block, decay, ksq, dt, nu, nonlinear,
    sym_out, sym_p, sym_q, sym_c,
    nf, rec_local, rec_rows, rec_amps, rec_diss,
):
    n_paths, m = a.shape
    n_steps_block = noise_block.shape[1]
    n_rec = rec_local.shape[0]
    dummy = np.zeros(1, dtype=np.complex128)
    for n in prange(n_paths):
        if status[n]:
            continue
        cfull = np.empty(2 * m, dtype=np.complex128)
        w = np.empty(m, dtype=np.complex128)
        cur = 0
        for s in range(n_steps_block):
            if nonlinear:
                _build_full(a[n], dummy, dummy, False, 0.0, nf, cfull)
                _contract(cfull, sym_out, sym_p, sym_q, sym_c, w)
            xsq = 0.0
            for j in range(m):
                tmp = a[n, j]
                if j < nf:
                    tmp = tmp + noise_block[n, s, j]
                if nonlinear:
                    tmp = tmp - dt * (1j * w[j])
                tmp = decay[j] * tmp
                a[n, j] = tmp
                xsq += 2.0 * (tmp.real * tmp.real + tmp.imag * tmp.imag)
            ens = 0.0
            for j in range(m):
                ens += 2.0 * ksq[j] * (a[n, j].real ** 2 + a[n, j].imag ** 2)
            diss[n] += 0.5 * dt * nu * (ens_prev[n] + ens)
            ens_prev[n] = ens
            if xsq > _BLOWUP_SQ or not np.isfinite(xsq):
                status[n] = 1
                break
            if cur < n_rec and rec_local[cur] == s:
                row = rec_rows[cur]
                for j in range(m):
                    rec_amps[row, n, j] = a[n, j]
                rec_diss[row, n] = diss[n]
                cur += 1


@njit(cache=True, parallel=True)
def _coupled_block(
    a, h, logm, venergy, sup_zh, status,
    noise_block, decay, ksq, dt, stiff, steps_to_one, step0,
    zl_band, q_band,
    sym_out, sym_p, sym_q, sym_c,
    nf, rec_local, rec_rows,
    rec_x, rec_h, rec_logm, rec_ve, rec_zh,
):
    n_paths, m = a.shape
    n_steps_block = noise_block.shape[1]
    n_rec = rec_local.shape[0]
    for n in prange(n_paths):
        if status[n]:
            continue
        cfull = np.empty(2 * m, dtype=np.complex128)
        wx = np.empty(m, dtype=np.complex128)
        wy = np.empty(m, dtype=np.complex128)
        cur = 0
        for s in range(n_steps_block):
            i_glob = step0 + s
            t = i_glob * dt
            before_one = i_glob < steps_to_one
            fac = 1.0 - t if before_one else 0.0
            _build_full(a[n], h[n], zl_band, False, 0.0, nf, cfull)
            _contract(cfull, sym_out, sym_p, sym_q, sym_c, wx)
            _build_full(a[n], h[n], zl_band, True, fac, nf, cfull)
            _contract(cfull, sym_out, sym_p, sym_q, sym_c, wy)
            # control on the forced band; g = B(Y) - B(X) amplitudes
            v_sq = 0.0
            v_dot = 0.0
            for j in range(nf):
                g = 1j * (wy[j] - wx[j])
                if before_one:
                    raw = -zl_band[j] + (fac * stiff * ksq[j]) * zl_band[j] + g
                else:
                    raw = g
                v = raw / q_band[j]
                dw_raw = noise_block[n, s, j] / q_band[j]
                v_sq += 2.0 * (v.real * v.real + v.imag * v.imag)
                v_dot += 2.0 * (v.real * dw_raw.real + v.imag * dw_raw.imag)
            logm[n] = logm[n] - v_dot - 0.5 * v_sq * dt
            venergy[n] = venergy[n] + v_sq * dt
            # high-frequency residual step, then the X step
            zh_sq = 0.0
            for j in range(nf, m):
                g = 1j * (wy[j] - wx[j])
                hv = decay[j] * (h[n, j] - dt * g)
                h[n, j] = hv
                zh_sq += 2.0 * (hv.real * hv.real + hv.imag * hv.imag)
            xsq = 0.0
            for j in range(m):
                tmp = a[n, j]
                if j < nf:
                    tmp = tmp + noise_block[n, s, j]
                tmp = tmp - dt * (1j * wx[j])
                tmp = decay[j] * tmp
                a[n, j] = tmp
                xsq += 2.0 * (tmp.real * tmp.real + tmp.imag * tmp.imag)
            if i_glob + 1 <= steps_to_one and zh_sq > sup_zh[n]:
                sup_zh[n] = zh_sq
            if xsq > _BLOWUP_SQ or not np.isfinite(xsq) or not np.isfinite(zh_sq):
                status[n] = 1
                break
            if cur < n_rec and rec_local[cur] == s:
                row = rec_rows[cur]
                for j in range(m):
                    rec_x[row, n, j] = a[n, j]
                    rec_h[row, n, j] = h[n, j]
                rec_logm[row, n] = logm[n]
                rec_ve[row, n] = venergy[n]
                rec_zh[row, n] = zh_sq
                cur += 1


def _record_nodes(record_times, dt: float, steps: int) -> np.ndarray:
    nodes = []
    for t in record_times:
        i = int(round(t / dt))
        if i < 0 or i > steps or abs(i * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"record time {t} is not on the grid (dt={dt}, T={steps * dt})")
        nodes.append(i)
    out = np.array(sorted(set(nodes)), dtype=np.int64)
    if len(out) != len(nodes):
        raise ValueError("record times must be distinct")
    return out


def _scaled_noise(gens, n_steps_block: int, q: np.ndarray, dt: float) -> np.ndarray:
    nf = q.shape[0]
    raw = np.empty((len(gens), n_steps_block, nf, 2))
    for i, g in enumerate(gens):
        g.standard_normal(out=raw[i])
    scale = q * np.sqrt(dt / 2.0)
    return (raw[..., 0] + 1j * raw[..., 1]) * scale


@dataclass
class DirectBatch:
    """Recorded snapshots of a batch of direct simulations."""

    times: np.ndarray          # (R,)
    amps: np.ndarray           # (R, n_paths, M) complex
    dissipation: np.ndarray    # (R, n_paths)


@dataclass
class CoupledBatch:
    """Recorded snapshots of a batch of coupled trajectories."""

    times: np.ndarray
    x_amps: np.ndarray         # (R, n_paths, M)
    zh_amps: np.ndarray        # (R, n_paths, M)
    log_weight: np.ndarray     # (R, n_paths)
    v_energy: np.ndarray       # (R, n_paths)
    zh_sq: np.ndarray          # (R, n_paths)
    sup_zh_sq_unit: np.ndarray # (n_paths,) sup over nodes t in [0, min(1,T)]
    zl0_amps: np.ndarray       # (M,) low-band initial separation

    def zl_factor(self, r: int) -> float:
        t = self.times[r]
        return 1.0 - t if t < 1.0 else 0.0

    def y_amps(self, r: int) -> np.ndarray:
        """Coupled-trajectory amplitudes Y = X + Z at record index r."""
        return self.x_amps[r] + self.zh_amps[r] + self.zl_factor(r) * self.zl0_amps


def run_direct_batch(
    x0: FourierField,
    T: float,
    dt: float,
    params: PhysicsParams,
    noise: NoiseOperator | None,
    n_paths: int,
    master_seed: int,
    record_times,
    nonlinear: bool = True,
    path_offset: int = 0,
    chunk_paths: int = 2048,
    block_steps: int = 256,
) -> DirectBatch:
    """Simulate n_paths independent copies from x0; snapshot at record_times.

    noise=None runs the unforced (deterministic) equation.
    """
    params.validate_against(x0.grid)
    ws = make_workspace(x0.grid.n_max)
    grid = x0.grid
    m = grid.n_modes
    steps = n_steps(T, dt)
    rec_nodes = _record_nodes(record_times, dt, steps)
    n_rec = rec_nodes.shape[0]
    nf = noise.n_forced if noise is not None else 0
    q_amps = noise.q if noise is not None else np.zeros(0)
    decay = np.exp(-params.nu * grid.ksq.astype(np.float64) * dt)
    ksq = grid.ksq.astype(np.float64)

    rec_amps = np.empty((n_rec, n_paths, m), dtype=np.complex128)
    rec_diss = np.empty((n_rec, n_paths))
    ens0 = 2.0 * float(np.sum(ksq * np.abs(x0.amps) ** 2))

    for c0 in range(0, n_paths, chunk_paths):
        c1 = min(c0 + chunk_paths, n_paths)
        nc = c1 - c0
        a = np.tile(x0.amps, (nc, 1))
        diss = np.zeros(nc)
        ens_prev = np.full(nc, ens0)
        status = np.zeros(nc, dtype=np.uint8)
        gens = [path_rng(master_seed, path_offset + i) for i in range(c0, c1)]
        done = 0
        while done < steps:
            nb = min(block_steps, steps - done)
            noise_block = _scaled_noise(gens, nb, q_amps, dt)
            in_block = (rec_nodes > done) & (rec_nodes <= done + nb)
            rec_local = (rec_nodes[in_block] - done - 1).astype(np.int64)
            rec_rows = np.nonzero(in_block)[0].astype(np.int64)
            _direct_block(
                a, diss, ens_prev, status,
                noise_block, decay, ksq, dt, params.nu, nonlinear,
                ws.sym_out, ws.sym_p, ws.sym_q, ws.sym_coeff,
                nf, rec_local, rec_rows,
                rec_amps[:, c0:c1, :], rec_diss[:, c0:c1],
            )
            done += nb
        if np.any(status):
            raise BlowUpError(float(steps * dt))
        for r, node in enumerate(rec_nodes):
            if node == 0:
                rec_amps[r, c0:c1, :] = x0.amps
                rec_diss[r, c0:c1] = 0.0

    return DirectBatch(times=rec_nodes * dt, amps=rec_amps, dissipation=rec_diss)


def run_coupled_batch(
    x0: FourierField,
    y0: FourierField,
    T: float,
    dt: float,
    params: PhysicsParams,
    noise: NoiseOperator,
    n_paths: int,
    master_seed: int,
    record_times,
    nu_in_control: bool = True,
    path_offset: int = 0,
    chunk_paths: int = 2048,
    block_steps: int = 256,
) -> CoupledBatch:
    """Co-evolve X, Z_high, log-weight and control energy on n_paths streams.

    Path i consumes the same noise as path i of run_direct_batch(x0, ...),
    so weighted estimates and direct estimates share base randomness.
    """
    params.validate_against(x0.grid)
    ws = make_workspace(x0.grid.n_max)
    grid = x0.grid
    m = grid.n_modes
    steps = n_steps(T, dt)
    if T >= 1.0:
        steps_to_one = int(round(1.0 / dt))
        if abs(steps_to_one * dt - 1.0) > 1e-9:
            raise ValueError(f"dt={dt} must divide the schedule switch time t=1")
    else:
        steps_to_one = steps + 1
    rec_nodes = _record_nodes(record_times, dt, steps)
    n_rec = rec_nodes.shape[0]
    nf = noise.n_forced
    decay = np.exp(-params.nu * grid.ksq.astype(np.float64) * dt)
    ksq = grid.ksq.astype(np.float64)
    stiff = params.nu if nu_in_control else 1.0

    z = y0 - x0
    zl0, zh0 = split_low_high(params.n_forced, z)
    zl_band = zl0.amps[:nf].copy()
    zh0_sq = zh0.norm() ** 2

    rec_x = np.empty((n_rec, n_paths, m), dtype=np.complex128)
    rec_h = np.empty((n_rec, n_paths, m), dtype=np.complex128)
    rec_logm = np.empty((n_rec, n_paths))
    rec_ve = np.empty((n_rec, n_paths))
    rec_zh = np.empty((n_rec, n_paths))
    sup_all = np.empty(n_paths)

    for c0 in range(0, n_paths, chunk_paths):
        c1 = min(c0 + chunk_paths, n_paths)
        nc = c1 - c0
        a = np.tile(x0.amps, (nc, 1))
        h = np.tile(zh0.amps, (nc, 1))
        logm = np.zeros(nc)
        venergy = np.zeros(nc)
        sup_zh = np.full(nc, zh0_sq)
        status = np.zeros(nc, dtype=np.uint8)
        gens = [path_rng(master_seed, path_offset + i) for i in range(c0, c1)]
        done = 0
        while done < steps:
            nb = min(block_steps, steps - done)
            noise_block = _scaled_noise(gens, nb, noise.q, dt)
            in_block = (rec_nodes > done) & (rec_nodes <= done + nb)
            rec_local = (rec_nodes[in_block] - done - 1).astype(np.int64)
            rec_rows = np.nonzero(in_block)[0].astype(np.int64)
            _coupled_block(
                a, h, logm, venergy, sup_zh, status,
                noise_block, decay, ksq, dt, stiff, steps_to_one, done,
                zl_band, noise.q,
                ws.sym_out, ws.sym_p, ws.sym_q, ws.sym_coeff,
                nf, rec_local, rec_rows,
                rec_x[:, c0:c1, :], rec_h[:, c0:c1, :],
                rec_logm[:, c0:c1], rec_ve[:, c0:c1], rec_zh[:, c0:c1],
            )
            done += nb
        if np.any(status):
            raise BlowUpError(float(steps * dt))
        sup_all[c0:c1] = sup_zh
        for r, node in enumerate(rec_nodes):
            if node == 0:
                rec_x[r, c0:c1, :] = x0.amps
                rec_h[r, c0:c1, :] = zh0.amps
                rec_logm[r, c0:c1] = 0.0
                rec_ve[r, c0:c1] = 0.0
                rec_zh[r, c0:c1] = zh0_sq

    return CoupledBatch(
        times=rec_nodes * dt,
        x_amps=rec_x,
        zh_amps=rec_h,
        log_weight=rec_logm,
        v_energy=rec_ve,
        zh_sq=rec_zh,
        sup_zh_sq_unit=sup_all,
        zl0_amps=zl0.amps.copy(),
    )
