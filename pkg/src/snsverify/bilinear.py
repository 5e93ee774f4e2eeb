"""The Navier-Stokes bilinear term B(u,v) = P[(u.grad)v] at Galerkin truncation.

The term is evaluated as an exact convolution over the truncated index set:
the raw output coefficient is

    w_k = sum_{p+q=k} i (u_p . q) v_q,   all of p, q, k inside the ball,

followed by the Leray projection.  In stream-amplitude form every pair
(p, q) contributes a precomputed real weight

    R(k; p, q) = cross(p, q) * dot(q, k) / (|p| |q| |k|),

so the projected output amplitude is i * sum R * c_p * c_q, with c the
full-lattice amplitudes.  Pairs with an exactly zero weight (p collinear
with q, or q orthogonal to k) are pruned from the table; they contribute
nothing to any field.

For the equal-arguments case B(u) = B(u,u) the (p,q) and (q,p) weights
combine to

    S(k; p, q) = cross(p, q) * (|q|^2 - |p|^2) / (|p| |q| |k|),

which also vanishes for |p| = |q|; the symmetric table is roughly half the
size of the general one and is what the batched simulation kernels use.

No aliasing error exists by construction: the convolution is the exact sum.
`bilinear_reference` re-computes it as a naive double loop over all mode
pairs without any index table, as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .spectral import (
    FourierField,
    SpectralGrid,
    _check_same_grid,
    leray_project,
    make_grid,
    velocity_coeffs,
)


@dataclass(frozen=True)
class BilinearWorkspace:
    """Precomputed convolution index tables for one truncation radius.

    full_k lists both members of every conjugate pair; pos_idx/neg_idx map
    half-lattice slots to their full-lattice rows.  The general table
    (out_idx, p_idx, q_idx, coeff) covers every ordered in-truncation pair
    with nonzero weight; the symmetric table covers unordered pairs for the
    equal-arguments fast path.
    """

    grid: SpectralGrid
    full_k: np.ndarray = field(repr=False)      # (F, 2) int64
    pos_idx: np.ndarray = field(repr=False)     # (M,) int32: full row of +k
    neg_idx: np.ndarray = field(repr=False)     # (M,) int32: full row of -k
    out_idx: np.ndarray = field(repr=False)     # general table
    p_idx: np.ndarray = field(repr=False)
    q_idx: np.ndarray = field(repr=False)
    coeff: np.ndarray = field(repr=False)
    sym_out: np.ndarray = field(repr=False)     # symmetric table
    sym_p: np.ndarray = field(repr=False)
    sym_q: np.ndarray = field(repr=False)
    sym_coeff: np.ndarray = field(repr=False)


@lru_cache(maxsize=None)
def make_workspace(n_max: int) -> BilinearWorkspace:
    grid = make_grid(n_max)
    half = grid.half_k
    m = grid.n_modes
    full = np.concatenate([half, -half], axis=0)
    pos = np.arange(m, dtype=np.int32)
    neg = np.arange(m, 2 * m, dtype=np.int32)
    lookup = {(int(k1), int(k2)): i for i, (k1, k2) in enumerate(full)}
    absk = np.sqrt((full[:, 0] ** 2 + full[:, 1] ** 2).astype(np.float64))

    out_l, p_l, q_l, c_l = [], [], [], []
    sout_l, sp_l, sq_l, sc_l = [], [], [], []
    for mi in range(m):
        k1, k2 = int(half[mi, 0]), int(half[mi, 1])
        kk = grid.kabs[mi]
        for pi, (p1, p2) in enumerate(full):
            q1, q2 = k1 - int(p1), k2 - int(p2)
            qi = lookup.get((q1, q2))
            if qi is None:
                continue
            cross = int(p1) * q2 - int(p2) * q1
            dot_qk = q1 * k1 + q2 * k2
            if cross != 0 and dot_qk != 0:
                out_l.append(mi)
                p_l.append(pi)
                q_l.append(qi)
                c_l.append(cross * dot_qk / (absk[pi] * absk[qi] * kk))
            # symmetric table: each unordered pair once (p < q); the folded
            # weight cross(p,q)*(|q|^2-|p|^2) has its own exact-zero set
            if pi < qi:
                psq = int(p1) ** 2 + int(p2) ** 2
                qsq = q1 ** 2 + q2 ** 2
                if cross != 0 and qsq != psq:
                    sout_l.append(mi)
                    sp_l.append(pi)
                    sq_l.append(qi)
                    sc_l.append(cross * (qsq - psq) / (absk[pi] * absk[qi] * kk))

    return BilinearWorkspace(
        grid=grid,
        full_k=full,
        pos_idx=pos,
        neg_idx=neg,
        out_idx=np.asarray(out_l, dtype=np.int32),
        p_idx=np.asarray(p_l, dtype=np.int32),
        q_idx=np.asarray(q_l, dtype=np.int32),
        coeff=np.asarray(c_l, dtype=np.float64),
        sym_out=np.asarray(sout_l, dtype=np.int32),
        sym_p=np.asarray(sp_l, dtype=np.int32),
        sym_q=np.asarray(sq_l, dtype=np.int32),
        sym_coeff=np.asarray(sc_l, dtype=np.float64),
    )


def full_amplitudes(u: FourierField) -> np.ndarray:
    """Amplitudes on the full lattice: c_{+k} = a_k, c_{-k} = -conj(a_k)."""
    return np.concatenate([u.amps, -np.conj(u.amps)])


def _segment_sum(idx: np.ndarray, values: np.ndarray, m: int) -> np.ndarray:
    re = np.bincount(idx, weights=values.real, minlength=m)
    im = np.bincount(idx, weights=values.imag, minlength=m)
    return re + 1j * im


def bilinear_b(u: FourierField, v: FourierField) -> FourierField:
    """Galerkin-truncated B(u, v) via the precomputed general table."""
    _check_same_grid(u, v)
    ws = make_workspace(u.grid.n_max)
    cu = full_amplitudes(u)
    cv = full_amplitudes(v)
    prod = ws.coeff * cu[ws.p_idx] * cv[ws.q_idx]
    return FourierField(u.grid, 1j * _segment_sum(ws.out_idx, prod, u.grid.n_modes))


def bilinear_b_same(u: FourierField) -> FourierField:
    """B(u, u) via the symmetric table (identical result, half the work)."""
    ws = make_workspace(u.grid.n_max)
    c = full_amplitudes(u)
    prod = ws.sym_coeff * c[ws.sym_p] * c[ws.sym_q]
    return FourierField(u.grid, 1j * _segment_sum(ws.sym_out, prod, u.grid.n_modes))


def bilinear_b_tilde(u: FourierField, v: FourierField) -> FourierField:
    """Symmetrized term B(u,v) + B(v,u)."""
    return bilinear_b(u, v) + bilinear_b(v, u)


def bilinear_b_low(u: FourierField, v: FourierField, n0: int) -> FourierField:
    """Low-band part of B(u,v): modes |k| <= n0 only."""
    out = bilinear_b(u, v)
    cut = u.grid.band_size(n0)
    amps = np.zeros_like(out.amps)
    amps[:cut] = out.amps[:cut]
    return FourierField(u.grid, amps)


def bilinear_reference(u: FourierField, v: FourierField) -> FourierField:
    """Brute-force oracle: naive double loop over all mode pairs, no tables.

    Builds the raw C^2 coefficients w_k = sum i (u_p . q) v_q by iterating
    over every ordered pair of full-lattice modes, then projects.  Kept
    deliberately independent of the table machinery.
    """
    _check_same_grid(u, v)
    grid = u.grid
    uc = velocity_coeffs(u)
    vc = velocity_coeffs(v)
    coeffs: dict[tuple[int, int], np.ndarray] = {}
    modes = []
    for i, (k1, k2) in enumerate(grid.half_k):
        modes.append(((int(k1), int(k2)), uc[i], vc[i]))
        modes.append(((-int(k1), -int(k2)), np.conj(uc[i]), np.conj(vc[i])))
    nsq = grid.n_max * grid.n_max
    for (p1, p2), up, _ in modes:
        for (q1, q2), _, vq in modes:
            k = (p1 + q1, p2 + q2)
            ksq = k[0] * k[0] + k[1] * k[1]
            if ksq == 0 or ksq > nsq:
                continue
            w = coeffs.setdefault(k, np.zeros(2, dtype=np.complex128))
            w += 1j * (up[0] * q1 + up[1] * q2) * vq
    raw = np.zeros((grid.n_modes, 2), dtype=np.complex128)
    for i, (k1, k2) in enumerate(grid.half_k):
        w = coeffs.get((int(k1), int(k2)))
        if w is not None:
            raw[i] = w
    return leray_project(grid, raw)


def full_amplitudes_batch(amps: np.ndarray) -> np.ndarray:
    """Full-lattice amplitudes for a (B, M) half-lattice batch."""
    return np.concatenate([amps, -np.conj(amps)], axis=1)


def bilinear_b_batch(u_amps: np.ndarray, v_amps: np.ndarray, n_max: int,
                     chunk: int = 2000) -> np.ndarray:
    """B(u, v) amplitudes for batches of fields, rows independent.

    Same exact convolution as bilinear_b, vectorized over the leading axis
    with the general table; memory is bounded by processing `chunk` rows at
    a time.
    """
    ws = make_workspace(n_max)
    m = u_amps.shape[1]
    starts = np.flatnonzero(np.diff(ws.out_idx, prepend=-1))
    group_modes = ws.out_idx[starts]
    out = np.zeros((u_amps.shape[0], m), dtype=np.complex128)
    for lo in range(0, u_amps.shape[0], chunk):
        hi = min(lo + chunk, u_amps.shape[0])
        cu = full_amplitudes_batch(u_amps[lo:hi])
        cv = full_amplitudes_batch(v_amps[lo:hi])
        prod = ws.coeff * cu[:, ws.p_idx] * cv[:, ws.q_idx]
        sums = np.add.reduceat(prod, starts, axis=1)
        out[lo:hi, group_modes] = 1j * sums
    return out


def adjoint_first_slot(x: FourierField, z: FourierField) -> FourierField:
    """The field G with inner(G, y) = inner(x, B(y, z)) for every y.

    Used by the constant-certification ascent; verified against the direct
    trilinear form in the tests.
    """
    _check_same_grid(x, z)
    ws = make_workspace(x.grid.n_max)
    m = x.grid.n_modes
    cz = full_amplitudes(z)
    vals = 1j * ws.coeff * np.conj(x.amps[ws.out_idx]) * cz[ws.q_idx]
    s = _segment_sum(ws.p_idx, vals, 2 * m)
    return FourierField(x.grid, np.conj(s[ws.pos_idx]) - s[ws.neg_idx])
