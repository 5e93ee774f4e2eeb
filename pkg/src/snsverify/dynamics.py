"""Base stochastic dynamics: degenerate forcing and the exponential Euler scheme.

The state equation is

    dX + [nu A X + B(X, X)] dt = Q dW,    X(0) = x0,

with Q acting only on modes |k| <= n0 (invertibly there, zero above).  One
time step of the scheme is, per mode,

    a_k(t+dt) = exp(-nu |k|^2 dt) * (a_k(t) - dt [B(X,X)]_k + dW_k),

exact on the Stokes semigroup and explicit in the bilinear term.  Noise
increments are stored with the path because the coupling construction
consumes the same realization.

This module is the single-path reference implementation; `engine` holds the
batched Monte Carlo kernels and is cross-checked against it in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bilinear import bilinear_b_same
from .spectral import FourierField, SpectralGrid, PhysicsParams, zero_field

BLOWUP_NORM = 1.0e6   # |X| beyond this is treated as an integrator failure


class BlowUpError(RuntimeError):
    """Simulation left the physically meaningful range."""

    def __init__(self, t: float):
        super().__init__(f"state blew up at t={t:.6g} (|X| > {BLOWUP_NORM:g})")
        self.t = t


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream for one path; independent of scheduling."""
    key = np.array([master_seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoiseOperator:
    """Covariance operator Q: per-mode amplitudes on the band |k| <= n0.

    q holds one positive amplitude per forced half-lattice mode (the band
    is a prefix of the canonical mode order).  tr(QQ*) counts both members
    of each conjugate pair, i.e. one q_k^2 per real degree of freedom, so a
    Wiener increment has E|dW|^2 = tr_qq * dt.  c0 is the operator norm of
    Q^{-1} on the forced band.
    """

    grid: SpectralGrid
    n0: int
    q: np.ndarray = field(repr=False)   # (n_forced,) float64, > 0

    def __post_init__(self):
        if self.n0 < 1 or self.n0 > self.grid.n_max:
            raise ValueError(f"forcing radius {self.n0} outside [1, {self.grid.n_max}]")
        q = np.asarray(self.q, dtype=np.float64)
        nf = self.grid.band_size(self.n0)
        if q.shape != (nf,):
            raise ValueError(f"expected {nf} forced amplitudes, got {q.shape}")
        if not np.all(q > 0):
            raise ValueError("all forced amplitudes must be positive (Q invertible on the band)")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n_forced(self) -> int:
        return self.q.shape[0]

    @property
    def tr_qq(self) -> float:
        return float(2.0 * np.sum(self.q**2))

    @property
    def c0(self) -> float:
        return float(1.0 / np.min(self.q))

    def apply_inverse_band(self, amps_low: np.ndarray) -> np.ndarray:
        """Q^{-1} on the forced band (per-mode division)."""
        return amps_low / self.q


def uniform_noise(grid: SpectralGrid, n0: int, amplitude: float) -> NoiseOperator:
    """q_k = amplitude on every mode |k| <= n0."""
    if amplitude <= 0:
        raise ValueError("noise amplitude must be positive")
    return NoiseOperator(grid, n0, np.full(grid.band_size(n0), float(amplitude)))


def wiener_increment(noise: NoiseOperator, dt: float, rng: np.random.Generator) -> FourierField:
    """One increment Q dW: amplitude q_k (g1 + i g2)/sqrt(2) * sqrt(dt) per forced mode."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = rng.standard_normal((noise.n_forced, 2))
    amps = np.zeros(noise.grid.n_modes, dtype=np.complex128)
    amps[: noise.n_forced] = noise.q * (g[:, 0] + 1j * g[:, 1]) * np.sqrt(dt / 2.0)
    return FourierField(noise.grid, amps)


def _decay_factors(grid: SpectralGrid, nu: float, dt: float) -> np.ndarray:
    return np.exp(-nu * grid.ksq.astype(np.float64) * dt)


def step_exponential_euler(
    x: FourierField,
    dw: FourierField,
    dt: float,
    params: PhysicsParams,
    nonlinear: bool = True,
) -> FourierField:
    """One integrator step; `nonlinear=False` drops B for the linear regime."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.all(np.isfinite(x.amps.view(np.float64))):
        raise BlowUpError(float("nan"))
    a = x.amps + dw.amps
    if nonlinear:
        a = a - dt * bilinear_b_same(x).amps
    return FourierField(x.grid, _decay_factors(x.grid, params.nu, dt) * a)


def n_steps(T: float, dt: float) -> int:
    """Number of steps; requires dt to divide T."""
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return steps


@dataclass
class SdePath:
    """One realized path with per-node states and running dissipation.

    dissipation[i] = nu * int_0^{t_i} |A^{1/2} X|^2 ds  (trapezoidal), and
    increments[i] is the Q dW consumed by step i (needed by the coupling).
    """

    times: np.ndarray
    states: list[FourierField]
    dissipation: np.ndarray
    increments: list[FourierField]

    def node_index(self, t: float) -> int:
        dt = self.times[1] - self.times[0]
        i = int(round(t / dt))
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not on the time grid")
        return i

    def state(self, t: float) -> FourierField:
        return self.states[self.node_index(t)]


def simulate_x(
    x0: FourierField,
    T: float,
    dt: float,
    params: PhysicsParams,
    noise: NoiseOperator | None,
    seed: int,
    path_index: int = 0,
    nonlinear: bool = True,
) -> SdePath:
    """Simulate the base equation; deterministic given (seed, path_index).

    noise=None runs the unforced (deterministic) equation.
    """
    params.validate_against(x0.grid)
    steps = n_steps(T, dt)
    rng = path_rng(seed, path_index)
    grid = x0.grid
    ksq = grid.ksq.astype(np.float64)

    times = np.arange(steps + 1) * dt
    states = [x0]
    increments: list[FourierField] = []
    diss = np.zeros(steps + 1)
    enstrophy_prev = 2.0 * np.sum(ksq * np.abs(x0.amps) ** 2)

    zero_dw = FourierField(grid, np.zeros(grid.n_modes, dtype=np.complex128))
    x = x0
    for i in range(steps):
        dw = wiener_increment(noise, dt, rng) if noise is not None else zero_dw
        x = step_exponential_euler(x, dw, dt, params, nonlinear=nonlinear)
        if not np.all(np.isfinite(x.amps.view(np.float64))) or x.norm() > BLOWUP_NORM:
            raise BlowUpError(times[i + 1])
        enstrophy = 2.0 * np.sum(ksq * np.abs(x.amps) ** 2)
        diss[i + 1] = diss[i] + 0.5 * dt * params.nu * (enstrophy_prev + enstrophy)
        enstrophy_prev = enstrophy
        states.append(x)
        increments.append(dw)

    return SdePath(times=times, states=states, dissipation=diss, increments=increments)


def energy_functional(path: SdePath, t: float) -> float:
    """|X(t)|^2 + nu int_0^t |A^{1/2}X|^2 ds at a grid time."""
    i = path.node_index(t)
    return path.states[i].norm() ** 2 + float(path.dissipation[i])


def path_to_csv(path: SdePath) -> str:
    """Rows (t, |X|^2, |A^{1/2}X|^2, dissipation) per node."""
    import csv as _csv
    import io as _io

    grid = path.states[0].grid
    ksq = grid.ksq.astype(np.float64)
    buf = _io.StringIO()
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x_sq", "enstrophy", "dissipation"])
    for t, s, d in zip(path.times, path.states, path.dissipation):
        w.writerow([
            repr(float(t)),
            repr(s.norm() ** 2),
            repr(float(2.0 * np.sum(ksq * np.abs(s.amps) ** 2))),
            repr(float(d)),
        ])
    return buf.getvalue()
