"""Closed-form constants and assembled right-hand sides of the inequality suite.

Everything here is a pure function of its inputs; repeated calls agree
bitwise.  Two families:

* certified bilinear constants valid for every field the truncation can
  represent:

      |<x, B(y,z)>|  <=  C1 |x| |y| |A^{3/2} z|
      |<x, B(y,z)>|  <=  C2 |x|^{1/2}|A^{1/2}x|^{1/2} |y|^{1/2}|A^{1/2}y|^{1/2} |A^{1/2}z|
      |B_low(x,y)|   <=  C1 N0^3 |x| |y|

  C1 comes from the Cauchy-Schwarz chain through the lattice sum
  sum |k|^{-4} (partial sum plus an analytic tail bound, so the value is a
  true upper bound at any truncation).  C2 is found by alternating exact
  block maximization of the trilinear ratio from random restarts, then
  multiplied by a safety factor; the tests certify zero violations on
  fresh random triples.

* the explicit constants of the high-frequency decay and entropy bounds:
  K_p, L1..L4, the decay exponent nu*N0^2 - tr(QQ*)/2, and the assembled
  right-hand side of the semigroup comparison

      P_t log f(y) <= log P_t f(x) + 1/2 (L1+L3)|z|^4 + 1/2 (L2+L4)|z|^2
                      + exp{-(nu N0^2 - tr/2) t + |y|^2 + nu N0^2}
                        sqrt(K_1) |z| ||D log f||_inf,      z = y - x.

Hypotheses are strict inequalities; a boundary value fails the check and
raises `HypothesisError` naming the condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bilinear import adjoint_first_slot, bilinear_b
from .dynamics import NoiseOperator
from .spectral import (
    FourierField,
    PhysicsParams,
    SpectralGrid,
    inner,
    make_grid,
    random_field,
    sobolev_norm,
    stokes_apply,
)


class HypothesisError(ValueError):
    """A strict parameter hypothesis fails; carries the named condition."""

    def __init__(self, name: str, lhs: float, rhs: float):
        super().__init__(f"hypothesis '{name}' fails: {lhs:.6g} <= {rhs:.6g}")
        self.name = name
        self.lhs = lhs
        self.rhs = rhs


def inverse_quartic_lattice_sum(radius: int = 100) -> float:
    """Upper bound for sum over k in Z^2 minus 0 of |k|^{-4}.

    Direct summation over 0 < |k| <= radius plus the tail bound
    sum_{|k| > R} |k|^{-4} <= 2 pi / R^2 (integral comparison with margin;
    checked numerically in the tests).
    """
    r2 = radius * radius
    k = np.arange(-radius, radius + 1)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    s = (k1 * k1 + k2 * k2).astype(np.float64)
    mask = (s > 0) & (s <= r2)
    partial = float(np.sum(s[mask] ** -2.0))
    return partial + 2.0 * math.pi / r2


@lru_cache(maxsize=None)
def constant_c1(n_max: int) -> float:
    """Certified constant for |<x,B(y,z)>| <= C1 |x||y||A^{3/2}z|.

    The chain |<x,B(y,z)>| <= sum |y_p||q||z_q||x_{p+q}| <= |x||y| sum |q||z_q|
    <= sqrt(sum |q|^{-4}) |x||y| |A^{3/2}z| holds for any truncation, so the
    constant does not actually depend on n_max; the argument is kept for
    interface symmetry with constant_c2.
    """
    del n_max
    return math.sqrt(inverse_quartic_lattice_sum())


def _ratio_c2(x: FourierField, y: FourierField, z: FourierField) -> float:
    den = (
        math.sqrt(x.norm() * sobolev_norm(0.5, x))
        * math.sqrt(y.norm() * sobolev_norm(0.5, y))
        * sobolev_norm(0.5, z)
    )
    if den == 0.0:
        return 0.0
    return abs(inner(x, bilinear_b(y, z))) / den


def _best_resolvent(b: FourierField, n_mu: int = 160) -> FourierField:
    """Maximize |<x,b>| / sqrt(|x| |A^{1/2}x|) over x = (I + mu A)^{-1} b."""
    grid = b.grid
    ksq = grid.ksq.astype(np.float64)
    best_val, best_x = -1.0, b
    for mu in np.logspace(-8.0, 8.0, n_mu):
        amps = b.amps / (1.0 + mu * ksq)
        x = FourierField(grid, amps)
        den = math.sqrt(x.norm() * sobolev_norm(0.5, x))
        if den == 0.0:
            continue
        val = abs(inner(x, b)) / den
        if val > best_val:
            best_val, best_x = val, x
    return best_x


@lru_cache(maxsize=None)
def constant_c2(n_max: int, restarts: int = 24, iters: int = 40,
                seed: int = 1805, safety: float = 1.5) -> float:
    """Certified constant for the Ladyzhenskaya-type trilinear bound.

    Alternating exact block maximization of the ratio: the z block has the
    closed-form optimum z = A^{-1} w with w = -B(y,x) (skew symmetry turns
    the z dependence into a linear functional), and the x and y blocks
    reduce to a one-parameter resolvent family.  The supremum over random
    restarts is multiplied by `safety`.
    """
    grid = make_grid(n_max)
    rng = np.random.default_rng(seed)

    def unit(u: FourierField) -> FourierField:
        n = u.norm()
        return u if n == 0.0 else (1.0 / n) * u

    best = 0.0
    for _ in range(restarts):
        x = unit(random_field(grid, rng))
        y = unit(random_field(grid, rng))
        z = unit(random_field(grid, rng))
        prev = 0.0
        for _ in range(iters):
            w = -1.0 * bilinear_b(y, x)
            if w.norm() == 0.0:
                break
            z = unit(stokes_apply(-1.0, w))
            x = unit(_best_resolvent(bilinear_b(y, z)))
            y = unit(_best_resolvent(adjoint_first_slot(x, z)))
            val = _ratio_c2(x, y, z)
            if not math.isfinite(val) or val <= prev * (1.0 + 1e-10):
                prev = max(prev, val) if math.isfinite(val) else prev
                break
            prev = val
        best = max(best, prev)
    return safety * best


def _require(name: str, lhs: float, rhs: float) -> None:
    if not lhs > rhs:
        raise HypothesisError(name, lhs, rhs)


@dataclass(frozen=True)
class BoundConstants:
    """All base constants for one (grid, physics, noise) configuration.

    The z- and y-dependent quantities (K_p, L_i, assembled right-hand
    sides) are exposed as methods; alpha_exponents/beta_exponent record the
    powers of |x-y| appearing in the comparison inequality.
    """

    c0: float
    c1: float
    c2: float
    tr_qq: float
    nu: float
    n0: int

    alpha_exponents: tuple[int, int] = (2, 4)
    beta_exponent: int = 1

    @property
    def delta_rate(self) -> float:
        """Decay exponent of delta(t) = exp(-(nu N0^2 - tr(QQ*)/2) t)."""
        return self.nu * self.n0**2 - 0.5 * self.tr_qq

    def delta(self, t: float) -> float:
        return math.exp(-self.delta_rate * t)

    def kp(self, p: int, z_norm: float) -> float:
        """High-frequency moment constant K_p at separation |z|."""
        if p < 1 or int(p) != p:
            raise ValueError(f"p must be a positive integer, got {p}")
        _require(f"nu > C2 sqrt(p/2) [p={p}]", self.nu, self.c2 * math.sqrt(p / 2.0))
        _require("nu > 2 tr(QQ*)", self.nu, 2.0 * self.tr_qq)
        if z_norm < 0:
            raise ValueError("z_norm must be nonnegative")
        n0sq = float(self.n0**2)
        n0cu = float(self.n0**3)
        expo = self.c1 * p * n0sq * (z_norm**2 + z_norm) + 0.5 * self.c1 * p * n0cu + self.tr_qq
        base = (1.0 + self.c1 * n0cu + 0.25 * self.nu * n0sq) ** p
        ratio = (self.c2**2 / (4.0 * self.nu) + 0.5 * self.c1 * n0cu) ** p
        scale = (self.c2**2 * p / (4.0 * self.nu)) ** (-p)
        return 2.0 ** (p - 1) * math.exp(expo) * (base + math.factorial(p) * ratio * scale)

    def l_constants(self, y_norm: float, z_norm: float) -> tuple[float, float, float, float]:
        """Control-energy constants L1..L4 at target norm |y|, separation |z|.

        K_2 enters all four, so the hypotheses of kp(2, .) are required on
        top of the denominator conditions.
        """
        n0sq = float(self.n0**2)
        _require("4 nu N0^2 > tr(QQ*)", 4.0 * self.nu * n0sq, self.tr_qq)
        _require("2 nu N0^2 > tr(QQ*)", 2.0 * self.nu * n0sq, self.tr_qq)
        k2 = self.kp(2, z_norm)
        c0sq = self.c0**2
        c1sq = self.c1**2
        n0_4 = float(self.n0**4)
        n0_6 = float(self.n0**6)
        ey = math.exp(y_norm**2)
        l1 = 24.0 * c0sq * c1sq * n0_6 * (1.0 + k2 * ey)
        l2 = 3.0 * c0sq * (
            4.0 * n0_4
            + 4.0 * math.sqrt(2.0) * c1sq * n0_6 * math.sqrt(1.0 + k2 * ey)
            * math.exp(0.5 * (y_norm**2 + self.tr_qq))
        )
        l3 = (
            2.0 * c0sq * c1sq * n0_6 * math.exp(2.0 * y_norm**2 + 4.0 * self.nu * n0sq) * k2
            / (4.0 * self.nu * n0sq - self.tr_qq)
        )
        l4 = (
            4.0 * c0sq * c1sq * n0_6 * math.sqrt(2.0 * k2)
            * math.exp(1.5 * y_norm**2 + 2.0 * self.nu * n0sq)
            / (2.0 * self.nu * n0sq - self.tr_qq)
        )
        return l1, l2, l3, l4

    def check_main_hypotheses(self) -> None:
        _require("nu N0^2 > tr(QQ*)/2", self.nu * self.n0**2, 0.5 * self.tr_qq)
        _require("nu > tr(QQ*)", self.nu, self.tr_qq)
        _require("nu > C2", self.nu, self.c2)

    def mlh_c(self, y_norm: float, z_norm: float) -> float:
        """Single constant C with C(|z|^2 + |z|^4) >= the quadratic terms."""
        l1, l2, l3, l4 = self.l_constants(y_norm, z_norm)
        return max(0.5 * (l1 + l3), 0.5 * (l2 + l4))

    def mlh_ctilde(self, y_norm: float, z_norm: float) -> float:
        """Coefficient of delta(t) |z| ||D log f||_inf in the comparison."""
        k1 = self.kp(1, z_norm)
        return math.exp(y_norm**2 + self.nu * self.n0**2) * math.sqrt(k1)

    def mlh_rhs(
        self,
        log_ptf_x: float,
        z_norm: float,
        dlogf_sup: float,
        t: float,
        y_norm: float,
        shrink: float = 1.0,
    ) -> float:
        """Assembled right-hand side of the semigroup comparison at time t.

        `shrink` divides the additive constants (forced-failure mode for
        non-vacuity checks); 1.0 is the honest bound.
        """
        self.check_main_hypotheses()
        l1, l2, l3, l4 = self.l_constants(y_norm, z_norm)
        k1 = self.kp(1, z_norm)
        quad = 0.5 * (l1 + l3) * z_norm**4 + 0.5 * (l2 + l4) * z_norm**2
        grad = (
            math.exp(-self.delta_rate * t + y_norm**2 + self.nu * self.n0**2)
            * math.sqrt(k1) * z_norm * dlogf_sup
        )
        return log_ptf_x + (quad + grad) / shrink

    def zh_sup_envelope(self, p: int, x_norm: float, z_norm: float) -> float:
        """Bound for E sup_{0<=t<=1} |Z_high(t)|^{2p} under the base measure."""
        return self.kp(p, z_norm) * math.exp(x_norm**2) * z_norm ** (2 * p)

    def zh_decay_envelope(self, p: int, x_norm: float, z_norm: float, t: float) -> float:
        """Bound for E |Z_high(t)|^{2p}, t > 1, under the base measure."""
        rate = 2.0 * self.nu * p * self.n0**2 - self.tr_qq
        return (
            math.exp(-rate * t)
            * self.kp(p, z_norm)
            * math.exp(2.0 * x_norm**2 + 2.0 * self.nu * p * self.n0**2)
            * z_norm ** (2 * p)
        )

    def entropy_envelope(self, y_norm: float, z_norm: float) -> float:
        """Bound for the relative entropy 1/2 E int |v|^2 of the coupling shift."""
        l1, l2, l3, l4 = self.l_constants(y_norm, z_norm)
        return 0.5 * ((l1 + l3) * z_norm**4 + (l2 + l4) * z_norm**2)


def bound_constants(grid: SpectralGrid, params: PhysicsParams, noise: NoiseOperator) -> BoundConstants:
    """Assemble the constants for a configuration (C2 is cached per grid)."""
    params.validate_against(grid)
    return BoundConstants(
        c0=noise.c0,
        c1=constant_c1(grid.n_max),
        c2=constant_c2(grid.n_max),
        tr_qq=noise.tr_qq,
        nu=params.nu,
        n0=params.n_forced,
    )


def hypothesis_report(
    params: PhysicsParams,
    noise: NoiseOperator,
    consts: BoundConstants,
    p_list: tuple[int, ...] = (1, 2),
) -> dict:
    """Evaluate every named hypothesis as a strict comparison of two numbers."""
    n0sq = float(params.n_forced**2)
    checks = [
        ("nu > 2 tr(QQ*)", params.nu, 2.0 * noise.tr_qq),
        ("nu > tr(QQ*)", params.nu, noise.tr_qq),
        ("nu > C2", params.nu, consts.c2),
        ("nu N0^2 > tr(QQ*)/2", params.nu * n0sq, 0.5 * noise.tr_qq),
        ("4 nu N0^2 > tr(QQ*)", 4.0 * params.nu * n0sq, noise.tr_qq),
        ("2 nu N0^2 > tr(QQ*)", 2.0 * params.nu * n0sq, noise.tr_qq),
    ]
    for p in p_list:
        checks.append((f"nu > C2 sqrt(p/2) [p={p}]", params.nu, consts.c2 * math.sqrt(p / 2.0)))
    out = [
        {"name": name, "lhs": float(lhs), "rhs": float(rhs), "pass": bool(lhs > rhs)}
        for name, lhs, rhs in checks
    ]
    return {"checks": out, "all_pass": all(c["pass"] for c in out)}


def constants_report(
    grid: SpectralGrid,
    params: PhysicsParams,
    noise: NoiseOperator,
    y_norm: float,
    z_norm: float,
    p_list: tuple[int, ...] = (1, 2),
) -> dict:
    """JSON-ready report: every named constant plus the hypothesis booleans."""
    consts = bound_constants(grid, params, noise)
    hyp = hypothesis_report(params, noise, consts, p_list)
    report = {
        "parameters": {
            "n_max": grid.n_max,
            "nu": params.nu,
            "n0": params.n_forced,
            "tr_qq": noise.tr_qq,
            "y_norm": y_norm,
            "z_norm": z_norm,
        },
        "c0": consts.c0,
        "c1": consts.c1,
        "c2": consts.c2,
        "tr_qq": consts.tr_qq,
        "delta_rate": consts.delta_rate,
        "alpha_exponents": list(consts.alpha_exponents),
        "beta_exponent": consts.beta_exponent,
        "hypotheses": hyp,
    }
    if hyp["all_pass"]:
        l1, l2, l3, l4 = consts.l_constants(y_norm, z_norm)
        report.update(
            {
                "k_p": {str(p): consts.kp(p, z_norm) for p in p_list},
                "l1": l1,
                "l2": l2,
                "l3": l3,
                "l4": l4,
                "mlh_c": consts.mlh_c(y_norm, z_norm),
                "mlh_ctilde": consts.mlh_ctilde(y_norm, z_norm),
            }
        )
    return report
