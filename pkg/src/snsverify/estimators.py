"""Monte Carlo estimators, test functions, and inequality reports.

Statistical conventions, used uniformly:

* every estimator is a deterministic function of (master seed, settings);
  per-path values are reduced with exactly rounded summation (math.fsum),
  so results are bit-identical across re-runs and thread counts;
* an `Estimate` carries (mean, stderr, n, ci95); a one-sided inequality
  check passes when  lhs.mean - 3 * lhs.stderr <= rhs  (about 99.7%
  one-sided confidence), recorded in an `InequalityReport`;
* weighted (reweighted-measure) estimators use plain unnormalized products
  exp(log M) * g, whose base-measure mean is the reweighted expectation;
  the effective sample size (sum w)^2 / sum w^2 below 10 raises a warning
  flag in the result instead of silently degrading;
* heavy-tailed exponential moments are aggregated in log space and get a
  bootstrap confidence interval (200 resamples) instead of a normal one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundConstants, HypothesisError, _require
from .dynamics import NoiseOperator, path_rng
from .engine import CoupledBatch, DirectBatch, run_coupled_batch, run_direct_batch
from .spectral import FourierField, PhysicsParams, split_low_high

ESS_WARN_THRESHOLD = 10.0


@dataclass(frozen=True)
class SimSettings:
    """Knobs shared by every estimator run."""

    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 2024
    nonlinear: bool = True
    nu_in_control: bool = True
    chunk_paths: int = 2048
    block_steps: int = 256

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo result with its sampling uncertainty."""

    mean: float
    stderr: float
    n: int
    ci95: tuple[float, float]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an estimate needs at least two samples")
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")
        if not (self.ci95[0] <= self.mean <= self.ci95[1]):
            raise ValueError("ci95 must contain the mean")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n,
                "ci95": [self.ci95[0], self.ci95[1]]}


def sample_estimate(values) -> Estimate:
    """Mean / stderr / normal CI with exactly rounded reductions."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n < 2:
        raise ValueError("need at least two samples")
    mean = math.fsum(v.tolist()) / n
    var = math.fsum(((x - mean) ** 2 for x in v.tolist())) / (n - 1)
    stderr = math.sqrt(var / n)
    return Estimate(mean=mean, stderr=stderr, n=n,
                    ci95=(mean - 1.96 * stderr, mean + 1.96 * stderr))


def exact_estimate(value: float, n: int) -> Estimate:
    """A degenerate (zero-variance) estimate, e.g. t = 0 or constant f."""
    return Estimate(mean=value, stderr=0.0, n=max(n, 2), ci95=(value, value))


def _logsumexp(a: np.ndarray) -> float:
    amax = float(np.max(a))
    if not math.isfinite(amax):
        return amax
    return amax + math.log(math.fsum(np.exp(a - amax).tolist()))


@dataclass(frozen=True)
class InequalityReport:
    """One verified inequality: estimated left side against a bound."""

    name: str
    lhs: Estimate
    rhs: float
    margin: float
    margin_sigmas: float
    passed: bool
    inputs: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs,
            "margin": self.margin,
            "margin_sigmas": self.margin_sigmas,
            "pass": self.passed,
            "inputs": self.inputs,
            "extra": self.extra,
        }


def make_report(name: str, lhs: Estimate, rhs: float, inputs: dict, extra: dict | None = None) -> InequalityReport:
    margin = rhs - lhs.mean
    sigmas = margin / lhs.stderr if lhs.stderr > 0 else math.inf * (1 if margin >= 0 else -1)
    passed = lhs.mean - 3.0 * lhs.stderr <= rhs
    return InequalityReport(
        name=name, lhs=lhs, rhs=float(rhs), margin=float(margin),
        margin_sigmas=float(sigmas), passed=bool(passed),
        inputs=inputs, extra=extra or {},
    )


# ---------------------------------------------------------------------------
# test functions

@dataclass(frozen=True)
class TestFunction:
    """Bounded differentiable f >= 1 with closed-form derivative bounds.

    gauss_bump:          f(u) = 1 + a exp(-|P_m u - c|^2 / s^2)
    coordinate_sigmoid:  f(u) = 1 + a (1 + tanh(<P_m u, c> / s)) / 2

    P_m is the band projection onto modes |k| <= band; c is the center
    (respectively direction) field, band-projected.  Since f >= 1, the
    bound |D log f| <= |Df| <= sup_df holds everywhere.
    """

    __test__ = False   # not a pytest collectable despite the name

    kind: str
    center: FourierField
    scale: float
    amplitude: float
    band: int
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("gauss_bump", "coordinate_sigmoid"):
            raise ValueError(f"unknown test function kind '{self.kind}'")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative (f >= 1)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def _cut(self) -> int:
        return self.center.grid.band_size(self.band)

    @property
    def sup_f(self) -> float:
        return 1.0 + self.amplitude

    @property
    def sup_df(self) -> float:
        if self.kind == "gauss_bump":
            return self.amplitude * math.sqrt(2.0) * math.exp(-0.5) / self.scale
        dir_norm = math.sqrt(2.0 * float(np.sum(np.abs(self.center.amps[: self._cut]) ** 2)))
        return self.amplitude * dir_norm / (2.0 * self.scale)

    @property
    def sup_dlogf(self) -> float:
        return self.sup_df

    def evaluate_batch(self, amps: np.ndarray) -> np.ndarray:
        """f over a (n_paths, M) amplitude array."""
        cut = self._cut
        c = self.center.amps[:cut]
        a = amps[:, :cut]
        if self.kind == "gauss_bump":
            r_sq = 2.0 * np.sum(np.abs(a - c) ** 2, axis=1)
            return 1.0 + self.amplitude * np.exp(-r_sq / self.scale**2)
        phi = 2.0 * np.sum(a.real * c.real + a.imag * c.imag, axis=1)
        return 1.0 + 0.5 * self.amplitude * (1.0 + np.tanh(phi / self.scale))

    def evaluate(self, u: FourierField) -> float:
        return float(self.evaluate_batch(u.amps[None, :])[0])

    def derivative_along(self, u: FourierField, h: FourierField) -> float:
        """Analytic directional derivative Df(u) . h."""
        cut = self._cut
        c = self.center.amps[:cut]
        a = u.amps[:cut]
        hb = h.amps[:cut]
        if self.kind == "gauss_bump":
            r_sq = 2.0 * float(np.sum(np.abs(a - c) ** 2))
            dot = 2.0 * float(np.sum((a - c).real * hb.real + (a - c).imag * hb.imag))
            return self.amplitude * math.exp(-r_sq / self.scale**2) * (-2.0 / self.scale**2) * dot
        phi = 2.0 * float(np.sum(a.real * c.real + a.imag * c.imag))
        dot = 2.0 * float(np.sum(hb.real * c.real + hb.imag * c.imag))
        return 0.5 * self.amplitude / (self.scale * math.cosh(phi / self.scale) ** 2) * dot

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "scale": self.scale,
            "amplitude": self.amplitude,
            "band": self.band,
            "sup_f": self.sup_f,
            "sup_df": self.sup_df,
            "sup_dlogf": self.sup_dlogf,
        }


@dataclass(frozen=True)
class PseudoMetric:
    """d_gamma(x, y) = min(1, |x - y| / gamma): bounded, totally separating."""

    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def of_norm(self, diff_norm) -> np.ndarray:
        return np.minimum(1.0, np.asarray(diff_norm, dtype=np.float64) / self.gamma)


# ---------------------------------------------------------------------------
# direct-semigroup estimators

def _direct_snapshots(x0, t_list, settings, params, noise, path_offset=0) -> DirectBatch:
    T = max(t_list)
    return run_direct_batch(
        x0, T, settings.dt, params, noise, settings.n_paths, settings.seed,
        record_times=sorted(set(t_list)), nonlinear=settings.nonlinear,
        path_offset=path_offset, chunk_paths=settings.chunk_paths,
        block_steps=settings.block_steps,
    )


def semigroup_estimate(
    f: TestFunction,
    x0: FourierField,
    t: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    batch: DirectBatch | None = None,
) -> Estimate:
    """Plain Monte Carlo estimate of E f(X(t)) from n_paths copies."""
    if t == 0.0:
        return exact_estimate(f.evaluate(x0), settings.n_paths)
    if f.amplitude == 0.0:
        return exact_estimate(1.0, settings.n_paths)
    if batch is None:
        batch = _direct_snapshots(x0, [t], settings, params, noise)
    r = int(np.argmin(np.abs(batch.times - t)))
    if abs(batch.times[r] - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"time {t} not recorded in batch")
    return sample_estimate(f.evaluate_batch(batch.amps[r]))


@dataclass(frozen=True)
class WeightedEstimate:
    """Importance-weighted estimate plus weight diagnostics."""

    estimate: Estimate
    ess: float
    warn_low_ess: bool
    max_log_weight: float
    min_log_weight: float

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "ess": self.ess,
            "warn_low_ess": self.warn_low_ess,
            "max_log_weight": self.max_log_weight,
            "min_log_weight": self.min_log_weight,
        }


def _weight_diagnostics(logm: np.ndarray) -> tuple[float, bool, float, float]:
    w = np.exp(logm)
    sw = math.fsum(w.tolist())
    sw2 = math.fsum((w**2).tolist())
    ess = sw * sw / sw2 if sw2 > 0 else 0.0
    return ess, ess < ESS_WARN_THRESHOLD, float(np.max(logm)), float(np.min(logm))


def _coupled_snapshots(x0, y0, t_list, settings, params, noise, path_offset=0) -> CoupledBatch:
    T = max(t_list)
    return run_coupled_batch(
        x0, y0, T, settings.dt, params, noise, settings.n_paths, settings.seed,
        record_times=sorted(set(t_list)), nu_in_control=settings.nu_in_control,
        path_offset=path_offset, chunk_paths=settings.chunk_paths,
        block_steps=settings.block_steps,
    )


def _batch_index(times: np.ndarray, t: float) -> int:
    r = int(np.argmin(np.abs(times - t)))
    if abs(times[r] - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"time {t} not recorded in batch")
    return r


def weighted_semigroup_estimate(
    f: TestFunction,
    x0: FourierField,
    y0: FourierField,
    t: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    batch: CoupledBatch | None = None,
) -> WeightedEstimate:
    """Estimate of (P_t f)(y0) by reweighted coupled trajectories.

    Mean of exp(log M_t) f(Y(t)) over the coupled batch; reduces bitwise to
    the direct estimator when x0 = y0 (weights are identically one and
    Y = X).
    """
    if t == 0.0:
        return WeightedEstimate(estimate=exact_estimate(f.evaluate(y0), settings.n_paths),
                                ess=float(settings.n_paths), warn_low_ess=False,
                                max_log_weight=0.0, min_log_weight=0.0)
    if batch is None:
        batch = _coupled_snapshots(x0, y0, [t], settings, params, noise)
    r = _batch_index(batch.times, t)
    logm = batch.log_weight[r]
    values = np.exp(logm) * f.evaluate_batch(batch.y_amps(r))
    est = sample_estimate(values)
    ess, warn, mx, mn = _weight_diagnostics(logm)
    return WeightedEstimate(estimate=est, ess=ess, warn_low_ess=warn,
                            max_log_weight=mx, min_log_weight=mn)


def girsanov_mean_weight(
    x0: FourierField,
    y0: FourierField,
    t: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    batch: CoupledBatch | None = None,
) -> Estimate:
    """E exp(log M_t); equals one exactly for the discrete chain."""
    if t == 0.0:
        return exact_estimate(1.0, settings.n_paths)
    if batch is None:
        batch = _coupled_snapshots(x0, y0, [t], settings, params, noise)
    r = _batch_index(batch.times, t)
    return sample_estimate(np.exp(batch.log_weight[r]))


# ---------------------------------------------------------------------------
# entropy and moment estimators

@dataclass(frozen=True)
class EntropyEstimate:
    """Relative entropy of the coupling shift, two estimator forms."""

    primary: Estimate        # weighted 1/2 int |v|^2
    cross_check: Estimate    # E[M log M]
    ess: float
    warn_low_ess: bool

    def to_dict(self) -> dict:
        return {
            "primary": self.primary.to_dict(),
            "cross_check": self.cross_check.to_dict(),
            "ess": self.ess,
            "warn_low_ess": self.warn_low_ess,
        }


def entropy_estimate(
    x0: FourierField,
    y0: FourierField,
    t: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    batch: CoupledBatch | None = None,
) -> EntropyEstimate:
    """Estimate 1/2 E-tilde int_0^t |v|^2 ds, plus the M log M cross-form."""
    if (y0 - x0).norm() == 0.0 or t == 0.0:
        z = exact_estimate(0.0, settings.n_paths)
        return EntropyEstimate(primary=z, cross_check=z, ess=float(settings.n_paths),
                               warn_low_ess=False)
    if batch is None:
        batch = _coupled_snapshots(x0, y0, [t], settings, params, noise)
    r = _batch_index(batch.times, t)
    logm = batch.log_weight[r]
    w = np.exp(logm)
    primary = sample_estimate(w * 0.5 * batch.v_energy[r])
    cross = sample_estimate(w * logm)
    ess, warn, _, _ = _weight_diagnostics(logm)
    return EntropyEstimate(primary=primary, cross_check=cross, ess=ess, warn_low_ess=warn)


def exp_moment_check(
    x0: FourierField,
    t: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    batch: DirectBatch | None = None,
    n_bootstrap: int = 200,
) -> InequalityReport:
    """E exp(|X(t)|^2 + nu int_0^t |A^{1/2}X|^2)  <=  exp(|x0|^2 + tr(QQ*) t).

    Gated on nu > 2 tr(QQ*).  The left side is heavy-tailed, so the mean is
    aggregated by log-sum-exp and the stderr comes from a bootstrap.
    """
    _require("nu > 2 tr(QQ*)", params.nu, 2.0 * noise.tr_qq)
    if batch is None:
        batch = _direct_snapshots(x0, [t], settings, params, noise)
    r = _batch_index(batch.times, t)
    x_sq = 2.0 * np.sum(np.abs(batch.amps[r]) ** 2, axis=1)
    exponent = x_sq + batch.dissipation[r]
    n = exponent.size
    log_mean = _logsumexp(exponent) - math.log(n)
    mean = math.exp(log_mean)

    rng = path_rng(settings.seed, 0xB007)
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n, n)
        boots[b] = math.exp(_logsumexp(exponent[idx]) - math.log(n))
    stderr = float(np.std(boots, ddof=1))
    lo = min(float(np.percentile(boots, 2.5)), mean)
    hi = max(float(np.percentile(boots, 97.5)), mean)
    lhs = Estimate(mean=mean, stderr=stderr, n=n, ci95=(lo, hi))
    rhs = math.exp(x0.norm() ** 2 + noise.tr_qq * t)
    return make_report(
        "exponential_energy_moment", lhs, rhs,
        inputs={"x0_norm": x0.norm(), "t": t, "nu": params.nu, "tr_qq": noise.tr_qq,
                "n_paths": n, "dt": settings.dt, "seed": settings.seed},
        extra={"log_mean": log_mean, "bootstrap_resamples": n_bootstrap},
    )


@dataclass(frozen=True)
class ZhDecayReport:
    """High-frequency moment decay against its explicit envelope."""

    p: int
    sup_unit: Estimate
    sup_envelope: float
    sup_passed: bool
    t_grid: list[float]
    moments: list[Estimate]
    envelopes: list[float]
    point_passed: list[bool]
    fitted_rate: float
    envelope_rate: float
    inputs: dict

    @property
    def all_passed(self) -> bool:
        return self.sup_passed and all(self.point_passed)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "sup_unit": self.sup_unit.to_dict(),
            "sup_envelope": self.sup_envelope,
            "sup_pass": self.sup_passed,
            "t_grid": list(self.t_grid),
            "moments": [m.to_dict() for m in self.moments],
            "envelopes": list(self.envelopes),
            "point_pass": list(self.point_passed),
            "fitted_rate": self.fitted_rate,
            "envelope_rate": self.envelope_rate,
            "pass": self.all_passed,
            "inputs": self.inputs,
        }


def zh_moment_decay(
    p: int,
    x0: FourierField,
    y0: FourierField,
    t_grid,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    consts: BoundConstants,
    batch: CoupledBatch | None = None,
) -> ZhDecayReport:
    """Moments E |Z_high(t)|^{2p} on t_grid (all > 1) against the envelope.

    Also checks E sup_{[0,1]} |Z_high|^{2p} against its unit-interval bound
    and fits a log-linear decay rate to the positive sample means.
    """
    t_grid = [float(t) for t in t_grid]
    if len(t_grid) < 3:
        raise ValueError("need at least 3 grid points for a decay fit")
    if any(t <= 1.0 for t in t_grid):
        raise ValueError("decay grid must lie in t > 1")
    z_norm = (y0 - x0).norm()
    x_norm = x0.norm()
    # evaluates the K_p hypotheses up front (raises HypothesisError if violated)
    consts.kp(p, z_norm)

    if batch is None:
        batch = _coupled_snapshots(x0, y0, t_grid, settings, params, noise)

    sup_vals = batch.sup_zh_sq_unit**p
    sup_est = sample_estimate(sup_vals)
    sup_env = consts.zh_sup_envelope(p, x_norm, z_norm)
    sup_pass = sup_est.mean - 3.0 * sup_est.stderr <= sup_env

    moments, envelopes, passed = [], [], []
    for t in t_grid:
        r = _batch_index(batch.times, t)
        est = sample_estimate(batch.zh_sq[r] ** p)
        env = consts.zh_decay_envelope(p, x_norm, z_norm, t)
        moments.append(est)
        envelopes.append(env)
        passed.append(est.mean - 3.0 * est.stderr <= env)

    ts, logs, wts = [], [], []
    for t, est in zip(t_grid, moments):
        if est.mean > 0.0:
            rel = est.stderr / est.mean if est.mean > 0 else math.inf
            ts.append(t)
            logs.append(math.log(est.mean))
            wts.append(1.0 / max(rel, 1e-6) ** 2)
    if len(ts) >= 3:
        wts = np.asarray(wts)
        ts_a = np.asarray(ts)
        logs_a = np.asarray(logs)
        wsum = wts.sum()
        tbar = float((wts * ts_a).sum() / wsum)
        lbar = float((wts * logs_a).sum() / wsum)
        slope = float((wts * (ts_a - tbar) * (logs_a - lbar)).sum()
                      / (wts * (ts_a - tbar) ** 2).sum())
    else:
        # identical starts give identically zero moments; no rate to fit
        slope = math.nan

    return ZhDecayReport(
        p=p,
        sup_unit=sup_est,
        sup_envelope=sup_env,
        sup_passed=bool(sup_pass),
        t_grid=t_grid,
        moments=moments,
        envelopes=envelopes,
        point_passed=[bool(b) for b in passed],
        fitted_rate=slope,
        envelope_rate=-(2.0 * params.nu * p * params.n_forced**2 - noise.tr_qq),
        inputs={"x0_norm": x_norm, "z_norm": z_norm, "n_paths": settings.n_paths,
                "dt": settings.dt, "seed": settings.seed},
    )


# ---------------------------------------------------------------------------
# the semigroup comparison check and the gradient probe

def mlh_check(
    f: TestFunction,
    x0: FourierField,
    y0: FourierField,
    t: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    consts: BoundConstants,
    shrink: float = 1.0,
    coupled: CoupledBatch | None = None,
    direct: DirectBatch | None = None,
) -> InequalityReport:
    """Check  P_t log f(y0) <= log P_t f(x0) + C-terms + delta(t)-term.

    The left side is the weighted estimate of E log f at y0 through the
    coupling; the right side is assembled from the bounds module around the
    direct estimate of P_t f(x0).  `shrink` > 1 divides the additive
    constants (forced-failure mode, for certifying non-vacuity).
    """
    consts.check_main_hypotheses()
    z_norm = (y0 - x0).norm()

    if t == 0.0:
        lhs = exact_estimate(math.log(f.evaluate(y0)), settings.n_paths)
        ess, warn, mx, mn = float(settings.n_paths), False, 0.0, 0.0
    else:
        if coupled is None:
            coupled = _coupled_snapshots(x0, y0, [t], settings, params, noise)
        r = _batch_index(coupled.times, t)
        logm = coupled.log_weight[r]
        fy = f.evaluate_batch(coupled.y_amps(r))
        lhs = sample_estimate(np.exp(logm) * np.log(fy))
        ess, warn, mx, mn = _weight_diagnostics(logm)

    direct_est = semigroup_estimate(f, x0, t, settings, params, noise, batch=direct)
    # f >= 1 pointwise, so the sample mean is >= 1 and the log is defined
    log_ptf_x = math.log(direct_est.mean)
    rhs = consts.mlh_rhs(log_ptf_x, z_norm, f.sup_dlogf, t, y0.norm(), shrink=shrink)

    return make_report(
        "modified_log_harnack", lhs, rhs,
        inputs={
            "x0_norm": x0.norm(), "y0_norm": y0.norm(), "z_norm": z_norm, "t": t,
            "f": f.describe(), "n_paths": settings.n_paths, "dt": settings.dt,
            "seed": settings.seed, "shrink": shrink,
        },
        extra={
            "log_ptf_x": log_ptf_x,
            "direct_estimate": direct_est.to_dict(),
            "ess": ess, "warn_low_ess": warn,
            "max_log_weight": mx, "min_log_weight": mn,
        },
    )


@dataclass(frozen=True)
class GradientProbeReport:
    """Difference quotients of P_t f against the gradient-type envelope."""

    t: float
    rows: list[dict]
    all_passed: bool
    inputs: dict

    def to_dict(self) -> dict:
        return {"t": self.t, "rows": self.rows, "pass": self.all_passed,
                "inputs": self.inputs}


def gradient_probe(
    f: TestFunction,
    x0: FourierField,
    directions: list[FourierField],
    t: float,
    eps_list,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    consts: BoundConstants,
) -> GradientProbeReport:
    """|P_t f(x0 + eps h) - P_t f(x0)| / eps under common random numbers.

    Compared against the envelope  sup_f^2 + C (1 + eps^2)
    + 2 delta(t) Ctilde sup_df  obtained from the comparison inequality
    with the free parameter set to eps.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    rows = []
    if t == 0.0:
        base_val = f.evaluate(x0)
        for hi, h in enumerate(directions):
            for eps in eps_list:
                quotient = abs(f.evaluate(x0 + eps * h) - base_val) / eps
                env = _probe_envelope(f, consts, x0, h, eps, t)
                rows.append({
                    "direction": hi, "eps": eps,
                    "quotient": {"mean": quotient, "stderr": 0.0},
                    "envelope": env, "pass": quotient <= env,
                })
        return GradientProbeReport(
            t=t, rows=rows, all_passed=all(r["pass"] for r in rows),
            inputs={"x0_norm": x0.norm(), "n_paths": settings.n_paths,
                    "eps_list": eps_list, "f": f.describe()},
        )

    base = _direct_snapshots(x0, [t], settings, params, noise)
    r0 = _batch_index(base.times, t)
    f_base = f.evaluate_batch(base.amps[r0])
    for hi, h in enumerate(directions):
        for eps in eps_list:
            shifted = _direct_snapshots(x0 + eps * h, [t], settings, params, noise)
            f_shift = f.evaluate_batch(shifted.amps[_batch_index(shifted.times, t)])
            diff = sample_estimate((f_shift - f_base) / eps)
            quotient = abs(diff.mean)
            env = _probe_envelope(f, consts, x0, h, eps, t)
            rows.append({
                "direction": hi, "eps": eps,
                "quotient": {"mean": quotient, "stderr": diff.stderr},
                "envelope": env,
                "pass": quotient - 3.0 * diff.stderr <= env,
            })
    return GradientProbeReport(
        t=t, rows=rows, all_passed=all(r["pass"] for r in rows),
        inputs={"x0_norm": x0.norm(), "n_paths": settings.n_paths,
                "eps_list": eps_list, "f": f.describe(), "dt": settings.dt,
                "seed": settings.seed},
    )


def _probe_envelope(f, consts, x0, h, eps, t) -> float:
    y_norm = (x0 + eps * h).norm()
    c = consts.mlh_c(y_norm, eps)
    ctilde = consts.mlh_ctilde(y_norm, eps)
    return f.sup_f**2 + c * (1.0 + eps**2) + 2.0 * consts.delta(t) * ctilde * f.sup_df


# ---------------------------------------------------------------------------
# pseudo-metric distance bounds (synchronous coupling + dual dictionary)

def _dictionary(grid, gamma, x0, y0, t, params, size, seed):
    """Deterministic dual dictionary: d_gamma balls and clipped ramps.

    Every member has Lipschitz constant <= 1 with respect to d_gamma and
    sup-norm <= 1, so each gives a valid lower bound for the coupling
    distance via duality.
    """
    if size < 1:
        raise ValueError("dictionary must not be empty")
    rng = path_rng(seed, 0xD1C7)
    decay = np.exp(-params.nu * grid.ksq.astype(np.float64) * t)
    anchors = [FourierField(grid, decay * x0.amps), FourierField(grid, decay * y0.amps)]
    members = []
    for j in range(size):
        base = anchors[j % 2]
        jitter = 0.25 * gamma * (j // 2) / max(size // 2, 1)
        g = rng.standard_normal((grid.n_modes, 2))
        pert = FourierField(grid, jitter * (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2.0))
        center = base + pert
        if j % 3 == 2:
            gdir = rng.standard_normal((grid.n_modes, 2))
            d = FourierField(grid, (gdir[:, 0] + 1j * gdir[:, 1]) / np.sqrt(2.0))
            d = (1.0 / d.norm()) * d
            members.append(("ramp", center, d))
        else:
            members.append(("ball", center, None))
    return members


def _phi_values(member, amps: np.ndarray, gamma: float) -> np.ndarray:
    kind, center, direction = member
    diff = amps - center.amps
    if kind == "ball":
        norms = np.sqrt(2.0 * np.sum(np.abs(diff) ** 2, axis=1))
        return np.minimum(1.0, norms / gamma)
    dots = 2.0 * np.sum(diff.real * direction.amps.real + diff.imag * direction.amps.imag, axis=1)
    return 0.5 * np.clip(dots / gamma, -1.0, 1.0)


def dgamma_distance_bounds(
    x0: FourierField,
    y0: FourierField,
    t: float,
    gamma: float,
    settings: SimSettings,
    params: PhysicsParams,
    noise: NoiseOperator,
    dictionary_size: int = 32,
    batches: tuple[DirectBatch, DirectBatch] | None = None,
) -> tuple[Estimate, Estimate, dict]:
    """Coupling upper bound and dual-dictionary lower bound for the
    d_gamma transportation distance between the laws at time t.

    Upper: mean d_gamma(X^x(t), X^y(t)) under the synchronous coupling
    (same noise for both starts).  Lower: max over the dictionary of
    |E phi(X^x(t)) - E phi(X^y(t))|.
    """
    metric = PseudoMetric(gamma)
    if batches is None:
        a = _direct_snapshots(x0, [t], settings, params, noise)
        b = _direct_snapshots(y0, [t], settings, params, noise)
    else:
        a, b = batches
    ra = _batch_index(a.times, t)
    rb = _batch_index(b.times, t)
    amps_a = a.amps[ra]
    amps_b = b.amps[rb]
    diff_norm = np.sqrt(2.0 * np.sum(np.abs(amps_a - amps_b) ** 2, axis=1))
    upper = sample_estimate(metric.of_norm(diff_norm))

    members = _dictionary(x0.grid, gamma, x0, y0, t, params, dictionary_size, settings.seed)
    best = None
    best_abs = -1.0
    for member in members:
        paired = _phi_values(member, amps_a, gamma) - _phi_values(member, amps_b, gamma)
        est = sample_estimate(paired)
        if abs(est.mean) > best_abs:
            best_abs = abs(est.mean)
            best = est
    lower = Estimate(mean=abs(best.mean), stderr=best.stderr, n=best.n,
                     ci95=(max(0.0, abs(best.mean) - 1.96 * best.stderr),
                           abs(best.mean) + 1.96 * best.stderr))
    extra = {"dictionary_size": dictionary_size, "gamma": gamma, "t": t,
             "sandwich_ok": lower.mean - 3.0 * lower.stderr
             <= upper.mean + 3.0 * upper.stderr}
    return upper, lower, extra


# ---------------------------------------------------------------------------
# the variational entropy inequality on empirical measures

def entropy_inequality_check(f_samples, g_samples) -> InequalityReport:
    """E[f g] <= E f log E e^g + E[f log f] - E f log E f  on the empirical
    measure of the given samples (exact, not statistical).
    """
    fv = np.asarray(f_samples, dtype=np.float64)
    gv = np.asarray(g_samples, dtype=np.float64)
    if fv.size != gv.size:
        raise ValueError("f and g sample arrays must have equal length")
    if fv.size < 2:
        raise ValueError("need at least two samples")
    if np.any(fv < 0):
        raise ValueError("f must be nonnegative")
    n = fv.size
    mean_f = math.fsum(fv.tolist()) / n
    if mean_f <= 0.0:
        raise ValueError("mean of f must be positive (f identically zero)")
    lhs_val = math.fsum((fv * gv).tolist()) / n
    log_mean_eg = _logsumexp(gv) - math.log(n)
    flogf = np.where(fv > 0, fv * np.log(np.where(fv > 0, fv, 1.0)), 0.0)
    mean_flogf = math.fsum(flogf.tolist()) / n
    rhs = mean_f * log_mean_eg + mean_flogf - mean_f * math.log(mean_f)
    tol = 1e-12 * max(1.0, abs(rhs))
    passed = lhs_val <= rhs + tol
    lhs = exact_estimate(lhs_val, n)
    margin = rhs - lhs_val
    return InequalityReport(
        name="variational_entropy_inequality",
        lhs=lhs, rhs=float(rhs), margin=float(margin),
        margin_sigmas=math.inf if margin >= 0 else -math.inf,
        passed=bool(passed),
        inputs={"n": n},
        extra={"mean_f": mean_f, "relative_tolerance": 1e-12},
    )
