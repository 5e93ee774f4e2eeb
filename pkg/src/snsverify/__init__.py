"""Spectral Galerkin simulator and verification harness for 2D stochastic
Navier-Stokes with degenerate low-mode forcing.

Subpackage map:

* spectral   - divergence-free fields on the torus, Stokes calculus
* bilinear   - the advection bilinear term at truncation (tables + oracle)
* dynamics   - degenerate noise, exponential Euler, single-path reference
* coupling   - low-mode schedule, high-mode residual, Girsanov control
* bounds     - certified constants, explicit envelopes, hypothesis gates
* engine     - batched Monte Carlo kernels (numba)
* estimators - semigroup / entropy / moment / distance estimators, reports
* config     - strict JSON experiment configuration
* campaigns  - the verification campaigns behind the CLI
* cli        - command-line entry point
"""

from .spectral import (
    FourierField,
    GridMismatchError,
    PhysicsParams,
    SpectralGrid,
    inner,
    leray_project,
    make_grid,
    sobolev_norm,
    split_low_high,
    stokes_apply,
    zero_field,
)
from .bilinear import bilinear_b, bilinear_b_low, bilinear_b_tilde, bilinear_reference
from .bounds import BoundConstants, HypothesisError, bound_constants, hypothesis_report
from .config import ExperimentConfig
from .dynamics import (
    BlowUpError,
    NoiseOperator,
    SdePath,
    energy_functional,
    simulate_x,
    step_exponential_euler,
    uniform_noise,
    wiener_increment,
)
from .coupling import CouplingTrajectory, control_v, run_coupled, step_zh, zl_schedule
from .estimators import (
    Estimate,
    InequalityReport,
    PseudoMetric,
    SimSettings,
    TestFunction,
    dgamma_distance_bounds,
    entropy_estimate,
    entropy_inequality_check,
    exp_moment_check,
    gradient_probe,
    mlh_check,
    semigroup_estimate,
    weighted_semigroup_estimate,
    zh_moment_decay,
)

__version__ = "0.1.0"
