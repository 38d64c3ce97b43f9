"""Closed-form continuous-time attention over damped driven oscillators.

Keys and values are damped, driven harmonic oscillator trajectories with
exact closed-form solutions; queries are sinusoidal expansions; the
window-averaged attention logits reduce to exponential-trigonometric
kernels.  Every closed form ships with an independent numerical oracle.
"""

from .attention import (
    AttentionResult,
    attention_logit,
    driven_logit,
    hom_logit,
    masked_softmax,
    mean_value,
    softmax,
)
from .autodiff import Tape, Var, backward, softplus
from .core import (
    Critical,
    OscParams,
    Overdamped,
    Rng,
    State2,
    TimeGrid,
    Underdamped,
    classify_regime,
    normalize_times,
    rng_next_uniform,
)
from .driven import (
    ForcingExpansion,
    KeyTrajectory,
    SteadyState,
    eval_trajectory,
    rotate_steady_state,
    steady_state,
    transient_coeffs,
)
from .hat import (
    OscillatorBank,
    TrigPolynomial,
    bank_readout,
    damping_perturbation,
    fejer_approx,
    fejer_kernel_eval,
    hat_certificate,
    phase_shift,
    realize_bank,
)
from .kernels import kernel_C, kernel_I, kernel_S, kernel_tC, kernel_tS, particular_I1_I2
from .layer import AllocMeter, LayerParams, layer_forward
from .oracles import (
    OdeSystem,
    finite_diff,
    numerical_attention_layer,
    quad_gauss,
    quad_simpson,
    rk4_integrate,
)
from .propagator import Propagator, exp_At, expm_oracle, propagate
from .query import FrequencyGrid, QueryExpansion, RotatedQuery, fit_query, mean_query, rotate_query
from .toytrain import (
    ClassifyConfig,
    OscillatorBankClassifier,
    OscillatorSpectrumRegressor,
    RegressConfig,
    adamw_step,
    gen_classification,
    gen_regression,
    train_classifier,
    train_regressor,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
