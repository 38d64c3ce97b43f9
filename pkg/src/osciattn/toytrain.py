"""Trainable desk-scale experiments: frequency classification and forecasting.

Both models run their forward passes through the recorded tape so reverse
gradients cover every step end to end, and both follow the scikit-learn
protocol (fit / predict / get_params) over irregular (times, values)
sequences.

The classifier embeds the observations, fits their sinusoidal content on
the collocation grid, and attends over a bank of learnable oscillator key
slots scored by resonance: a non-negative query spectrum against each
slot's transfer magnitude |H_i(w)|.  The averaged inner-product logit is
linear in the signal and therefore flips sign with the signal's random
phase; the magnitude scoring is its phase-invariant counterpart and is what
makes per-class attention concentrate on the matching slot.  The regressor
uses the same scoring over scalar trapezoid features.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import _ops as om
from .autodiff import PoisonedGradientError, Tape, softplus
from .core import ParameterError, Rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
WARMUP_FRAC = 0.05


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class OptState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def cosine_warmup(step: int, total_steps: int, warmup_frac: float = WARMUP_FRAC) -> float:
    """Linear warmup into a cosine decay; the factor is 0 at step 0."""
    warmup = max(1, int(np.ceil(warmup_frac * total_steps)))
    if step < warmup:
        return step / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    return 0.5 * (1.0 + np.cos(np.pi * min(progress, 1.0)))


def adamw_step(params: dict, grads: dict, state: OptState, lr: float,
               weight_decay: float, schedule_factor: float = 1.0) -> dict:
    """One decoupled-weight-decay Adam update; mutates and returns params."""
    state.step += 1
    t = state.step
    lr_t = lr * schedule_factor
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] = ADAM_BETA1 * state.m[name] + (1 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1 - ADAM_BETA2) * g * g
        mhat = state.m[name] / (1 - ADAM_BETA1**t)
        vhat = state.v[name] / (1 - ADAM_BETA2**t)
        params[name] = p - lr_t * (mhat / (np.sqrt(vhat) + ADAM_EPS) + weight_decay * p)
    return params


def inv_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


# ---------------------------------------------------------------------------
# Configs and data generators
# ---------------------------------------------------------------------------

@dataclass
class ClassifyConfig:
    """Frequency-classification task; desk-scale defaults."""

    n_classes: int = 8
    seq_len: int = 32
    horizon: float = 5.0
    poisson_rate: float = 6.0
    amp_lo: float = 0.8
    amp_hi: float = 1.2
    noise_sigma: float = 0.05
    embed_dim: int = 32
    n_modes: int = 8
    mlp_hidden: int = 64
    n_train: int = 5000
    n_val: int = 1000
    omega_min: float = 2.0 * np.pi * 0.5
    delta_omega: float = 2.0 * np.pi * 0.1

    def class_freqs(self) -> np.ndarray:
        return self.omega_min + self.delta_omega * np.arange(self.n_classes)

    def mode_freqs(self) -> np.ndarray:
        if self.n_modes == self.n_classes:
            return self.class_freqs()
        return np.linspace(self.omega_min,
                           self.omega_min + self.delta_omega * (self.n_classes - 1),
                           self.n_modes)

    def __post_init__(self):
        if min(self.n_classes, self.seq_len, self.n_modes, self.embed_dim,
               self.mlp_hidden, self.n_train, self.n_val) <= 0:
            raise ParameterError("all classification sizes must be positive")
        if self.horizon <= 0 or self.poisson_rate <= 0 or self.noise_sigma < 0:
            raise ParameterError("invalid classification config")


@dataclass
class RegressConfig:
    """Multi-frequency forecasting task; defaults follow the toy recipe."""

    freqs: tuple = (2.0, 3.2, 4.4, 5.6, 6.0, 7.2, 8.0, 9.0)
    n_keys: int = 8
    t_future: float = 7.0
    gap_shape: int = 2
    gap_scale: float = 0.09
    noise_sigma: float = 0.1
    amp_lo: float = 0.5
    amp_hi: float = 1.5
    max_components: int = 3
    n_train: int = 2000
    n_val: int = 400

    def __post_init__(self):
        if self.n_keys <= 0 or self.t_future <= 0 or self.gap_scale <= 0:
            raise ParameterError("invalid regression config")


def _poisson_times(rng: Rng, n: int, horizon: float, rate: float) -> np.ndarray:
    gaps = np.array([rng.exponential(rate) for _ in range(n)])
    cum = np.cumsum(gaps)
    return cum / cum[-1] * horizon


def gen_classification(cfg: ClassifyConfig, rng: Rng, n: int | None = None):
    """Irregular single-sinusoid sequences with class = frequency index.

    Returns (sequences, labels); each sequence is (times, observations)
    with observations the noisy cos/sin pair of the class frequency at a
    random amplitude and phase.
    """
    n = cfg.n_train if n is None else n
    freqs = cfg.class_freqs()
    sequences = []
    labels = np.empty(n, dtype=int)
    for idx in range(n):
        label = rng.randint(cfg.n_classes)
        omega = freqs[label]
        times = _poisson_times(rng, cfg.seq_len, cfg.horizon, cfg.poisson_rate)
        amp = rng.uniform(cfg.amp_lo, cfg.amp_hi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        ph = omega * times + phase
        obs = amp * np.stack([np.cos(ph), np.sin(ph)], axis=1)
        obs = obs + cfg.noise_sigma * rng.normal_array(obs.shape)
        sequences.append((times, obs))
        labels[idx] = label
    return sequences, labels


def gen_regression(cfg: RegressConfig, rng: Rng, n: int | None = None):
    """Sparse positive-amplitude cosine mixtures observed irregularly.

    Gaps between observations are Gamma distributed; the target is the
    clean signal value at t_future.
    """
    n = cfg.n_train if n is None else n
    freqs = np.asarray(cfg.freqs, dtype=float)
    sequences, targets = [], np.empty(n)
    for idx in range(n):
        k = 1 + rng.randint(cfg.max_components)
        chosen = []
        while len(chosen) < k:
            c = rng.randint(freqs.size)
            if c not in chosen:
                chosen.append(c)
        amps = np.array([rng.uniform(cfg.amp_lo, cfg.amp_hi) for _ in chosen])
        times = []
        t = 0.0
        while True:
            gap = sum(rng.exponential(1.0) for _ in range(cfg.gap_shape)) * cfg.gap_scale
            t += gap
            if t >= cfg.t_future:
                break
            times.append(t)
        if len(times) < 4:
            times = list(np.linspace(0.3, cfg.t_future * 0.95, 4))
        times = np.asarray(times)
        clean = np.sum(amps[None, :] * np.cos(np.outer(times, freqs[chosen])), axis=1)
        obs = clean + cfg.noise_sigma * rng.normal_array(times.shape)
        sequences.append((times, obs))
        targets[idx] = float(amps @ np.cos(freqs[chosen] * cfg.t_future))
    return sequences, targets


def _shuffled_indices(rng: Rng, n: int) -> np.ndarray:
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = rng.randint(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


# ---------------------------------------------------------------------------
# Shared model pieces
# ---------------------------------------------------------------------------

def _fit_content_matrix(times: np.ndarray, grid: np.ndarray, ridge: float) -> np.ndarray:
    """Constant solve matrix mapping token features to trig coefficients.

    Rows of the ((2J+1), L) result reconstruct [dc, cos, sin] coefficients
    of a signal sampled at ``times``; it depends only on the observation
    times, so gradients flow through the features rather than the solve.
    """
    phases = np.outer(times, grid)
    phi = np.concatenate([np.ones((times.size, 1)), np.cos(phases), np.sin(phases)], axis=1)
    gram = phi.T @ phi + ridge * np.eye(phi.shape[1])
    return np.linalg.solve(gram, phi.T)


def transfer_magnitude(gamma, omega, probe_freqs: np.ndarray):
    """|H(w)| = 1 / sqrt((omega^2 - w^2)^2 + (2 gamma w)^2), per key and probe."""
    det = omega.reshape((-1, 1)) ** 2.0 - (probe_freqs * probe_freqs)[None, :]
    damp = 2.0 * gamma.reshape((-1, 1)) * probe_freqs[None, :]
    return 1.0 / om.sqrt(det * det + damp * damp)


def _stable_softmax(z, axis: int):
    shift = om.value_of(z).max(axis=axis, keepdims=True)
    e = om.exp(z - shift)
    total = om.asum(e, axis=axis)
    shape = list(om.value_of(e).shape)
    shape[axis] = 1
    return e / total.reshape(tuple(shape))


def _cross_entropy(logits, labels: np.ndarray):
    B = labels.size
    shift = om.value_of(logits).max(axis=1, keepdims=True)
    z = logits - shift
    lse = om.asum(om.exp(z), axis=1)
    picked = z[np.arange(B), labels]
    return om.asum(om.log(lse) - picked) / B


def trig_features(times: np.ndarray, obs: np.ndarray, freqs: np.ndarray):
    """Trapezoid-rule cosine/sine coefficients on an irregular grid."""
    T = times[-1]
    c = np.cos(np.outer(times, freqs))
    s = np.sin(np.outer(times, freqs))
    A = (2.0 / T) * np.trapz(obs[:, None] * c, times, axis=0)
    B = (2.0 / T) * np.trapz(obs[:, None] * s, times, axis=0)
    return A, B


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

class OscillatorBankClassifier(BaseEstimator):
    """Resonance attention over a bank of learnable oscillator key slots.

    The embedded observations are projected onto the collocation grid by a
    per-sequence least-squares solve; per-mode energies of the gained
    coefficients form a non-negative query spectrum, and slot i scores it
    against its transfer magnitude |H_i(w)|.  Softmax attention then blends
    learnable slot values into a two-layer MLP head.  Slot i starts at
    class frequency i, so the mean-attention confusion matrix has a
    meaningful diagonal.
    """

    def __init__(self, config: ClassifyConfig | None = None, epochs: int = 40,
                 batch_size: int = 128, lr: float = 3e-3, weight_decay: float = 0.01,
                 content_ridge: float = 1e-3, gamma_init: float = 0.5, seed: int = 0,
                 target_accuracy: float | None = 0.97, eval_fraction: float = 0.2):
        self.config = config
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.content_ridge = content_ridge
        self.gamma_init = gamma_init
        self.seed = seed
        self.target_accuracy = target_accuracy
        self.eval_fraction = eval_fraction

    def _prepare(self, sequences):
        cfg = self._cfg
        grid = cfg.mode_freqs()
        solves = np.stack([_fit_content_matrix(times, grid, self.content_ridge)
                           for times, _ in sequences])
        raw = np.stack([obs for _, obs in sequences])
        return grid, solves, raw

    def _forward(self, params, solves, raw, want_weights: bool = False):
        cfg = self._cfg
        J = cfg.n_modes
        B = raw.shape[0]
        embed = raw @ params["embed_w"].swapaxes(0, 1) + params["embed_b"]
        coeffs = solves @ embed                                    # (B, 2J+1, d)
        a_amp = coeffs[:, 1 : J + 1, :] * params["gain_cos"].reshape((1, J, -1))
        b_amp = coeffs[:, J + 1 :, :] * params["gain_sin"].reshape((1, J, -1))
        energy = om.asum(a_amp * a_amp + b_amp * b_amp, axis=2)    # (B, J)
        log_e = om.log(energy + 1.0)
        mean = om.asum(log_e, axis=1).reshape((B, 1)) / J
        centered = log_e - mean
        std = om.sqrt(om.asum(centered * centered, axis=1) / J + 1e-8).reshape((B, 1))
        spectrum = softplus(centered / std * params["q_scale"].reshape((1, J))
                            + params["q_bias"].reshape((1, J)))

        omega_k = softplus(params["u_omega"]) + 1e-3
        gamma_k = softplus(params["u_gamma"])
        H = transfer_magnitude(gamma_k, omega_k, self._grid)       # (K, J)
        alphas = spectrum @ H.swapaxes(0, 1)
        weights = _stable_softmax(alphas, axis=1)
        pooled = weights @ params["slot_values"]
        hidden = om.maximum(pooled @ params["mlp_w1"].swapaxes(0, 1) + params["mlp_b1"], 0.0)
        logits = hidden @ params["mlp_w2"].swapaxes(0, 1) + params["mlp_b2"]
        if want_weights:
            return logits, weights
        return logits

    def _init_params(self, rng: Rng) -> dict:
        cfg = self._cfg
        d, J, K, Hd = cfg.embed_dim, cfg.n_modes, cfg.n_classes, cfg.mlp_hidden
        slot_omega = np.resize(self._grid, K)
        return {
            "embed_w": rng.normal_array((d, 2), sigma=1.0 / np.sqrt(2.0)),
            "embed_b": np.zeros(d),
            "gain_cos": rng.normal_array((J, d), sigma=0.5),
            "gain_sin": rng.normal_array((J, d), sigma=0.5),
            "q_scale": np.ones(J),
            "q_bias": np.zeros(J),
            "u_omega": inv_softplus(slot_omega - 1e-3),
            "u_gamma": inv_softplus(np.full(K, self.gamma_init)),
            "slot_values": rng.normal_array((K, d), sigma=0.5),
            "mlp_w1": rng.normal_array((Hd, d), sigma=1.0 / np.sqrt(d)),
            "mlp_b1": np.zeros(Hd),
            "mlp_w2": rng.normal_array((K, Hd), sigma=1.0 / np.sqrt(Hd)),
            "mlp_b2": np.zeros(K),
        }

    def loss_value(self, params: dict, solves, raw, labels, as_tape: bool = False):
        """Cross-entropy of a batch; with ``as_tape`` returns (loss, tape)."""
        if as_tape:
            tape = Tape()
            pvars = {k: tape.param(k, v) for k, v in params.items()}
            return _cross_entropy(self._forward(pvars, solves, raw), labels), tape
        return float(om.value_of(_cross_entropy(self._forward(params, solves, raw), labels)))

    def fit(self, X, y):
        self._cfg = self.config or ClassifyConfig()
        y = np.asarray(y, dtype=int)
        rng = Rng(self.seed)
        self._grid, solves, raw = self._prepare(X)
        n = len(X)
        n_hold = max(1, int(self.eval_fraction * n))
        hold = slice(0, n_hold)
        self.params_ = self._init_params(rng)
        state = OptState()
        steps_per_epoch = max(1, n // self.batch_size)
        total_steps = self.epochs * steps_per_epoch
        self.history_ = []
        self.epochs_run_ = 0
        step = 0
        for epoch in range(self.epochs):
            order = _shuffled_indices(rng, n)
            loss = None
            for b in range(steps_per_epoch):
                idx = order[b * self.batch_size : (b + 1) * self.batch_size]
                if idx.size == 0:
                    continue
                loss, tape = self.loss_value(self.params_, solves[idx], raw[idx],
                                             y[idx], as_tape=True)
                grads = tape.grad(loss)
                factor = cosine_warmup(step, total_steps)
                adamw_step(self.params_, grads, state, self.lr, self.weight_decay, factor)
                step += 1
            acc = self.score(None, y[hold], _cached=(solves[hold], raw[hold]))
            self.history_.append({"epoch": epoch,
                                  "loss": float(om.value_of(loss)),
                                  "holdout_accuracy": acc})
            self.epochs_run_ = epoch + 1
            if self.target_accuracy is not None and acc >= self.target_accuracy:
                break
        return self

    def _scores(self, X, _cached=None):
        if _cached is not None:
            solves, raw = _cached
        else:
            _, solves, raw = self._prepare(X)
        return om.value_of(self._forward(self.params_, solves, raw))

    def predict(self, X, _cached=None):
        return np.argmax(self._scores(X, _cached), axis=1)

    def score(self, X, y, _cached=None):
        return float(np.mean(self.predict(X, _cached) == np.asarray(y, dtype=int)))

    def attention_weights(self, X) -> np.ndarray:
        _, solves, raw = self._prepare(X)
        _, w = self._forward(self.params_, solves, raw, want_weights=True)
        return om.value_of(w)

    def resonance_profiles(self, n_points: int = 200) -> dict:
        """|H_i(w)| curves of the trained key slots."""
        omega_k = om.value_of(softplus(self.params_["u_omega"])) + 1e-3
        gamma_k = om.value_of(softplus(self.params_["u_gamma"]))
        wgrid = np.linspace(0.5 * self._grid.min(), 1.5 * self._grid.max(), n_points)
        H = om.value_of(transfer_magnitude(gamma_k, omega_k, wgrid))
        return {"omega_grid": wgrid, "magnitude": H,
                "omega_slots": omega_k, "gamma_slots": gamma_k}


def train_classifier(cfg: ClassifyConfig, epochs: int, rng: Rng) -> dict:
    """Generate data, train the bank classifier, and report the metrics."""
    t_start = time.perf_counter()
    data_rng = rng.split()
    train_seqs, train_labels = gen_classification(cfg, data_rng, cfg.n_train)
    val_seqs, val_labels = gen_classification(cfg, data_rng, cfg.n_val)
    seed = rng.next_u64() % (2**32)
    clf = OscillatorBankClassifier(config=cfg, epochs=epochs, seed=seed)

    untrained = OscillatorBankClassifier(config=cfg, epochs=0, seed=seed)
    untrained._cfg = cfg
    untrained._grid, vs, vr = untrained._prepare(val_seqs)
    untrained.params_ = untrained._init_params(Rng(seed))
    untrained_acc = untrained.score(None, val_labels, _cached=(vs, vr))

    clf.fit(train_seqs, train_labels)
    val_acc = clf.score(val_seqs, val_labels)
    weights = clf.attention_weights(val_seqs)
    M = cfg.n_classes
    confusion = np.zeros((M, weights.shape[1]))
    for m in range(M):
        rows = weights[val_labels == m]
        if rows.size:
            confusion[m] = rows.mean(axis=0)
    diag = float(np.mean(np.diag(confusion)[: min(M, weights.shape[1])]))
    return {
        "val_accuracy": float(val_acc),
        "untrained_accuracy": float(untrained_acc),
        "confusion": confusion.tolist(),
        "diagonal_mass": diag,
        "uniform_mass": 1.0 / weights.shape[1],
        "epochs_run": clf.epochs_run_,
        "history": clf.history_,
        "resonance": {k: np.asarray(v).tolist() for k, v in clf.resonance_profiles().items()},
        "train_seconds": time.perf_counter() - t_start,
    }


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

class OscillatorSpectrumRegressor(BaseEstimator):
    """Forecaster scoring a learned query spectrum against key resonances.

    Features are standardized log energies of trapezoid trig coefficients;
    the attention logit of key i is sum_j Q_j |H_i(w_j)| with Q the
    softplus query spectrum, and the prediction is the softmax-weighted
    blend of learned key values.
    """

    def __init__(self, config: RegressConfig | None = None, epochs: int = 300,
                 batch_size: int = 128, lr: float = 2e-2, weight_decay: float = 1e-4,
                 seed: int = 0):
        self.config = config
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def _features(self, sequences) -> np.ndarray:
        freqs = np.asarray(self._cfg.freqs, dtype=float)
        feats = np.empty((len(sequences), freqs.size))
        for i, (times, obs) in enumerate(sequences):
            A, B = trig_features(times, obs, freqs)
            feats[i] = np.log1p(A * A + B * B)
        return feats

    def _forward(self, params, Z):
        q = softplus(Z * params["w"].reshape((1, -1)) + params["b"].reshape((1, -1)))
        omega = softplus(params["u_omega"]) + 1e-3
        gamma = softplus(params["u_gamma"])
        H = transfer_magnitude(gamma, omega, np.asarray(self._cfg.freqs, dtype=float))
        alphas = q @ H.swapaxes(0, 1)
        w = _stable_softmax(alphas, axis=1)
        return w @ params["values"]

    def loss_value(self, params, Z, y, as_tape: bool = False):
        if as_tape:
            tape = Tape()
            pvars = {k: tape.param(k, v) for k, v in params.items()}
            pred = self._forward(pvars, Z)
            err = pred - y
            return om.asum(err * err) / y.size, tape
        pred = om.value_of(self._forward(params, Z))
        return float(np.mean((pred - y) ** 2))

    def fit(self, X, y):
        self._cfg = self.config or RegressConfig()
        cfg = self._cfg
        rng = Rng(self.seed)
        y = np.asarray(y, dtype=float)
        raw = self._features(X)
        self.mu_ = raw.mean(axis=0)
        self.sigma_ = raw.std(axis=0) + 1e-9
        Z = (raw - self.mu_) / self.sigma_
        J = raw.shape[1]
        K = cfg.n_keys
        key_omega = np.resize(np.asarray(cfg.freqs, dtype=float), K)
        self.params_ = {
            "w": np.ones(J),
            "b": np.zeros(J),
            "u_omega": inv_softplus(key_omega - 1e-3),
            "u_gamma": inv_softplus(0.3 * np.ones(K)),
            "values": rng.normal_array((K,), sigma=0.5),
        }
        state = OptState()
        n = Z.shape[0]
        steps_per_epoch = max(1, n // self.batch_size)
        total = self.epochs * steps_per_epoch
        step = 0
        self.history_ = []
        for epoch in range(self.epochs):
            order = _shuffled_indices(rng, n)
            loss = None
            for b in range(steps_per_epoch):
                idx = order[b * self.batch_size : (b + 1) * self.batch_size]
                if idx.size == 0:
                    continue
                loss, tape = self.loss_value(self.params_, Z[idx], y[idx], as_tape=True)
                grads = tape.grad(loss)
                adamw_step(self.params_, grads, state, self.lr, self.weight_decay,
                           cosine_warmup(step, total))
                step += 1
            self.history_.append({"epoch": epoch, "loss": float(om.value_of(loss))})
        return self

    def predict(self, X) -> np.ndarray:
        Z = (self._features(X) - self.mu_) / self.sigma_
        return om.value_of(self._forward(self.params_, Z))


def train_regressor(cfg: RegressConfig, epochs: int, rng: Rng) -> dict:
    """Train the spectrum regressor and report MSE/RMSE/correlation."""
    t_start = time.perf_counter()
    data_rng = rng.split()
    train_seqs, train_y = gen_regression(cfg, data_rng, cfg.n_train)
    val_seqs, val_y = gen_regression(cfg, data_rng, cfg.n_val)
    baseline = float(np.mean((val_y - train_y.mean()) ** 2))
    reg = OscillatorSpectrumRegressor(config=cfg, epochs=epochs,
                                      seed=rng.next_u64() % (2**32))
    reg.fit(train_seqs, train_y)
    pred = reg.predict(val_seqs)
    mse = float(np.mean((pred - val_y) ** 2))
    corr = float(np.corrcoef(pred, val_y)[0, 1])
    return {
        "baseline_mse": baseline,
        "val_mse": mse,
        "val_rmse": float(np.sqrt(mse)),
        "correlation": corr,
        "reduction_vs_baseline": 1.0 - mse / baseline,
        "epochs_run": epochs,
        "train_seconds": time.perf_counter() - t_start,
    }
