"""Desk-scale federated learning simulator for the perturbation mechanisms.

The task is L2-regularized logistic regression on a synthetic Gaussian
mixture with label-skewed, mean-shifted client partitions — small enough to
run in seconds, yet strongly convex with exactly computable curvature
constants and a high-precision optimum, so measured trajectories can be
checked against the convergence bound.

A run has three phases, mirroring how the transport is deployed:

1. *Pre-training* (noiseless FedAvg) records the value-range bounds
   ``nu2``/``nu_inf``, the clipping bound ``G`` (median unclipped
   per-sample gradient norm), and per-client model checkpoints.
2. The *accountant* probes the checkpoints to estimate each client's
   bit-level sensitivity and solve the budget for a flip probability.
3. The *private run* trains from a fresh start; every aggregation round
   each client uploads through the configured mechanism.

Randomness is keyed by ``(seed, round, client, stage)`` so arms sharing a
seed see identical channels and runs replay bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import accountant, analysis, perturb
from .binfloat import fixed_point_range
from .validation import check_positive, check_probability, check_weights

__all__ = [
    "Mechanism",
    "TaskSpec",
    "Task",
    "ClientState",
    "UploadResult",
    "RoundRecord",
    "ArmSpec",
    "ArmResult",
    "PretrainRecord",
    "ExperimentConfig",
    "ExperimentResult",
    "loss_value",
    "accuracy",
    "clipped_gradient",
    "local_step",
    "aggregate",
    "upload",
    "make_task",
    "pretrain",
    "run_arm",
    "run_experiment",
]

PACKET_BYTES = 2312  # MAC-layer frame body; one frame carries 578 words
PACKET_BITS = 8 * PACKET_BYTES
WORDS_PER_PACKET = PACKET_BITS // 32


class Mechanism(str, Enum):
    """Upload perturbation arms."""

    CHANNEL_NATIVE_BITFLIP = "channel_native_bitflip"
    AGNOSTIC_BITFLIP = "agnostic_bitflip"
    GAUSSIAN_ACCEPT_ERRORS = "gaussian_accept_errors"
    GAUSSIAN_DROP_PACKETS = "gaussian_drop_packets"
    NOISELESS = "noiseless"


_BITFLIP_ARMS = (Mechanism.CHANNEL_NATIVE_BITFLIP, Mechanism.AGNOSTIC_BITFLIP)
_GAUSSIAN_ARMS = (Mechanism.GAUSSIAN_ACCEPT_ERRORS, Mechanism.GAUSSIAN_DROP_PACKETS)


# --- Synthetic task -------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    """Shape and difficulty of the synthetic classification task.

    The defaults skew each client's label balance and mean-shift its
    features hard enough that no single client's local optimum is a good
    global model — aggregation diversity, not just update magnitude,
    carries accuracy.  Large per-client datasets keep the one-record
    sensitivity (and with it the bit-level distance of an upload) small.
    """

    model_dim: int = 64
    clients: int = 6
    samples_per_client: int = 24000
    test_samples: int = 4000
    separation: float = 2.4
    heterogeneity: float = 3.0
    label_skew: float = 0.45
    regularization: float = 0.5
    data_seed: int = 7

    def __post_init__(self):
        check_positive(self.model_dim, "model_dim", integer=True)
        check_positive(self.clients, "clients", integer=True)
        check_positive(self.samples_per_client, "samples_per_client", integer=True)
        check_positive(self.test_samples, "test_samples", integer=True)
        check_positive(self.separation, "separation")
        check_positive(self.regularization, "regularization")
        if not 0 <= self.label_skew < 0.5:
            raise ValueError(f"label_skew must be in [0, 0.5), got {self.label_skew}")
        if self.heterogeneity < 0:
            raise ValueError(f"heterogeneity must be >= 0, got {self.heterogeneity}")


@dataclass
class Task:
    """Materialized task: client data plus exact optimization constants."""

    spec: TaskSpec
    features: list  # per-client (n_i, M) float64
    labels: list  # per-client (n_i,) float64 in {-1, +1}
    weights: np.ndarray  # aggregation weights q_n = |D_n| / sum |D|
    test_features: np.ndarray
    test_labels: np.ndarray
    mu: float  # strong convexity of every local objective
    alpha: float  # smoothness bound over local objectives
    gamma_het: float  # F* - sum_n q_n F_n*
    w_star: np.ndarray  # global optimum (float64, high precision)
    f_star: float

    @property
    def dataset_sizes(self) -> np.ndarray:
        return np.array([len(y) for y in self.labels], dtype=np.int64)


def _margins(model, features, labels):
    return labels * (features @ model)


def loss_value(model, features, labels, regularization: float) -> float:
    """L2-regularized logistic loss (overflow-safe)."""
    with np.errstate(over="ignore", invalid="ignore"):
        m = _margins(model, features, labels)
        data = float(np.mean(np.logaddexp(0.0, -m)))
        return data + 0.5 * regularization * float(model @ model)


def accuracy(model, features, labels) -> float:
    """Fraction of samples with a positive margin (non-finite scores count
    as wrong for their class)."""
    with np.errstate(invalid="ignore"):
        scores = features @ model
        return float(np.mean((scores > 0) == (labels > 0)))


def full_gradient(model, features, labels, regularization: float) -> np.ndarray:
    """Unclipped mean gradient of the local objective."""
    with np.errstate(over="ignore", invalid="ignore"):
        coef = expit(-_margins(model, features, labels))
        n = len(labels)
        return -(features.T @ (coef * labels)) / n + regularization * model


def per_sample_gradient_norms(model, features, labels, regularization: float
                              ) -> np.ndarray:
    """L2 norms of per-sample gradients, without materializing them.

    ``g_i = -c_i y_i x_i + reg * w`` with ``c_i = sigmoid(-y_i x_i^T w)``,
    so ``||g_i||^2 = c_i^2 ||x_i||^2 - 2 c_i y_i reg x_i^T w + reg^2 ||w||^2``.
    """
    m = _margins(model, features, labels)
    coef = expit(-m)
    x_sq = np.einsum("ij,ij->i", features, features)
    xw = features @ model
    w_sq = float(model @ model)
    norms_sq = coef**2 * x_sq - 2.0 * coef * labels * regularization * xw \
        + regularization**2 * w_sq
    return np.sqrt(np.maximum(norms_sq, 0.0))


def clipped_gradient(model, features, labels, regularization: float, clip: float
                     ) -> np.ndarray:
    """Mean of per-sample gradients rescaled to norm at most ``clip``.

    Each sample's gradient is scaled by ``min(1, clip / ||g_i||)`` before
    averaging, so the average has norm at most ``clip`` as well.
    """
    check_positive(clip, "clip")
    m = _margins(model, features, labels)
    coef = expit(-m)
    norms = per_sample_gradient_norms(model, features, labels, regularization)
    scale = np.minimum(1.0, clip / np.maximum(norms, 1e-300))
    n = len(labels)
    data_part = -(features.T @ (scale * coef * labels)) / n
    return data_part + float(np.mean(scale)) * regularization * model


def local_step(model, features, labels, regularization: float, clip: float,
               learning_rate: float) -> np.ndarray:
    """One local iteration: gradient descent on the clipped mean gradient."""
    g = clipped_gradient(model, features, labels, regularization, clip)
    return model - learning_rate * g


def aggregate(models, weights) -> np.ndarray:
    """Dataset-size-weighted average of client uploads (float64)."""
    q = check_weights(weights)
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in models])
    if stack.shape[0] != q.size:
        raise ValueError("one model per weight required")
    return q @ stack


def make_task(spec: TaskSpec) -> Task:
    """Generate data and compute the task's exact optimization constants.

    Client ``n`` draws labels with its own class balance (label skew) and
    features ``x = y * (separation/2) * u + shift_n + xi`` with isotropic
    unit noise — a two-component Gaussian mixture whose Bayes direction is
    ``u``.  ``mu`` is the regularization constant; ``alpha`` adds the
    largest per-client data curvature ``||X_n||_2^2 / (4 |D_n|)``; the
    optimum and heterogeneity gap come from a high-precision solver.
    """
    gen = np.random.default_rng(np.random.SeedSequence(spec.data_seed))
    m_dim, n_clients = spec.model_dim, spec.clients
    u = gen.standard_normal(m_dim)
    u /= np.linalg.norm(u)
    shifts = gen.standard_normal((n_clients, m_dim)) \
        * (spec.heterogeneity / math.sqrt(m_dim))
    balance = np.linspace(0.5 - spec.label_skew, 0.5 + spec.label_skew, n_clients)

    features, labels = [], []
    for n in range(n_clients):
        size = spec.samples_per_client
        y = np.where(gen.random(size) < balance[n], 1.0, -1.0)
        x = y[:, None] * (spec.separation / 2.0) * u[None, :] \
            + shifts[n][None, :] + gen.standard_normal((size, m_dim))
        features.append(x)
        labels.append(y)

    # Test pool mixes the client distributions evenly.
    per = spec.test_samples // n_clients + 1
    tx, ty = [], []
    for n in range(n_clients):
        y = np.where(gen.random(per) < balance[n], 1.0, -1.0)
        x = y[:, None] * (spec.separation / 2.0) * u[None, :] \
            + shifts[n][None, :] + gen.standard_normal((per, m_dim))
        tx.append(x)
        ty.append(y)
    test_features = np.concatenate(tx)[: spec.test_samples]
    test_labels = np.concatenate(ty)[: spec.test_samples]

    sizes = np.array([len(y) for y in labels], dtype=np.float64)
    weights = sizes / sizes.sum()

    reg = spec.regularization
    mu = reg
    data_curv = max(
        np.linalg.norm(x, 2) ** 2 / (4.0 * len(x)) for x in features
    )
    alpha = reg + float(data_curv)

    w_star, f_star = _minimize(features, labels, weights, reg)
    local_opt = 0.0
    for n in range(n_clients):
        _, f_n = _minimize([features[n]], [labels[n]], np.array([1.0]), reg)
        local_opt += weights[n] * f_n
    gamma_het = max(f_star - local_opt, 0.0)

    return Task(
        spec=spec, features=features, labels=labels, weights=weights,
        test_features=test_features, test_labels=test_labels,
        mu=mu, alpha=alpha, gamma_het=gamma_het, w_star=w_star, f_star=f_star,
    )


def _minimize(features, labels, weights, reg) -> tuple[np.ndarray, float]:
    """High-precision minimizer of the weighted objective (L-BFGS)."""
    def objective(w):
        val = 0.5 * reg * (w @ w)
        grad = reg * w.copy()
        for q, x, y in zip(weights, features, labels):
            m = y * (x @ w)
            val += q * float(np.mean(np.logaddexp(0.0, -m)))
            coef = expit(-m)
            grad -= q * (x.T @ (coef * y)) / len(y)
        return val, grad

    dim = features[0].shape[1]
    res = minimize(objective, np.zeros(dim), jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-12})
    return res.x, float(res.fun)


# --- Upload mechanisms ----------------------------------------------------


@dataclass
class ClientState:
    """Training-time state of one client under one arm."""

    features: np.ndarray
    labels: np.ndarray
    weight: float
    model: np.ndarray
    flip_prob: float = 0.0  # required end-to-end flip probability (bit-flip arms)
    sigma: float = 0.0  # per-round Gaussian noise scale (Gaussian arms)
    kappa_bar: float = 0.0


@dataclass(frozen=True)
class UploadResult:
    """One client upload after mechanism noise and channel effects."""

    model: np.ndarray
    ber_end_to_end: float
    p_artificial: float
    p_channel: float
    packets_dropped: int
    packets_total: int
    oversatisfied: bool


def upload(state: ClientState, mechanism: Mechanism, handle: perturb.RngHandle, *,
           nu_inf: float, p_channel: float, prev_global: Optional[np.ndarray] = None
           ) -> UploadResult:
    """Send one client model through the configured mechanism.

    Bit-flip arms clip the model into the representable range (the
    transport's precondition), encode, flip, and decode.  The
    channel-native arm credits the channel BER toward its flip target and
    falls back to zero artificial flips when the channel alone exceeds it
    (privacy over-satisfied).  The channel-agnostic arm spends the full
    target artificially and suffers the channel on top.  Gaussian arms add
    calibrated noise and either accept corrupted 32-bit words or drop
    whole packets, replacing dropped slices with the previous global model.
    """
    check_probability(p_channel, "p_channel")
    model = np.asarray(state.model, dtype=np.float64)

    if mechanism in _BITFLIP_ARMS or mechanism is Mechanism.NOISELESS:
        limit = fixed_point_range(nu_inf)
        clipped = np.clip(model, -limit, limit).astype(np.float32)
        oversatisfied = False
        if mechanism is Mechanism.NOISELESS:
            p_art, p_chan = 0.0, 0.0
        elif mechanism is Mechanism.CHANNEL_NATIVE_BITFLIP:
            p_chan = p_channel
            try:
                p_art = perturb.artificial_ber(state.flip_prob, p_channel)
            except perturb.ChannelNoiseExceedsBudget:
                p_art = 0.0
                oversatisfied = True
        else:  # AGNOSTIC_BITFLIP: full budget artificially, channel on top
            p_art, p_chan = state.flip_prob, p_channel
        recovered = perturb.perturb_model(clipped, p_art, p_chan, nu_inf, handle)
        return UploadResult(
            model=recovered.astype(np.float64),
            ber_end_to_end=perturb.compose_ber(p_art, p_chan),
            p_artificial=p_art, p_channel=p_chan,
            packets_dropped=0, packets_total=0, oversatisfied=oversatisfied,
        )

    # Gaussian arms: additive noise, conventional 32-bit word transport.
    gen = handle.substream(stage=perturb.STAGE_GAUSSIAN_NOISE).generator()
    noised = (model + state.sigma * gen.standard_normal(model.size)).astype(np.float32)

    if mechanism is Mechanism.GAUSSIAN_ACCEPT_ERRORS:
        corrupted = perturb.flip_float32_words(
            noised, p_channel, handle.substream(stage=perturb.STAGE_CHANNEL_FLIP))
        # Corrupted words may hold signaling-NaN patterns; widening those
        # raises a spurious invalid-value warning.
        with np.errstate(invalid="ignore"):
            widened = corrupted.astype(np.float64)
        return UploadResult(
            model=widened,
            ber_end_to_end=p_channel, p_artificial=0.0, p_channel=p_channel,
            packets_dropped=0, packets_total=0, oversatisfied=False,
        )

    if mechanism is Mechanism.GAUSSIAN_DROP_PACKETS:
        if prev_global is None:
            raise ValueError("drop-packets arm requires prev_global for imputation")
        n_packets = math.ceil(model.size / WORDS_PER_PACKET)
        p_drop = 1.0 - (1.0 - p_channel) ** PACKET_BITS
        drops = handle.substream(stage=perturb.STAGE_PACKET_DROP).generator() \
            .random(n_packets) < p_drop
        out = noised.astype(np.float64)
        prev = np.asarray(prev_global, dtype=np.float64)
        dropped = 0
        for i in range(n_packets):
            if drops[i]:
                sl = slice(i * WORDS_PER_PACKET, min((i + 1) * WORDS_PER_PACKET,
                                                     model.size))
                out[sl] = prev[sl]
                dropped += 1
        return UploadResult(
            model=out, ber_end_to_end=p_channel, p_artificial=0.0,
            p_channel=p_channel, packets_dropped=dropped,
            packets_total=n_packets, oversatisfied=False,
        )

    raise ValueError(f"unknown mechanism {mechanism!r}")


# --- Pre-training and calibration ----------------------------------------


@dataclass
class PretrainRecord:
    """Bounds and checkpoints recorded during noiseless pre-training."""

    nu2: float  # max L2 norm over all observed local models
    nu_inf: float  # binary32 upper bound on max |element|
    clip: float  # median unclipped per-sample gradient norm
    checkpoints: list  # per-client list of (rounds, M) arrays
    init_model: np.ndarray


def _promote_float32_up(value: float) -> float:
    """Smallest binary32 >= value (so the recorded bound really bounds)."""
    nu = np.float32(value)
    while float(nu) < value:
        nu = np.nextafter(nu, np.float32(np.inf))
    return float(nu)


def pretrain(task: Task, learning_rate: float, local_epochs: int, rounds: int,
             init_norm: float, seed: int) -> PretrainRecord:
    """Noiseless FedAvg phase that records transport calibration data.

    Runs ``rounds`` aggregation rounds of ``local_epochs`` unclipped local
    steps from a random init of L2 norm ``init_norm``, recording the
    max L2/L-inf norms over every observed local model (init included),
    per-sample gradient norms (their median becomes the clipping bound),
    and each client's local model per round as sensitivity checkpoints.
    """
    spec = task.spec
    gen = perturb.RngHandle(seed, stage=perturb.STAGE_MODEL_INIT).generator()
    init = gen.standard_normal(spec.model_dim)
    init *= init_norm / np.linalg.norm(init)

    reg = spec.regularization
    w_global = init.copy()
    checkpoints = [[] for _ in range(spec.clients)]
    norm_samples = []
    max_l2 = float(np.linalg.norm(init))
    max_linf = float(np.max(np.abs(init)))

    for _ in range(rounds):
        uploads = []
        for n in range(spec.clients):
            w = w_global.copy()
            norm_samples.append(per_sample_gradient_norms(
                w, task.features[n], task.labels[n], reg))
            for _ in range(local_epochs):
                g = full_gradient(w, task.features[n], task.labels[n], reg)
                w = w - learning_rate * g
                max_l2 = max(max_l2, float(np.linalg.norm(w)))
                max_linf = max(max_linf, float(np.max(np.abs(w))))
            checkpoints[n].append(w.copy())
            uploads.append(w)
        w_global = aggregate(uploads, task.weights)

    clip = float(np.median(np.concatenate(norm_samples)))
    return PretrainRecord(
        nu2=max_l2,
        nu_inf=_promote_float32_up(max_linf),
        clip=clip,
        checkpoints=[np.stack(c) for c in checkpoints],
        init_model=init,
    )


def client_kappas(task: Task, pre: PretrainRecord, learning_rate: float,
                  kappa_draws: int, seed: int) -> list:
    """Per-client bit-level sensitivity estimates from pre-training
    checkpoints, probed at each client's classical sensitivity."""
    out = []
    for n in range(task.spec.clients):
        sens = accountant.classical_sensitivity(
            learning_rate, pre.clip, len(task.labels[n]))
        handle = perturb.RngHandle(seed, client=n, stage=perturb.STAGE_KAPPA_DRAW)
        est = accountant.estimate_kappa_bar(
            np.float32(pre.checkpoints[n]), sens, kappa_draws, pre.nu_inf, handle)
        out.append(est)
    return out


# --- Private runs ---------------------------------------------------------


@dataclass(frozen=True)
class ArmSpec:
    """One experiment arm: a mechanism and (for private arms) a budget."""

    mechanism: Mechanism
    lam: Optional[float] = None
    epsilon: Optional[float] = None

    @property
    def name(self) -> str:
        if self.epsilon is None:
            return self.mechanism.value
        eps = f"{self.epsilon:g}"
        return f"{self.mechanism.value}_eps{eps}"


@dataclass(frozen=True)
class RoundRecord:
    """Metrics recorded after each aggregation round."""

    round: int
    iteration: int
    loss: float
    accuracy: float
    mean_ber: float
    packets_dropped: int
    distance_sq: float
    divergent: bool


@dataclass
class ArmResult:
    """Full outcome of one (arm, seed) run."""

    arm: ArmSpec
    seed: int
    records: list
    flip_probs: np.ndarray  # per-client required end-to-end flip probability
    sigmas: np.ndarray  # per-client Gaussian scale
    kappa_bars: np.ndarray
    p_max: float  # largest end-to-end flip probability in any upload
    x_bf_max: float  # largest per-round aggregate flip-noise bound
    initial_gap: float
    oversatisfied_uploads: int
    final_model: np.ndarray

    @property
    def final(self) -> RoundRecord:
        return self.records[-1]

    @property
    def divergent(self) -> bool:
        return any(r.divergent for r in self.records)


def _draw_channel_ber(config: "ExperimentConfig", handle: perturb.RngHandle) -> float:
    """Per-(round, client) channel BER according to the channel model."""
    if config.channel_kind == "uniform":
        return float(handle.generator().random() * config.channel_ber_max)
    if config.channel_kind == "awgn":
        return perturb.awgn_ber(perturb.ChannelConfig(
            snr=config.channel_snr, modulation=config.channel_modulation))
    if config.channel_kind == "fixed":
        return float(config.channel_fixed_ber)
    raise ValueError(f"unknown channel kind {config.channel_kind!r}")


def run_arm(task: Task, pre: PretrainRecord, kappas: list, arm: ArmSpec,
            config: "ExperimentConfig", seed: int) -> ArmResult:
    """Train one arm from scratch and record per-round metrics."""
    spec = task.spec
    reg = spec.regularization
    eta = config.learning_rate
    e_steps, k_rounds = config.local_epochs, config.rounds

    flip_probs = np.zeros(spec.clients)
    sigmas = np.zeros(spec.clients)
    if arm.mechanism in _BITFLIP_ARMS:
        budget = accountant.PrivacyBudget(arm.lam, arm.epsilon, k_rounds)
        flip_probs = np.array([
            accountant.required_ber(budget, kappas[n].kappa_bar)
            for n in range(spec.clients)
        ])
    elif arm.mechanism in _GAUSSIAN_ARMS:
        delta = accountant.renyi_to_dp_delta(arm.lam, arm.epsilon, arm.epsilon)
        sigmas = np.array([
            accountant.gaussian_sigma(
                accountant.classical_sensitivity(eta, pre.clip, len(task.labels[n])),
                k_rounds, delta, arm.epsilon)
            for n in range(spec.clients)
        ])

    clients = [
        ClientState(
            features=task.features[n], labels=task.labels[n],
            weight=float(task.weights[n]), model=np.zeros(spec.model_dim),
            flip_prob=float(flip_probs[n]), sigma=float(sigmas[n]),
            kappa_bar=kappas[n].kappa_bar,
        )
        for n in range(spec.clients)
    ]
    w_global = np.zeros(spec.model_dim)
    initial_gap = float(np.sum((w_global - task.w_star) ** 2))

    records = []
    p_max = 0.0
    x_bf_max = 0.0
    oversatisfied = 0

    for k in range(1, k_rounds + 1):
        for state in clients:
            w = state.model
            for _ in range(e_steps):
                w = local_step(w, state.features, state.labels, reg, pre.clip, eta)
            state.model = w

        uploads, bers, dropped = [], [], 0
        for n, state in enumerate(clients):
            handle = perturb.RngHandle(seed, round=k, client=n)
            p_chan = _draw_channel_ber(
                config, handle.substream(stage=perturb.STAGE_CHANNEL_DRAW))
            result = upload(state, arm.mechanism, handle, nu_inf=pre.nu_inf,
                            p_channel=p_chan, prev_global=w_global)
            uploads.append(result.model)
            bers.append(result.ber_end_to_end)
            dropped += result.packets_dropped
            oversatisfied += int(result.oversatisfied)

        w_global = aggregate(uploads, task.weights)
        for state in clients:
            state.model = w_global.copy()

        if arm.mechanism in _BITFLIP_ARMS:
            p_max = max(p_max, max(bers))
            x_bf_max = max(x_bf_max, analysis.x_bf_bound(
                task.weights, bers, spec.model_dim, pre.nu2, pre.nu_inf))

        with np.errstate(invalid="ignore", over="ignore"):
            train_loss = sum(
                float(task.weights[n]) * loss_value(
                    w_global, task.features[n], task.labels[n], reg)
                for n in range(spec.clients)
            )
            dist = float(np.sum((w_global - task.w_star) ** 2))
        finite = bool(np.all(np.isfinite(w_global)) and math.isfinite(train_loss))
        records.append(RoundRecord(
            round=k, iteration=k * e_steps, loss=train_loss,
            accuracy=accuracy(w_global, task.test_features, task.test_labels),
            mean_ber=float(np.mean(bers)), packets_dropped=dropped,
            distance_sq=dist, divergent=not finite,
        ))

    return ArmResult(
        arm=arm, seed=seed, records=records, flip_probs=flip_probs,
        sigmas=sigmas, kappa_bars=np.array([k.kappa_bar for k in kappas]),
        p_max=p_max, x_bf_max=x_bf_max, initial_gap=initial_gap,
        oversatisfied_uploads=oversatisfied, final_model=w_global,
    )


# --- Experiment orchestration ---------------------------------------------


_DEFAULT_MECHANISMS = tuple(m.value for m in Mechanism)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce an experiment."""

    task: TaskSpec = TaskSpec()
    local_epochs: int = 5
    rounds: int = 10
    learning_rate: float = 0.1
    pretrain_rounds: int = 10
    init_norm: float = 1.5
    lam: float = 2.0
    epsilons: tuple = (1.0, 10.0)
    mechanisms: tuple = _DEFAULT_MECHANISMS
    channel_kind: str = "uniform"  # uniform | awgn | fixed
    channel_ber_max: float = 0.02
    channel_snr: float = 4.0
    channel_modulation: str = "bpsk"
    channel_fixed_ber: float = 0.001
    kappa_draws: int = 400
    seeds: tuple = (1, 2, 3)

    def __post_init__(self):
        check_positive(self.local_epochs, "local_epochs", integer=True)
        check_positive(self.rounds, "rounds", integer=True)
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.pretrain_rounds, "pretrain_rounds", integer=True)
        check_positive(self.init_norm, "init_norm")
        check_positive(self.kappa_draws, "kappa_draws", integer=True)
        if self.channel_kind not in ("uniform", "awgn", "fixed"):
            raise ValueError(f"unknown channel kind {self.channel_kind!r}")
        check_probability(self.channel_ber_max, "channel_ber_max",
                          inclusive_high=True)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for m in self.mechanisms:
            Mechanism(m)  # raises on unknown names

    @property
    def iterations(self) -> int:
        return self.rounds * self.local_epochs

    def arms(self) -> list:
        """Arm list: private mechanisms cross the epsilon grid; the
        noiseless arm runs once (it has no budget)."""
        out = []
        for m in self.mechanisms:
            mech = Mechanism(m)
            if mech is Mechanism.NOISELESS:
                out.append(ArmSpec(mech))
            else:
                for eps in self.epsilons:
                    out.append(ArmSpec(mech, self.lam, float(eps)))
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        """Build a config from a parsed YAML mapping (strict keys)."""
        if not isinstance(raw, dict):
            raise ValueError("config root must be a mapping")
        data = dict(raw)
        task_raw = data.pop("task", {})
        if not isinstance(task_raw, dict):
            raise ValueError("task section must be a mapping")
        task_fields = TaskSpec.__dataclass_fields__
        unknown = set(task_raw) - set(task_fields)
        if unknown:
            raise ValueError(f"unknown task keys: {sorted(unknown)}")
        task = TaskSpec(**task_raw)

        field_names = {f for f in cls.__dataclass_fields__ if f != "task"}
        unknown = set(data) - field_names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("epsilons", "mechanisms", "seeds"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(task=task, **data)


@dataclass
class ExperimentResult:
    """All artifacts of one experiment run."""

    config: ExperimentConfig
    task: Task
    pretrain_records: dict  # seed -> PretrainRecord
    kappas: dict  # seed -> list of KappaEstimate
    arm_results: dict  # (arm name, seed) -> ArmResult

    def results_for(self, arm_name: str) -> list:
        return [res for (name, _), res in sorted(self.arm_results.items())
                if name == arm_name]

    def final_accuracy(self, arm_name: str) -> np.ndarray:
        return np.array([r.final.accuracy for r in self.results_for(arm_name)])

    def summary_rows(self) -> list:
        """One aggregate row per arm (dicts with stable keys)."""
        rows = []
        for arm in self.config.arms():
            runs = self.results_for(arm.name)
            if not runs:
                continue
            acc = np.array([r.final.accuracy for r in runs])
            loss = np.array([r.final.loss for r in runs])
            dist = np.array([r.final.distance_sq for r in runs])
            finite_loss = loss[np.isfinite(loss)]
            rows.append({
                "arm": arm.name,
                "mechanism": arm.mechanism.value,
                "lam": "" if arm.lam is None else arm.lam,
                "epsilon": "" if arm.epsilon is None else arm.epsilon,
                "seeds": len(runs),
                "mean_final_accuracy": float(acc.mean()),
                "std_final_accuracy": float(acc.std()),
                "mean_final_loss": float(finite_loss.mean())
                if finite_loss.size else math.inf,
                "mean_final_distance_sq": float(np.mean(dist[np.isfinite(dist)]))
                if np.isfinite(dist).any() else math.inf,
                "divergent_runs": int(sum(r.divergent for r in runs)),
                "oversatisfied_uploads": int(sum(r.oversatisfied_uploads
                                                 for r in runs)),
            })
        return rows


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every (arm, seed) cell of the experiment.

    The task is built once from ``data_seed``; pre-training, sensitivity
    estimation, and each arm's private run are repeated per seed.  Results
    are deterministic functions of (config, seed) — cells can be computed
    in any order or in parallel with identical output.
    """
    task = make_task(config.task)
    pretrain_records, kappas, arm_results = {}, {}, {}
    for seed in config.seeds:
        pre = pretrain(task, config.learning_rate, config.local_epochs,
                       config.pretrain_rounds, config.init_norm, seed)
        pretrain_records[seed] = pre
        kappas[seed] = client_kappas(task, pre, config.learning_rate,
                                     config.kappa_draws, seed)
        for arm in config.arms():
            arm_results[(arm.name, seed)] = run_arm(
                task, pre, kappas[seed], arm, config, seed)
    return ExperimentResult(
        config=config, task=task, pretrain_records=pretrain_records,
        kappas=kappas, arm_results=arm_results,
    )
