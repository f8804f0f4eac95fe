# FILE 8: deep_imputers.py
# Purpose: Neural base imputers: a mask-aware autoencoder and a GAIN-style adversarial imputer.
# Dependencies: numpy, pydantic, neural.py

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.core.base_imputers import FittedImputer, ImputerKind, ImputerSpec, observed_column_means
from app.core.data_matrix import DataMatrix
from app.core.errors import TrainingError
from app.core.neural import DenseNet, Gradients, TrainConfig, backward, forward, init_net, minibatches, sgd_step
from app.core.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

LOG_EPS = 1e-8
NOISE_HIGH = 0.01


def default_ae_hidden(d: int) -> int:
    return max(2, math.ceil(d / 2))


# ---------------------------------------------------------------------------
# Autoencoder
# ---------------------------------------------------------------------------

def masked_reconstruction_loss(
    net: DenseNet, values: np.ndarray, observed: np.ndarray, fill: np.ndarray
) -> Tuple[float, Gradients]:
    """
    Sum over observed cells of (output - input)^2, averaged over the rows of the batch.
    Unobserved cells enter the network as `fill` and are excluded from the loss.
    """
    X = np.where(observed, np.nan_to_num(values), fill[None, :])
    resid = np.where(observed, forward(net, X) - X, 0.0)
    rows = X.shape[0]
    loss = float(np.sum(resid ** 2) / rows)
    return loss, backward(net, X, 2.0 * resid / rows)


class AutoencoderImputer(FittedImputer):
    """d -> h (tanh) -> d (identity). Missing cells take one forward pass over the mean-filled row."""

    def __init__(self, spec: ImputerSpec, net: DenseNet, means: np.ndarray, loss_history: List[float]):
        super().__init__(spec, net.input_size)
        self.net = net
        self.means = means
        self.loss_history = loss_history

    @classmethod
    def fit(cls, spec: ImputerSpec, train: DataMatrix) -> "AutoencoderImputer":
        cfg = TrainConfig(
            epochs=spec.get("epochs"),
            batch_size=spec.get("batch_size"),
            learning_rate=spec.get("lr"),
            seed=spec.seed,
        )
        return ae_fit(train, cfg, hidden=spec.get("hidden"), spec=spec)

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        return forward(self.net, m.filled(self.means))


def ae_fit(
    train: DataMatrix, cfg: TrainConfig, hidden: Optional[int] = None, spec: Optional[ImputerSpec] = None
) -> AutoencoderImputer:
    d = train.n_cols
    hidden = hidden or default_ae_hidden(d)
    if spec is None:
        spec = ImputerSpec(
            kind=ImputerKind.AUTOENCODER,
            hyperparameters={"hidden": hidden, "epochs": cfg.epochs, "batch_size": cfg.batch_size,
                             "lr": cfg.learning_rate},
            random_seed=cfg.seed,
        )
    means = observed_column_means(train)
    net = init_net([d, hidden, d], ["tanh", "identity"], seed=derive_seed(cfg.seed, "ae-init"))
    rng = make_rng(derive_seed(cfg.seed, "ae-batches"))
    values, observed = train.filled(means), train.observed

    history = [masked_reconstruction_loss(net, values, observed, means)[0]]
    for epoch in range(cfg.epochs):
        for idx in minibatches(train.n_rows, cfg.batch_size, rng):
            _, grads = masked_reconstruction_loss(net, values[idx], observed[idx], means)
            net = sgd_step(net, grads, cfg.learning_rate)
        history.append(masked_reconstruction_loss(net, values, observed, means)[0])
        if not np.isfinite(history[-1]):
            raise TrainingError(f"autoencoder loss became non-finite at epoch {epoch}")
        logger.debug(f"Autoencoder epoch {epoch}: loss {history[-1]:.6g}")
    return AutoencoderImputer(spec, net, means, history)


def ae_transform(f: AutoencoderImputer, m: DataMatrix) -> DataMatrix:
    return f.transform(m)


# ---------------------------------------------------------------------------
# GAIN
# ---------------------------------------------------------------------------

class GainConfig(BaseModel):
    hidden: Optional[int] = Field(None, ge=1)
    hint_rate: float = Field(0.9, ge=0.0, le=1.0)
    alpha: float = Field(10.0, gt=0)
    iterations: int = Field(2000, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.005, gt=0)
    seed: int = Field(0, ge=0)


@dataclass(frozen=True)
class GainHistory:
    d_loss: Tuple[float, ...]
    g_loss: Tuple[float, ...]
    initial_mse: float
    final_mse: float


def make_hint(observed: np.ndarray, hint_rate: float, rng: np.random.Generator) -> np.ndarray:
    """H = B*M + 0.5*(1 - B), B ~ Bernoulli(hint_rate) per coordinate."""
    M = observed.astype(np.float64)
    B = (rng.random(M.shape) < hint_rate).astype(np.float64)
    return B * M + 0.5 * (1.0 - B)


def _noise_filled(values: np.ndarray, M: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    Z = rng.uniform(0.0, NOISE_HIGH, size=M.shape)
    return M * np.nan_to_num(values) + (1.0 - M) * Z


def _observed_mse(G: DenseNet, Xn: np.ndarray, M: np.ndarray) -> float:
    if M.sum() == 0:
        return 0.0
    out = forward(G, np.hstack([Xn, M]))
    return float(np.sum(M * (out - Xn) ** 2) / M.sum())


class GainImputer(FittedImputer):
    """
    Generator and discriminator are both 2d -> h -> h -> d with ReLU hidden layers;
    the generator head is linear (data is standardized), the discriminator head sigmoid.
    """

    def __init__(self, spec: ImputerSpec, generator: DenseNet, discriminator: DenseNet,
                 config: GainConfig, history: GainHistory):
        super().__init__(spec, generator.output_size)
        self.generator = generator
        self.discriminator = discriminator
        self.config = config
        self.history = history

    @property
    def hint_rate(self) -> float:
        return self.config.hint_rate

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @classmethod
    def fit(cls, spec: ImputerSpec, train: DataMatrix) -> "GainImputer":
        cfg = GainConfig(
            hidden=spec.get("hidden"),
            hint_rate=spec.get("hint_rate"),
            alpha=spec.get("alpha"),
            iterations=spec.get("iterations"),
            batch_size=spec.get("batch_size"),
            learning_rate=spec.get("lr"),
            seed=spec.seed,
        )
        return gain_fit(train, cfg, spec=spec)

    def generate(self, m: DataMatrix) -> np.ndarray:
        M = m.observed.astype(np.float64)
        rng = make_rng(derive_seed(self.config.seed, "gain-transform"))
        return forward(self.generator, np.hstack([_noise_filled(m.values, M, rng), M]))

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        return self.generate(m)


def gain_fit(train: DataMatrix, cfg: GainConfig, spec: Optional[ImputerSpec] = None) -> GainImputer:
    d = train.n_cols
    h = cfg.hidden or d
    if spec is None:
        spec = ImputerSpec(
            kind=ImputerKind.GAIN,
            hyperparameters={"hidden": h, "hint_rate": cfg.hint_rate, "alpha": cfg.alpha,
                             "iterations": cfg.iterations, "batch_size": cfg.batch_size,
                             "lr": cfg.learning_rate},
            random_seed=cfg.seed,
        )
    G = init_net([2 * d, h, h, d], ["relu", "relu", "identity"], seed=derive_seed(cfg.seed, "gain-G"))
    D = init_net([2 * d, h, h, d], ["relu", "relu", "sigmoid"], seed=derive_seed(cfg.seed, "gain-D"))
    rng = make_rng(derive_seed(cfg.seed, "gain-train"))

    M_all = train.observed.astype(np.float64)
    probe = _noise_filled(train.values, M_all, make_rng(derive_seed(cfg.seed, "gain-probe")))
    initial_mse = _observed_mse(G, probe, M_all)

    batch = min(cfg.batch_size, train.n_rows)
    d_hist, g_hist = [], []
    for it in range(cfg.iterations):
        idx = np.sort(rng.choice(train.n_rows, size=batch, replace=False))
        M = M_all[idx]
        Xn = _noise_filled(train.values[idx], M, rng)
        H = make_hint(train.observed[idx], cfg.hint_rate, rng)
        size = M.size

        # discriminator step
        G_in = np.hstack([Xn, M])
        X_hat = M * Xn + (1.0 - M) * forward(G, G_in)
        D_in = np.hstack([X_hat, H])
        p = forward(D, D_in)
        d_loss = -float(np.mean(M * np.log(p + LOG_EPS) + (1.0 - M) * np.log(1.0 - p + LOG_EPS)))
        d_up = -(M / (p + LOG_EPS) - (1.0 - M) / (1.0 - p + LOG_EPS)) / size
        D = sgd_step(D, backward(D, D_in, d_up), cfg.learning_rate)

        # generator step
        G_out = forward(G, G_in)
        X_hat = M * Xn + (1.0 - M) * G_out
        D_in = np.hstack([X_hat, H])
        p = forward(D, D_in)
        obs_frac = M.mean()
        adv = -float(np.mean((1.0 - M) * np.log(p + LOG_EPS)))
        mse = float(np.mean((M * (G_out - Xn)) ** 2) / obs_frac) if obs_frac > 0 else 0.0
        g_loss = adv + cfg.alpha * mse

        d_input_grad = backward(D, D_in, -(1.0 - M) / (p + LOG_EPS) / size).inputs[:, :d]
        g_up = (1.0 - M) * d_input_grad
        if obs_frac > 0:
            g_up = g_up + cfg.alpha * 2.0 * M * (G_out - Xn) / size / obs_frac
        G = sgd_step(G, backward(G, G_in, g_up), cfg.learning_rate)

        if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
            raise TrainingError(f"GAIN loss became non-finite at iteration {it}")
        d_hist.append(d_loss)
        g_hist.append(g_loss)
        if it % 200 == 0:
            logger.debug(f"GAIN iteration {it}: D loss {d_loss:.4f}, G loss {g_loss:.4f}")

    history = GainHistory(
        d_loss=tuple(d_hist),
        g_loss=tuple(g_hist),
        initial_mse=initial_mse,
        final_mse=_observed_mse(G, probe, M_all),
    )
    return GainImputer(spec, G, D, cfg.model_copy(update={"hidden": h}), history)


def gain_transform(f: GainImputer, m: DataMatrix) -> DataMatrix:
    return f.transform(m)
