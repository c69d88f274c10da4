"""Diffusion noising and strided denoising for action vectors.

Training steps use a linear beta schedule; inference walks an evenly
strided subset of those steps. Each inference step applies

    a <- alpha * (a - gamma * eps_hat) + sigma * z

with deterministic (DDIM-style) coefficients when ``eta == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

K_TRAIN = 50
K_INFER = 16
BETA_START = 1e-4
BETA_END = 0.02


class BadStep(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class DenoiseAborted(RuntimeError):
    """The noise predictor failed; ``step`` is the training-step index it was called with."""

    def __init__(self, step, cause=None):
        super().__init__(f"denoising aborted at step {step}: {cause!r}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class Observation:
    z_fusion: np.ndarray
    proprio: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def validate(self, d):
        if np.size(self.z_fusion) != 2 * d:
            raise ShapeMismatch(f"z_fusion must have {2 * d} entries, got {np.size(self.z_fusion)}")


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """``timesteps[s-1]`` is the training step visited at inference step ``s``.

    ``alphas``, ``gammas``, ``sigmas`` are per inference step, same indexing.
    """

    betas: np.ndarray
    timesteps: np.ndarray
    alphas: np.ndarray
    gammas: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        n = len(self.timesteps)
        if not (len(self.alphas) == len(self.gammas) == len(self.sigmas) == n):
            raise ValueError("coefficient arrays must match the number of inference steps")
        if n > len(self.betas):
            raise ValueError("K_infer must not exceed K_train")
        if np.any(self.sigmas < 0):
            raise ValueError("sigmas must be >= 0")
        for name in ("betas", "alphas", "gammas", "sigmas"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @property
    def k_train(self):
        return len(self.betas)

    @property
    def k_infer(self):
        return len(self.timesteps)

    @property
    def alpha_bar(self):
        return np.cumprod(1.0 - self.betas)

    def alpha_bar_at(self, k):
        """Cumulative product for training step ``k`` (1-based); 1.0 at ``k == 0``."""
        if k == 0:
            return 1.0
        return float(self.alpha_bar[k - 1])

    @classmethod
    def constant(cls, alpha, gamma, sigma, k_infer, betas=None):
        """Hand-set coefficients, identical at every step (for tests and ablations)."""
        betas = np.zeros(max(k_infer, 1)) if betas is None else np.asarray(betas, dtype=np.float64)
        return cls(
            betas=betas,
            timesteps=np.arange(1, k_infer + 1),
            alphas=np.full(k_infer, float(alpha)),
            gammas=np.full(k_infer, float(gamma)),
            sigmas=np.full(k_infer, float(sigma)),
        )


def linear_betas(k_train=K_TRAIN, beta_start=BETA_START, beta_end=BETA_END):
    return np.linspace(beta_start, beta_end, k_train)


def strided_timesteps(k_train=K_TRAIN, k_infer=K_INFER):
    """Evenly strided training steps in [1, k_train], ascending, always ending at k_train."""
    if not 1 <= k_infer <= k_train:
        raise ValueError(f"need 1 <= k_infer <= k_train, got {k_infer}, {k_train}")
    if k_infer == 1:
        return np.array([k_train])
    steps = np.floor(np.linspace(1, k_train, k_infer) + 0.5).astype(np.int64)
    if np.any(np.diff(steps) <= 0):
        raise ValueError("strided timesteps collide; lower k_infer")
    return steps


def make_schedule(k_train=K_TRAIN, k_infer=K_INFER, beta_start=BETA_START, beta_end=BETA_END,
                  eta=0.0, timesteps=None):
    """DDIM coefficients over the strided sub-schedule.

    Step from training step t to the previous visited step s (s = 0 after
    the last):  alpha = sqrt(ab_s / ab_t),
    gamma = sqrt(1 - ab_t) - sqrt(1 - ab_s - sigma^2) / alpha,
    sigma = eta * sqrt((1 - ab_s)/(1 - ab_t)) * sqrt(1 - ab_t/ab_s).
    """
    betas = linear_betas(k_train, beta_start, beta_end)
    if timesteps is None:
        timesteps = strided_timesteps(k_train, k_infer)
    timesteps = np.asarray(timesteps, dtype=np.int64)
    if np.any(timesteps < 1) or np.any(timesteps > k_train) or np.any(np.diff(timesteps) <= 0):
        raise ValueError("timesteps must be strictly increasing within [1, k_train]")
    ab = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    prev = np.concatenate([[0], timesteps[:-1]])
    ab_t, ab_s = ab[timesteps], ab[prev]
    with np.errstate(invalid="ignore", divide="ignore"):
        sig = eta * np.sqrt((1 - ab_s) / (1 - ab_t)) * np.sqrt(1 - ab_t / ab_s)
    sig = np.nan_to_num(sig)
    alpha = np.sqrt(ab_s / ab_t)
    gamma = np.sqrt(1 - ab_t) - np.sqrt(np.maximum(1 - ab_s - sig**2, 0.0)) / alpha
    return DiffusionSchedule(betas, timesteps, alpha, gamma, sig)


def add_noise(a0, k, schedule, rng=None, eps=None):
    """``(a_k, eps)`` with ``a_k = sqrt(ab_k) a0 + sqrt(1 - ab_k) eps``."""
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= schedule.k_train):
        raise BadStep(f"k must be an integer in [1, {schedule.k_train}], got {k!r}")
    a0 = np.asarray(a0, dtype=np.float64)
    if eps is None:
        if rng is None:
            raise ValueError("need an rng or an explicit eps")
        eps = rng.standard_normal(a0.shape)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != a0.shape:
        raise ShapeMismatch(f"eps shape {eps.shape} != action shape {a0.shape}")
    ab = schedule.alpha_bar_at(int(k))
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * eps, eps


def noise_prediction_loss(eps, eps_hat):
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps.shape != eps_hat.shape:
        raise ShapeMismatch(f"shapes differ: {eps.shape} vs {eps_hat.shape}")
    return float(np.mean((eps - eps_hat) ** 2))


def denoise(a_k, predictor, obs, schedule, rng=None):
    """Run every inference step from ``k_infer`` down to 1.

    ``predictor(a, obs, k)`` gets the training-step index ``k``. Noise is
    drawn from ``rng`` only on steps with ``sigma > 0``.
    """
    a = np.array(a_k, dtype=np.float64)
    for s in range(schedule.k_infer, 0, -1):
        k = int(schedule.timesteps[s - 1])
        try:
            eps_hat = np.asarray(predictor(a, obs, k), dtype=np.float64)
        except Exception as exc:
            raise DenoiseAborted(k, exc) from exc
        if eps_hat.shape != a.shape:
            raise DenoiseAborted(k, ShapeMismatch(f"predictor returned {eps_hat.shape}, expected {a.shape}"))
        a = schedule.alphas[s - 1] * (a - schedule.gammas[s - 1] * eps_hat)
        sigma = schedule.sigmas[s - 1]
        if sigma > 0:
            if rng is None:
                raise ValueError("stochastic schedule needs an rng")
            a = a + sigma * rng.standard_normal(a.shape)
    return a
