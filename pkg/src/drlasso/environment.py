"""Synthetic sparse linear bandit with equicorrelated arm contexts.

Each round every feature ``j`` is drawn jointly across the ``N`` arms from
``N(0, V)`` where ``V`` has unit diagonal and constant off-diagonal ``rho2``.
The sampler uses a shared factor per feature::

    b_ij = sqrt(rho2) * z_j + sqrt(1 - rho2) * e_ij

which reproduces ``V`` exactly without factorizing an ``Nd``-dimensional
covariance. Rewards are ``b_i^T beta`` plus Gaussian noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

#: Sub-stream identifiers; keep these fixed so seeds stay reproducible.
STREAM_BETA = 0
STREAM_CONTEXTS = 1
STREAM_NOISE = 2
STREAM_POLICY = 3


@dataclass(frozen=True)
class EnvironmentConfig:
    n_arms: int = 10
    dim: int = 100
    sparsity: int = 5
    cross_arm_correlation: float = 0.3
    noise_sd: float = 0.05
    seed: int = 0
    normalize_contexts: bool = False
    normalize_beta: bool = False

    def __post_init__(self):
        validate_environment(self)

    def to_dict(self) -> dict:
        return asdict(self)


def validate_environment(config: EnvironmentConfig) -> None:
    """Raise ``ValueError`` naming the first invalid field."""
    if int(config.n_arms) != config.n_arms or config.n_arms < 1:
        raise ValueError(f"n_arms must be a positive integer, got {config.n_arms}")
    if int(config.dim) != config.dim or config.dim < 1:
        raise ValueError(f"dim must be a positive integer, got {config.dim}")
    if int(config.sparsity) != config.sparsity or not 0 <= config.sparsity <= config.dim:
        raise ValueError(f"sparsity must be an integer in [0, dim], got {config.sparsity}")
    if not 0.0 <= config.cross_arm_correlation <= 1.0:
        raise ValueError(
            f"cross_arm_correlation must lie in [0, 1], got {config.cross_arm_correlation}"
        )
    if not config.noise_sd >= 0.0:
        raise ValueError(f"noise_sd must be nonnegative, got {config.noise_sd}")


def make_streams(seed: int, replication: int = 0, fix_beta: bool = False) -> dict:
    """Independent generators for beta, contexts, noise and the policy.

    Streams are keyed on ``(seed, replication, purpose)``, so what a policy
    draws never shifts the environment's sequence. With ``fix_beta`` the
    beta stream ignores the replication index.
    """
    def gen(purpose, rep=replication):
        return np.random.default_rng(np.random.SeedSequence([seed, rep, purpose]))

    return {
        "beta": gen(STREAM_BETA, 0 if fix_beta else replication),
        "contexts": gen(STREAM_CONTEXTS),
        "noise": gen(STREAM_NOISE),
        "policy": gen(STREAM_POLICY),
    }


@dataclass(frozen=True)
class TrueParameter:
    beta: np.ndarray
    support: np.ndarray


def sample_beta(config: EnvironmentConfig, rng: np.random.Generator) -> TrueParameter:
    """Sparse parameter: a uniform random support of size ``s0``, values U[0, 1]."""
    beta = np.zeros(config.dim)
    support = np.sort(rng.choice(config.dim, size=config.sparsity, replace=False))
    beta[support] = rng.uniform(0.0, 1.0, size=config.sparsity)
    if config.normalize_beta:
        beta /= max(1.0, float(np.linalg.norm(beta)))
    return TrueParameter(beta, support)


def sample_context_set(config: EnvironmentConfig, rng: np.random.Generator) -> np.ndarray:
    """One round of contexts, shape ``(n_arms, dim)``."""
    rho = np.sqrt(config.cross_arm_correlation)
    shared = rng.standard_normal(config.dim)
    if rho == 1.0:
        contexts = np.tile(shared, (config.n_arms, 1))
    else:
        own = rng.standard_normal((config.n_arms, config.dim))
        contexts = rho * shared + np.sqrt(1.0 - config.cross_arm_correlation) * own
    if config.normalize_contexts:
        norms = np.linalg.norm(contexts, axis=1, keepdims=True)
        contexts = contexts / np.maximum(1.0, norms)
    return contexts


def expected_rewards(contexts: np.ndarray, beta) -> np.ndarray:
    beta = beta.beta if isinstance(beta, TrueParameter) else np.asarray(beta)
    if contexts.shape[1] != beta.shape[0]:
        raise ValueError(f"contexts have dim {contexts.shape[1]}, beta has {beta.shape[0]}")
    return contexts @ beta


def realize_rewards(
    contexts: np.ndarray, beta, noise_sd: float, rng: np.random.Generator
) -> np.ndarray:
    """Noisy rewards for all arms; the harness reveals only the chosen one."""
    mean = expected_rewards(contexts, beta)
    return mean + noise_sd * rng.standard_normal(mean.shape[0])


def best_arm(contexts: np.ndarray, beta) -> Tuple[int, float]:
    """Index of the arm with the largest expected reward (lowest on ties)."""
    mean = expected_rewards(contexts, beta)
    arm = int(np.argmax(mean))
    return arm, float(mean[arm])


class SparseLinearBandit:
    """One replication's environment: a fixed beta plus context/noise streams."""

    def __init__(self, config: EnvironmentConfig, streams: dict):
        self.config = config
        self.streams = streams
        self.truth = sample_beta(config, streams["beta"])

    @classmethod
    def from_seed(cls, config: EnvironmentConfig, replication: int = 0, fix_beta: bool = False):
        return cls(config, make_streams(config.seed, replication, fix_beta))

    @property
    def beta(self) -> np.ndarray:
        return self.truth.beta

    def contexts(self) -> np.ndarray:
        return sample_context_set(self.config, self.streams["contexts"])

    def rewards(self, contexts: np.ndarray) -> np.ndarray:
        return realize_rewards(contexts, self.truth, self.config.noise_sd, self.streams["noise"])

    def regret(self, contexts: np.ndarray, arm: int) -> float:
        mean = expected_rewards(contexts, self.truth)
        return float(mean.max() - mean[arm])
