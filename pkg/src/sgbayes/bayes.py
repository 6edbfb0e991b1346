"""Uniform priors, Gaussian and exponential likelihoods, log-posterior evaluation.

All posterior work happens in log space; with dozens of residuals the
exponentiated likelihood forms underflow long before they become useful.
The normalisation constant of the posterior is ignored throughout -- only
the product likelihood * prior matters for sampling, so the log-posterior is
defined up to an additive constant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .grid import Box

LIKELIHOOD_KINDS = ("mvn", "exp")


@dataclass(frozen=True)
class PriorSpec:
    """Product of independent uniform distributions over a box."""

    box: Box

    @property
    def log_density_inside(self) -> float:
        return -float(np.sum(np.log(self.box.ranges)))

    def log_density(self, theta) -> float:
        return self.log_density_inside if self.box.contains(theta) else -np.inf


def log_likelihood_mvn(data, outputs, sigma) -> float:
    """Log Gaussian likelihood with diagonal covariance: -1/2 sum((d-f)/sigma)^2."""
    d = np.asarray(data, dtype=float)
    f = np.asarray(outputs, dtype=float)
    s = np.broadcast_to(np.asarray(sigma, dtype=float), d.shape)
    if d.shape != f.shape:
        raise ConfigurationError(
            f"data length {d.shape} does not match model output length {f.shape}"
        )
    if np.any(s <= 0):
        raise ConfigurationError("mvn likelihood requires strictly positive sigma")
    r = (d - f) / s
    return -0.5 * float(np.dot(r, r))


def log_likelihood_exp(data, outputs, zeta) -> float:
    """Log exponential informal likelihood on mean-centred residuals.

    Equals -zeta * sum((r_i - rbar)^2) / sum((d_i - dbar)^2) with r = d - f;
    adding a constant to every residual leaves it unchanged.
    """
    d = np.asarray(data, dtype=float)
    f = np.asarray(outputs, dtype=float)
    if d.shape != f.shape:
        raise ConfigurationError(
            f"data length {d.shape} does not match model output length {f.shape}"
        )
    if zeta <= 0:
        raise ConfigurationError("exp likelihood requires zeta > 0")
    denom = float(np.sum((d - d.mean()) ** 2))
    if denom == 0.0:
        raise ConfigurationError("exp likelihood undefined for constant data vectors")
    r = d - f
    r = r - r.mean()
    return -zeta * float(np.dot(r, r)) / denom


@dataclass(frozen=True)
class LikelihoodSpec:
    """Reference data plus the residual model used to score fits against it."""

    kind: str
    data: np.ndarray
    sigma: np.ndarray | None = None  # mvn: per-datum standard deviations
    zeta: float | None = None        # exp: scaling constant

    def __post_init__(self):
        if self.kind not in LIKELIHOOD_KINDS:
            raise ConfigurationError(f"unknown likelihood kind {self.kind!r}")
        data = np.asarray(self.data, dtype=float).reshape(-1)
        object.__setattr__(self, "data", data)
        if self.kind == "mvn":
            if self.sigma is None:
                raise ConfigurationError("mvn likelihood requires sigma")
            sigma = np.broadcast_to(
                np.asarray(self.sigma, dtype=float), data.shape
            ).copy()
            if np.any(sigma <= 0):
                raise ConfigurationError("mvn likelihood requires strictly positive sigma")
            object.__setattr__(self, "sigma", sigma)
        else:
            if self.zeta is None or self.zeta <= 0:
                raise ConfigurationError("exp likelihood requires zeta > 0")
            if float(np.sum((data - data.mean()) ** 2)) == 0.0:
                raise ConfigurationError("exp likelihood undefined for constant data vectors")

    @property
    def n_data(self) -> int:
        return self.data.shape[0]

    def log_likelihood(self, outputs) -> float:
        if self.kind == "mvn":
            return log_likelihood_mvn(self.data, outputs, self.sigma)
        return log_likelihood_exp(self.data, outputs, self.zeta)


def mvn_likelihood(data, sigma=0.1) -> LikelihoodSpec:
    return LikelihoodSpec(kind="mvn", data=np.asarray(data, dtype=float), sigma=sigma)


def exp_likelihood(data, zeta=500.0) -> LikelihoodSpec:
    return LikelihoodSpec(kind="exp", data=np.asarray(data, dtype=float), zeta=zeta)


class PosteriorSpec:
    """Log-posterior of a forward map under a uniform prior.

    The evaluator is any callable theta -> output vector: the true forward
    model for conventional sampling, or a sparse-grid surrogate for
    accelerated sampling.  Points outside the prior box score -inf without
    the evaluator being called, and evaluator invocations are counted.
    """

    def __init__(self, prior: PriorSpec, likelihood: LikelihoodSpec,
                 evaluator: Callable[[np.ndarray], np.ndarray]):
        self.prior = prior
        self.likelihood = likelihood
        self.evaluator = evaluator
        self.eval_count = 0

    @property
    def box(self) -> Box:
        return self.prior.box

    def log_posterior(self, theta) -> float:
        t = np.asarray(theta, dtype=float)
        if not self.prior.box.contains(t):
            return -np.inf
        self.eval_count += 1
        outputs = self.evaluator(t)
        return self.likelihood.log_likelihood(outputs) + self.prior.log_density_inside

    __call__ = log_posterior


def make_reference_data(model, theta_star, noise_sigma: float = 0.0,
                        seed: int | None = None) -> np.ndarray:
    """Reference data d = f(theta*) + Gaussian noise, reproducible from the seed.

    ``noise_sigma = 0`` returns the noise-free model output.
    """
    if noise_sigma < 0:
        raise ConfigurationError("noise sigma must be >= 0")
    outputs = model(np.asarray(theta_star, dtype=float))
    if noise_sigma == 0.0:
        return outputs
    rng = np.random.default_rng(seed)
    return outputs + rng.normal(0.0, noise_sigma, size=outputs.shape)


def save_reference_csv(data, path) -> None:
    """Write reference data as CSV with header ``index,value``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "value"])
        for k, value in enumerate(np.asarray(data, dtype=float)):
            writer.writerow([k, repr(float(value))])


def load_reference_csv(path) -> np.ndarray:
    """Read reference data written by :func:`save_reference_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["index", "value"]:
            raise ConfigurationError(f"{path}: expected CSV header 'index,value'")
        values = [float(row[1]) for row in reader if row]
    return np.array(values)
