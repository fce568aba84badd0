"""Diagonal-Gaussian weight posteriors for the dynamics network.

Holds the posterior type, weight sampling, the closed-form Gaussian mass of a
weight-space box, a reparametrised variational-inference trainer, and the
dataset / posterior file formats.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .core import Box, make_rng
from .neural import MLPArchitecture, forward, gradient, init_weights

__all__ = [
    "DiagGaussianPosterior",
    "DynamicsDataset",
    "VIConfig",
    "VIResult",
    "TrainingError",
    "sample_weights",
    "box_mass",
    "box_mass_bounds",
    "coordinate_masses",
    "fit_vi",
    "elbo",
    "elbo_and_grad",
    "save_posterior",
    "load_posterior",
]

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Raised when variational training diverges."""


@dataclass(frozen=True)
class DiagGaussianPosterior:
    arch: MLPArchitecture
    mean: np.ndarray
    stddev: np.ndarray
    likelihood_sigma: float

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(-1)
        std = np.array(self.stddev, dtype=float).reshape(-1)
        n_w = self.arch.n_params
        if mean.size != n_w or std.size != n_w:
            raise ValueError(f"posterior needs {n_w} means and stddevs, got {mean.size} and {std.size}")
        if not np.all(std > 0.0):
            raise ValueError("posterior stddev must be strictly positive")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(std)):
            raise ValueError("posterior parameters must be finite")
        if not self.likelihood_sigma > 0.0:
            raise ValueError("likelihood_sigma must be positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", std)
        object.__setattr__(self, "likelihood_sigma", float(self.likelihood_sigma))

    @property
    def n_params(self) -> int:
        return self.arch.n_params

    @property
    def state_dim(self) -> int:
        return self.arch.n_out

    @property
    def control_dim(self) -> int:
        return self.arch.n_in - self.arch.n_out

    def predict_mean(self, x, u) -> np.ndarray:
        """Network output at the posterior mean weights."""
        xu = np.concatenate([np.atleast_2d(x), np.atleast_2d(u)], axis=-1)
        out = forward(self.arch, self.mean, xu)
        return out[0] if np.ndim(x) == 1 else out

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "diag_gaussian_posterior",
            "architecture": self.arch.to_dict(),
            "mean": [float(v) for v in self.mean],
            "stddev": [float(v) for v in self.stddev],
            "likelihood_sigma": self.likelihood_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagGaussianPosterior":
        if d.get("kind") != "diag_gaussian_posterior":
            raise ValueError("document is not a posterior file")
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported posterior format version {d.get('format_version')!r}")
        return cls(
            MLPArchitecture.from_dict(d["architecture"]),
            np.array(d["mean"], dtype=float),
            np.array(d["stddev"], dtype=float),
            float(d["likelihood_sigma"]),
        )


def save_posterior(post: DiagGaussianPosterior, path) -> None:
    Path(path).write_text(json.dumps(post.to_dict(), indent=1) + "\n")


def load_posterior(path) -> DiagGaussianPosterior:
    return DiagGaussianPosterior.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DynamicsDataset:
    """Transition records ``(x, u, x_next)`` stored as three aligned arrays."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray

    def __post_init__(self) -> None:
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        xn = np.atleast_2d(np.asarray(self.x_next, dtype=float))
        if not (x.shape[0] == u.shape[0] == xn.shape[0]):
            raise ValueError("dataset columns have different record counts")
        if x.shape[1] != xn.shape[1]:
            raise ValueError("x and x_next have different widths")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x_next", xn)

    @classmethod
    def from_records(cls, records: Sequence[tuple]) -> "DynamicsDataset":
        if not records:
            raise ValueError("no records")
        xs, us, xns = zip(*records)
        return cls(np.array(xs), np.array(us), np.array(xns))

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def state_dim(self) -> int:
        return self.x.shape[1]

    @property
    def control_dim(self) -> int:
        return self.u.shape[1]

    @property
    def inputs(self) -> np.ndarray:
        return np.concatenate([self.x, self.u], axis=1)

    def records(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return [(self.x[i], self.u[i], self.x_next[i]) for i in range(len(self))]

    def header(self) -> list[str]:
        n, c = self.state_dim, self.control_dim
        return [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(c)] + [f"x_next{i}" for i in range(n)]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in np.concatenate([self.x, self.u, self.x_next], axis=1):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path) -> "DynamicsDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty dataset file")
        header = rows[0]
        n = sum(1 for h in header if h.startswith("x") and not h.startswith("x_next"))
        c = sum(1 for h in header if h.startswith("u"))
        if len(header) != 2 * n + c:
            raise ValueError(f"{path}: header does not declare (x..., u..., x_next...) columns")
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 2 * n + c)
        return cls(data[:, :n], data[:, n : n + c], data[:, n + c :])


def sample_weights(post: DiagGaussianPosterior, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one weight vector (or ``size`` of them, stacked) from the posterior."""
    shape = (post.n_params,) if size is None else (size, post.n_params)
    return post.mean + post.stddev * rng.standard_normal(shape)


def _interval_normal_mass(z_lo, z_hi):
    # Phi(z_hi) - Phi(z_lo), evaluated on whichever tail keeps precision.
    upper = z_lo > 0.0
    direct = special.ndtr(z_hi) - special.ndtr(z_lo)
    mirrored = special.ndtr(-z_lo) - special.ndtr(-z_hi)
    return np.where(upper, mirrored, direct)


def coordinate_masses(post: DiagGaussianPosterior, lo, hi, coords: Sequence[int] | None = None) -> np.ndarray:
    """Per-coordinate Gaussian masses of ``[lo, hi]``; broadcasts over leading axes."""
    mean, std = post.mean, post.stddev
    if coords is not None:
        idx = np.asarray(coords, dtype=int)
        mean, std = mean[idx], std[idx]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape[-1] != mean.size or hi.shape[-1] != mean.size:
        raise ValueError(f"box has {lo.shape[-1]} dims, posterior block has {mean.size}")
    m = _interval_normal_mass((lo - mean) / std, (hi - mean) / std)
    return np.clip(m, 0.0, 1.0)


def box_mass_bounds(post: DiagGaussianPosterior, lo, hi, coords: Sequence[int] | None = None) -> np.ndarray:
    """Posterior mass of one or many boxes given as bound arrays ``(..., d)``."""
    return np.prod(coordinate_masses(post, lo, hi, coords), axis=-1)


def box_mass(post: DiagGaussianPosterior, box: Box, coords: Sequence[int] | None = None) -> float:
    """Posterior probability of the weight box ``box``.

    ``coords`` restricts the box to a subset of weight coordinates; the
    remaining coordinates are unconstrained and integrate to one.
    """
    expected = post.n_params if coords is None else len(coords)
    if box.dim != expected:
        raise ValueError(f"box has {box.dim} dims, expected {expected}")
    return float(box_mass_bounds(post, box.lo, box.hi, coords))


# ----------------------------------------------------------------------------
# Variational inference


@dataclass(frozen=True)
class VIConfig:
    epochs: int = 2000
    lr: float = 0.01
    mc_samples: int = 4
    prior_stddev: float = 1.0
    likelihood_sigma: float = 0.05
    init_stddev: float = 1e-2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.mc_samples < 1:
            raise ValueError("epochs must be >= 0 and mc_samples >= 1")
        for name in ("lr", "prior_stddev", "likelihood_sigma", "init_stddev"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class VIResult:
    posterior: DiagGaussianPosterior
    elbo_curve: list[float] = field(default_factory=list)
    initial_elbo: float = float("nan")
    final_elbo: float = float("nan")


def _softplus(r):
    return np.logaddexp(0.0, r)


def _inv_softplus(s):
    return s + np.log(-np.expm1(-s))


def _sigmoid(r):
    return special.expit(r)


def elbo_and_grad(arch, data: DynamicsDataset, mu, rho, eps, prior_stddev: float, likelihood_sigma: float):
    """Monte-Carlo ELBO for fixed standard-normal draws ``eps`` and its gradient.

    The variational family is ``w = mu + softplus(rho) * eps``.  ``eps`` has
    shape ``(S, n_w)``; with ``eps`` held fixed the estimate is a smooth
    deterministic function of ``(mu, rho)``.
    """
    X = data.inputs
    Y = data.x_next
    s = _softplus(rho)
    var = likelihood_sigma**2
    n_terms = Y.size
    ll = 0.0
    g_w_mu = np.zeros_like(mu)
    g_w_rho = np.zeros_like(mu)
    for e in np.atleast_2d(eps):
        w = mu + s * e
        resid = Y - forward(arch, w, X)
        ll += -0.5 * np.sum(resid**2) / var - n_terms * (np.log(likelihood_sigma) + 0.5 * np.log(2 * np.pi))
        dw, _ = gradient(arch, w, X, resid / var)
        g_w_mu += dw
        g_w_rho += dw * e
    S = np.atleast_2d(eps).shape[0]
    ll /= S
    g_w_mu /= S
    g_w_rho /= S
    p2 = prior_stddev**2
    kl = np.sum(np.log(prior_stddev / s) + (s**2 + mu**2) / (2 * p2) - 0.5)
    g_mu = g_w_mu - mu / p2
    g_s = g_w_rho + 1.0 / s - s / p2
    g_rho = g_s * _sigmoid(rho)
    return ll - kl, g_mu, g_rho


def elbo(arch, data, mu, rho, eps, prior_stddev, likelihood_sigma) -> float:
    return elbo_and_grad(arch, data, mu, rho, eps, prior_stddev, likelihood_sigma)[0]


def fit_vi(data: DynamicsDataset, arch: MLPArchitecture, config: VIConfig) -> VIResult:
    """Bayes-by-backprop style VI with Adam on the reparametrised ELBO."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    if arch.n_in != data.state_dim + data.control_dim or arch.n_out != data.state_dim:
        raise ValueError(
            f"architecture {arch.layer_sizes} does not match dataset dims (n={data.state_dim}, c={data.control_dim})"
        )
    rng = make_rng(config.seed, 0)
    mu = init_weights(arch, rng)
    rho = np.full(arch.n_params, _inv_softplus(config.init_stddev))
    eval_eps = make_rng(config.seed, 1).standard_normal((16, arch.n_params))

    def eval_elbo(m, r) -> float:
        return elbo(arch, data, m, r, eval_eps, config.prior_stddev, config.likelihood_sigma)

    init_value = eval_elbo(mu, rho)
    init_mu, init_rho = mu.copy(), rho.copy()

    b1, b2, tiny = 0.9, 0.999, 1e-8
    m_mu = np.zeros_like(mu)
    v_mu = np.zeros_like(mu)
    m_rho = np.zeros_like(rho)
    v_rho = np.zeros_like(rho)
    curve = []
    for t in range(1, config.epochs + 1):
        eps = rng.standard_normal((config.mc_samples, arch.n_params))
        value, g_mu, g_rho = elbo_and_grad(arch, data, mu, rho, eps, config.prior_stddev, config.likelihood_sigma)
        if not np.isfinite(value) or not np.all(np.isfinite(g_mu)) or not np.all(np.isfinite(g_rho)):
            raise TrainingError(f"ELBO diverged at epoch {t}")
        curve.append(float(value))
        # gradient ascent
        m_mu = b1 * m_mu + (1 - b1) * g_mu
        v_mu = b2 * v_mu + (1 - b2) * g_mu**2
        m_rho = b1 * m_rho + (1 - b1) * g_rho
        v_rho = b2 * v_rho + (1 - b2) * g_rho**2
        c1, c2 = 1 - b1**t, 1 - b2**t
        mu = mu + config.lr * (m_mu / c1) / (np.sqrt(v_mu / c2) + tiny)
        rho = rho + config.lr * (m_rho / c1) / (np.sqrt(v_rho / c2) + tiny)

    final_value = eval_elbo(mu, rho)
    if not np.isfinite(final_value):
        raise TrainingError("final ELBO is not finite")
    if final_value < init_value:
        log.warning("VI ended below its initial ELBO (%.4g < %.4g); keeping the initial point", final_value, init_value)
        mu, rho, final_value = init_mu, init_rho, init_value
    post = DiagGaussianPosterior(arch, mu, _softplus(rho), config.likelihood_sigma)
    return VIResult(post, curve, float(init_value), float(final_value))


def predictive_rmse(post: DiagGaussianPosterior, data: DynamicsDataset) -> float:
    pred = forward(post.arch, post.mean, data.inputs)
    return float(np.sqrt(np.mean((pred - data.x_next) ** 2)))
