"""Ground-truth agents, closed-loop BNN rollouts and Monte-Carlo reach estimates."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy import stats

from .abstraction import RegionSpec
from .core import Box
from .neural import Network, forward_batch
from .posterior import DiagGaussianPosterior, DynamicsDataset

__all__ = [
    "ENVIRONMENTS",
    "Environment",
    "make_environment",
    "env_step",
    "bnn_step",
    "bnn_step_batch",
    "Outcome",
    "Trajectory",
    "classify",
    "rollout",
    "ReachEstimate",
    "clopper_pearson",
    "estimate_reach",
    "scripted_action",
    "generate_dataset",
    "as_controller",
]

ENVIRONMENTS = ("chain1d", "puck2d", "kinematic_car", "hovercraft")

_DIMS = {"chain1d": (1, 1), "puck2d": (4, 2), "kinematic_car": (3, 2), "hovercraft": (4, 3)}

_DEFAULTS = {
    "chain1d": {"control_limit": 0.5, "target": [0.9], "gain": 0.5},
    "puck2d": {"h": 0.1, "friction": 0.1, "mass": 1.0, "control_limit": 1.0, "target": [0.0, 0.0], "gain": 1.0, "damping": 1.5},
    "kinematic_car": {"h": 0.1, "control_limit": 1.0, "target": [0.0, 0.0], "gain": 2.0},
    "hovercraft": {"h": 0.1, "gravity": 0.1, "control_limit": 1.0, "target": [0.0, 0.0, 0.25], "gain": 2.0},
}


@dataclass(frozen=True)
class Environment:
    """One of the supported agents with its parameters."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.name!r}; choose from {ENVIRONMENTS}")
        merged = dict(_DEFAULTS[self.name])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    @property
    def state_dim(self) -> int:
        return _DIMS[self.name][0]

    @property
    def control_dim(self) -> int:
        return _DIMS[self.name][1]

    @property
    def control_box(self) -> Box:
        lim = float(self.params["control_limit"])
        return Box(np.full(self.control_dim, -lim), np.full(self.control_dim, lim))

    def puck_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        h, eta, m = (float(self.params[k]) for k in ("h", "friction", "mass"))
        A = np.array(
            [
                [1.0, 0.0, h, 0.0],
                [0.0, 1.0, 0.0, h],
                [0.0, 0.0, 1.0 - h * eta / m, 0.0],
                [0.0, 0.0, 0.0, 1.0 - h * eta / m],
            ]
        )
        B = np.array([[0.0, 0.0], [0.0, 0.0], [h / m, 0.0], [0.0, h / m]])
        return A, B


def make_environment(name: str, **params) -> Environment:
    return Environment(name, params)


def env_step(env: Environment, x, u) -> np.ndarray:
    """One discrete step of the true dynamics; accepts single states or batches."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != env.state_dim or u.shape[-1] != env.control_dim:
        raise ValueError(
            f"{env.name} expects state dim {env.state_dim} and control dim {env.control_dim}, "
            f"got {x.shape[-1]} and {u.shape[-1]}"
        )
    p = env.params
    if env.name == "chain1d":
        return x + u
    if env.name == "puck2d":
        A, B = env.puck_matrices()
        return x @ A.T + u @ B.T
    h = float(p["h"])
    theta = x[..., -1]
    out = np.array(x, copy=True)
    out[..., 0] = x[..., 0] + h * u[..., 0] * np.cos(theta)
    out[..., 1] = x[..., 1] + h * u[..., 0] * np.sin(theta)
    if env.name == "kinematic_car":
        out[..., 2] = theta + h * u[..., 1]
    else:
        out[..., 2] = x[..., 2] + h * (u[..., 1] - float(p["gravity"]))
        out[..., 3] = theta + h * u[..., 2]
    return out


def scripted_action(env: Environment, x) -> np.ndarray:
    """Proportional controller toward ``params['target']``, clipped to the control box."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = env.params
    tgt = np.asarray(p["target"], dtype=float)
    g = float(p["gain"])
    lim = float(p["control_limit"])
    if env.name == "chain1d":
        u = g * (tgt - x)
    elif env.name == "puck2d":
        u = g * (tgt - x[:, :2]) - float(p["damping"]) * x[:, 2:]
    else:
        d = tgt[:2] - x[:, :2]
        heading = np.arctan2(d[:, 1], d[:, 0])
        err = np.angle(np.exp(1j * (heading - x[:, -1])))
        speed = np.clip(g * np.linalg.norm(d, axis=1), 0.0, lim) * np.cos(err).clip(0.0, None)
        turn = g * err
        if env.name == "kinematic_car":
            u = np.stack([speed, turn], axis=1)
        else:
            lift = g * (tgt[2] - x[:, 2]) + float(p["gravity"])
            u = np.stack([speed, lift, turn], axis=1)
    return np.clip(u, -lim, lim)


def generate_dataset(
    env: Environment,
    behavior: str,
    episodes: int,
    steps: int,
    rng: np.random.Generator,
    start_box: Box | None = None,
    exploration_noise: float = 0.1,
) -> DynamicsDataset:
    """Roll the true dynamics under a random or scripted behaviour policy."""
    if episodes < 1 or steps < 1:
        raise ValueError("episodes and steps must be positive")
    if behavior not in ("random", "scripted-proportional"):
        raise ValueError(f"unknown behaviour {behavior!r}")
    n = env.state_dim
    if start_box is None:
        start_box = Box(np.full(n, -1.0), np.full(n, 1.0))
    if start_box.dim != n:
        raise ValueError("start box dimension does not match the environment")
    U = env.control_box
    xs, us, xns = [], [], []
    for _ in range(episodes):
        x = rng.uniform(start_box.lo, start_box.hi)
        for _ in range(steps):
            if behavior == "random":
                u = rng.uniform(U.lo, U.hi)
            else:
                u = scripted_action(env, x)[0]
                if exploration_noise > 0.0:
                    u = np.clip(u + exploration_noise * rng.standard_normal(env.control_dim), U.lo, U.hi)
            xn = env_step(env, x, u)
            xs.append(x)
            us.append(u)
            xns.append(xn)
            x = xn
    return DynamicsDataset(np.array(xs), np.array(us), np.array(xns))


# ----------------------------------------------------------------------------
# BNN closed loop


def bnn_step(posterior: DiagGaussianPosterior, x, u, rng: np.random.Generator) -> np.ndarray:
    """One transition of the BNN system with a fresh weight draw and process noise."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != posterior.state_dim or u.shape[-1] != posterior.control_dim:
        raise ValueError("state/control dims do not match the posterior's architecture")
    if x.ndim == 1:
        return bnn_step_batch(posterior, x[None], u[None], rng)[0]
    return bnn_step_batch(posterior, x, u, rng)


def bnn_step_batch(posterior: DiagGaussianPosterior, X, U, rng: np.random.Generator) -> np.ndarray:
    T = X.shape[0]
    W = posterior.mean + posterior.stddev * rng.standard_normal((T, posterior.n_params))
    mean = forward_batch(posterior.arch, W, np.concatenate([X, U], axis=1))
    return mean + posterior.likelihood_sigma * rng.standard_normal(mean.shape)


class Controller(Protocol):
    def __call__(self, k: int, X: np.ndarray) -> np.ndarray: ...


def as_controller(strategy) -> Controller:
    """Wrap a policy network or anything with ``act(k, X)`` as ``f(k, X)``."""
    if isinstance(strategy, Network):
        return lambda k, X: strategy(X)
    if hasattr(strategy, "act"):
        return strategy.act
    if callable(strategy):
        return strategy
    raise TypeError(f"cannot use {type(strategy).__name__} as a controller")


class Outcome(enum.Enum):
    REACHED_GOAL = "ReachedGoal"
    LEFT_SAFE = "LeftSafe"
    EXPIRED = "Expired"


@dataclass
class Trajectory:
    states: np.ndarray
    outcome: Outcome
    step: int | None


def classify(states, region: RegionSpec) -> tuple[Outcome, int | None]:
    """Outcome of a state sequence: first goal entry, or first exit from the safe set."""
    states = np.atleast_2d(states)
    goal = region.in_goal(states)
    safe = region.in_safe(states)
    for k in range(states.shape[0]):
        if goal[k]:
            return Outcome.REACHED_GOAL, k
        if not safe[k]:
            return Outcome.LEFT_SAFE, k
    return Outcome.EXPIRED, None


def rollout(posterior, strategy, region: RegionSpec, x0, N: int, rng: np.random.Generator) -> Trajectory:
    """Single closed-loop trajectory, truncated at the first goal entry or safe exit."""
    act = as_controller(strategy)
    states = [np.asarray(x0, dtype=float)]
    for k in range(N + 1):
        outcome, step = classify(states[-1][None], region)
        if outcome != Outcome.EXPIRED:
            return Trajectory(np.array(states), outcome, k)
        if k == N:
            break
        u = act(k, states[-1][None])
        states.append(bnn_step_batch(posterior, states[-1][None], u, rng)[0])
    return Trajectory(np.array(states), Outcome.EXPIRED, None)


@dataclass(frozen=True)
class ReachEstimate:
    p_hat: float
    ci_lo: float
    ci_hi: float
    successes: int
    n: int

    @property
    def stderr(self) -> float:
        return float(np.sqrt(max(self.p_hat * (1.0 - self.p_hat), 0.0) / self.n))


def clopper_pearson(successes: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(stats.beta.ppf(1 - alpha / 2, successes + 1, n - successes))
    return lo, hi


def reach_indicators(posterior, strategy, region: RegionSpec, X0, N: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean reach-avoid success for each row of ``X0`` (one trajectory each)."""
    act = as_controller(strategy)
    X = np.array(np.atleast_2d(X0), dtype=float)
    T = X.shape[0]
    success = np.zeros(T, dtype=bool)
    alive = np.ones(T, dtype=bool)
    for k in range(N + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        g = region.in_goal(X[idx])
        s = region.in_safe(X[idx])
        success[idx[g]] = True
        alive[idx[g | ~s]] = False
        if k == N:
            break
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        U = np.atleast_2d(act(k, X[idx]))
        X[idx] = bnn_step_batch(posterior, X[idx], U, rng)
    return success


def estimate_reach(posterior, strategy, region: RegionSpec, x0, N: int, n_traj: int, rng: np.random.Generator) -> ReachEstimate:
    """Fraction of ``n_traj`` closed-loop trajectories from ``x0`` that reach the goal safely."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    X0 = np.repeat(np.atleast_2d(np.asarray(x0, dtype=float)), n_traj, axis=0)
    hits = int(reach_indicators(posterior, strategy, region, X0, N, rng).sum())
    lo, hi = clopper_pearson(hits, n_traj)
    return ReachEstimate(hits / n_traj, lo, hi, hits, n_traj)


def save_trajectories(trajs: list[Trajectory], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = trajs[0].states.shape[1] if trajs else 0
        w.writerow(["traj", "k"] + [f"x{i}" for i in range(n)] + ["outcome"])
        for t, tr in enumerate(trajs):
            for k, s in enumerate(tr.states):
                w.writerow([t, k] + [repr(float(v)) for v in s] + [tr.outcome.value])
