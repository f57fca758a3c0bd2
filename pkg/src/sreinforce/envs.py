"""Seedable benchmark environments.

``cartpole`` and ``acrobot`` follow the classic-control definitions (200 and
500 step caps). ``pointreach`` is a one-dimensional continuous-action task for
the Gaussian policy head, and ``twostate`` is a tiny contextual bandit whose
trajectories can be enumerated exactly.

Every environment owns its random generator; ``reset(seed)`` reseeds it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_kind: str  # "discrete" or "continuous"
    n_actions: int  # number of discrete actions, or action dimension
    max_steps: int
    action_bounds: tuple[float, float] | None = None
    state_low: tuple[float, ...] | None = None
    state_high: tuple[float, ...] | None = None

    @property
    def discrete(self) -> bool:
        return self.action_kind == "discrete"


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class Env:
    spec: EnvSpec

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self.done = False
        return self._reset()

    def step(self, action) -> StepResult:
        if self.done:
            raise EnvError("step() called on a finished episode; call reset() first")
        state, reward, terminal = self._step(action)
        self.t += 1
        self.done = terminal or self.t >= self.spec.max_steps
        return StepResult(state, reward, self.done, {"step": self.t, "terminal": terminal})

    def _check_discrete(self, action) -> int:
        a = int(action)
        if a != action or not 0 <= a < self.spec.n_actions:
            raise EnvError(f"invalid action {action!r} for {self.spec.name}")
        return a


class CartPole(Env):
    spec = EnvSpec(
        "cartpole", 4, "discrete", 2, 200,
        state_low=(-4.8, -np.inf, -0.41887902047863906, -np.inf),
        state_high=(4.8, np.inf, 0.41887902047863906, np.inf),
    )
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masscart + masspole
    length = 0.5  # half the pole length
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_limit = 12 * 2 * math.pi / 360
    x_limit = 2.4

    def _reset(self):
        self.state = self.rng.uniform(-0.05, 0.05, size=4)
        return self.state.copy()

    @classmethod
    def accelerations(cls, state, action: int) -> tuple[float, float]:
        """(cart acceleration, pole angular acceleration)."""
        _, _, theta, theta_dot = state
        force = cls.force_mag if action == 1 else -cls.force_mag
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + cls.polemass_length * theta_dot**2 * sin) / cls.total_mass
        thetaacc = (cls.gravity * sin - cos * temp) / (
            cls.length * (4.0 / 3.0 - cls.masspole * cos**2 / cls.total_mass)
        )
        xacc = temp - cls.polemass_length * thetaacc * cos / cls.total_mass
        return xacc, thetaacc

    def _step(self, action):
        a = self._check_discrete(action)
        x, x_dot, theta, theta_dot = self.state
        xacc, thetaacc = self.accelerations(self.state, a)
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self.state = np.array([x, x_dot, theta, theta_dot])
        terminal = abs(x) > self.x_limit or abs(theta) > self.theta_limit
        return self.state.copy(), 1.0, terminal


def acrobot_derivatives(s, torque: float) -> np.ndarray:
    """Time derivative of (theta1, theta2, dtheta1, dtheta2) for the acrobot."""
    m1 = m2 = 1.0
    l1 = 1.0
    lc1 = lc2 = 0.5
    I1 = I2 = 1.0
    g = 9.8
    theta1, theta2, dtheta1, dtheta2 = s
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + I1 + I2
    d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + I2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
        + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
        + phi2
    )
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2) / (
        m2 * lc2**2 + I2 - d2**2 / d1
    )
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2])


def rk4_step(f, y, dt: float, *args) -> np.ndarray:
    k1 = f(y, *args)
    k2 = f(y + dt / 2 * k1, *args)
    k3 = f(y + dt / 2 * k2, *args)
    k4 = f(y + dt * k3, *args)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _wrap(x: float) -> float:
    return (x + math.pi) % (2 * math.pi) - math.pi


class Acrobot(Env):
    MAX_VEL_1 = 4 * math.pi
    MAX_VEL_2 = 9 * math.pi
    spec = EnvSpec(
        "acrobot", 6, "discrete", 3, 500,
        state_low=(-1.0, -1.0, -1.0, -1.0, -MAX_VEL_1, -MAX_VEL_2),
        state_high=(1.0, 1.0, 1.0, 1.0, MAX_VEL_1, MAX_VEL_2),
    )
    dt = 0.2
    torques = (-1.0, 0.0, 1.0)

    def _reset(self):
        self.raw = self.rng.uniform(-0.1, 0.1, size=4)
        return self.observe(self.raw)

    @staticmethod
    def observe(raw) -> np.ndarray:
        t1, t2, w1, w2 = raw
        return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), w1, w2])

    @classmethod
    def integrate(cls, raw, action: int) -> np.ndarray:
        """One control step: RK4 over ``dt``, angle wrapping, velocity clipping."""
        ns = rk4_step(acrobot_derivatives, np.asarray(raw, dtype=float), cls.dt, cls.torques[action])
        ns[0] = _wrap(ns[0])
        ns[1] = _wrap(ns[1])
        ns[2] = min(max(ns[2], -cls.MAX_VEL_1), cls.MAX_VEL_1)
        ns[3] = min(max(ns[3], -cls.MAX_VEL_2), cls.MAX_VEL_2)
        return ns

    @staticmethod
    def reached(raw) -> bool:
        return -math.cos(raw[0]) - math.cos(raw[1] + raw[0]) > 1.0

    def _step(self, action):
        a = self._check_discrete(action)
        self.raw = self.integrate(self.raw, a)
        terminal = self.reached(self.raw)
        return self.observe(self.raw), (0.0 if terminal else -1.0), terminal


class PointReach(Env):
    """Drive a unit point mass to the origin with a bounded force."""

    spec = EnvSpec("pointreach", 2, "continuous", 1, 100, action_bounds=(-1.0, 1.0))

    def _reset(self):
        self.state = np.array([self.rng.uniform(-1.0, 1.0), 0.0])
        return self.state.copy()

    def _step(self, action):
        a = float(np.clip(np.asarray(action, dtype=float).reshape(-1)[0], -1.0, 1.0))
        x, v = self.state
        v = v + 0.1 * a
        x = x + 0.1 * v
        self.state = np.array([x, v])
        return self.state.copy(), -(x**2) - 0.01 * a**2, False


class TwoState(Env):
    """Two-context bandit: the state is a one-hot context, drawn uniformly.

    ``rewards[s][a]`` is paid for action ``a`` in context ``s``. With
    ``horizon > 1`` the next context is drawn independently of the action.
    """

    def __init__(self, seed=None, rewards=((1.0, 0.0), (0.0, 1.0)), horizon: int = 1):
        super().__init__(seed)
        self.rewards = np.asarray(rewards, dtype=float)
        self.spec = EnvSpec("twostate", 2, "discrete", self.rewards.shape[1], horizon)

    def _draw(self):
        self.context = int(self.rng.integers(2))
        return np.eye(2)[self.context]

    def _reset(self):
        return self._draw()

    def _step(self, action):
        a = self._check_discrete(action)
        r = float(self.rewards[self.context, a])
        return self._draw(), r, False


ENVIRONMENTS = {"cartpole": CartPole, "acrobot": Acrobot, "pointreach": PointReach, "twostate": TwoState}


def make(name: str, seed: int | None = None) -> Env:
    try:
        return ENVIRONMENTS[name](seed)
    except KeyError:
        raise EnvError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None


def spec(name: str) -> EnvSpec:
    return make(name).spec
