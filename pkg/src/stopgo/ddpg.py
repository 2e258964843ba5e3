"""Deep deterministic policy gradient for the ego vehicle's acceleration."""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .nn import AdamState, DenseNet, adam_step, soft_update
from .reward import RewardConfig, total_reward
from .sim import KraussParams, PlatoonEnv, SimConfig

log = logging.getLogger(__name__)

STATE_DIM = 5
_MAGIC = b"STOPGOPB"
_VERSION = 1


class TrainingDiverged(FloatingPointError):
    """Non-finite loss or parameters; ``result`` holds the log up to the abort."""

    result = None


@dataclass(frozen=True)
class DdpgConfig:
    gamma: float = 0.99
    batch_size: int = 64
    buffer_capacity: int = 200_000
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden: tuple = (64, 64)
    activation: str = "relu"
    ou_theta: float = 0.15
    ou_sigma: float = 0.3
    ou_sigma_end: float = 0.05
    ou_decay_steps: int = 100_000
    warmup_steps: int = 2000
    train_steps: int = 300_000
    updates_per_step: int = 1
    reward_scale: float = 0.01
    # per-dimension (delta_s, v_lead, a_lead, v_ego, a_ego) divisors
    state_scale: tuple = (100.0, 20.0, 3.0, 20.0, 3.0)
    state_offset: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    action_scale: float = 3.0
    probe_steps: int = 3000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if len(self.state_scale) != STATE_DIM or len(self.state_offset) != STATE_DIM:
            raise ValueError("state normalization needs five entries")
        if min(self.state_scale) <= 0 or self.action_scale <= 0:
            raise ValueError("normalization scales must be > 0")


@dataclass
class Transition:
    s: np.ndarray
    a: float
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    @classmethod
    def from_transitions(cls, transitions):
        if not transitions:
            raise ValueError("empty batch")
        return cls(
            np.array([np.asarray(t.s, dtype=np.float64) for t in transitions]),
            np.array([float(t.a) for t in transitions]),
            np.array([float(t.r) for t in transitions]),
            np.array([np.asarray(t.s_next, dtype=np.float64) for t in transitions]),
            np.array([bool(t.done) for t in transitions]),
        )

    def __len__(self):
        return self.r.size


class ReplayBuffer:
    """Fixed-capacity ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity, rng, state_dim=STATE_DIM):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, t):
        if not math.isfinite(t.r):
            raise ValueError("non-finite reward")
        i = self._next
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.s_next[i] = t.s_next
        self.done[i] = t.done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def contents(self):
        """Stored transitions, oldest first."""
        start = self._next if self.size == self.capacity else 0
        idx = [(start + k) % self.capacity for k in range(self.size)]
        return [self._get(i) for i in idx]

    def _get(self, i):
        return Transition(self.s[i].copy(), float(self.a[i]), float(self.r[i]),
                          self.s_next[i].copy(), bool(self.done[i]))

    def sample_indices(self, n):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.integers(0, self.size, size=n)

    def sample(self, n):
        """Draw ``n`` transitions uniformly with replacement."""
        return [self._get(i) for i in self.sample_indices(n)]

    def sample_batch(self, n):
        idx = self.sample_indices(n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])


def buffer_push(buf, t):
    buf.push(t)


def buffer_sample(buf, n):
    return buf.sample(n)


class OUNoise:
    """Ornstein-Uhlenbeck process with a linearly decaying diffusion scale."""

    def __init__(self, rng, theta=0.15, sigma=0.3, sigma_end=0.05, decay_steps=100_000, mu=0.0):
        self.rng = rng
        self.theta = theta
        self.sigma_start = sigma
        self.sigma_end = sigma_end
        self.decay_steps = decay_steps
        self.mu = mu
        self.steps = 0
        self.state = mu

    @property
    def sigma(self):
        if self.decay_steps <= 0:
            return self.sigma_end
        frac = min(1.0, self.steps / self.decay_steps)
        return self.sigma_start + (self.sigma_end - self.sigma_start) * frac

    def reset(self):
        self.state = self.mu

    def sample(self):
        sigma = self.sigma
        self.state += self.theta * (self.mu - self.state) + sigma * self.rng.standard_normal()
        self.steps += 1
        return self.state


class PolicyBundle:
    """Actor, critic, their targets, optimizer moments and normalization."""

    def __init__(self, actor, critic, action_bounds=(-3.0, 2.0),
                 state_scale=DdpgConfig.state_scale, state_offset=DdpgConfig.state_offset,
                 action_scale=DdpgConfig.action_scale):
        if actor.layer_sizes[0] != STATE_DIM or actor.layer_sizes[-1] != 1:
            raise ValueError("actor must map 5 inputs to 1 output")
        if critic.layer_sizes[0] != STATE_DIM + 1 or critic.layer_sizes[-1] != 1:
            raise ValueError("critic must map 6 inputs to 1 output")
        self.actor = actor
        self.critic = critic
        self.target_actor = actor.copy()
        self.target_critic = critic.copy()
        self.actor_opt = AdamState(actor)
        self.critic_opt = AdamState(critic)
        self.low, self.high = (float(x) for x in action_bounds)
        self.state_scale = np.array(state_scale, dtype=np.float64)
        self.state_offset = np.array(state_offset, dtype=np.float64)
        self.action_scale = float(action_scale)

    @classmethod
    def initialize(cls, cfg, rng, action_bounds=(-3.0, 2.0)):
        hidden = tuple(cfg.hidden)
        actor = DenseNet.init_uniform((STATE_DIM, *hidden, 1), rng, cfg.activation, "tanh")
        critic = DenseNet.init_uniform((STATE_DIM + 1, *hidden, 1), rng, cfg.activation, "identity")
        return cls(actor, critic, action_bounds, cfg.state_scale, cfg.state_offset, cfg.action_scale)

    # -- policy evaluation ------------------------------------------------

    def normalize(self, s):
        return (np.asarray(s, dtype=np.float64) - self.state_offset) / self.state_scale

    def squash(self, y):
        return self.low + (y + 1.0) * 0.5 * (self.high - self.low)

    def act(self, s, target=False):
        """Deterministic action(s) for raw state(s)."""
        net = self.target_actor if target else self.actor
        a = self.squash(net.forward(self.normalize(s)))
        return a[..., 0]

    def q_value(self, s, a, target=False):
        net = self.target_critic if target else self.critic
        x = np.concatenate(
            [self.normalize(s), (np.asarray(a, dtype=np.float64) / self.action_scale)[..., None]],
            axis=-1,
        )
        return net.forward(x)[..., 0]

    def __call__(self, state):
        return float(self.act(np.asarray(state, dtype=np.float64)))

    def all_finite(self):
        nets = (self.actor, self.critic, self.target_actor, self.target_critic)
        return all(np.isfinite(net.flat).all() for net in nets)

    # -- persistence --------------------------------------------------------

    def header(self):
        return {
            "action_bounds": [self.low, self.high],
            "state_scale": self.state_scale.tolist(),
            "state_offset": self.state_offset.tolist(),
            "action_scale": self.action_scale,
        }

    def to_bytes(self):
        head = json.dumps(self.header(), sort_keys=True).encode("ascii")
        blobs = [net.to_bytes() for net in
                 (self.actor, self.critic, self.target_actor, self.target_critic)]
        return b"".join([_MAGIC, struct.pack("<II", _VERSION, len(head)), head, *blobs])

    @classmethod
    def from_bytes(cls, data):
        if data[:8] != _MAGIC:
            raise ValueError("not a policy file (bad magic)")
        version, hlen = struct.unpack_from("<II", data, 8)
        if version != _VERSION:
            raise ValueError(f"unsupported policy format version {version}")
        head = json.loads(data[16:16 + hlen].decode("ascii"))
        pos = 16 + hlen
        nets = []
        for _ in range(4):
            net, pos = DenseNet.from_bytes(data, pos)
            nets.append(net)
        bundle = cls(nets[0], nets[1], head["action_bounds"], head["state_scale"],
                     head["state_offset"], head["action_scale"])
        bundle.target_actor, bundle.target_critic = nets[2], nets[3]
        return bundle

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- learning steps ---------------------------------------------------------

def _as_batch(batch):
    return batch if isinstance(batch, Batch) else Batch.from_transitions(batch)


def compute_targets(batch, bundle, gamma):
    """Bootstrapped critic targets from the target networks; no bootstrap on done."""
    b = _as_batch(batch)
    if gamma == 0.0:
        return b.r.copy()
    a_next = bundle.act(b.s_next, target=True)
    q_next = bundle.q_value(b.s_next, a_next, target=True)
    return b.r + gamma * np.where(b.done, 0.0, q_next)


def critic_inputs(bundle, s, a):
    return np.concatenate([bundle.normalize(s), (a / bundle.action_scale)[:, None]], axis=1)


def critic_loss_and_grad(batch, targets, bundle):
    b = _as_batch(batch)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != b.r.shape:
        raise ValueError("targets and batch differ in length")
    q, cache = bundle.critic.forward_cached(critic_inputs(bundle, b.s, b.a))
    err = y - q[:, 0]
    loss = float(np.mean(err * err))
    grads, _ = bundle.critic.backward(cache, (-2.0 / y.size * err)[:, None])
    return loss, grads


def critic_update(batch, targets, bundle, lr):
    """One Adam step on the mean squared TD error; returns the pre-step loss."""
    loss, grads = critic_loss_and_grad(batch, targets, bundle)
    if not math.isfinite(loss):
        raise TrainingDiverged(f"critic loss became {loss}")
    try:
        adam_step(bundle.critic, grads, bundle.critic_opt, lr)
    except FloatingPointError as exc:
        raise TrainingDiverged(f"critic update: {exc}") from None
    return loss


def actor_objective_and_grad(batch, bundle):
    """Mean Q(s, mu(s)) over the batch and its gradient w.r.t. actor parameters."""
    b = _as_batch(batch)
    n = b.r.size
    y, a_cache = bundle.actor.forward_cached(bundle.normalize(b.s))
    a = bundle.squash(y[:, 0])
    q, c_cache = bundle.critic.forward_cached(critic_inputs(bundle, b.s, a))
    _, dx = bundle.critic.backward(c_cache, np.full((n, 1), 1.0 / n), param_grads=False)
    dq_da = dx[:, -1] / bundle.action_scale
    upstream = (dq_da * 0.5 * (bundle.high - bundle.low))[:, None]
    grads, _ = bundle.actor.backward(a_cache, upstream)
    return float(q.mean()), grads


def actor_update(batch, bundle, lr):
    """Ascent step on mean Q through the frozen critic; returns the objective."""
    obj, grads = actor_objective_and_grad(batch, bundle)
    grads.flat *= -1.0  # ascent
    try:
        adam_step(bundle.actor, grads, bundle.actor_opt, lr)
    except FloatingPointError as exc:
        raise TrainingDiverged(f"actor update: {exc}") from None
    return obj


def explore_action(s, bundle, noise):
    a = bundle(s) + noise.sample()
    return min(max(a, bundle.low), bundle.high)


# -- training loop ------------------------------------------------------------

@dataclass
class EpisodeLog:
    episode: int
    steps: int
    ret: float
    critic_loss: float
    ego_sbar: float


@dataclass
class TrainResult:
    bundle: PolicyBundle
    log: list = field(default_factory=list)

    def write_log(self, path):
        with open(path, "w") as fh:
            fh.write("episode,steps,return,critic_loss,ego_sbar\n")
            for row in self.log:
                fh.write(f"{row.episode},{row.steps},{row.ret:.6f},{row.critic_loss:.8f},{row.ego_sbar:.6f}\n")


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    env, noise, init, sampling, windows = ss.spawn(5)
    return {
        "env": int(env.generate_state(1)[0]),
        "noise": np.random.default_rng(noise),
        "init": np.random.default_rng(init),
        "sampling": np.random.default_rng(sampling),
        "windows": np.random.default_rng(windows),
    }


def probe_sbar(bundle, sim_cfg, profile, krauss, steps, window):
    """Noise-free rollout of the live actor; average rolling std of ego speed."""
    steps = min(steps, len(profile) - 1)
    env = PlatoonEnv(sim_cfg, profile, krauss)
    s = env.reset(0, steps)
    speeds = [s.v_ego]
    done = False
    while not done:
        s, _, done, _ = env.step(bundle(s))
        speeds.append(s.v_ego)
    if len(speeds) < window + 2:
        return float("nan")
    return metrics.avg_rolling_std(np.array(speeds), metrics.RollingConfig(window))


def train(sim_cfg, profile, cfg, reward_cfg=RewardConfig(), krauss=KraussParams(),
          probe_window=100, progress=None):
    """Train a policy; returns a :class:`TrainResult`.

    Episodes run on random windows of ``profile`` of ``sim_cfg.episode_horizon``
    steps; one gradient update per environment step after warm-up.
    """
    streams = _streams(cfg.seed)
    bundle = PolicyBundle.initialize(cfg, streams["init"], sim_cfg.action_bounds)
    result = TrainResult(bundle)
    if cfg.train_steps <= 0:
        return result
    horizon = min(sim_cfg.episode_horizon, len(profile) - 1)
    env_cfg = SimConfig(**{**asdict(sim_cfg), "seed": streams["env"], "episode_horizon": horizon})
    env = PlatoonEnv(env_cfg, profile, krauss)
    buf = ReplayBuffer(cfg.buffer_capacity, streams["sampling"])
    noise = OUNoise(streams["noise"], cfg.ou_theta, cfg.ou_sigma, cfg.ou_sigma_end, cfg.ou_decay_steps)
    windows = streams["windows"]
    total = 0
    episode = 0
    try:
        while total < cfg.train_steps:
            start = int(windows.integers(0, len(profile) - horizon))
            s = env.reset(start, horizon)
            noise.reset()
            x = s.as_array()
            ep_ret, losses, steps = 0.0, [], 0
            done = False
            while not done and total < cfg.train_steps:
                a = explore_action(x, bundle, noise)
                s2, crashed, done, _ = env.step(a)
                r = total_reward(s2, env.headway, reward_cfg).total
                ep_ret += r
                x2 = s2.as_array()
                # horizon cut-offs are not terminal; only a crash ends the return
                buf.push(Transition(x, a, r * cfg.reward_scale, x2, crashed))
                x = x2
                total += 1
                steps += 1
                if total >= cfg.warmup_steps and len(buf) >= cfg.batch_size:
                    for _ in range(cfg.updates_per_step):
                        batch = buf.sample_batch(cfg.batch_size)
                        y = compute_targets(batch, bundle, cfg.gamma)
                        losses.append(critic_update(batch, y, bundle, cfg.critic_lr))
                        actor_update(batch, bundle, cfg.actor_lr)
                        soft_update(bundle.target_critic, bundle.critic, cfg.tau)
                        soft_update(bundle.target_actor, bundle.actor, cfg.tau)
            if not bundle.all_finite():
                raise TrainingDiverged(f"non-finite parameters after episode {episode}")
            sbar = probe_sbar(bundle, sim_cfg, profile, krauss, cfg.probe_steps, probe_window)
            row = EpisodeLog(episode, steps, ep_ret, float(np.mean(losses)) if losses else 0.0, sbar)
            result.log.append(row)
            log.info("episode %d steps=%d return=%.1f loss=%.5f ego_sbar=%.3f",
                     row.episode, row.steps, row.ret, row.critic_loss, row.ego_sbar)
            if progress is not None:
                progress(row)
            episode += 1
    except TrainingDiverged as exc:
        exc.result = result
        raise
    return result
