"""Multi-agent DDPG with a local critic per agent and one shared global critic.

Each learning region owns an actor (observation -> its action column) and a
local critic estimating its own discounted reward.  A single global critic
estimates the discounted system-wide reward.  Actor ``i`` ascends

    Q_local_i(s, a) + alpha * Q_global(s, a)

with its own column of ``a`` produced by the actor and the other columns
taken from the replay batch.

The MDP runs at decision-point granularity: one transition per held joint
action, rewards summed over the action period.  Actors of one kind live in
one network ensemble (see :mod:`pandemic_marl.nn`), so every update is a
handful of batched matmuls.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .environment import Observation, PandemicEnv
from .errors import ConfigurationError, ContractViolation, PandemicMarlError
from .scenario import Scenario

log = logging.getLogger(__name__)


class DivergenceError(PandemicMarlError):
    """A loss or parameter became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.0
    seeds: tuple[int, ...] = (0,)
    episodes: int = 100
    buffer_capacity: int = 100_000
    batch_size: int = 128
    discount: float = 0.97
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    noise_start: float = 0.3
    noise_end: float = 0.02
    # episodes over which the noise decays linearly; None = all episodes
    noise_decay_episodes: int | None = None
    warmup_transitions: int = 256
    updates_per_step: int = 1
    reward_scale: float = 1.0
    encoder_units: int = 64
    hidden: tuple[int, ...] = (128, 128)
    # initial actor output bias (logit), positive = start mostly open
    actor_init_bias: float = 0.0
    max_grad_norm: float | None = None
    # exempt regions (no pandemic cost) keep a fixed all-open column unless set
    learn_exempt_regions: bool = False
    exempt_action: float = 1.0
    eval_every: int = 10

    def __post_init__(self):
        def bad(name, why):
            raise ConfigurationError(why, name)
        if not self.alpha >= 0:
            bad("alpha", f"must be >= 0, got {self.alpha}")
        if not 0 <= self.discount < 1:
            bad("discount", f"must lie in [0, 1), got {self.discount}")
        if not 0 <= self.tau <= 1:
            bad("tau", f"must lie in [0, 1], got {self.tau}")
        if len(self.seeds) == 0:
            bad("seeds", "need at least one seed")
        for name in ("episodes", "warmup_transitions", "updates_per_step"):
            if getattr(self, name) < 0:
                bad(name, "must be >= 0")
        for name in ("buffer_capacity", "batch_size", "encoder_units", "eval_every"):
            if getattr(self, name) < 1:
                bad(name, "must be >= 1")
        for name in ("actor_lr", "critic_lr", "reward_scale"):
            if not getattr(self, name) > 0:
                bad(name, "must be > 0")
        if self.noise_start < 0 or self.noise_end < 0:
            bad("noise_start", "noise scales must be >= 0")
        if not 0 <= self.exempt_action <= 1:
            bad("exempt_action", "must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", "train")
        data = dict(data)
        for key in ("seeds", "hidden"):
            if key in data:
                data[key] = tuple(int(v) for v in data[key])
        return cls(**data)

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig.from_dict({**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        out["hidden"] = list(self.hidden)
        return out

    def noise_at(self, episode: int) -> float:
        span = self.noise_decay_episodes or max(self.episodes - 1, 1)
        frac = min(episode / span, 1.0) if span > 0 else 1.0
        return self.noise_start + frac * (self.noise_end - self.noise_start)


class Featurizer:
    """Turns an :class:`Observation` into an ``(n_regions, N_FEATURES)`` array.

    All scales come from the scenario (initial populations, tolerances,
    nominal demand), so features are order one in the regimes of interest.
    """

    N_FEATURES = 12

    def __init__(self, population, hospital_unit, lockdown_tolerance, nominal_demand):
        self.population = np.asarray(population, dtype=float)
        self.hospital_unit = np.asarray(hospital_unit, dtype=float)
        self.lockdown_tolerance = np.asarray(lockdown_tolerance, dtype=float)
        self.nominal_demand = np.asarray(nominal_demand, dtype=float)

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "Featurizer":
        prof = scenario.stacked_profile
        return cls(
            population=scenario.initial_states.sum(axis=1),
            hospital_unit=np.asarray(prof.pandemic_tolerance) * np.asarray(prof.hospital_scale),
            lockdown_tolerance=prof.lockdown_tolerance,
            nominal_demand=scenario.nominal_demand,
        )

    def spec(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("population", "hospital_unit", "lockdown_tolerance", "nominal_demand")}

    @classmethod
    def from_spec(cls, spec: dict) -> "Featurizer":
        return cls(**spec)

    def __call__(self, obs: Observation) -> np.ndarray:
        vis, delta = obs.visible_states, obs.visible_deltas
        n = vis.shape[0]
        demand = obs.demand_forecast[0]
        out = np.empty((n, self.N_FEATURES))
        out[:, 0] = vis[:, 0] / self.population
        out[:, 1] = np.log1p(vis[:, 1] / self.hospital_unit)
        out[:, 2] = vis[:, 2] / self.population
        out[:, 3] = delta[:, 1] / self.hospital_unit
        out[:, 4] = 10.0 * delta[:, 0] / self.population
        out[:, 5] = 10.0 * delta[:, 2] / self.population
        out[:, 6] = np.log1p(obs.lockdown_penalty / self.lockdown_tolerance)
        out[:, 7] = obs.progress
        out[:, 8] = np.log10(self.hospital_unit) / 5.0
        out[:, 9] = np.log10(self.lockdown_tolerance) / 2.0
        out[:, 10] = demand.sum(axis=0) / self.nominal_demand
        out[:, 11] = demand.sum(axis=1) / self.nominal_demand
        return out


def critic_input(features, joint_action):
    """Append each region's inbound column and outbound row of the joint action."""
    a = np.asarray(joint_action, dtype=float)
    x = np.asarray(features, dtype=float)
    if x.ndim < a.ndim:
        x = np.broadcast_to(x, a.shape[:-2] + x.shape[-2:])
    return np.concatenate([x, np.swapaxes(a, -1, -2), a], axis=-1)


def action_gradient(dx, n_features):
    """Inverse of :func:`critic_input` for gradients: ``d/dx`` -> ``d/d(joint action)``."""
    n = dx.shape[-2]
    d_col = dx[..., n_features:n_features + n]
    d_row = dx[..., n_features + n:]
    return np.swapaxes(d_col, -1, -2) + d_row


class Critic:
    """Q-network wrapper: ``q(features, joint_action)`` and its action gradient.

    ``shared=True`` (global critic) evaluates any leading batch shape with the
    single network; otherwise the leading axis indexes ensemble members.
    """

    def __init__(self, net: nn.RegionNet, n_features: int, shared: bool):
        self.net = net
        self.n_features = n_features
        self.shared = shared

    def _forward(self, features, joint_action):
        x = critic_input(features, joint_action)
        lead = x.shape[:-2]
        if self.shared:
            x = x.reshape((-1,) + x.shape[-2:])
        y, cache = self.net.forward(x)
        q = y[..., 0]
        q = q.reshape(lead) if self.shared else q
        return q, cache, lead

    def q(self, features, joint_action):
        return self._forward(features, joint_action)[0]

    def q_and_grad_action(self, features, joint_action):
        """Values and gradient of each value w.r.t. the joint action."""
        q, cache, lead = self._forward(features, joint_action)
        dy = np.ones(cache[2][-1].shape)
        _, dx = self.net.backward(dy, cache)
        dx = dx.reshape(lead + dx.shape[-2:]) if self.shared else dx
        return q, action_gradient(dx, self.n_features)

    def regress(self, features, joint_action, targets):
        """Mean-squared-error loss(es) and the flat parameter gradient."""
        q, cache, _ = self._forward(features, joint_action)
        err = q - targets
        batch = err.shape[-1]
        dy = (2.0 / batch) * err
        dy = dy.reshape(1, -1, 1) if self.shared else dy[..., None]
        grads, _ = self.net.backward(dy, cache)
        return np.mean(err * err, axis=-1), grads


class ReplayBuffer:
    """Uniform replay over decision-point transitions."""

    def __init__(self, capacity, n_regions, n_features):
        self.capacity = int(capacity)
        n = n_regions
        self.obs = np.zeros((capacity, n, n_features))
        self.next_obs = np.zeros((capacity, n, n_features))
        self.actions = np.zeros((capacity, n, n))
        self.local_rewards = np.zeros((capacity, n))
        self.global_rewards = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self._size = 0
        self._next = 0

    def __len__(self):
        return self._size

    def add(self, obs, action, local_rewards, global_reward, next_obs, done):
        local_rewards = np.asarray(local_rewards, dtype=float)
        total = float(local_rewards.sum())
        if not abs(global_reward - total) <= 1e-9 * max(1.0, abs(total)):
            raise ContractViolation(
                f"global reward {global_reward!r} differs from the sum of local rewards {total!r}")
        k = self._next
        self.obs[k] = obs
        self.actions[k] = action
        self.local_rewards[k] = local_rewards
        self.global_rewards[k] = global_reward
        self.next_obs[k] = next_obs
        self.done[k] = float(done)
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size, rng) -> dict:
        if self._size == 0:
            raise ContractViolation("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return {
            "obs": self.obs[idx], "actions": self.actions[idx],
            "local_rewards": self.local_rewards[idx], "global_rewards": self.global_rewards[idx],
            "next_obs": self.next_obs[idx], "done": self.done[idx],
        }


def _clip_norm(grads, max_norm):
    if max_norm is None:
        return grads
    norm = np.sqrt(np.dot(grads, grads))
    return grads * (max_norm / norm) if norm > max_norm else grads


class IRCLearner:
    """Actors, local critics, the shared global critic and their targets.

    ``agents`` lists the regions that learn; every other region plays the
    constant column ``fixed_action``.
    """

    def __init__(self, n_regions, n_features, config: TrainConfig, rng, agents=None,
                 fixed_action=1.0):
        self.n = int(n_regions)
        self.n_features = int(n_features)
        self.config = config
        self.rng = rng
        self.agents = list(range(self.n)) if agents is None else [int(a) for a in agents]
        if not self.agents:
            raise ConfigurationError("at least one region must learn", "agents")
        self.fixed_action = float(fixed_action)
        E, c = len(self.agents), config
        critic_features = self.n_features + 2 * self.n
        self.actor = nn.RegionNet(self.n_features, self.n, c.encoder_units, c.hidden, self.n,
                                  output="sigmoid", targets=self.agents, members=E, rng=rng,
                                  out_bias=c.actor_init_bias)
        local = nn.RegionNet(critic_features, self.n, c.encoder_units, c.hidden, 1,
                             targets=self.agents, members=E, rng=rng)
        glob = nn.RegionNet(critic_features, self.n, c.encoder_units, c.hidden, 1, rng=rng)
        self.local_critics = Critic(local, self.n_features, shared=False)
        self.global_critic = Critic(glob, self.n_features, shared=True)
        self.actor_target = self.actor.copy()
        self.local_target = Critic(local.copy(), self.n_features, shared=False)
        self.global_target = Critic(glob.copy(), self.n_features, shared=True)
        self.actor_opt = nn.Adam(self.actor.n_params, c.actor_lr)
        self.local_opt = nn.Adam(local.n_params, c.critic_lr)
        self.global_opt = nn.Adam(glob.n_params, c.critic_lr)
        self.updates = 0

    # -- acting -------------------------------------------------------------
    def policy_columns(self, features, actor=None):
        """Actor outputs ``(E, B, n)`` for features ``(B, n, f)``."""
        return (actor or self.actor)(features)

    def assemble(self, columns):
        """Joint action ``(B, n, n)`` from learned columns ``(E, B, n)``."""
        batch = columns.shape[1]
        joint = np.full((batch, self.n, self.n), self.fixed_action)
        joint[:, :, self.agents] = np.moveaxis(columns, 0, -1)
        return joint

    def select_action(self, features, noise_scale=0.0):
        """Joint action for one observation; Gaussian exploration, clipped to [0, 1]."""
        cols = self.policy_columns(np.asarray(features)[None])
        if noise_scale > 0:
            cols = np.clip(cols + self.rng.normal(0.0, noise_scale, cols.shape), 0.0, 1.0)
        return self.assemble(cols)[0]

    # -- learning -----------------------------------------------------------
    def critic_targets(self, batch):
        c = self.config
        next_x = batch["next_obs"]
        next_a = self.assemble(self.policy_columns(next_x, self.actor_target))
        live = c.discount * (1.0 - batch["done"])
        r_local = c.reward_scale * batch["local_rewards"][:, self.agents].T
        r_global = c.reward_scale * batch["global_rewards"]
        y_local = r_local + live * self.local_target.q(next_x, next_a)
        y_global = r_global + live * self.global_target.q(next_x, next_a)
        return y_local, y_global

    def update_critics(self, batch):
        y_local, y_global = self.critic_targets(batch)
        x, a = batch["obs"], batch["actions"]
        local_loss, g_local = self.local_critics.regress(x, a, y_local)
        global_loss, g_global = self.global_critic.regress(x, a, y_global)
        self._check(local_loss, global_loss)
        max_norm = self.config.max_grad_norm
        self.local_opt.step(self.local_critics.net.params, _clip_norm(g_local, max_norm))
        self.global_opt.step(self.global_critic.net.params, _clip_norm(g_global, max_norm))
        return {"local": local_loss, "global": float(global_loss)}

    def actor_gradient(self, batch, alpha=None):
        """Actor loss per agent and the flat gradient of the summed losses."""
        alpha = self.config.alpha if alpha is None else alpha
        x, a = batch["obs"], batch["actions"]
        E, B = len(self.agents), x.shape[0]
        cols, cache = self.actor.forward(x)
        joint = np.broadcast_to(a, (E,) + a.shape).copy()
        members = np.arange(E)
        joint[members, :, :, self.agents] = cols
        q_local, dq_local = self.local_critics.q_and_grad_action(x, joint)
        value = q_local
        d_col = dq_local[members, :, :, self.agents]
        if alpha != 0:
            q_global, dq_global = self.global_critic.q_and_grad_action(x, joint)
            value = value + alpha * q_global
            d_col = d_col + alpha * dq_global[members, :, :, self.agents]
        grads, _ = self.actor.backward(-d_col / B, cache)
        return -value.mean(axis=1), grads

    def update_actor(self, batch, alpha=None):
        loss, grads = self.actor_gradient(batch, alpha)
        self._check(loss)
        self.actor_opt.step(self.actor.params, _clip_norm(grads, self.config.max_grad_norm))
        return loss

    def soft_update(self):
        tau = self.config.tau
        nn.soft_update(self.actor_target, self.actor, tau)
        nn.soft_update(self.local_target.net, self.local_critics.net, tau)
        nn.soft_update(self.global_target.net, self.global_critic.net, tau)

    def update(self, batch):
        critic = self.update_critics(batch)
        actor = self.update_actor(batch)
        self.soft_update()
        self.updates += 1
        return {"critic_local": critic["local"], "critic_global": critic["global"],
                "actor": actor}

    @staticmethod
    def _check(*values):
        for v in values:
            if not np.all(np.isfinite(v)):
                raise DivergenceError(f"non-finite loss {v!r}")

    def networks(self) -> dict[str, nn.Network]:
        return {"actor": self.actor, "local_critics": self.local_critics.net,
                "global_critic": self.global_critic.net}


def reference_ddpg_update(actor, critic, actor_target, critic_target, actor_opt, critic_opt,
                          batch, discount, tau, reward_scale=1.0):
    """Plain single-agent DDPG step on one region (no global critic).

    Serves as the degenerate case the multi-agent learner must reproduce
    with one region and ``alpha = 0``.  Networks use the same region-set
    layout so arithmetic is comparable bit for bit.
    """
    n_feat = actor.features
    x, a, x2 = batch["obs"], batch["actions"], batch["next_obs"]
    r = reward_scale * batch["local_rewards"][:, 0]
    # critic: TD target from target networks
    a2 = actor_target(x2)[0][:, :, None]
    live = discount * (1.0 - batch["done"])
    y = r + live * critic_target(critic_input(x2, a2))[0, :, 0]
    q, cache = critic.forward(critic_input(x, a))
    err = q[0, :, 0] - y
    g_critic, _ = critic.backward(((2.0 / err.shape[0]) * err)[None, :, None], cache)
    critic_opt.step(critic.params, g_critic)
    # actor: ascend Q(s, pi(s))
    mu, a_cache = actor.forward(x)
    joint = a[None].copy()
    joint[0, :, :, 0] = mu[0]
    q, cache = critic.forward(critic_input(x, joint))
    _, dx = critic.backward(np.ones(q.shape), cache)
    dq = action_gradient(dx, n_feat)[0, :, :, 0]
    g_actor, _ = actor.backward(-dq[None] / x.shape[0], a_cache)
    actor_opt.step(actor.params, g_actor)
    nn.soft_update(actor_target, actor, tau)
    nn.soft_update(critic_target, critic, tau)
    return -q[0, :, 0].mean()


# -- training loop --------------------------------------------------------

@dataclass
class SeedResult:
    seed: int
    best_eval_reward: float | None
    best_episode: int | None
    snapshot: dict | None = None        # name -> flat params at best evaluation
    diverged: str | None = None
    seconds: float = 0.0


@dataclass
class TrainingResult:
    config: TrainConfig
    scenario: Scenario
    agents: list[int]
    featurizer: Featurizer
    learner: IRCLearner
    seeds: list[SeedResult] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    best_seed: int | None = None

    @property
    def best_eval_reward(self):
        for s in self.seeds:
            if s.seed == self.best_seed:
                return s.best_eval_reward
        return None

    def policy(self):
        from .evaluation import TrainedPolicy
        return TrainedPolicy(self.learner.actor, self.featurizer, self.agents,
                             self.config.exempt_action)

    def save(self, path, extra: dict | None = None):
        meta = {
            "config": self.config.to_dict(),
            "scenario": self.scenario.to_dict(),
            "agents": self.agents,
            "featurizer": self.featurizer.spec(),
            "best_seed": self.best_seed,
            "best_eval_reward": self.best_eval_reward,
            "seeds": [{"seed": s.seed, "best_eval_reward": s.best_eval_reward,
                       "best_episode": s.best_episode, "diverged": s.diverged}
                      for s in self.seeds],
            **(extra or {}),
        }
        return nn.save_checkpoint(path, self.learner.networks(), meta)

    def write_log(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return path


def learning_agents(scenario: Scenario, config: TrainConfig) -> list[int]:
    if config.learn_exempt_regions:
        return list(range(scenario.n_regions))
    return [i for i in range(scenario.n_regions) if not scenario.exempt_mask[i]]


def evaluate_learner(learner: IRCLearner, featurizer: Featurizer, env: PandemicEnv, seed=0):
    """Deterministic rollout; returns the mean per-step global reward."""
    obs = env.reset(seed)
    total, steps = 0.0, 0
    while not env.done:
        out = env.step(learner.select_action(featurizer(obs), 0.0))
        total += out.global_reward
        steps += len(out.info["steps"])
        obs = out.observation
    return total / steps


def _train_seed(config, scenario, featurizer, agents, seed, log_records):
    rng = np.random.default_rng(seed)
    env = PandemicEnv(scenario)
    learner = IRCLearner(scenario.n_regions, Featurizer.N_FEATURES, config, rng, agents,
                         config.exempt_action)
    buffer = ReplayBuffer(config.buffer_capacity, scenario.n_regions, Featurizer.N_FEATURES)
    result = SeedResult(seed, None, None)
    started = time.perf_counter()
    try:
        for episode in range(config.episodes):
            noise = config.noise_at(episode)
            obs = env.reset(seed)
            x = featurizer(obs)
            ep_local = np.zeros(scenario.n_regions)
            losses = []
            while not env.done:
                action = learner.select_action(x, noise)
                out = env.step(action)
                x_next = featurizer(out.observation)
                buffer.add(x, action, out.local_rewards, out.global_reward, x_next, out.done)
                ep_local += out.local_rewards
                x = x_next
                if len(buffer) >= max(config.warmup_transitions, 1):
                    for _ in range(config.updates_per_step):
                        losses.append(learner.update(buffer.sample(config.batch_size, rng)))
            record = {
                "seed": seed, "episode": episode, "noise": noise,
                "local_rewards": ep_local.tolist(), "global_reward": float(ep_local.sum()),
                "updates": learner.updates,
            }
            if losses:
                record["critic_local_loss"] = np.mean([l["critic_local"] for l in losses],
                                                      axis=0).tolist()
                record["critic_global_loss"] = float(np.mean([l["critic_global"]
                                                              for l in losses]))
                record["actor_loss"] = np.mean([l["actor"] for l in losses], axis=0).tolist()
            last = episode == config.episodes - 1
            if (episode + 1) % config.eval_every == 0 or last:
                score = evaluate_learner(learner, featurizer, env, seed)
                record["eval_global_reward"] = score
                if not np.isfinite(score):
                    raise DivergenceError(f"non-finite evaluation reward {score!r}")
                if result.best_eval_reward is None or score > result.best_eval_reward:
                    result.best_eval_reward, result.best_episode = score, episode
                    result.snapshot = {k: v.params.copy()
                                       for k, v in learner.networks().items()}
            log_records.append(record)
            log.debug("seed %d episode %d: %s", seed, episode, record)
    except DivergenceError as exc:
        result.diverged = f"episode {episode}: {exc}"
        log_records.append({"seed": seed, "episode": episode, "diverged": str(exc)})
        log.warning("seed %d diverged at episode %d: %s", seed, episode, exc)
    result.seconds = time.perf_counter() - started
    return learner, result


def train(config: TrainConfig, scenario: Scenario, progress=None) -> TrainingResult:
    """Train one learner per seed and keep the best evaluation snapshot overall."""
    featurizer = Featurizer.for_scenario(scenario)
    agents = learning_agents(scenario, config)
    out = TrainingResult(config, scenario, agents, featurizer, learner=None)
    best_learner = None
    for seed in config.seeds:
        learner, res = _train_seed(config, scenario, featurizer, agents, seed, out.log)
        out.seeds.append(res)
        if progress is not None:
            progress(res)
        if res.snapshot is None:
            continue
        best = out.best_eval_reward
        if best is None or res.best_eval_reward > best:
            for name, net in learner.networks().items():
                net.set_params(res.snapshot[name])
            best_learner, out.best_seed = learner, seed
    if best_learner is None:
        # nothing evaluated (zero episodes or every seed diverged): untrained networks
        best_learner = IRCLearner(scenario.n_regions, Featurizer.N_FEATURES, config,
                                  np.random.default_rng(config.seeds[0]), agents,
                                  config.exempt_action)
    out.learner = best_learner
    return out


def load_train_config(path=None) -> TrainConfig:
    """Training config from YAML; ``None`` loads the calibrated config shipped
    next to the outbreak scenario."""
    import yaml
    from importlib import resources

    if path is None:
        text = (resources.files("pandemic_marl") / "scenarios" / "outbreak_train.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read training config: {exc}", str(path)) from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse training config: {exc}", str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigurationError("expected a mapping of training options", str(path))
    return TrainConfig.from_dict(data.get("train", data))
