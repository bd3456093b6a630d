"""On-policy PPO: rollout collection with a fixed-variance Gaussian policy,
GAE advantages, clipped-surrogate updates, and value regression.

The action distribution is N(actor(obs), sigma^2 I) with constant sigma, so
entropy is constant and no entropy bonus is optimized. Rollouts are stored
env-major: all steps of env 0, then env 1, and so on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import neuralnet as nn
from .env import HoverEnv, TermStatus


class NonFiniteLossError(RuntimeError):
    """A PPO loss became NaN/Inf; diagnostics carried in the message."""


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2_000_000
    lr0: float = 5e-5
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs_per_update: int = 10
    minibatch_size: int = 32
    value_loss_coef: float = 0.5
    sigma: float = 1.0
    rollout_horizon: int = 2048
    n_envs: int = 8
    hidden_sizes: tuple[int, int] = (64, 64)
    checkpoint_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must be in [0, 1)")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        for name in ("total_steps", "epochs_per_update", "minibatch_size",
                     "rollout_horizon", "n_envs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.rollout_horizon % self.n_envs != 0:
            raise ValueError("rollout_horizon must be divisible by n_envs")


@dataclass
class RolloutBuffer:
    """Env-major on-policy storage; discarded after each update."""

    obs: np.ndarray        # (T, obs_dim)
    actions: np.ndarray    # (T, act_dim) pre-clamp samples
    log_probs: np.ndarray  # (T,)
    rewards: np.ndarray    # (T,)
    values: np.ndarray     # (T,)
    dones: np.ndarray      # (T,) 1.0 where the episode ended at this step
    bootstrap: np.ndarray  # (n_envs,) critic value of each env's tail state
    n_envs: int
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list = field(default_factory=list)
    episode_lengths: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)


def collect_rollout(policy: nn.Mlp, critic: nn.Mlp, envs: list[HoverEnv],
                    cfg: TrainConfig, rng: np.random.Generator) -> RolloutBuffer:
    """Run the env pool for rollout_horizon steps total, sampling actions
    from N(policy(obs), sigma^2 I). Terminated episodes reset in place; each
    env's truncated tail is bootstrapped with the critic value (zero if the
    tail step ended an episode, including divergence)."""
    n_envs = len(envs)
    steps_per_env = cfg.rollout_horizon // n_envs
    t_total = steps_per_env * n_envs

    obs_buf = np.empty((t_total, envs[0].obs_dim))
    act_buf = np.empty((t_total, envs[0].act_dim))
    logp_buf = np.empty(t_total)
    rew_buf = np.empty(t_total)
    val_buf = np.empty(t_total)
    done_buf = np.zeros(t_total)
    bootstrap = np.zeros(n_envs)
    ep_returns: list[float] = []
    ep_lengths: list[int] = []

    for e, env in enumerate(envs):
        obs = env.observe() if env.state is not None else env.reset()
        ep_ret = getattr(env, "_running_return", 0.0)
        ep_len = getattr(env, "_running_length", 0)
        base = e * steps_per_env
        for t in range(steps_per_env):
            i = base + t
            mean = nn.forward(policy, obs)
            action = mean + cfg.sigma * rng.standard_normal(env.act_dim)
            obs_buf[i] = obs
            act_buf[i] = action
            logp_buf[i] = nn.gaussian_log_prob(mean, cfg.sigma, action)
            val_buf[i] = float(nn.forward(critic, obs)[0])
            obs, r, status = env.step(action)
            rew_buf[i] = r
            ep_ret += r
            ep_len += 1
            if status is not TermStatus.RUNNING:
                done_buf[i] = 1.0
                ep_returns.append(ep_ret)
                ep_lengths.append(ep_len)
                ep_ret, ep_len = 0.0, 0
                obs = env.reset()
        if done_buf[base + steps_per_env - 1] == 0.0:
            bootstrap[e] = float(nn.forward(critic, obs)[0])
        env._running_return = ep_ret
        env._running_length = ep_len

    return RolloutBuffer(obs_buf, act_buf, logp_buf, rew_buf, val_buf,
                         done_buf, bootstrap, n_envs,
                         episode_returns=ep_returns, episode_lengths=ep_lengths)


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """GAE over each env's contiguous segment.

    delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t)
    A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1};  returns = A + V.
    """
    t_total = len(buffer)
    seg = t_total // buffer.n_envs
    adv = np.zeros(t_total)
    for e in range(buffer.n_envs):
        base = e * seg
        next_value = buffer.bootstrap[e]
        acc = 0.0
        for t in range(seg - 1, -1, -1):
            i = base + t
            nonterm = 1.0 - buffer.dones[i]
            delta = buffer.rewards[i] + gamma * next_value * nonterm - buffer.values[i]
            acc = delta + gamma * lam * nonterm * acc
            adv[i] = acc
            next_value = buffer.values[i]
    returns = adv + buffer.values
    buffer.advantages = adv
    buffer.returns = returns
    return adv, returns


def ppo_update(policy: nn.Mlp, critic: nn.Mlp, policy_opt: nn.AdamState,
               critic_opt: nn.AdamState, buffer: RolloutBuffer,
               cfg: TrainConfig, progress: float,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate policy update and value regression over the buffer.

    Advantages are normalized once per update; the learning rate follows the
    linear schedule lr0 * (1 - progress). Frozen parameters stay untouched.
    """
    if buffer.advantages is None:
        raise ValueError("compute_gae must run before ppo_update")
    adv = buffer.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    lr = cfg.lr0 * (1.0 - progress)
    sig2 = cfg.sigma * cfg.sigma
    t_total = len(buffer)

    pol_losses, val_losses, clip_fracs = [], [], []
    for _ in range(cfg.epochs_per_update):
        perm = rng.permutation(t_total)
        for start in range(0, t_total, cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            ob = buffer.obs[idx]
            ac = buffer.actions[idx]
            a_n = adv[idx]
            ret = buffer.returns[idx]
            old_logp = buffer.log_probs[idx]
            nb = len(idx)

            pol_acts = nn._forward_cached(policy, ob)
            mean = pol_acts[-1]
            logp = nn.gaussian_log_prob(mean, cfg.sigma, ac)
            ratio = np.exp(logp - old_logp)
            unclipped = ratio * a_n
            clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a_n
            surrogate = np.minimum(unclipped, clipped)
            pol_loss = -surrogate.mean()

            # d(-surrogate)/d(mean): gradient flows only where the
            # unclipped branch is active.
            use = (unclipped <= clipped).astype(float)
            coef = -(use * ratio * a_n) / nb
            up_pol = coef[:, None] * (ac - mean) / sig2
            g_pol = nn.gradients(policy, ob, up_pol, acts=pol_acts)

            cri_acts = nn._forward_cached(critic, ob)
            v = cri_acts[-1][:, 0]
            err = v - ret
            val_loss = cfg.value_loss_coef * float(np.mean(err * err))
            up_val = (cfg.value_loss_coef * 2.0 * err / nb)[:, None]
            g_val = nn.gradients(critic, ob, up_val, acts=cri_acts)

            if not (math.isfinite(pol_loss) and math.isfinite(val_loss)):
                raise NonFiniteLossError(
                    f"non-finite loss: policy={pol_loss} value={val_loss} "
                    f"ratio range=({ratio.min()}, {ratio.max()})")

            nn.adam_step(policy, policy_opt, g_pol, lr)
            nn.adam_step(critic, critic_opt, g_val, lr)

            pol_losses.append(float(pol_loss))
            val_losses.append(val_loss)
            clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)))

    return {
        "policy_loss": float(np.mean(pol_losses)),
        "value_loss": float(np.mean(val_losses)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "lr": lr,
    }


TRAIN_LOG_HEADER = ("update_index,env_steps,lr,mean_ep_reward,mean_ep_len,"
                    "policy_loss,value_loss,clip_fraction")


@dataclass
class TrainLogRow:
    update_index: int
    env_steps: int
    lr: float
    mean_ep_reward: float
    mean_ep_len: float
    policy_loss: float
    value_loss: float
    clip_fraction: float

    def csv(self) -> str:
        return (f"{self.update_index},{self.env_steps},{self.lr:.9g},"
                f"{self.mean_ep_reward:.9g},{self.mean_ep_len:.9g},"
                f"{self.policy_loss:.9g},{self.value_loss:.9g},"
                f"{self.clip_fraction:.9g}")


def train(envs: list[HoverEnv], policy: nn.Mlp, critic: nn.Mlp,
          cfg: TrainConfig, rng: np.random.Generator,
          policy_opt: nn.AdamState | None = None,
          critic_opt: nn.AdamState | None = None,
          log_path=None, checkpoint_fn=None) -> list[TrainLogRow]:
    """Alternate rollout / GAE / update until total_steps env steps are used.

    checkpoint_fn(update_index, policy, critic, policy_opt, critic_opt) is
    called every checkpoint_every updates when provided. Returns the log.
    """
    if policy_opt is None:
        policy_opt = nn.AdamState.for_net(policy)
    if critic_opt is None:
        critic_opt = nn.AdamState.for_net(critic)

    n_updates = max(1, cfg.total_steps // cfg.rollout_horizon)
    log: list[TrainLogRow] = []
    log_fh = open(log_path, "w") if log_path else None
    if log_fh:
        log_fh.write(TRAIN_LOG_HEADER + "\n")
    try:
        for u in range(n_updates):
            buf = collect_rollout(policy, critic, envs, cfg, rng)
            compute_gae(buf, cfg.gamma, cfg.gae_lambda)
            progress = u / n_updates
            losses = ppo_update(policy, critic, policy_opt, critic_opt,
                                buf, cfg, progress, rng)
            row = TrainLogRow(
                update_index=u,
                env_steps=(u + 1) * cfg.rollout_horizon,
                lr=losses["lr"],
                mean_ep_reward=(float(np.mean(buf.episode_returns))
                                if buf.episode_returns else math.nan),
                mean_ep_len=(float(np.mean(buf.episode_lengths))
                             if buf.episode_lengths else math.nan),
                policy_loss=losses["policy_loss"],
                value_loss=losses["value_loss"],
                clip_fraction=losses["clip_fraction"],
            )
            log.append(row)
            if log_fh:
                log_fh.write(row.csv() + "\n")
                log_fh.flush()
            if checkpoint_fn and (u + 1) % cfg.checkpoint_every == 0:
                checkpoint_fn(u, policy, critic, policy_opt, critic_opt)
    finally:
        if log_fh:
            log_fh.close()
    return log
