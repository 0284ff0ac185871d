"""PPO training: lockstep rollout workers, GAE, clipped updates with Adam."""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, NonFiniteLoss
from .io import atomic_write
from .mdp import PipeEnv, RewardWeights, Terminal
from .observe import OBS_DIM, layout_hash
from .policy import N_ACTIONS, PolicyNet, masked_log_probs, sample_from, save_checkpoint
from .scene import SceneConfig, substream

log = logging.getLogger(__name__)

RUNNING, SUCCESS, TRAPPED, TRUNCATED = 0, 1, 2, 3
_TERMINAL_CODE = {Terminal.RUNNING: RUNNING, Terminal.SUCCESS: SUCCESS,
                  Terminal.TRAPPED: TRAPPED, Terminal.TRUNCATED: TRUNCATED}

LOG_FIELDS = ("iter", "timesteps", "mean_return", "success_rate", "mean_length", "mean_elbows",
              "policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac", "wall_s")


@dataclass(frozen=True)
class TrainConfig:
    total_timesteps: int = 20_000_000
    workers: int = 28
    rollout_size: int = 8192
    minibatch: int = 1024
    epochs: int = 4
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 3e-4
    max_grad_norm: float | None = 0.5
    adam_eps: float = 1e-5
    normalize_advantages: bool = True
    # learner sees reward * reward_scale; logged returns stay unscaled
    reward_scale: float = 1.0
    seed: int = 0
    feature_mask: tuple = ()
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    scene_config: SceneConfig = field(default_factory=SceneConfig)
    hidden: int = 512
    depth: int = 4
    checkpoint_every: int = 50
    # stop once the trailing success rate reaches this value (None: run the full budget)
    target_success: float | None = None
    success_window: int = 500
    procs: int = 1

    def check(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.rollout_size % self.minibatch:
            raise ConfigError("rollout_size must be divisible by minibatch")
        if self.rollout_size < self.workers:
            raise ConfigError("rollout_size must be >= workers")
        if self.procs < 1 or self.procs > self.workers:
            raise ConfigError("procs must be in 1..workers")
        layout_hash(self.feature_mask)

    def to_dict(self):
        d = asdict(self)
        d["feature_mask"] = list(self.feature_mask)
        return d


@dataclass
class EpisodeInfo:
    ret: float
    success: bool
    length: int
    elbows: int
    terminal: str


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray        # RUNNING / SUCCESS / TRAPPED / TRUNCATED
    bootstrap: np.ndarray        # V(final obs) for truncated transitions, else 0
    segments: list               # (start, stop) per worker, worker-major
    last_values: np.ndarray      # V(obs after the last transition) per worker
    episodes: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)


# --------------------------------------------------------------------------
# Rollout collection
# --------------------------------------------------------------------------

class Worker:
    """One environment stream with its own scene and action random streams."""

    def __init__(self, index, config):
        self.index = index
        self.scene_rng = substream(config.seed, 1, index)
        self.action_rng = substream(config.seed, 2, index)
        self.env = PipeEnv(weights=config.reward_weights, feature_mask=config.feature_mask,
                           scene_config=config.scene_config)
        self._new_episode()

    def _new_episode(self):
        self.obs = self.env.reset(int(self.scene_rng.integers(0, 2**63)))
        self.mask = self.env.action_mask()
        self.ep_return = 0.0


def split_counts(total, workers):
    base, extra = divmod(total, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def _collect(net, workers, counts):
    """Lockstep collection over ``workers``; returns per-worker segment dicts."""
    segs = []
    for w, n in zip(workers, counts):
        segs.append({
            "obs": np.empty((n, OBS_DIM)), "actions": np.empty(n, np.int64),
            "masks": np.empty((n, N_ACTIONS), bool), "log_probs": np.empty(n),
            "values": np.empty(n), "rewards": np.empty(n), "terminals": np.zeros(n, np.int8),
            "bootstrap": np.zeros(n), "episodes": [], "final_obs": {},
        })
    t = 0
    while True:
        active = [i for i, n in enumerate(counts) if t < n]
        if not active:
            break
        obs = np.stack([workers[i].obs for i in active])
        masks = np.stack([workers[i].mask for i in active])
        logits, values = net.forward(obs)
        logp = masked_log_probs(logits, masks)
        us = np.array([workers[i].action_rng.random() for i in active])
        actions = sample_from(np.exp(logp), masks, us)
        for j, i in enumerate(active):
            w, seg = workers[i], segs[i]
            a = int(actions[j])
            seg["obs"][t] = w.obs
            seg["masks"][t] = w.mask
            seg["actions"][t] = a
            seg["log_probs"][t] = logp[j, a]
            seg["values"][t] = values[j]
            out = w.env.step(a)
            seg["rewards"][t] = out.reward
            seg["terminals"][t] = _TERMINAL_CODE[out.terminal]
            w.ep_return += out.reward
            if out.terminal is Terminal.RUNNING:
                w.obs = out.observation
                w.mask = w.env.action_mask()
            else:
                st = w.env.state
                seg["episodes"].append(EpisodeInfo(w.ep_return, out.terminal is Terminal.SUCCESS,
                                                   st.steps, st.elbows, out.terminal.value))
                if out.terminal is Terminal.TRUNCATED:
                    seg["final_obs"][t] = out.observation
                w._new_episode()
        t += 1
    tails = np.stack([w.obs for w in workers])
    _, last_values = net.forward(tails)
    for seg in segs:
        if seg["final_obs"]:
            idx = sorted(seg["final_obs"])
            _, v = net.forward(np.stack([seg["final_obs"][k] for k in idx]))
            seg["bootstrap"][idx] = v
        del seg["final_obs"]
    return segs, last_values


def _assemble(segs, last_values):
    keys = ("obs", "actions", "masks", "log_probs", "values", "rewards", "terminals", "bootstrap")
    arrays = {k: np.concatenate([s[k] for s in segs]) for k in keys}
    bounds, pos = [], 0
    episodes = []
    for s in segs:
        n = len(s["actions"])
        bounds.append((pos, pos + n))
        pos += n
        episodes += s["episodes"]
    return RolloutBuffer(**arrays, segments=bounds, last_values=np.asarray(last_values, dtype=np.float64),
                         episodes=episodes)


def collect_rollouts(net, workers, rollout_size):
    """Collect ``rollout_size`` transitions split evenly across ``workers``.

    Episodes that end mid-rollout restart on a fresh random scene. The buffer is
    assembled worker-major, so its contents do not depend on scheduling.
    """
    segs, last_values = _collect(net, workers, split_counts(rollout_size, len(workers)))
    return _assemble(segs, last_values)


def _proc_main(conn, indices, config):
    workers = [Worker(i, config) for i in indices]
    while True:
        msg = conn.recv()
        if msg is None:
            break
        net, counts = msg
        conn.send(_collect(net, workers, counts))
    conn.close()


class ProcessCollector:
    """Workers spread over ``procs`` subprocesses; merged in worker order."""

    def __init__(self, config):
        ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
        self.groups = np.array_split(np.arange(config.workers), config.procs)
        self.conns, self.procs = [], []
        for group in self.groups:
            parent, child = ctx.Pipe()
            p = ctx.Process(target=_proc_main, args=(child, [int(i) for i in group], config), daemon=True)
            p.start()
            self.conns.append(parent)
            self.procs.append(p)
        self.n_workers = config.workers

    def collect(self, net, rollout_size):
        counts = split_counts(rollout_size, self.n_workers)
        for conn, group in zip(self.conns, self.groups):
            conn.send((net, [counts[i] for i in group]))
        segs, last = [], []
        for conn in self.conns:
            s, lv = conn.recv()
            segs += s
            last += list(lv)
        return _assemble(segs, last)

    def close(self):
        for conn in self.conns:
            try:
                conn.send(None)
            except (BrokenPipeError, OSError):
                pass
        for p in self.procs:
            p.join(timeout=5)


# --------------------------------------------------------------------------
# Advantages
# --------------------------------------------------------------------------

def compute_gae(buffer, gamma, lam, normalize=True):
    """Generalized advantage estimates and value targets.

    Success and trapped transitions are terminal (no bootstrap); truncated
    ones bootstrap from the value of their final observation; each worker
    segment bootstraps from ``last_values`` at its end. Returns are computed
    before the optional per-buffer advantage normalization.
    """
    adv = np.zeros(len(buffer))
    values, rewards, terms, boot = buffer.values, buffer.rewards, buffer.terminals, buffer.bootstrap
    for k, (start, stop) in enumerate(buffer.segments):
        running = 0.0
        for t in range(stop - 1, start - 1, -1):
            code = terms[t]
            if code == SUCCESS or code == TRAPPED:
                next_value, cont = 0.0, 0.0
            elif code == TRUNCATED:
                next_value, cont = boot[t], 0.0
            else:
                next_value = values[t + 1] if t + 1 < stop else buffer.last_values[k]
                cont = 1.0
            delta = rewards[t] + gamma * next_value - values[t]
            running = delta + gamma * lam * cont * running
            adv[t] = running
    returns = adv + values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


# --------------------------------------------------------------------------
# PPO update
# --------------------------------------------------------------------------

def ppo_loss(net, obs, actions, masks, old_log_probs, advantages, returns,
             clip=0.2, value_coef=0.5, entropy_coef=0.01):
    """Clipped-surrogate PPO loss (to minimize) and its analytic gradients.

    ``loss = -mean(min(r A, clip(r) A)) + value_coef * mean((R - v)^2) - entropy_coef * mean(H)``
    where ``r`` and ``H`` use the masked distribution.
    """
    n = len(actions)
    logits, values, acts = net.forward(obs, cache=True)
    logp_all = masked_log_probs(logits, masks)
    p = np.exp(logp_all)
    rows = np.arange(n)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_log_probs)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_err = values - returns
    value_loss = np.mean(value_err ** 2)
    plogp = np.where(masks, p * logp_all, 0.0)
    entropy = -plogp.sum(axis=1)
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy.mean()

    # d loss / d log p(a)
    g = np.where(surr1 <= surr2, -advantages * ratio, 0.0) / n
    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    dlogits = g[:, None] * np.where(masks, onehot - p, 0.0)
    # dH/dz_k = -p_k (log p_k + H)
    dent = -np.where(masks, p * (logp_all + entropy[:, None]), 0.0)
    dlogits -= (entropy_coef / n) * dent
    dvalue = value_coef * 2.0 * value_err / n
    grads = net.backward(acts, dlogits, dvalue)

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
        "approx_kl": float(np.mean((ratio - 1.0) - np.log(ratio))),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip)),
    }
    return loss, grads, stats


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-5):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        """In-place descent step on ``params``."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads, max_norm):
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads, total


def ppo_update(net, buffer, advantages, returns, config, optimizer, rng):
    """``epochs`` passes over shuffled minibatches; updates ``net`` in place."""
    n = len(buffer)
    totals = {}
    count = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = order[start:start + config.minibatch]
            loss, grads, stats = ppo_loss(
                net, buffer.obs[idx], buffer.actions[idx], buffer.masks[idx], buffer.log_probs[idx],
                advantages[idx], returns[idx], config.clip, config.value_coef, config.entropy_coef)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NonFiniteLoss(f"non-finite loss/gradient: {stats}")
            grads, norm = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(net.params(), grads)
            stats["grad_norm"] = norm
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in totals.items()}


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

def _fmt(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


class TrainingLog:
    def __init__(self, path=None):
        self.rows = []
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(LOG_FIELDS)
            self._fh.flush()

    def append(self, row):
        self.rows.append(row)
        if self._fh is not None:
            self._writer.writerow([_fmt(row[k]) for k in LOG_FIELDS])
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


@dataclass
class TrainResult:
    net: PolicyNet
    log: list
    episodes: int
    success_rate: float
    stopped_early: bool


def train(config, checkpoint_path=None, log_path=None, progress=None):
    """Collect -> GAE -> update until ``total_timesteps`` are consumed.

    Writes a checkpoint every ``checkpoint_every`` iterations and at exit, and
    one log row per iteration. ``progress`` is called with each log row.
    """
    config.check()
    net = PolicyNet.create(config.seed, hidden=config.hidden, depth=config.depth,
                           obs_layout=layout_hash(config.feature_mask))
    optimizer = Adam(net.params(), config.learning_rate, eps=config.adam_eps)
    update_rng = substream(config.seed, 3)
    if config.procs > 1:
        collector = ProcessCollector(config)
        collect = collector.collect
    else:
        collector = None
        workers = [Worker(i, config) for i in range(config.workers)]
        def collect(n, size):
            return collect_rollouts(n, workers, size)
    if log_path is not None:
        atomic_write(str(log_path) + ".json", json.dumps(config.to_dict(), indent=2, default=str) + "\n")
    tlog = TrainingLog(log_path)
    window = deque(maxlen=config.success_window)
    n_episodes = 0
    n_iter = -(-config.total_timesteps // config.rollout_size)
    stopped_early = False
    t0 = time.perf_counter()
    try:
        for it in range(1, n_iter + 1):
            buffer = collect(net, config.rollout_size)
            if config.reward_scale != 1.0:
                buffer.rewards *= config.reward_scale
            adv, returns = compute_gae(buffer, config.gamma, config.lam, config.normalize_advantages)
            stats = ppo_update(net, buffer, adv, returns, config, optimizer, update_rng)
            net.timesteps += len(buffer)
            eps = buffer.episodes
            n_episodes += len(eps)
            window.extend(e.success for e in eps)
            row = {
                "iter": it,
                "timesteps": net.timesteps,
                "mean_return": float(np.mean([e.ret for e in eps])) if eps else float("nan"),
                "success_rate": float(np.mean(window)) if window else float("nan"),
                "mean_length": float(np.mean([e.length for e in eps])) if eps else float("nan"),
                "mean_elbows": float(np.mean([e.elbows for e in eps])) if eps else float("nan"),
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "approx_kl": stats["approx_kl"],
                "clip_frac": stats["clip_frac"],
                "wall_s": round(time.perf_counter() - t0, 3),
            }
            tlog.append(row)
            if progress is not None:
                progress(row)
            if checkpoint_path is not None and it % config.checkpoint_every == 0:
                save_checkpoint(net, checkpoint_path)
            if (config.target_success is not None and len(window) == window.maxlen
                    and np.mean(window) >= config.target_success):
                stopped_early = True
                break
    finally:
        tlog.close()
        if collector is not None:
            collector.close()
        if checkpoint_path is not None:
            save_checkpoint(net, checkpoint_path)
    rate = float(np.mean(window)) if window else 0.0
    return TrainResult(net, tlog.rows, n_episodes, rate, stopped_early)


def smoke_config(seed=0, **overrides):
    """Desk-scale training setup on 20x20x15 scenes.

    With the base entropy bonus the policy tends to collapse early onto
    self-trapping moves at this scale; a larger bonus and scaled rewards
    keep exploration alive long enough to find the end cell reliably.
    """
    base = TrainConfig(total_timesteps=3_000_000, workers=16, seed=seed, scene_config=SceneConfig.smoke(),
                       entropy_coef=0.03, reward_scale=0.01)
    return replace(base, **overrides)
