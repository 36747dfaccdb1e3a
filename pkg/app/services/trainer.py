from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from app.errors import NonFiniteTdError, ParameterError, ShapeError
from app.schemas import LambdaMode, MetricsRecord, TrainerConfig, Variant
from app.services.envs.base import Environment
from app.services.envs.rendering import ObservationEncoder
from app.services.metrics import probe_q_stats, rolling_stats
from app.services.network import (
    NetworkParams,
    apply_update,
    build_feedback_matrix,
    build_layer_specs,
    compute_transform,
    edl_feedback,
    forward,
    gradient_feedback,
    init_network,
    q_values,
    signed_lambdas,
    td_error,
)
from app.services.replay import Batch, ReplayBuffer, Transition

logger = logging.getLogger(__name__)

__all__ = [
    "RandomStreams",
    "RoleSchedule",
    "TrainingResult",
    "Variant",
    "coop_update_step",
    "draw_perturbation",
    "run_training",
    "select_action",
    "td_target",
    "td_targets",
]


@dataclass
class RandomStreams:
    net1_seed: int
    net2_seed: int
    env: np.random.Generator
    explore: np.random.Generator
    replay: np.random.Generator
    perturb: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> RandomStreams:
        net1, net2, env, explore, replay, perturb = np.random.SeedSequence(seed).spawn(6)
        return cls(
            net1_seed=int(net1.generate_state(1)[0]),
            net2_seed=int(net2.generate_state(1)[0]),
            env=np.random.default_rng(env),
            explore=np.random.default_rng(explore),
            replay=np.random.default_rng(replay),
            perturb=np.random.default_rng(perturb),
        )


class RoleSchedule:
    """Alternates which network acts and learns; flips after every C plays."""

    def __init__(self, period: int) -> None:
        if period < 1:
            raise ParameterError("toggle period", f"must be positive, got {period}")
        self.period = period
        self.first_is_actor = True
        self._since_toggle = 0

    def reset(self) -> None:
        self.first_is_actor = True
        self._since_toggle = 0

    def advance(self) -> bool:
        self._since_toggle += 1
        if self._since_toggle == self.period:
            self._since_toggle = 0
            self.first_is_actor = not self.first_is_actor
            return True
        return False


@dataclass
class TrainingResult:
    variant: Variant
    records: list[MetricsRecord]
    net1: NetworkParams
    net2: NetworkParams
    total_steps: int
    updates: list[int] = field(default_factory=lambda: [0, 0])

    def checkpoints(self) -> dict[str, NetworkParams]:
        if self.variant.dual:
            return {"net1": self.net1, "net2": self.net2}
        return {"net1": self.net1, "target": self.net2}


def td_target(reward: float, terminal: bool, next_q: npt.ArrayLike, gamma: float) -> float:
    if not 0.0 < gamma < 1.0:
        raise ParameterError("gamma", f"must lie in (0, 1), got {gamma}")
    if terminal:
        return float(reward)
    return float(reward + gamma * np.max(next_q))


def td_targets(
    rewards: npt.NDArray[np.float64],
    terminals: npt.NDArray[np.bool_],
    next_q: npt.NDArray[np.float64],
    gamma: float,
) -> npt.NDArray[np.float64]:
    return np.where(terminals, rewards, rewards + gamma * next_q.max(axis=1))


def select_action(q: npt.ArrayLike, eps: float, rng: np.random.Generator) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ParameterError("exploration rate", f"must lie in [0, 1], got {eps}")
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if rng.random() < eps:
        return int(rng.integers(q.shape[0]))
    return int(np.argmax(q))


def draw_perturbation(scale: float, signed: bool, rng: np.random.Generator) -> float:
    g = float(rng.standard_normal())
    return scale * (g if signed else abs(g))


def coop_update_step(
    actor: NetworkParams,
    target: NetworkParams,
    batch: Batch,
    cfg: TrainerConfig,
    s: float = 0.0,
) -> NetworkParams:
    if len(batch) == 0:
        raise ShapeError("cannot update on an empty batch")
    next_q = q_values(target, batch.next_obs)
    targets = td_targets(batch.rewards, batch.terminals, next_q, cfg.gamma)
    trace = forward(actor, batch.obs)
    raw = targets - trace.output[np.arange(len(batch)), batch.actions]
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise NonFiniteTdError(int(bad[0]))
    eps = td_error(trace.output, batch.actions, targets, clip=cfg.td_clip)

    edl = cfg.variant.uses_edl
    signed = cfg.lambda_mode is LambdaMode.SIGNED
    feedbacks, deltas = [], []
    for layer in range(1, actor.depth + 1):
        transform = compute_transform(actor, trace, layer)
        if not edl:
            delta = gradient_feedback(trace, transform, eps, layer)
            feedbacks.append(delta)
            deltas.append(delta)
            continue
        b = build_feedback_matrix(transform, s)[0] if s != 0.0 else transform
        sigma = edl_feedback(trace, b, eps, layer)
        feedbacks.append(sigma if cfg.p_scale == 1.0 else cfg.p_scale * sigma)
        if signed:
            deltas.append(gradient_feedback(trace, transform, eps, layer))

    lambdas = signed_lambdas(deltas, actor, cfg.lambdas) if signed else cfg.lambdas
    return apply_update(actor, feedbacks, cfg.alpha, lambdas)


def _budget_spent(cfg: TrainerConfig, plays: int) -> bool:
    return cfg.step_budget is not None and plays >= cfg.step_budget


def run_training(
    cfg: TrainerConfig,
    env: Environment,
    image_h: int = 16,
    image_w: int = 16,
    image_m: int = 4,
) -> TrainingResult:
    variant = cfg.variant
    streams = RandomStreams.from_seed(cfg.seed)
    encoder = ObservationEncoder(env, cfg.obs_mode, image_h, image_w, image_m)
    specs = build_layer_specs(encoder.dim, cfg.hidden, env.action_count, cfg.activation)
    net1 = init_network(specs, streams.net1_seed, cfg.bias)
    # single-net variants keep the periodic clone in net2
    net2 = init_network(specs, streams.net2_seed, cfg.bias) if variant.dual else net1
    buffer = ReplayBuffer(cfg.buffer_capacity)
    probe = np.stack([encoder.encode_static(state) for state in env.probe_states()])
    roles = RoleSchedule(cfg.toggle_period)

    eps = cfg.eps_init
    s_scale = cfg.s_scale if variant.uses_edl else 0.0
    plays = 0
    updates = [0, 0]
    returns: list[float] = []
    records: list[MetricsRecord] = []
    logger.info(
        "training %s on %s for %d episodes (seed %d, obs %s)",
        variant.value,
        env.name,
        cfg.episodes,
        cfg.seed,
        cfg.obs_mode.value,
    )

    for episode in range(1, cfg.episodes + 1):
        if _budget_spent(cfg, plays):
            logger.info("step budget %d reached after %d episodes", cfg.step_budget, episode - 1)
            break
        if cfg.toggle_reset_per_episode:
            roles.reset()
        started = time.perf_counter()
        state = env.reset(streams.env)
        obs = encoder.reset(state)
        episode_return = 0.0
        for _ in range(cfg.max_steps):
            if _budget_spent(cfg, plays):
                break
            first_acts = roles.first_is_actor or not variant.dual
            actor = net1 if first_acts else net2
            action = select_action(q_values(actor, obs)[0], eps, streams.explore)
            step = env.step(state, action, streams.env)
            next_obs = encoder.step(step.state)
            buffer.push(Transition(obs, action, step.reward, next_obs, step.terminal))
            episode_return += step.reward
            plays += 1

            if len(buffer) >= cfg.batch_size:
                batch = buffer.sample_batch(cfg.batch_size, streams.replay)
                s = draw_perturbation(s_scale, cfg.signed_s, streams.perturb) if variant.uses_edl else 0.0
                if first_acts:
                    net1 = coop_update_step(net1, net2, batch, cfg, s)
                    updates[0] += 1
                else:
                    net2 = coop_update_step(net2, net1, batch, cfg, s)
                    updates[1] += 1

            if roles.advance():
                if variant.dual:
                    logger.debug("play %d: actor is now net%d", plays, 1 if roles.first_is_actor else 2)
                else:
                    net2 = net1
                    logger.debug("play %d: target refreshed", plays)

            state, obs = step.state, next_obs
            if step.terminal:
                break

        returns.append(episode_return)
        mean100, std100 = rolling_stats(returns)
        q1_mean, q2_mean, qdiff = probe_q_stats(net1, net2, probe)
        records.append(
            MetricsRecord(
                episode=episode,
                variant=variant.value,
                seed=cfg.seed,
                episode_return=episode_return,
                mean100=mean100,
                std100=std100,
                q1_mean=q1_mean,
                q2_mean=q2_mean,
                qdiff=qdiff,
                eps=eps,
                s_scale=s_scale,
                buffer_fill=len(buffer),
                ms=(time.perf_counter() - started) * 1000.0,
            )
        )
        if episode % cfg.log_every == 0:
            logger.info(
                "episode %d return %.1f mean100 %.2f eps %.3f s %.4f qdiff %.4f",
                episode,
                episode_return,
                mean100,
                eps,
                s_scale,
                qdiff,
            )
        eps = max(cfg.eps_min, eps * cfg.eps_decay)
        s_scale *= cfg.s_decay

    return TrainingResult(
        variant=variant,
        records=records,
        net1=net1,
        net2=net2,
        total_steps=plays,
        updates=updates,
    )
