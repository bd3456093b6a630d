"""Staged policy transfer from a trained quadcopter to the tilt-rotor.

The tilt-rotor actor reuses the quadcopter's two hidden layers frozen; only
the four new tilt-error input columns and the 8-output layer are fresh and
trainable. The critic reuses its hidden and output layers but re-initializes
the input layer, and nothing in it is frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neuralnet as nn
from .neuralnet import Mlp, ShapeMismatchError

QUAD_OBS = 18
TILT_OBS = 22
QUAD_ACT = 4
TILT_ACT = 8


@dataclass
class TransferReport:
    """Per-layer provenance of every parameter in a constructed network."""

    entries: list[tuple[str, str, int]] = field(default_factory=list)
    # categories: "transferred_frozen", "transferred_trainable", "fresh_xavier"

    def add(self, layer: str, category: str, count: int) -> None:
        self.entries.append((layer, category, int(count)))

    def count(self, category: str) -> int:
        return sum(n for _, c, n in self.entries if c == category)

    def total(self) -> int:
        return sum(n for _, _, n in self.entries)

    def to_text(self) -> str:
        lines = ["layer                    category               params"]
        for layer, cat, n in self.entries:
            lines.append(f"{layer:<24} {cat:<22} {n}")
        lines.append(f"{'total':<24} {'':<22} {self.total()}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        out = ["layer,category,count"]
        out += [f"{layer},{cat},{n}" for layer, cat, n in self.entries]
        return "\n".join(out)


def build_tilt_actor(quad_actor: Mlp, rng: np.random.Generator) -> tuple[Mlp, TransferReport]:
    """Construct the 22-in/8-out tilt actor from an 18-in/4-out quad actor.

    Hidden-layer weights and biases are copied and frozen; the 4 new input
    columns for the tilt errors and the whole output layer are Xavier-fresh
    and trainable.
    """
    sizes = quad_actor.layer_sizes
    if len(sizes) != 4 or sizes[0] != QUAD_OBS or sizes[-1] != QUAD_ACT:
        raise ShapeMismatchError(
            f"quad actor must be {QUAD_OBS}-h1-h2-{QUAD_ACT}, got {sizes}")
    h1, h2 = sizes[1], sizes[2]
    report = TransferReport()

    w0 = np.empty((h1, TILT_OBS))
    w0[:, :QUAD_OBS] = quad_actor.weights[0]
    w0[:, QUAD_OBS:] = nn.xavier_init(h1, TILT_OBS - QUAD_OBS, rng)
    f0 = np.zeros((h1, TILT_OBS), dtype=bool)
    f0[:, :QUAD_OBS] = True
    b0 = quad_actor.biases[0].copy()
    report.add("input->A1 (shared cols)", "transferred_frozen", h1 * QUAD_OBS)
    report.add("input->A1 (tilt cols)", "fresh_xavier", h1 * (TILT_OBS - QUAD_OBS))
    report.add("A1 bias", "transferred_frozen", h1)

    w1 = quad_actor.weights[1].copy()
    b1 = quad_actor.biases[1].copy()
    report.add("A1->A2", "transferred_frozen", h2 * h1)
    report.add("A2 bias", "transferred_frozen", h2)

    w2 = nn.xavier_init(TILT_ACT, h2, rng)
    b2 = np.zeros(TILT_ACT)
    report.add("A2->output", "fresh_xavier", TILT_ACT * h2)
    report.add("output bias", "fresh_xavier", TILT_ACT)

    net = Mlp(
        weights=[w0, w1, w2],
        biases=[b0, b1, b2],
        frozen_w=[f0, np.ones((h2, h1), dtype=bool), np.zeros((TILT_ACT, h2), dtype=bool)],
        frozen_b=[np.ones(h1, dtype=bool), np.ones(h2, dtype=bool),
                  np.zeros(TILT_ACT, dtype=bool)],
        output_tanh=True,
    )
    assert report.total() == net.n_params()
    return net, report


def build_tilt_critic(quad_critic: Mlp, rng: np.random.Generator) -> tuple[Mlp, TransferReport]:
    """Construct the 22-in/1-out tilt critic: fresh input layer, hidden and
    output layers copied from the quad critic, everything trainable."""
    sizes = quad_critic.layer_sizes
    if len(sizes) != 4 or sizes[0] != QUAD_OBS or sizes[-1] != 1:
        raise ShapeMismatchError(
            f"quad critic must be {QUAD_OBS}-h1-h2-1, got {sizes}")
    h1, h2 = sizes[1], sizes[2]
    report = TransferReport()

    w0 = nn.xavier_init(h1, TILT_OBS, rng)
    b0 = np.zeros(h1)
    report.add("input->C1", "fresh_xavier", h1 * TILT_OBS + h1)

    w1 = quad_critic.weights[1].copy()
    b1 = quad_critic.biases[1].copy()
    report.add("C1->C2", "transferred_trainable", h2 * h1 + h2)

    w2 = quad_critic.weights[2].copy()
    b2 = quad_critic.biases[2].copy()
    report.add("C2->output", "transferred_trainable", h2 + 1)

    net = Mlp(
        weights=[w0, w1, w2],
        biases=[b0, b1, b2],
        frozen_w=[np.zeros_like(w0, dtype=bool), np.zeros_like(w1, dtype=bool),
                  np.zeros_like(w2, dtype=bool)],
        frozen_b=[np.zeros_like(b0, dtype=bool), np.zeros_like(b1, dtype=bool),
                  np.zeros_like(b2, dtype=bool)],
        output_tanh=False,
    )
    assert report.total() == net.n_params()
    return net, report


def developmental_train(make_quad_envs, make_tilt_envs, quad_cfg, tilt_cfg,
                        rng: np.random.Generator, log_dir=None):
    """Two-stage training: quadcopter from scratch, then transfer and train
    the tilt-rotor. make_*_envs(seed_rng) build fresh env pools.

    Returns (quad_nets, tilt_nets, quad_log, tilt_log, reports) where each
    nets entry is (policy, critic).
    """
    from . import ppo
    import os

    quad_envs = make_quad_envs()
    policy = nn.make_mlp([QUAD_OBS, *quad_cfg.hidden_sizes, QUAD_ACT], rng, output_tanh=True)
    critic = nn.make_mlp([QUAD_OBS, *quad_cfg.hidden_sizes, 1], rng, output_tanh=False)
    quad_log = ppo.train(
        quad_envs, policy, critic, quad_cfg, rng,
        log_path=os.path.join(log_dir, "stage1_quad.csv") if log_dir else None)

    tilt_actor, actor_report = build_tilt_actor(policy, rng)
    tilt_critic, critic_report = build_tilt_critic(critic, rng)
    tilt_envs = make_tilt_envs()
    tilt_log = ppo.train(
        tilt_envs, tilt_actor, tilt_critic, tilt_cfg, rng,
        log_path=os.path.join(log_dir, "stage2_tilt.csv") if log_dir else None)

    return ((policy, critic), (tilt_actor, tilt_critic), quad_log, tilt_log,
            (actor_report, critic_report))
