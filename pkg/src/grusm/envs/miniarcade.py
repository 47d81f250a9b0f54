"""Seeded gridworld family parameterized by five binary gameplay features.

Each feature toggles a mechanic:

- horizontal: items fall from the top; moving left/right to intercept one
  scores +1.
- vertical: hazards sweep across rows; moving up/down dodges them. A hit
  scores -1 and the episode ends after ``hit_limit`` hits.
- shooting: the fire button launches an upward projectile; destroying a
  spawned target scores +2. Without this feature fire is a no-op.
- delayed_rewards: per-event rewards are banked and paid out as a lump sum
  each time the avatar operates for ``delay_window`` consecutive steps
  without taking a hit; banked reward is lost if the episode ends first.
- long_term_planning: bonus objects must be visited in their seeded chain
  order (+5 each); touching a later object first forfeits the remainder of
  the chain. The next object in order is drawn at full intensity, the rest
  at half, so the ordering is observable rather than memorized.

Object classes are emitted as separate substrates in a fixed order: avatar;
falling items and hazards (shared class); projectiles and shootable targets
(shared class); bonus objects. Only classes belonging to active features
appear, so observations carry 1-4 substrates.

A game with no features at all is a pure survival clock: +1 every
``survival_period`` steps, identical under every policy.

Dynamics are fully deterministic given (reset seed, action sequence).
"""

from __future__ import annotations

import numpy as np

from ..nets import Action
from .base import EnvConfigError, EnvUsageError, GameFeatures, Observation

ITEM_PERIOD = 5
HAZARD_PERIOD = 3
TARGET_PERIOD = 9
MAX_TARGETS = 2
# High enough that ordinary play (random policies average ~33 hits per
# 600-step episode) never terminates early, so every avoided hit improves
# the score; only pathological hazard-seeking ends an episode.
HIT_LIMIT = 60
DELAY_WINDOW = 20
CHAIN_LENGTH = 3
CHAIN_RESPAWN = 12
SURVIVAL_PERIOD = 50

REWARD_CATCH = 1.0
REWARD_DESTROY = 2.0
REWARD_HIT = -1.0
REWARD_BONUS = 5.0


def n_object_classes(features: GameFeatures) -> int:
    return (1 + int(features.horizontal or features.vertical)
            + int(features.shooting) + int(features.long_term_planning))


class MiniArcade:
    def __init__(self, features: GameFeatures, shape=(6, 8), max_steps=600,
                 hit_limit=HIT_LIMIT, delay_window=DELAY_WINDOW,
                 chain_length=CHAIN_LENGTH):
        rows, cols = shape
        if rows < 5 or cols < 5:
            raise EnvConfigError(f"grid {shape} too small; need at least 5x5")
        self.features = features
        self.rows = int(rows)
        self.cols = int(cols)
        self.max_steps = int(max_steps)
        self.hit_limit = int(hit_limit)
        self.delay_window = int(delay_window)
        self.chain_length = int(chain_length)
        self.n_classes = n_object_classes(features)
        self._rng = None
        self._terminal = True
        self._started = False

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: int) -> Observation:
        f = self.features
        self._rng = np.random.default_rng(seed)
        self._steps = 0
        self._hits = 0
        self._pending = 0.0
        self._streak = 0
        self._terminal = False
        self._started = True
        self._avatar_r = (self.rows // 2) if f.vertical else (self.rows - 1)
        self._avatar_c = self.cols // 2
        self._items = []        # (row, col), falling
        self._hazards = []      # (row, col), sweeping right
        self._targets = []      # (row, col), static
        self._projectiles = []  # (row, col), rising
        self._chain = []
        self._chain_next = 0
        self._chain_respawn_at = None
        if f.long_term_planning:
            self._spawn_chain()
        return self._observe()

    def _spawn_chain(self):
        cells = [(r, c) for r in range(self.rows) for c in range(self.cols)
                 if (r, c) != (self._avatar_r, self._avatar_c)]
        idx = self._rng.choice(len(cells), size=self.chain_length, replace=False)
        self._chain = [cells[i] for i in idx]
        self._chain_next = 0
        self._chain_respawn_at = None

    def step(self, action: Action):
        if not self._started:
            raise EnvUsageError("step before reset")
        if self._terminal:
            raise EnvUsageError("step after terminal")
        f = self.features
        self._steps += 1
        event = 0.0
        hit_this_step = False

        # avatar movement, gated per axis
        dr, dc = action.deltas()
        if f.vertical:
            self._avatar_r = min(max(self._avatar_r + dr, 0), self.rows - 1)
        if f.horizontal:
            self._avatar_c = min(max(self._avatar_c + dc, 0), self.cols - 1)
        avatar = (self._avatar_r, self._avatar_c)

        # fire
        if f.shooting and action.fire and self._avatar_r > 0:
            self._projectiles.append((self._avatar_r - 1, self._avatar_c))

        # projectiles rise and destroy targets
        kept = []
        for (r, c) in self._projectiles:
            r -= 1
            if r < 0:
                continue
            if (r, c) in self._targets:
                self._targets.remove((r, c))
                event += REWARD_DESTROY
                continue
            kept.append((r, c))
        self._projectiles = kept

        # items fall; catch on contact
        kept = []
        for (r, c) in self._items:
            r += 1
            if (r, c) == avatar:
                event += REWARD_CATCH
                continue
            if r < self.rows:
                kept.append((r, c))
        self._items = kept

        # hazards sweep; contact is a hit
        kept = []
        for (r, c) in self._hazards:
            c += 1
            if (r, c) == avatar:
                self._hits += 1
                event += REWARD_HIT
                hit_this_step = True
                continue
            if c < self.cols:
                kept.append((r, c))
        self._hazards = kept

        # bonus chain
        if f.long_term_planning and self._chain:
            remaining = self._chain[self._chain_next:]
            if avatar in remaining:
                if avatar == remaining[0]:
                    event += REWARD_BONUS
                    self._chain_next += 1
                    if self._chain_next == len(self._chain):
                        self._chain = []
                        self._chain_respawn_at = self._steps + CHAIN_RESPAWN
                else:
                    self._chain = []
                    self._chain_respawn_at = self._steps + CHAIN_RESPAWN

        # spawns
        if f.horizontal and self._steps % ITEM_PERIOD == 0:
            self._items.append((0, int(self._rng.integers(self.cols))))
        if f.vertical and self._steps % HAZARD_PERIOD == 0:
            self._hazards.append((int(self._rng.integers(self.rows)), 0))
        if (f.shooting and self._steps % TARGET_PERIOD == 0
                and len(self._targets) < MAX_TARGETS):
            self._targets.append((int(self._rng.integers(2)),
                                  int(self._rng.integers(self.cols))))
        if (f.long_term_planning and not self._chain
                and self._chain_respawn_at is not None
                and self._steps >= self._chain_respawn_at):
            self._spawn_chain()

        # reward delivery
        if f.delayed_rewards:
            self._pending += event
            self._streak = 0 if hit_this_step else self._streak + 1
            reward = 0.0
            if self._streak >= self.delay_window:
                reward = self._pending
                self._pending = 0.0
                self._streak = 0
        else:
            reward = event
        if not any(f.as_bits()):
            if self._steps % SURVIVAL_PERIOD == 0:
                reward += 1.0

        self._terminal = (self._steps >= self.max_steps
                          or self._hits >= self.hit_limit)
        return self._observe(), reward, self._terminal

    def close(self):
        pass

    # -- observation -------------------------------------------------------

    def _observe(self) -> Observation:
        f = self.features
        subs = []
        avatar = np.zeros((self.rows, self.cols))
        avatar[self._avatar_r, self._avatar_c] = 1.0
        subs.append(avatar)
        if f.horizontal or f.vertical:
            moving = np.zeros((self.rows, self.cols))
            for r, c in self._items:
                moving[r, c] = 1.0
            for r, c in self._hazards:
                moving[r, c] = 1.0
            subs.append(moving)
        if f.shooting:
            shoot = np.zeros((self.rows, self.cols))
            for r, c in self._targets:
                shoot[r, c] = 1.0
            for r, c in self._projectiles:
                shoot[r, c] = 0.5
            subs.append(shoot)
        if f.long_term_planning:
            bonus = np.zeros((self.rows, self.cols))
            remaining = self._chain[self._chain_next:]
            for i, (r, c) in enumerate(remaining):
                bonus[r, c] = 1.0 if i == 0 else 0.5
            subs.append(bonus)
        return Observation(substrates=subs)
