"""Episodic environment contract, feature vocabulary, and the action-noise
wrapper used by all experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nets import Action


class EnvConfigError(ValueError):
    """Bad environment configuration (shape, epsilon, spec string)."""


class EnvUsageError(RuntimeError):
    """Protocol misuse: step before reset or after terminal."""


class EnvProtocolError(RuntimeError):
    """An external environment process violated the wire protocol."""


FEATURE_LETTERS = {
    "h": "horizontal",
    "v": "vertical",
    "s": "shooting",
    "d": "delayed_rewards",
    "l": "long_term_planning",
}


@dataclass(frozen=True)
class GameFeatures:
    horizontal: bool = False
    vertical: bool = False
    shooting: bool = False
    delayed_rewards: bool = False
    long_term_planning: bool = False

    @classmethod
    def from_letters(cls, letters: str) -> "GameFeatures":
        kwargs = {}
        for ch in letters:
            if ch not in FEATURE_LETTERS:
                raise EnvConfigError(
                    f"unknown feature letter {ch!r}; valid letters are "
                    + "".join(sorted(FEATURE_LETTERS)))
            kwargs[FEATURE_LETTERS[ch]] = True
        return cls(**kwargs)

    def letters(self) -> str:
        return "".join(ch for ch in "hvsdl" if getattr(self, FEATURE_LETTERS[ch]))

    def true_set(self) -> frozenset:
        return frozenset(name for name in FEATURE_LETTERS.values()
                         if getattr(self, name))

    def as_bits(self) -> tuple:
        return (self.horizontal, self.vertical, self.shooting,
                self.delayed_rewards, self.long_term_planning)


def feature_partial_order(g1: GameFeatures, g2: GameFeatures) -> str:
    """Order by strict feature-set inclusion: 'below', 'above', 'equal'
    or 'incomparable'."""
    a, b = g1.true_set(), g2.true_set()
    if a == b:
        return "equal"
    if a < b:
        return "below"
    if a > b:
        return "above"
    return "incomparable"


@dataclass
class Observation:
    """One real-valued grid per object class; entries in [0, 1]."""

    substrates: list

    def __post_init__(self):
        if not 1 <= len(self.substrates) <= 4:
            raise EnvConfigError(
                f"observation needs 1-4 substrates, got {len(self.substrates)}")
        shapes = {s.shape for s in self.substrates}
        if len(shapes) != 1:
            raise EnvConfigError(f"substrates differ in shape: {shapes}")

    @property
    def shape(self):
        return self.substrates[0].shape

    def flat(self) -> np.ndarray:
        """Concatenated row-major vector, in substrate order."""
        return np.concatenate([s.ravel() for s in self.substrates])


@dataclass(frozen=True)
class EnvSpec:
    name: str
    features: GameFeatures
    rows: int
    cols: int
    n_classes: int
    max_steps: int
    kind: str = "miniarcade"
    command: tuple = ()

    def __post_init__(self):
        if self.max_steps <= 0:
            raise EnvConfigError("max_steps must be positive")

    @property
    def substrates(self):
        return [(self.rows, self.cols)] * self.n_classes

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "features": self.features.letters(),
            "rows": self.rows,
            "cols": self.cols,
            "n_classes": self.n_classes,
            "max_steps": self.max_steps,
            "kind": self.kind,
            "command": list(self.command),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EnvSpec":
        return cls(
            name=doc["name"],
            features=GameFeatures.from_letters(doc["features"]),
            rows=int(doc["rows"]),
            cols=int(doc["cols"]),
            n_classes=int(doc["n_classes"]),
            max_steps=int(doc["max_steps"]),
            kind=doc.get("kind", "miniarcade"),
            command=tuple(doc.get("command", ())),
        )


@dataclass
class EpisodeResult:
    score: float
    steps: int
    seed: int


def parse_env_spec(text: str, rows: int = 6, cols: int = 8,
                   max_steps: int = 600) -> EnvSpec:
    """Parse a spec string.

    ``miniarcade:<letters>`` selects the gridworld family, with any subset
    of the feature letters hvsdl (empty for the featureless clock).
    ``external:<command>`` names a subprocess speaking the line protocol.
    """
    if text.startswith("miniarcade:"):
        letters = text[len("miniarcade:"):]
        features = GameFeatures.from_letters(letters)
        from .miniarcade import n_object_classes

        return EnvSpec(
            name=text,
            features=features,
            rows=rows,
            cols=cols,
            n_classes=n_object_classes(features),
            max_steps=max_steps,
            kind="miniarcade",
        )
    if text.startswith("external:"):
        command = text[len("external:"):].strip()
        if not command:
            raise EnvConfigError("external spec needs a command")
        return EnvSpec(
            name=text,
            features=GameFeatures(),
            rows=rows,
            cols=cols,
            n_classes=1,
            max_steps=max_steps,
            kind="external",
            command=tuple(command.split()),
        )
    raise EnvConfigError(
        f"unrecognized env spec {text!r}; expected miniarcade:<hvsdl letters> "
        "or external:<command>")


def make_env(spec: EnvSpec):
    if spec.kind == "miniarcade":
        from .miniarcade import MiniArcade

        return MiniArcade(spec.features, shape=(spec.rows, spec.cols),
                          max_steps=spec.max_steps)
    if spec.kind == "external":
        from .external import ExternalProcessEnv

        return ExternalProcessEnv(spec.command, max_steps=spec.max_steps)
    raise EnvConfigError(f"unknown env kind {spec.kind!r}")


class EpsilonRepeat:
    """Action-noise wrapper: with probability epsilon the previously
    executed action is applied instead of the submitted one. The first step
    of an episode always executes the submitted action. Observations and
    rewards pass through untouched."""

    def __init__(self, env, epsilon: float, rng: np.random.Generator):
        if not 0.0 <= epsilon <= 1.0:
            raise EnvConfigError(f"epsilon {epsilon} outside [0, 1]")
        self.env = env
        self.epsilon = epsilon
        self.rng = rng
        self._prev: Action | None = None
        self.last_was_repeat = False

    @property
    def max_steps(self):
        return self.env.max_steps

    def reset(self, seed: int) -> Observation:
        self._prev = None
        self.last_was_repeat = False
        return self.env.reset(seed)

    def step(self, action: Action):
        repeat = self._prev is not None and self.rng.random() < self.epsilon
        executed = self._prev if repeat else action
        self.last_was_repeat = repeat
        self._prev = executed
        return self.env.step(executed)

    def close(self):
        close = getattr(self.env, "close", None)
        if close:
            close()


def epsilon_repeat(env, epsilon: float, rng: np.random.Generator) -> EpsilonRepeat:
    return EpsilonRepeat(env, epsilon, rng)


def run_episode(env, policy, seed: int) -> EpisodeResult:
    """Drive one episode to termination. ``policy(observation) -> Action``."""
    obs = env.reset(seed)
    total = 0.0
    steps = 0
    terminal = False
    while not terminal:
        obs, reward, terminal = env.step(policy(obs))
        total += reward
        steps += 1
    return EpisodeResult(score=total, steps=steps, seed=seed)
