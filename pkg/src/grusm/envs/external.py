"""Environments hosted in a separate process, spoken to over a line
protocol on the child's standard streams (UTF-8):

    child startup   -> ``HELLO <rows> <cols> <n_classes>``
    ``RESET <seed>``  -> ``OBS <base64 float32 row-major substrates>``
    ``ACT <dir> <fire>`` -> ``STEP <reward> <terminal 0|1>`` then ``OBS ...``
    ``QUIT``          -> child exits

The child is trusted to be deterministic per seed; the harness only checks
protocol shape. This is the integration point for emulator-backed games.
"""

from __future__ import annotations

import base64
import subprocess

import numpy as np

from ..nets import Action
from .base import EnvProtocolError, EnvUsageError, Observation


class ExternalProcessEnv:
    def __init__(self, command, max_steps: int = 600):
        self.command = list(command)
        self.max_steps = int(max_steps)
        self._terminal = True
        self._started = False
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise EnvProtocolError(f"cannot launch {self.command}: {exc}") from exc
        try:
            hello = self._read_line()
            parts = hello.split()
            if len(parts) != 4 or parts[0] != "HELLO":
                raise EnvProtocolError(f"expected HELLO handshake, got {hello!r}")
            try:
                self.rows, self.cols, self.n_classes = map(int, parts[1:])
            except ValueError as exc:
                raise EnvProtocolError(f"malformed HELLO {hello!r}") from exc
            if min(self.rows, self.cols, self.n_classes) <= 0:
                raise EnvProtocolError(f"non-positive dimensions in {hello!r}")
        except EnvProtocolError:
            self._proc.kill()
            self._proc.wait()
            if self._proc.stdin:
                self._proc.stdin.close()
            if self._proc.stdout:
                self._proc.stdout.close()
            raise

    # -- plumbing ---------------------------------------------------------

    def _send(self, line: str):
        if self._proc.poll() is not None:
            raise EnvProtocolError("environment process exited early")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise EnvProtocolError("environment process closed its input") from exc

    def _read_line(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            raise EnvProtocolError("environment process closed its output")
        return line.rstrip("\n")

    def _read_obs(self) -> Observation:
        line = self._read_line()
        if not line.startswith("OBS "):
            raise EnvProtocolError(f"expected OBS, got {line!r}")
        self.last_obs_payload = line[4:]
        try:
            raw = base64.b64decode(self.last_obs_payload, validate=True)
        except Exception as exc:
            raise EnvProtocolError(f"OBS payload is not base64: {exc}") from exc
        flat = np.frombuffer(raw, dtype=np.float32)
        want = self.n_classes * self.rows * self.cols
        if flat.size != want:
            raise EnvProtocolError(
                f"OBS carries {flat.size} values, expected {want}")
        grids = flat.astype(np.float64).reshape(self.n_classes, self.rows, self.cols)
        return Observation(substrates=[grids[i] for i in range(self.n_classes)])

    # -- episodic contract ------------------------------------------------

    def reset(self, seed: int) -> Observation:
        self._send(f"RESET {int(seed)}")
        obs = self._read_obs()
        self._terminal = False
        self._started = True
        return obs

    def step(self, action: Action):
        if not self._started:
            raise EnvUsageError("step before reset")
        if self._terminal:
            raise EnvUsageError("step after terminal")
        self._send(f"ACT {action.direction} {int(action.fire)}")
        line = self._read_line()
        parts = line.split()
        if len(parts) != 3 or parts[0] != "STEP":
            raise EnvProtocolError(f"expected STEP, got {line!r}")
        try:
            reward = float(parts[1])
            terminal = bool(int(parts[2]))
        except ValueError as exc:
            raise EnvProtocolError(f"malformed STEP {line!r}") from exc
        obs = self._read_obs()
        self._terminal = terminal
        return obs, reward, terminal

    def close(self):
        if self._proc.poll() is None:
            try:
                self._send("QUIT")
            except EnvProtocolError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc.stdin:
            self._proc.stdin.close()
        if self._proc.stdout:
            self._proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def check_protocol(command, seed: int = 0, n_steps: int = 30) -> list[str]:
    """Conformance probe for an external environment command.

    Returns a list of problems; empty means the child passed. Checks the
    handshake, observation shape, step replies, and that a repeated episode
    with the same seed and actions reproduces the byte-identical stream.
    """
    problems: list[str] = []
    actions = [Action(direction=(i * 5) % 9, fire=bool(i % 2))
               for i in range(n_steps)]

    def episode(env):
        env.reset(seed)
        stream = [env.last_obs_payload]
        rewards = []
        for a in actions:
            _, r, terminal = env.step(a)
            stream.append(env.last_obs_payload)
            rewards.append(r)
            if terminal:
                break
        return stream, rewards

    try:
        with ExternalProcessEnv(command) as env:
            s1, r1 = episode(env)
            for r in r1:
                if not np.isfinite(r):
                    problems.append(f"non-finite reward {r}")
                    break
            s2, r2 = episode(env)
            if s1 != s2:
                problems.append("same seed and actions produced different "
                                "observation streams")
            if r1 != r2:
                problems.append("same seed and actions produced different rewards")
            env.reset(seed + 1)  # must accept a different seed
    except (EnvProtocolError, EnvUsageError) as exc:
        problems.append(str(exc))
    return problems
