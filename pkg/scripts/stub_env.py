#!/usr/bin/env python3
"""Minimal external environment speaking the line protocol.

A 5x5 single-class grid: the avatar starts at a seeded cell, moves with the
joystick, and earns +1 whenever it sits on the drifting reward cell. Episodes
last 40 steps. Deterministic per seed; useful as a protocol conformance
target and as a template for wrapping real emulators.

Run directly, or point the CLI at it:  grusm env-check "external:python3 scripts/stub_env.py"
"""

import base64
import random
import struct
import sys

ROWS, COLS = 5, 5
MAX_STEPS = 40


def emit(line):
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def obs_line(avatar, prize):
    grid = [0.0] * (ROWS * COLS)
    grid[avatar[0] * COLS + avatar[1]] = 1.0
    pr, pc = prize
    grid[pr * COLS + pc] = max(grid[pr * COLS + pc], 0.5)
    payload = base64.b64encode(struct.pack(f"<{len(grid)}f", *grid)).decode()
    emit("OBS " + payload)


def main():
    emit(f"HELLO {ROWS} {COLS} 1")
    rng = random.Random(0)
    avatar, prize, steps = (0, 0), (2, 2), 0
    for raw in sys.stdin:
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "QUIT":
            return 0
        if parts[0] == "RESET":
            rng = random.Random(int(parts[1]))
            avatar = (rng.randrange(ROWS), rng.randrange(COLS))
            prize = (rng.randrange(ROWS), rng.randrange(COLS))
            steps = 0
            obs_line(avatar, prize)
        elif parts[0] == "ACT":
            direction, _fire = int(parts[1]), int(parts[2])
            dr, dc = direction // 3 - 1, direction % 3 - 1
            avatar = (min(max(avatar[0] + dr, 0), ROWS - 1),
                      min(max(avatar[1] + dc, 0), COLS - 1))
            steps += 1
            reward = 0.0
            if avatar == prize:
                reward = 1.0
                prize = (rng.randrange(ROWS), rng.randrange(COLS))
            terminal = int(steps >= MAX_STEPS)
            emit(f"STEP {reward} {terminal}")
            obs_line(avatar, prize)
        else:
            emit(f"ERR unknown command {parts[0]}")
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
