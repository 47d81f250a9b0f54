#!/usr/bin/env python3
"""Record seeded random-policy baselines for the gridworld configs.

Writes data/miniarcade_baselines.json with the mean/min/max score of a
uniformly random policy over 1000 seeded episodes per config. Re-running
must reproduce the stored values exactly; tests hold the repo to that.
"""

import argparse
import sys
from pathlib import Path

from grusm.envs import GameFeatures
from grusm.envs.baselines import N_EPISODES, measure_baseline
from grusm.fileio import atomic_write_json

CONFIGS = ["", "h", "v", "hv", "hs", "hvs", "hvd", "hvsl", "hvsdl"]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).parent.parent
                                             / "data" / "miniarcade_baselines.json"))
    parser.add_argument("--episodes", type=int, default=N_EPISODES)
    args = parser.parse_args(argv)

    doc = {"shape": [6, 8], "max_steps": 600, "configs": {}}
    for letters in CONFIGS:
        features = GameFeatures.from_letters(letters)
        entry = measure_baseline(features, n_episodes=args.episodes)
        doc["configs"][letters] = entry
        print(f"{letters or '(none)':8s} mean={entry['mean_score']:8.3f} "
              f"min={entry['min_score']:7.2f} max={entry['max_score']:7.2f}")
    atomic_write_json(args.out, doc)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
