#!/usr/bin/env python3
"""Banda gruesa del umbral de percolación orientada para varias semillas."""
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from services.lattice import ExcessDistribution, Window
from services.percolation import bracket_threshold


def main():
    size = int(os.getenv("THRESHOLD_WINDOW", "400"))
    seeds = int(os.getenv("THRESHOLD_SEEDS", "5"))
    window = Window.from_origin(size, size)
    excess = ExcessDistribution.atom(2.0)

    bands = []
    for seed in range(seeds):
        lo, hi = bracket_threshold(window, seed, excess=excess)
        print(f"Semilla {seed}: p en [{lo:.4f}, {hi:.4f}]")
        bands.append((lo, hi))

    lo = min(band[0] for band in bands)
    hi = max(band[1] for band in bands)
    print(f"Banda conjunta sobre {seeds} semillas: [{lo:.4f}, {hi:.4f}]")


if __name__ == "__main__":
    main()
