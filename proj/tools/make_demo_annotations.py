#!/usr/bin/env python3
"""Generate a synthetic principal-line annotation corpus (JSON Lines).

Each record holds hand-annotation-like points for the heart, head and life
lines of a 128x128 ROI, in pixel coordinates. Shapes are perturbed per image
so the fitted coefficient prior has a realistic spread.
"""
import argparse
import json

import numpy as np


def line_points(rng, size, x0, x1, curve, n):
    xs = np.sort(rng.choice(np.arange(int(x0 * size), int(x1 * size)), size=n, replace=False))
    u = xs / size
    ys = curve(u) * size + rng.normal(0.0, 0.6, size=n)
    ys = np.clip(ys, 0.0, size - 1.0)
    return [[float(x), round(float(y), 2)] for x, y in zip(xs, ys)]


def annotation(rng, index, size):
    # heart line: upper band, gently arched
    h_off = rng.normal(0.28, 0.03)
    h_arc = rng.normal(0.10, 0.03)
    h_tilt = rng.normal(-0.05, 0.03)
    h_x0 = rng.uniform(0.05, 0.20)
    h_x1 = rng.uniform(0.80, 0.95)
    heart = lambda u: h_off + h_tilt * u - h_arc * (u - 0.5) ** 2 + 0.04 * (u - 0.5) ** 3

    # head line: middle band, sloping down toward the little-finger side
    d_off = rng.normal(0.40, 0.03)
    d_slope = rng.normal(0.18, 0.04)
    d_bend = rng.normal(0.08, 0.03)
    d_x0 = rng.uniform(0.05, 0.15)
    d_x1 = rng.uniform(0.65, 0.85)
    head = lambda u: d_off + d_slope * u + d_bend * u**2 - 0.05 * u**4

    # life line: steep arc around the thumb base
    l_off = rng.normal(0.42, 0.03)
    l_steep = rng.normal(1.6, 0.2)
    l_x0 = rng.uniform(0.08, 0.14)
    l_x1 = rng.uniform(0.40, 0.48)
    life = lambda u: l_off + l_steep * (u - l_x0) ** 1.0 + 0.8 * (u - l_x0) ** 2

    lines = [
        line_points(rng, size, h_x0, h_x1, heart, int(rng.integers(14, 22))),
        line_points(rng, size, d_x0, d_x1, head, int(rng.integers(12, 20))),
        line_points(rng, size, l_x0, l_x1, life, int(rng.integers(10, 16))),
    ]
    return {"image_id": f"demo_{index:04d}", "width": size, "height": size, "lines": lines}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="data/demo_annotations.jsonl")
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    with open(args.out, "w") as f:
        for i in range(args.count):
            f.write(json.dumps(annotation(rng, i, args.size)) + "\n")


if __name__ == "__main__":
    main()
