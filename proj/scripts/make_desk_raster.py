"""Walkability raster for the bundled desk-scale scenario.

Corridors between spawn areas and node anchors are walkable (1.0), the
crosswalk band is 0.8, everything else 0.0. Writes an ASCII PGM plus the
sidecar georeference next to the scenario file.
"""
import json
import math
import pathlib

CELL = 0.5
X0, Y0 = -40.0, -25.0
W, H = 160, 100
HALF_WIDTH = 3.5

SEGMENTS = [
    ((-30, -14), (-9, 0)), ((-31, -8), (-9, 0)), ((-30, -2), (-9, 0)),
    ((-9, 0), (-24, -8)), ((-24, -8), (-31, -8)),
    ((9, 0), (24, 8)), ((24, 8), (31, 16)), ((24, 8), (33, 8)), ((24, 8), (31, 0)),
    ((9, 0), (31, 0)),
]
DISCS = [((-30, -14), 4.5), ((-31, -8), 4.5), ((-30, -2), 4.5), ((31, 16), 4.5), ((33, 8), 4.5),
         ((31, 0), 4.5), ((-24, -8), 5.0), ((-9, 0), 4.0), ((9, 0), 4.0), ((24, 8), 5.0)]


def seg_dist(p, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / (dx * dx + dy * dy)
    t = max(0.0, min(1.0, t))
    return math.hypot(p[0] - ax - t * dx, p[1] - ay - t * dy)


def value(x, y):
    if -6.0 <= x <= 6.0 and -4.0 <= y <= 4.0:
        return 0.8
    if any(seg_dist((x, y), a, b) <= HALF_WIDTH for a, b in SEGMENTS):
        return 1.0
    if any(math.hypot(x - c[0], y - c[1]) <= r for c, r in DISCS):
        return 1.0
    return 0.0


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "scenarios" / "shibuya_desk.pgm"
    rows = []
    for row in reversed(range(H)):  # PGM stores the top row first
        y = Y0 + (row + 0.5) * CELL
        rows.append(" ".join(str(round(255 * value(X0 + (c + 0.5) * CELL, y))) for c in range(W)))
    out.write_text(f"P2\n{W} {H}\n255\n" + "\n".join(rows) + "\n")
    geo = {"origin": [X0, Y0], "meters_per_cell": CELL}
    pathlib.Path(str(out) + ".geo.json").write_text(json.dumps(geo) + "\n")


if __name__ == "__main__":
    main()
