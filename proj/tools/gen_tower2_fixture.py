#!/usr/bin/env python3
"""Generate data/maps/tower2_floor9.json.

The floor is authored as a set of free rectangles (rooms, door gaps, the main
hall) on a 40 m x 20 m plane at 0.1 m resolution; everything else is wall.
Rows are run-length encoded: "<count><symbol>" with '.' free and '#' occupied,
row 0 first (row 0 touches origin.y).
"""

import json
import pathlib
import sys

RES = 0.1
WIDTH = 400
HEIGHT = 200

# (x0, y0, x1, y1) in meters, half-open on the cell grid.
FREE = {
    "hall": (0.5, 8.5, 39.5, 11.5),
    # north side
    "restroom_women": (0.5, 12.5, 3.5, 19.5),
    "restroom_women_door": (1.5, 11.5, 2.5, 12.5),
    "lab_901": (4.5, 12.5, 12.5, 19.5),
    "lab_901_door": (7.5, 11.5, 8.5, 12.5),
    "lab_903": (13.5, 12.5, 20.5, 19.5),
    "lab_903_door": (16.5, 11.5, 17.5, 12.5),
    "pantry": (28.0, 12.5, 39.5, 19.5),
    "pantry_door": (36.0, 11.5, 37.0, 12.5),
    # south side
    "restroom_men": (0.5, 0.5, 3.5, 7.5),
    "restroom_men_door": (1.5, 7.5, 2.5, 8.5),
    "lab_902": (4.5, 0.5, 11.5, 7.5),
    "lab_902_door": (7.5, 7.5, 8.5, 8.5),
    "lab_904": (12.5, 0.5, 20.5, 7.5),
    "lab_904_door": (16.0, 7.5, 17.0, 8.5),
    "security": (28.0, 0.5, 33.0, 7.5),
    "security_door": (30.0, 7.5, 31.0, 8.5),
}

# Furniture inside rooms (occupied rectangles carved out of free space).
OBSTACLES = {
    "assembly_table": (9.0, 16.0, 11.0, 17.0),
    "solder_bench": (10.5, 12.5, 12.5, 13.2),
    "lab_901_shelf": (4.5, 19.0, 7.0, 19.5),
    "pantry_counter": (31.0, 14.5, 35.0, 15.2),
    "pantry_shelf": (37.5, 19.0, 39.5, 19.5),
}

WAYPOINTS = [
    # name, display name, zone, x, y, yaw
    ("lift_dekat", "Elevator (near)", "elevator_near", 1.2, 10.0, 3.1416),
    ("depan_pintu_lab_903_luar", "IoT Lab (Room 903) Door", "lab_903", 17.0, 11.0, 1.5708),
    ("robot_home", "Robot Home Pos.", "lab_901", 6.0, 14.0, 0.0),
    ("depan_meja_assembly", "Assembly Table", "lab_901", 10.0, 17.6, 0.0),
    ("depan_lemari", "Lab Shelf", "lab_901", 5.5, 18.5, 1.5708),
    ("depan_meja_solder", "Soldering Table", "lab_901", 11.5, 13.8, -1.5708),
    ("depan_pintu_lab_902", "Computer Lab (Room 902) Door", "lab_902", 8.0, 9.0, -1.5708),
    ("depan_pintu_lab_904", "IT Lab (Room 904) Door", "lab_904", 16.5, 9.0, -1.5708),
    ("toilet_pria", "Men's Restroom Entrance", "restroom_men", 2.0, 9.0, -1.5708),
    ("lift_jauh", "Elevator (far)", "elevator_far", 39.0, 10.0, 0.0),
    ("toilet_wanita", "Women's Restroom Entrance", "restroom_women", 2.0, 11.0, 1.5708),
    ("ruang_keamanan", "Security Room", "pantry", 30.5, 5.0, -1.5708),
    ("ruang_pantry", "Pantry Kitchen", "pantry", 33.0, 16.0, 1.5708),
    ("lemari_pantry", "Pantry Shelf", "pantry", 38.5, 18.5, 1.5708),
    ("depan_pintu_lab_901", "Robotics Lab (Room 901) Door", "lab_901", 8.0, 11.0, 1.5708),
]

ZONES = [
    ("elevator_near", "Elevator / Waiting Area (near the labs)"),
    ("lab_903", "IoT Lab (Room 903)"),
    ("lab_901", "Robotics Lab (Room 901)"),
    ("lab_902", "Computer Lab (Room 902)"),
    ("lab_904", "IT Lab (Room 904)"),
    ("restroom_men", "Men's Restroom"),
    ("elevator_far", "Elevator / Waiting Area (near the pantry)"),
    ("restroom_women", "Women's Restroom"),
    ("pantry", "Pantry Area"),
]


def cell_range(lo, hi):
    return range(int(round(lo / RES)), int(round(hi / RES)))


def build_grid():
    occ = [[True] * WIDTH for _ in range(HEIGHT)]
    for x0, y0, x1, y1 in FREE.values():
        for r in cell_range(y0, y1):
            for c in cell_range(x0, x1):
                occ[r][c] = False
    for x0, y0, x1, y1 in OBSTACLES.values():
        for r in cell_range(y0, y1):
            for c in cell_range(x0, x1):
                occ[r][c] = True
    return occ


def rle(row):
    out = []
    run_sym = None
    run_len = 0
    for cell in row:
        sym = "#" if cell else "."
        if sym == run_sym:
            run_len += 1
        else:
            if run_sym is not None:
                out.append(f"{run_len}{run_sym}")
            run_sym, run_len = sym, 1
    out.append(f"{run_len}{run_sym}")
    return "".join(out)


def main():
    root = pathlib.Path(__file__).resolve().parent.parent
    target = root / "data" / "maps" / "tower2_floor9.json"
    occ = build_grid()
    doc = {
        "format": "quadplan-map/1",
        "name": "tower2_floor9",
        "frame": "map",
        "home": "robot_home",
        "grid": {
            "resolution": RES,
            "width": WIDTH,
            "height": HEIGHT,
            "origin": [0.0, 0.0],
            "rows": [rle(r) for r in occ],
        },
        "waypoints": [
            {
                "name": n,
                "display_name": d,
                "zone": z,
                "pose": {"x": x, "y": y, "z": 0.0, "yaw": yaw},
            }
            for n, d, z, x, y, yaw in WAYPOINTS
        ],
        "zones": [
            {
                "name": z,
                "display_name": d,
                "members": sorted(w[0] for w in WAYPOINTS if w[2] == z),
            }
            for z, d in ZONES
        ],
    }
    target.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(doc, indent=1, ensure_ascii=False) + "\n"
    if "--check" in sys.argv:
        return 0 if target.read_text() == text else 1
    target.write_text(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
