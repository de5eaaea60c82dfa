"""Writes the example object models, camera and noise presets under data/."""

import json
import math
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data"
CUBOID_EDGES = [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]]
RING_CHORD_EDGES = [[i, (i + 1) % 8] for i in range(8)] + [[0, 4], [1, 5], [2, 6], [3, 7]]
RING = [(-1, -1), (1, -1), (1, 1), (-1, 1)]


def write_ply(path, vertices, faces):
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines += [" ".join(repr(float(c)) for c in v) for v in vertices]
    lines += ["3 " + " ".join(str(i) for i in f) for f in faces]
    path.write_text("\n".join(lines) + "\n")


def hexahedron(bottom, top, n):
    """Surface grid of a hexahedron given its bottom and top corner rings."""
    corners = bottom + top
    quads = [(0, 1, 2, 3), (4, 7, 6, 5), (0, 4, 5, 1), (1, 5, 6, 2), (2, 6, 7, 3), (3, 7, 4, 0)]
    index = {}
    vertices, faces = [], []

    def vid(p):
        key = tuple(round(c, 12) for c in p)
        if key not in index:
            index[key] = len(vertices)
            vertices.append(p)
        return index[key]

    def lerp(a, b, s):
        return [a[k] + (b[k] - a[k]) * s for k in range(3)]

    for q in quads:
        a, b, c, d = (corners[i] for i in q)
        grid = [[vid(lerp(lerp(a, d, i / n), lerp(b, c, i / n), j / n)) for j in range(n + 1)] for i in range(n + 1)]
        for i in range(n):
            for j in range(n):
                faces.append([grid[i][j], grid[i + 1][j], grid[i + 1][j + 1]])
                faces.append([grid[i][j], grid[i + 1][j + 1], grid[i][j + 1]])
    return vertices, faces


def ring_points(hx, hy, z, dx=0.0, dy=0.0):
    return [[sx * hx + dx, sy * hy + dy, z] for sx, sy in RING]


def bowl(radius, height, segments, rings):
    """Open bowl: a spherical-cap-like shell of `rings` circles of `segments` points."""
    vertices = []
    for r in range(rings):
        s = r / (rings - 1)
        rr = radius * (0.45 + 0.55 * math.sin(0.5 * math.pi * s))
        z = -height / 2 + height * s
        for k in range(segments):
            a = 2 * math.pi * k / segments
            vertices.append([rr * math.cos(a), rr * math.sin(a), z])
    faces = []
    for r in range(rings - 1):
        for k in range(segments):
            a, b = r * segments + k, r * segments + (k + 1) % segments
            c, d = a + segments, b + segments
            faces += [[a, b, d], [a, d, c]]
    # shift so the vertex centroid sits at the origin
    zc = sum(v[2] for v in vertices) / len(vertices)
    for v in vertices:
        v[2] -= zc
    return vertices, faces


def main():
    models = ROOT / "models"
    models.mkdir(parents=True, exist_ok=True)

    # asymmetric block: the top face is narrower and offset
    bottom = ring_points(0.05, 0.035, -0.07)
    top = ring_points(0.04, 0.03, 0.07, dy=0.008)
    v, f = hexahedron(bottom, top, 6)
    write_ply(models / "obj_01.ply", v, f)
    (models / "obj_01.json").write_text(json.dumps({
        "class_id": 1,
        "name": "obj_01",
        "mesh_path": "obj_01.ply",
        "keypoints": bottom + top,
        "paf_edges": CUBOID_EDGES,
        "symmetries": {"kind": "none"},
    }, indent=2) + "\n")

    # bowl with continuous symmetry about z
    segments, rings = 64, 6
    v, f = bowl(0.08, 0.055, segments, rings)
    kps = [v[k] for k in (0, 16, 32, 48)] + [v[(rings - 1) * segments + k] for k in (8, 24, 40, 56)]
    write_ply(models / "obj_13.ply", v, f)
    (models / "obj_13.json").write_text(json.dumps({
        "class_id": 13,
        "name": "obj_13",
        "mesh_path": "obj_13.ply",
        "keypoints": kps,
        "paf_edges": CUBOID_EDGES,
        "symmetries": {"kind": "continuous", "axis": [0.0, 0.0, 1.0], "steps": 64},
    }, indent=2) + "\n")

    # tall block with a 180 degree symmetry about z; keypoints selected automatically
    v, f = hexahedron(ring_points(0.045, 0.03, -0.1), ring_points(0.045, 0.03, 0.1), 6)
    write_ply(models / "obj_16.ply", v, f)
    (models / "obj_16.json").write_text(json.dumps({
        "class_id": 16,
        "name": "obj_16",
        "mesh_path": "obj_16.ply",
        "keypoints": "auto",
        "paf_edges": RING_CHORD_EDGES,
        "symmetries": {"kind": "discrete", "transforms": [{"R": [-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]}]},
    }, indent=2) + "\n")

    (ROOT / "camera_ycbv.json").write_text(json.dumps(
        {"fx": 1066.778, "fy": 1067.487, "cx": 312.9869, "cy": 241.3109, "width": 640, "height": 480}, indent=2) + "\n")

    noise = ROOT / "noise"
    noise.mkdir(exist_ok=True)
    presets = {
        "none": {},
        "jitter": {"keypoint_jitter_sd": 2.0},
        "spurious": {"spurious_peak_count": 1, "spurious_peak_amplitude": 0.9},
        "mixed": {
            "heatmap_gaussian_noise_sd": 0.05,
            "keypoint_jitter_sd": 1.5,
            "part_dropout_prob": 0.1,
            "spurious_peak_count": 1,
            "spurious_peak_amplitude": 0.8,
            "paf_angle_noise_sd": 0.2,
        },
    }
    for name, spec in presets.items():
        (noise / f"{name}.json").write_text(json.dumps(spec, indent=2) + "\n")

    scene = {
        "camera": json.loads((ROOT / "camera_ycbv.json").read_text()),
        "instances": [
            {"class_id": 1, "R": [0.8660254037844387, 0.0, 0.5, 0.0, 1.0, 0.0, -0.5, 0.0, 0.8660254037844387], "t": [-0.12, 0.0, 0.9]},
            {"class_id": 16, "R": [1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0], "t": [0.12, 0.02, 1.0]},
        ],
    }
    (ROOT / "scene_example.json").write_text(json.dumps(scene, indent=2) + "\n")


if __name__ == "__main__":
    main()
