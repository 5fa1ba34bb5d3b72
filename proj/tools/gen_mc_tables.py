#!/usr/bin/env python3
"""Generates include/tpslam/mc_tables.hpp.

Corner/edge numbering follows the usual Lorensen-Cline layout. Each cube
configuration is triangulated by tracing the iso-contour segments on the six
faces into closed loops and fan-triangulating every loop. Ambiguous faces
(two diagonal inside corners) always separate the inside corners, so adjacent
cells agree on shared faces and the resulting surface is watertight.
"""
import math
import sys

CORNERS = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
           (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
EDGES = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
         (0, 4), (1, 5), (2, 6), (3, 7)]
EDGE_OF = {}
for i, (a, b) in enumerate(EDGES):
    EDGE_OF[(a, b)] = i
    EDGE_OF[(b, a)] = i


def sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def faces():
    out = []
    for axis in range(3):
        for side in (0, 1):
            normal = [0, 0, 0]
            normal[axis] = 1 if side else -1
            ids = [i for i, c in enumerate(CORNERS) if c[axis] == side]
            center = [sum(CORNERS[i][k] for i in ids) / 4.0 for k in range(3)]
            e1 = [0, 0, 0]
            e1[(axis + 1) % 3] = 1
            e2 = cross(tuple(normal), tuple(e1))

            def angle(i):
                d = sub(CORNERS[i], center)
                return math.atan2(dot(d, e2), dot(d, e1))
            ids.sort(key=angle)
            # counter-clockwise when viewed from outside along the normal
            out.append(ids)
    return out


FACES = faces()


def edge_point(e):
    a, b = EDGES[e]
    return tuple((x + y) / 2.0 for x, y in zip(CORNERS[a], CORNERS[b]))


def loops_for(config):
    inside = [(config >> i) & 1 for i in range(8)]
    succ = {}
    for ring in FACES:
        crossings = []
        for i in range(4):
            a, b = ring[i], ring[(i + 1) % 4]
            if inside[a] != inside[b]:
                crossings.append((EDGE_OF[(a, b)], 'enter' if inside[b] else 'leave'))
        if not crossings:
            continue
        # rotate so that the list starts with an 'enter'
        while crossings[0][1] != 'enter':
            crossings = crossings[1:] + crossings[:1]
        for k in range(0, len(crossings), 2):
            enter, leave = crossings[k][0], crossings[k + 1][0]
            assert crossings[k + 1][1] == 'leave'
            assert enter not in succ
            succ[enter] = leave
    loops = []
    seen = set()
    for start in sorted(succ):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        nxt = succ[start]
        while nxt != start:
            loop.append(nxt)
            seen.add(nxt)
            nxt = succ[nxt]
        loops.append(loop)
    return loops


def triangles_for(config, flip):
    tris = []
    for loop in loops_for(config):
        for k in range(1, len(loop) - 1):
            t = (loop[0], loop[k], loop[k + 1])
            tris.append((t[0], t[2], t[1]) if flip else t)
    return tris


def outward_ok(config, flip):
    # normals must point from inside corners (value < iso) towards outside ones
    inside = [(config >> i) & 1 for i in range(8)]
    ins = [CORNERS[i] for i in range(8) if inside[i]]
    outs = [CORNERS[i] for i in range(8) if not inside[i]]
    gin = [sum(c[k] for c in ins) / len(ins) for k in range(3)]
    gout = [sum(c[k] for c in outs) / len(outs) for k in range(3)]
    d = sub(gout, gin)
    score = 0.0
    for t in triangles_for(config, flip):
        p = [edge_point(e) for e in t]
        n = cross(sub(p[1], p[0]), sub(p[2], p[0]))
        score += dot(n, d)
    return score > 0


def main():
    flip = not outward_ok(1, False)
    tables = [triangles_for(c, flip) for c in range(256)]
    width = max(len(t) for t in tables) * 3 + 1
    edge_table = []
    for c in range(256):
        inside = [(c >> i) & 1 for i in range(8)]
        mask = 0
        for e, (a, b) in enumerate(EDGES):
            if inside[a] != inside[b]:
                mask |= 1 << e
        edge_table.append(mask)
    out = sys.stdout
    out.write("// Generated by tools/gen_mc_tables.py. Do not edit.\n")
    out.write("#pragma once\n\n#include <array>\n#include <cstdint>\n\nnamespace tpslam::mc {\n\n")
    out.write("inline constexpr std::array<std::array<int, 3>, 8> kCorners{{\n")
    out.write(",\n".join("    {%d, %d, %d}" % c for c in CORNERS))
    out.write("}};\n\n")
    out.write("inline constexpr std::array<std::array<int, 2>, 12> kEdges{{\n")
    out.write(",\n".join("    {%d, %d}" % e for e in EDGES))
    out.write("}};\n\n")
    out.write("inline constexpr std::array<std::uint16_t, 256> kEdgeTable{{\n")
    for i in range(0, 256, 8):
        out.write("    " + ", ".join("0x%03x" % v for v in edge_table[i:i + 8]) + ",\n")
    out.write("}};\n\n")
    out.write("inline constexpr int kTriTableWidth = %d;\n\n" % width)
    out.write("// edge triplets per configuration, terminated by -1; bit i of the index\n")
    out.write("// is set when corner i lies below the isovalue\n")
    out.write("inline constexpr std::array<std::array<std::int8_t, kTriTableWidth>, 256> kTriTable{{\n")
    for c in range(256):
        flat = [e for t in tables[c] for e in t]
        flat += [-1] * (width - len(flat))
        out.write("    {" + ", ".join(str(v) for v in flat) + "},\n")
    out.write("}};\n\n}  // namespace tpslam::mc\n")


if __name__ == "__main__":
    main()
