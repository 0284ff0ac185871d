"""Deterministic SVG and ASCII drawings of a scene with one routed pipe."""

from __future__ import annotations

from .planner import check_path

CELL_PX = 8
GAP_PX = 24
PIPE_COLOR = "#d62728"

# (name, horizontal axis, vertical axis); vertical is drawn upward
PROJECTIONS = (("plan", 0, 1), ("elevation-xz", 0, 2), ("elevation-yz", 1, 2))


def _polyline_points(cells, ox, oy, h_axis, v_axis, height):
    pts = []
    for c in cells:
        x = ox + (c[h_axis] + 0.5) * CELL_PX
        y = oy + (height - c[v_axis] - 0.5) * CELL_PX
        pts.append(f"{x:g},{y:g}")
    return " ".join(pts)


def render_svg(scene, cells):
    cells = [tuple(int(v) for v in c) for c in cells]
    dims = scene.dims
    panels = []
    ox = GAP_PX
    total_h = 0
    for name, h, v in PROJECTIONS:
        w_px, h_px = dims[h] * CELL_PX, dims[v] * CELL_PX
        panels.append((name, h, v, ox, w_px, h_px))
        ox += w_px + GAP_PX
        total_h = max(total_h, h_px)
    width, height = ox, total_h + 2 * GAP_PX

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    for name, h, v, px, w_px, h_px in panels:
        py = GAP_PX
        out.append(f'<g id="{name}">')
        out.append(f'<text x="{px}" y="{py - 6}" font-family="monospace" font-size="11">{name}</text>')
        out.append(f'<rect x="{px}" y="{py}" width="{w_px}" height="{h_px}" fill="none" stroke="black"/>')
        for box in scene.obstacles:
            x = px + box.min[h] * CELL_PX
            y = py + (dims[v] - box.max[v]) * CELL_PX
            bw = (box.max[h] - box.min[h]) * CELL_PX
            bh = (box.max[v] - box.min[v]) * CELL_PX
            out.append(f'<rect class="{box.kind}" x="{x}" y="{y}" width="{bw}" height="{bh}" '
                       f'fill="#999999" fill-opacity="0.5" stroke="#666666"/>')
        pts = _polyline_points(cells, px, py, h, v, dims[v])
        out.append(f'<polyline points="{pts}" fill="none" stroke="{PIPE_COLOR}" stroke-width="3"/>')
        for label, c, color in (("start", scene.start, "#2ca02c"), ("end", scene.end, "#1f77b4")):
            cx = px + (c[h] + 0.5) * CELL_PX
            cy = py + (dims[v] - c[v] - 0.5) * CELL_PX
            out.append(f'<circle class="{label}" cx="{cx:g}" cy="{cy:g}" r="{CELL_PX * 0.6:g}" fill="{color}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_ascii(scene, cells):
    """One plan-view grid per z level, top level first.

    ``#`` obstacle, ``o`` pipe, ``S``/``E`` start and end, ``.`` free. Rows run
    from high y to low y so the picture matches the SVG plan view.
    """
    cells = {tuple(int(v) for v in c) for c in cells}
    lx, ly, lz = scene.dims
    occ = scene.occupancy
    blocks = []
    for z in range(lz - 1, -1, -1):
        lines = [f"z={z}"]
        for y in range(ly - 1, -1, -1):
            row = []
            for x in range(lx):
                c = (x, y, z)
                if c == scene.start:
                    row.append("S")
                elif c == scene.end:
                    row.append("E")
                elif c in cells:
                    row.append("o")
                elif occ[c]:
                    row.append("#")
                else:
                    row.append(".")
            lines.append("".join(row))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_layout(scene, cells, fmt="svg"):
    check_path(scene, [tuple(c) for c in cells])
    if fmt == "svg":
        return render_svg(scene, cells)
    if fmt == "ascii":
        return render_ascii(scene, cells)
    raise ValueError(f"unknown render format {fmt!r}")
