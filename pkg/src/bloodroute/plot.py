"""SVG rendering of tour maps and convergence traces (no plotting deps).

Tour maps draw the processing center as a square, sites as circles, truck
arcs as solid lines and drone arcs as dashed lines, with status tuples
(departure minute, picked-up units) next to each visited site.
"""

from __future__ import annotations

from .colgen import Solution
from .model import Instance
from .schedule import evaluate_route

W, H, MARGIN = 640, 640, 50


def _scaler(inst: Instance):
    xs = [inst.pc_xy[0]] + [s.x for s in inst.sites]
    ys = [inst.pc_xy[1]] + [s.y for s in inst.sites]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span_x = (x1 - x0) or 1.0
    span_y = (y1 - y0) or 1.0

    def to_px(x, y):
        px = MARGIN + (x - x0) / span_x * (W - 2 * MARGIN)
        py = H - MARGIN - (y - y0) / span_y * (H - 2 * MARGIN)
        return round(px, 2), round(py, 2)

    return to_px


def solution_svg(inst: Instance, sol: Solution) -> str:
    to_px = _scaler(inst)
    pos = {0: to_px(*inst.pc_xy)}
    for s in inst.sites:
        pos[s.id] = to_px(s.x, s.y)
    counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
    ]

    def arc(a, b, cls):
        (x1, y1), (x2, y2) = pos[a], pos[b]
        dash = ' stroke-dasharray="6 4"' if cls == "drone-arc" else ""
        lines.append(
            f'<line class="{cls}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
            f'stroke="black" stroke-width="1.5"{dash}/>'
        )

    site_labels: dict[int, list[str]] = {}
    pc_labels: list[str] = []
    for ti, tour in enumerate(sol.tours):
        for m, (route, start) in enumerate(zip(tour.routes, tour.route_starts)):
            dep, comp = evaluate_route(route, start, inst)
            hops = [0, *route.path, 0]
            for a, b in zip(hops, hops[1:]):
                arc(a, b, "truck-arc")
            for s in route.sorties:
                arc(s.launch, s.serve, "drone-arc")
                arc(s.serve, s.rendezvous, "drone-arc")
            delivered = 0
            for (sid, t), (ati, am, _) in sol.assignment.items():
                if ati == ti and am == m:
                    delivered += counts[(sid, t)]
            for sid in route.path + tuple(s.serve for s in route.sorties):
                qty = sum(counts[(bs, bt)] for (bs, bt), (ati, am, _) in sol.assignment.items()
                          if bs == sid and ati == ti and am == m)
                site_labels.setdefault(sid, []).append(f"({dep[sid]}, {qty})")
            pc_labels.append(f"({comp}, {delivered})")

    px, py = pos[0]
    lines.append(f'<rect class="pc" x="{px - 7}" y="{py - 7}" width="14" height="14" '
                 f'fill="crimson" stroke="black"/>')
    label = "PC " + " ".join(pc_labels)
    lines.append(f'<text x="{px + 10}" y="{py - 10}" font-size="11">{label}</text>')
    for s in inst.sites:
        x, y = pos[s.id]
        lines.append(f'<circle class="site" cx="{x}" cy="{y}" r="6" fill="steelblue" '
                     f'stroke="black"/>')
        label = f"DS {s.id} " + " ".join(site_labels.get(s.id, []))
        lines.append(f'<text x="{x + 9}" y="{y - 9}" font-size="11">{label}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_ma_trace_csv(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("generation,best,avg,worst\n")
        for gen, best, avg, worst in rows:
            fh.write(f"{gen},{best:.9g},{avg:.9g},{worst:.9g}\n")


def read_ma_trace_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        for line in fh:
            if not line.strip():
                continue
            gen, best, avg, worst = line.strip().split(",")
            rows.append((int(gen), float(best), float(avg), float(worst)))
    return rows


def convergence_svg(rows) -> str:
    """Best/avg/worst per generation as three polylines."""
    if not rows:
        return ('<svg xmlns="http://www.w3.org/2000/svg" width="640" height="480">'
                "<text x=\"20\" y=\"20\">empty trace</text></svg>\n")
    w, h, m = 640, 480, 50
    gmin, gmax = rows[0][0], rows[-1][0]
    vals = [v for row in rows for v in row[1:]]
    vmin, vmax = min(vals), max(vals)
    gspan = (gmax - gmin) or 1
    vspan = (vmax - vmin) or 1.0

    def pt(g, v):
        x = m + (g - gmin) / gspan * (w - 2 * m)
        y = h - m - (v - vmin) / vspan * (h - 2 * m)
        return f"{round(x, 2)},{round(y, 2)}"

    series = {
        "best": ([pt(r[0], r[1]) for r in rows], "seagreen"),
        "avg": ([pt(r[0], r[2]) for r in rows], "steelblue"),
        "worst": ([pt(r[0], r[3]) for r in rows], "indianred"),
    }
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
           f'<text x="{m}" y="{h - m + 30}" font-size="11">generation {gmin}..{gmax}</text>',
           f'<text x="5" y="{m - 10}" font-size="11">fitness {vmin:.6g}..{vmax:.6g}</text>']
    for i, (name, (pts, color)) in enumerate(series.items()):
        out.append(f'<polyline class="series-{name}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{" ".join(pts)}"/>')
        out.append(f'<text x="{w - m + 5}" y="{m + 15 * i}" font-size="11" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
