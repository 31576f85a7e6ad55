"""Tiny log-log SVG emitter for convergence plots."""
import math
from xml.sax.saxutils import escape

W, H = 480, 360
ML, MR, MT, MB = 64, 20, 30, 48


def _ticks(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(series, title="", xlabel="tau", ylabel="error"):
    """``series``: list of dicts with keys x, y, label and optional fit=(slope, intercept)."""
    xs = [v for s in series for v in s["x"] if v > 0]
    ys = [v for s in series for v in s["y"] if v > 0]
    if not xs or not ys:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}"></svg>\n'
    lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
    ly0, ly1 = math.log10(min(ys)), math.log10(max(ys))
    lx0, lx1 = lx0 - 0.1, lx1 + 0.1
    ly0, ly1 = ly0 - 0.2, ly1 + 0.2

    def px(x):
        return ML + (math.log10(x) - lx0) / (lx1 - lx0) * (W - ML - MR)

    def py(y):
        return H - MB - (math.log10(y) - ly0) / (ly1 - ly0) * (H - MT - MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
           'fill="none" stroke="black"/>',
           f'<text x="{W / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>',
           f'<text x="{W / 2:.1f}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{H / 2:.1f}" transform="rotate(-90 14 {H / 2:.1f})" '
           f'text-anchor="middle">{escape(ylabel)}</text>']
    for t in _ticks(lx0, lx1):
        if lx0 <= t <= lx1:
            x = px(10.0 ** t)
            out.append(f'<line x1="{x:.1f}" y1="{H - MB}" x2="{x:.1f}" y2="{H - MB + 4}" stroke="black"/>')
            out.append(f'<text x="{x:.1f}" y="{H - MB + 16}" text-anchor="middle">1e{t}</text>')
    for t in _ticks(ly0, ly1):
        if ly0 <= t <= ly1:
            y = py(10.0 ** t)
            out.append(f'<line x1="{ML - 4}" y1="{y:.1f}" x2="{ML}" y2="{y:.1f}" stroke="black"/>')
            out.append(f'<text x="{ML - 6}" y="{y + 4:.1f}" text-anchor="end">1e{t}</text>')
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    for i, s in enumerate(series):
        c = colors[i % len(colors)]
        pts = [(px(x), py(y)) for x, y in zip(s["x"], s["y"]) if x > 0 and y > 0]
        for x, y in pts:
            out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{c}"/>')
        fit = s.get("fit")
        if fit and all(map(math.isfinite, fit)):
            slope, icpt = fit
            a, b = min(s["x"]), max(s["x"])
            ya, yb = math.exp(icpt) * a ** slope, math.exp(icpt) * b ** slope
            out.append(f'<line x1="{px(a):.1f}" y1="{py(ya):.1f}" x2="{px(b):.1f}" '
                       f'y2="{py(yb):.1f}" stroke="{c}" stroke-dasharray="4 3"/>')
        label = s.get("label", "")
        if fit and math.isfinite(fit[0]):
            label += f" (slope {fit[0]:.3f})"
        out.append(f'<text x="{ML + 8}" y="{MT + 16 + 14 * i}" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
