"""SVG snapshots of the sweep: region outline, bar traces, bars, unswept shading.

Swept workload is drawn white.  Sweeping is a scalar rate in the model, so
the swept part of subregion ``i`` is drawn as the lowest fraction
``swept_i / m_i`` of the partitioned height.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_COLORS = ["#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#1b9e77",
           "#666666"]
_W, _H, _PAD = 360.0, 480.0, 20.0


def _fmt(v: float) -> str:
    return f"{v:.3f}"


class _Canvas:
    def __init__(self, x0, x1, y0, y1):
        s = min((_W - 2 * _PAD) / (x1 - x0), (_H - 2 * _PAD) / (y1 - y0))
        self.s, self.x0, self.y1 = s, x0, y1
        self.items = []

    def pt(self, x, y):
        return f"{_fmt(_PAD + (x - self.x0) * self.s)},{_fmt(_PAD + (self.y1 - y) * self.s)}"

    def poly(self, xs, ys, closed=False, **attrs):
        tag = "polygon" if closed else "polyline"
        pts = " ".join(self.pt(x, y) for x, y in zip(xs, ys))
        a = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        self.items.append(f'<{tag} points="{pts}" {a}/>')

    def svg(self, title: str) -> str:
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W:g}" height="{_H:g}" '
                f'viewBox="0 0 {_W:g} {_H:g}">\n<title>{title}</title>\n'
                f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def _boundary(history, i, k, y_bot, ys):
    tr_y = np.asarray(history.traces[i].ys[: k + 1])
    tr_x = np.asarray(history.traces[i].xs[: k + 1])
    return np.where(ys <= y_bot, np.interp(np.minimum(ys, y_bot), tr_y, tr_x), history.x[k, i])


def render_frame(cfg, history, k: int, swept=None, t=None) -> str:
    region, p = cfg.region, cfg.partition
    n = p.n
    l = region.length_l
    ys_full = np.linspace(0.0, l, 200)
    ga, gb = region.left(ys_full), region.right(ys_full)
    c = _Canvas(float(ga.min()), float(gb.max()), 0.0, l)
    t_k = float(history.t[k])
    y_bot = p.v * t_k
    y_top = min(y_bot + p.epsilon, l)
    ys = np.linspace(0.0, y_top, 120)
    bounds = [region.left(ys)]
    bounds += [_boundary(history, i, k, y_bot, ys) for i in range(1, n)]
    bounds.append(region.right(ys))
    m = history.m[k]
    for i in range(n):
        left, right = bounds[i], bounds[i + 1]
        c.poly(np.concatenate([left, right[::-1]]), np.concatenate([ys, ys[::-1]]), True,
               fill=_COLORS[i % len(_COLORS)], fill_opacity="0.55", stroke="none")
        if swept is not None and m[i] > 0:
            frac = min(max(swept[i] / m[i], 0.0), 1.0)
            cut = ys <= frac * y_top
            if cut.sum() >= 2:
                c.poly(np.concatenate([left[cut], right[cut][::-1]]),
                       np.concatenate([ys[cut], ys[cut][::-1]]), True, fill="white",
                       stroke="none")
    for i in range(1, n):
        c.poly(bounds[i], ys, stroke="black", stroke_width="0.8", fill="none")
        c.poly([history.x[k, i]] * 2, [y_bot, y_top], stroke="black", stroke_width="3",
               fill="none")
    c.poly(np.concatenate([ga, gb[::-1], ga[:1]]),
           np.concatenate([ys_full, ys_full[::-1], ys_full[:1]]),
           stroke="#222222", stroke_width="1.5", fill="none")
    return c.svg(f"t = {t_k if t is None else t:.4f}")


def write_frames(out_dir: Path, cfg, history, outcome, stride: int) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    K = len(history.t) - 1
    paths = []
    if outcome is None:
        times = history.t
    else:
        times = outcome.residual_times
    last = len(times) - 1
    for j, t in enumerate(times):
        if j % stride and j != K and j != last:
            continue
        k = min(j, K)
        swept = None
        if outcome is not None:
            swept = history.m[k] - outcome.residual_series[j]
        path = out_dir / f"frame_{j:06d}.svg"
        path.write_text(render_frame(cfg, history, k, swept, float(t)))
        paths.append(path)
    return paths
