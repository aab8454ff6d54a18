"""
Line plots rendered to SVG through the figure.svg jinja2 template.
"""
import json
import math
import os

import jinja2
import numpy as np

svg_template = os.path.join(os.path.dirname(os.path.realpath(__file__)), 'figure.svg')

WIDTH = 640
HEIGHT = 420
MARGIN = {'left': 70, 'right': 150, 'top': 40, 'bottom': 50}
COLORS = ('#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b', '#17becf', '#7f7f7f')


def _ticks(low, high, count=5):
    if high <= low:
        high = low + 1.0
    raw = (high - low) / count
    magnitude = 10 ** math.floor(math.log10(raw))
    step = min((m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw), default=raw)
    start = math.ceil(low / step) * step
    return [start + i * step for i in range(int((high - start) / step + 1e-9) + 1)]


def _label(value):
    return ('%.4g' % value) if value != 0 else '0'


def render_figure(title, xlabel, ylabel, series, metadata=None, dashed=()):
    """
    :param series: list of (label, x, y)
    :param metadata: configuration embedded in the figure as a JSON metadata block
    :param dashed: labels drawn with a dashed stroke
    :return: SVG document
    """
    finite = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for _, x, y in series]
    xs = np.concatenate([x[np.isfinite(x) & np.isfinite(y)] for x, y in finite])
    ys = np.concatenate([y[np.isfinite(x) & np.isfinite(y)] for x, y in finite])
    x_low, x_high = float(xs.min()), float(xs.max())
    y_low, y_high = float(min(ys.min(), 0.0)), float(ys.max())
    if x_high == x_low:
        x_high = x_low + 1.0
    if y_high == y_low:
        y_high = y_low + 1.0
    plot_w = WIDTH - MARGIN['left'] - MARGIN['right']
    plot_h = HEIGHT - MARGIN['top'] - MARGIN['bottom']

    def px(v):
        return MARGIN['left'] + (v - x_low) / (x_high - x_low) * plot_w

    def py(v):
        return MARGIN['top'] + (y_high - v) / (y_high - y_low) * plot_h

    lines = []
    for i, ((label, _, _), (x, y)) in enumerate(zip(series, finite)):
        ok = np.isfinite(x) & np.isfinite(y)
        points = ' '.join('%.2f,%.2f' % (px(a), py(b)) for a, b in zip(x[ok], y[ok]))
        lines.append({'label': label, 'points': points, 'color': COLORS[i % len(COLORS)],
                      'dashed': label in dashed, 'legend_y': MARGIN['top'] + 18 * i})

    with open(svg_template, 'r') as _f:
        template = jinja2.Template(_f.read(), autoescape=True)
    return template.render(width=WIDTH, height=HEIGHT, margin=MARGIN, plot_w=plot_w, plot_h=plot_h,
                           title=title, xlabel=xlabel, ylabel=ylabel, lines=lines,
                           xticks=[{'x': px(t), 'label': _label(t)} for t in _ticks(x_low, x_high)
                                   if x_low <= t <= x_high],
                           yticks=[{'y': py(t), 'label': _label(t)} for t in _ticks(y_low, y_high)
                                   if y_low <= t <= y_high],
                           zero_y=py(0.0) if y_low < 0 < y_high else None,
                           metadata=json.dumps(metadata or {}, sort_keys=True, indent=1))
