import os
import sys

import numpy as np

from pekerisrefocus.plotting import render_figure
from pekerisrefocus.tools import analyze_traceback, atomic_write, csv_text, format_float, format_reference


def test_csv_text_uses_crlf_and_round_trip_floats():
    text = csv_text(['j', 'value'], [(1, 0.1), (2, np.float64(1.0) / 3), (3, '')])
    lines = text.split('\r\n')
    assert lines[0] == 'j,value'
    assert lines[1] == '1,0.1'
    assert float(lines[2].split(',')[1]) == 1.0 / 3
    assert lines[3] == '3,'
    assert text.endswith('\r\n')


def test_format_float():
    assert format_float(2.5) == '2.5'
    assert float(format_float(np.pi)) == np.pi


def test_atomic_write_replaces_file(tmp_path):
    path = str(tmp_path / 'out.csv')
    atomic_write(path, 'first\r\n')
    atomic_write(path, 'second\r\n')
    with open(path, newline='') as f:
        assert f.read() == 'second\r\n'
    assert os.listdir(str(tmp_path)) == ['out.csv']


def test_render_figure():
    x = np.linspace(0, 1, 5)
    svg = render_figure('Title <1>', 'x', 'y', [('a', x, x ** 2), ('ref', x, np.full(5, np.nan))],
                        metadata={'preset': 'fig-tau1'}, dashed=('ref',))
    assert svg.lstrip().startswith('<svg') or svg.lstrip().startswith('<?xml')
    assert 'Title &lt;1&gt;' in svg
    assert 'fig-tau1' in svg
    assert 'stroke-dasharray' in svg


class Holder(object):
    def __init__(self):
        self.values = np.array([1.0, -4.0, np.nan])


def fail_with_locals(holder):
    scale = 2.5
    return float(holder.values[0]) / 0


def test_format_reference():
    text = format_reference(np.arange(6.0).reshape(2, 3))
    assert 'dtype: float64' in text and 'shape: (2, 3)' in text
    assert 'non-finite entries: 1' in format_reference(np.array([1.0, np.inf]))
    assert format_reference([1, 2, 3]) == 'length: 3, [1, 2, 3]'
    assert format_reference('x' * 50, max_string_length=10) == "'xxxxxxxxx ..."


def test_analyze_traceback_describes_innermost_frame():
    try:
        fail_with_locals(Holder())
    except ZeroDivisionError:
        tb = sys.exc_info()[2]
    frames = analyze_traceback(tb, inspection_level=1)
    assert [f['Module'] for f in frames] == ['test_analyze_traceback_describes_innermost_frame', 'fail_with_locals']
    assert 'Local Variables' not in frames[0]
    innermost = frames[-1]
    assert dict(innermost['Local Variables'])['scale'] == '2.5'
    assert 'holder.values' in dict(innermost['Object Variables'])
    assert 'def fail_with_locals' in innermost['Source Code']
