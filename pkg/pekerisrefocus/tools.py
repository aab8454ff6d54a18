import csv
import inspect
import io
import logging
import os
import re
import tempfile
import traceback
from types import BuiltinFunctionType, BuiltinMethodType, FunctionType, MethodType, ModuleType

import numpy as np

logger = logging.getLogger('PekerisRefocus')

dotted_name_regex = re.compile(r"\b[A-Za-z_][A-Za-z_0-9]*(?:\.[A-Za-z_][A-Za-z_0-9]*)+")

_CALLABLES = (FunctionType, MethodType, ModuleType, BuiltinMethodType, BuiltinFunctionType)
_MISSING = object()


def safe_repr(value):
    try:
        return repr(value)
    except Exception as e:
        logger.error('PekerisRefocus: repr of %s failed: %s', type(value).__name__, e)
        return '<%s without representation>' % type(value).__name__


def format_reference(value, max_string_length=1000):
    """
    Describe a variable for a failure report. Arrays are summarized by dtype, shape and the range of their
    magnitudes; configuration objects by their to_dict(); containers by their length.

    :param value: object or value
    :param max_string_length: maximum number of characters kept
    """
    if isinstance(value, np.ndarray):
        parts = ['dtype: %s' % value.dtype, 'shape: %s' % (value.shape,)]
        if value.size and np.issubdtype(value.dtype, np.number):
            magnitude = np.abs(value)
            parts.append('|x| in [%.6g, %.6g]' % (np.nanmin(magnitude), np.nanmax(magnitude)))
            if not np.all(np.isfinite(value)):
                parts.append('non-finite entries: %d' % int(np.sum(~np.isfinite(value))))
        text = ', '.join(parts + [np.array2string(value, threshold=20, edgeitems=3)])
    elif hasattr(value, 'to_dict') and not isinstance(value, type):
        try:
            text = '%s(%s)' % (type(value).__name__, value.to_dict())
        except Exception:
            text = safe_repr(value)
    elif isinstance(value, (list, tuple, set, dict)):
        text = 'length: %d, %s' % (len(value), safe_repr(value))
    else:
        text = safe_repr(value)
    if len(text) > max_string_length:
        text = text[:max_string_length] + ' ...'
    return text


def _resolve(frame, dotted):
    """ Follow a dotted name through the frame locals; _MISSING when any link is absent or it names code. """
    head, *attributes = dotted.split('.')
    value = frame.f_locals.get(head, _MISSING)
    for attribute in attributes:
        if value is _MISSING:
            break
        try:
            value = getattr(value, attribute, _MISSING)
        except Exception:
            value = _MISSING
    return _MISSING if isinstance(value, _CALLABLES) else value


def get_object_references(frame, source, max_string_length=1000):
    """
    Values of the dotted attribute references (e.g. "mode_set.config.d") that appear in the failing function.

    :return: list of (reference, description)
    """
    found = []
    for dotted in sorted(set(dotted_name_regex.findall(source))):
        value = _resolve(frame, dotted)
        if value is not _MISSING:
            found.append((dotted, format_reference(value, max_string_length=max_string_length)))
    return found


def get_local_references(frame, max_string_length=1000):
    """
    :return: list of (variable name, description) for the frame locals, `self` first
    """
    f_locals = dict(frame.f_locals)
    described = [('self', safe_repr(f_locals.pop('self')))] if 'self' in f_locals else []
    for name, value in f_locals.items():
        described.append((name, format_reference(value, max_string_length=max_string_length)))
    return described


def analyze_traceback(tb, inspection_level=None, limit=None, max_string_length=1000):
    """
    One dict per traceback frame, outermost first, with the failing line. The innermost `inspection_level` frames
    (all of them when None) also carry their source and the descriptions of their local and dotted variables.

    :param tb: traceback
    :param limit: keep only the first `limit` frames
    :param max_string_length: longest value description kept per variable
    """
    frames = [frame for frame, _ in traceback.walk_tb(tb)]
    summaries = traceback.extract_tb(tb, limit=limit)
    frames = frames[:len(summaries)]
    info = []
    for depth, (frame, summary) in enumerate(zip(frames, summaries)):
        entry = {'File': summary.filename,
                 'Error Line Number': summary.lineno,
                 'Module': summary.name,
                 'Error Line': summary.line,
                 'Source Code': ''}
        if inspection_level is None or len(summaries) - depth <= inspection_level:
            try:
                lines, first = inspect.getsourcelines(frame)
                entry.update({'Module Line Number': first, 'Source Code': ''.join(lines)})
            except (OSError, TypeError):
                pass
            entry['Local Variables'] = get_local_references(frame, max_string_length)
            entry['Object Variables'] = get_object_references(frame, entry['Source Code'], max_string_length)
        info.append(entry)
    return info


def format_float(value):
    """ Shortest decimal that round-trips to the same double. """
    return repr(float(value))


def csv_text(header, rows):
    """ RFC 4180 text with a header row; floats are written as shortest round-trip decimals. """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\r\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def atomic_write(path, text):
    """
    Write `text` to a temporary file next to `path` and rename it into place.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
