"""Python access to the depgcn library.

Configuration dictionaries take the same keys as the command-line config
files. Values may be plain Python objects; they are converted to text.
"""

from . import _depgcn
from ._depgcn import (
    ConfigError,
    InputError,
    Subject,
    __version__,
    confidence_value,
    differential_entropy,
    evaluate,
    extract_features,
    level_from_score,
    penalty_value,
    read_feature_store,
    render_table,
    sample_el2,
    update_nel2,
    write_feature_store,
)

import json as _json


def _text(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple, set)):
        return ",".join(_text(v) for v in value) or "none"
    return str(value)


def _config(config, overrides):
    merged = dict(config or {})
    merged.update(overrides)
    return {k: _text(v) for k, v in merged.items()}


def generate(config=None, **overrides):
    """Return (subjects, truth) for a synthetic data set."""
    return _depgcn.generate(_config(config, overrides))


def loso(subjects, config=None, folds_parallel=1, history=False, **overrides):
    """Run leave-one-subject-out evaluation and return the report as a dict."""
    text = _depgcn.loso(list(subjects), _config(config, overrides), folds_parallel, history)
    return _json.loads(text)


def loso_json(subjects, config=None, folds_parallel=1, history=False, **overrides):
    """Same as loso() but returns the report text unchanged."""
    return _depgcn.loso(list(subjects), _config(config, overrides), folds_parallel, history)


__all__ = [
    "ConfigError",
    "InputError",
    "Subject",
    "__version__",
    "confidence_value",
    "differential_entropy",
    "evaluate",
    "extract_features",
    "generate",
    "level_from_score",
    "loso",
    "loso_json",
    "penalty_value",
    "read_feature_store",
    "render_table",
    "sample_el2",
    "update_nel2",
    "write_feature_store",
]
