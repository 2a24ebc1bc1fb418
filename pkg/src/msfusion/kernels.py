"""Convolution backend selection.

The compiled Cython extension carries the hot inner loops; a pure-numpy
implementation keeps the package fully functional without a build step.
One backend is picked at import time (compiled when available) and can be
forced with the environment variable ``MSFUSION_BACKEND=compiled|fallback``.
Both backends are deterministic: fixed accumulation order per output
element, so repeated calls are bitwise identical.
"""

from __future__ import annotations

import os

from . import _conv_np

try:
    from . import _conv_ext
except ImportError:
    _conv_ext = None

_BACKENDS = {"fallback": _conv_np}
if _conv_ext is not None:
    _BACKENDS["compiled"] = _conv_ext


def _select():
    forced = os.environ.get("MSFUSION_BACKEND")
    if forced:
        if forced not in ("compiled", "fallback"):
            raise ImportError(f"MSFUSION_BACKEND must be 'compiled' or 'fallback', got {forced!r}")
        if forced not in _BACKENDS:
            raise ImportError(
                "MSFUSION_BACKEND=compiled but the msfusion._conv_ext extension is not built; "
                "run 'pip install -e .' or 'python setup.py build_ext --inplace'"
            )
        return forced
    return "compiled" if "compiled" in _BACKENDS else "fallback"


ACTIVE_BACKEND = _select()
_active = _BACKENDS[ACTIVE_BACKEND]


def available_backends() -> tuple:
    """Backend names usable in this process, preferred first."""
    return tuple(sorted(_BACKENDS, reverse=False)) if "compiled" not in _BACKENDS else (
        "compiled",
        "fallback",
    )


def get_backend(name: str):
    """Module-like namespace with conv2d_forward / conv2d_grad_* functions."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise KeyError(f"unknown or unavailable backend {name!r}; have {tuple(_BACKENDS)}")


def conv2d_raw(x, w, stride, padding, groups):
    return _active.conv2d_forward(x, w, stride[0], stride[1], padding[0], padding[1], groups)


def conv2d_grad_input_raw(cot, w, x_shape, stride, padding, groups):
    return _active.conv2d_grad_input(
        cot, w, tuple(x_shape), stride[0], stride[1], padding[0], padding[1], groups
    )


def conv2d_grad_weight_raw(cot, x, w_shape, stride, padding, groups):
    return _active.conv2d_grad_weight(
        cot, x, tuple(w_shape), stride[0], stride[1], padding[0], padding[1], groups
    )
