"""Kernel backend selection.

The compiled extension is preferred when it imports; otherwise the numpy
fallback is used. Set ROADNET_KERNELS=compiled|fallback to force one (the
compiled choice then fails loudly if the extension is missing).
"""

from __future__ import annotations

import os

from . import fallback as _fallback

try:
    from . import _core as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"fallback": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get(name: str):
    """Return a specific backend module by name."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"kernel backend {name!r} not available (have: {', '.join(available())})"
        ) from None


def _select():
    requested = os.environ.get("ROADNET_KERNELS", "auto").strip().lower()
    if requested in ("", "auto"):
        return _BACKENDS.get("compiled", _fallback)
    return get(requested)


_active = _select()
BACKEND = _active.NAME


def active():
    return _active
