"""Fixed nonlinearities of the render pipeline.

The pipeline applies the IEC 61966-2-1 sRGB transfer function (a short
linear toe followed by a 2.4-exponent power segment) to material and
directional-light colors, and its inverse to tonemapped values before they
reach the framebuffer.  Framebuffer values are quantized to multiples of
1/255.

All operations are pure, accept scalars or numpy arrays, and raise
:class:`~hdrpcal.errors.DomainError` on out-of-domain input.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

# Encoded-side breakpoint of the piecewise sRGB curve.
SRGB_ENCODED_BREAK = 0.04045
# Linear-side breakpoint, defined as the exact image of the encoded one so
# that encode(decode(x)) == x to machine precision on all of [0, 1].
SRGB_LINEAR_BREAK = SRGB_ENCODED_BREAK / 12.92

CHANNEL_NAMES = ("r", "g", "b")


def _checked_unit(x, op: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{op}: input must be finite")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        bad = arr[(arr < 0.0) | (arr > 1.0)]
        raise DomainError(f"{op}: input {bad.flat[0]!r} outside [0, 1]")
    return arr


def _match_input(out: np.ndarray, x) -> np.ndarray | float:
    return float(out) if np.ndim(x) == 0 else out


def srgb_decode(x):
    """Map an encoded value in [0, 1] to its linear value in [0, 1].

    x/12.92 below the breakpoint 0.04045, ((x + 0.055)/1.055)**2.4 above.
    Monotone increasing with fixed points at 0 and 1.
    """
    arr = _checked_unit(x, "srgb_decode")
    out = np.where(arr <= SRGB_ENCODED_BREAK,
                   arr / 12.92,
                   ((arr + 0.055) / 1.055) ** 2.4)
    return _match_input(out, x)


def srgb_encode(y):
    """Exact functional inverse of :func:`srgb_decode` on [0, 1]."""
    arr = _checked_unit(y, "srgb_encode")
    # The power branch is written so that the fixed point at 1 is exact.
    out = np.where(arr <= SRGB_LINEAR_BREAK,
                   arr * 12.92,
                   1.055 * (arr ** (1.0 / 2.4) - 1.0) + 1.0)
    return _match_input(out, y)


def _checked_triplet(t, op: str) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if arr.shape[-1:] != (3,):
        raise DomainError(f"{op}: expected shape (..., 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{op}: components must be finite")
    bad = (arr < 0.0) | (arr > 1.0)
    if np.any(bad):
        channel = CHANNEL_NAMES[int(np.argmax(np.any(
            bad.reshape(-1, 3), axis=0)))]
        raise DomainError(f"{op}: channel {channel} outside [0, 1]")
    return arr


def srgb_decode3(t):
    """Componentwise :func:`srgb_decode` over (..., 3) color triplets."""
    arr = _checked_triplet(t, "srgb_decode3")
    return np.where(arr <= SRGB_ENCODED_BREAK,
                    arr / 12.92,
                    ((arr + 0.055) / 1.055) ** 2.4)


def srgb_encode3(t):
    """Componentwise :func:`srgb_encode` over (..., 3) color triplets."""
    arr = _checked_triplet(t, "srgb_encode3")
    return np.where(arr <= SRGB_LINEAR_BREAK,
                    arr * 12.92,
                    1.055 * (arr ** (1.0 / 2.4) - 1.0) + 1.0)


def quantize_8bit(t):
    """Round each component to the nearest multiple of 1/255.

    Ties round half away from zero.  The pipeline's actual rounding mode is
    undocumented; this choice matches common rasterizer behavior and is
    idempotent.
    """
    arr = _checked_triplet(t, "quantize_8bit")
    return np.floor(arr * 255.0 + 0.5) / 255.0
