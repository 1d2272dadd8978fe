"""Periodic-box FFT helpers: embedding, smooth windows and wavenumbers."""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft


def wavenumbers(shape, h):
    """Angular wavenumber arrays (3, n0, n1, n2) with the Nyquist entries zeroed.

    Zeroing Nyquist keeps spectral derivatives of real fields real.
    """
    ks = []
    for n in shape:
        k = 2.0 * np.pi * sfft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        ks.append(k)
    return np.stack(np.meshgrid(*ks, indexing="ij"))


def embed(f, pad_shape, offset):
    """Zero-pad the trailing three axes of ``f`` into ``pad_shape`` at ``offset``."""
    out = np.zeros(f.shape[:-3] + tuple(pad_shape), dtype=f.dtype)
    sl = tuple(slice(o, o + n) for o, n in zip(offset, f.shape[-3:]))
    out[(Ellipsis,) + sl] = f
    return out


def crop(f, shape, offset):
    sl = tuple(slice(o, o + n) for o, n in zip(offset, shape))
    return f[(Ellipsis,) + sl]


def padded_layout(shape, factor=2):
    """Padded box size (>= ``factor`` times each extent, even) and the centring offset."""
    pad = tuple(int(2 * np.ceil(factor * n / 2)) for n in shape)
    offset = tuple((p - n) // 2 for p, n in zip(pad, shape))
    return pad, offset


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def box_window(shape, ramp):
    """Product window equal to 1 except within ``ramp`` nodes of each face.

    The first and last node on every axis are exactly 0.
    """
    w = np.ones(shape)
    for ax, n in enumerate(shape):
        i = np.arange(n, dtype=float)
        d = np.minimum(i, n - 1 - i)
        prof = smooth_step(d / ramp)
        s = [None, None, None]
        s[ax] = slice(None)
        w = w * prof[tuple(s)]
    return w


def plateau_mask(shape, ramp):
    """Nodes where :func:`box_window` is exactly 1."""
    m = np.ones(shape, dtype=bool)
    for ax, n in enumerate(shape):
        i = np.arange(n)
        d = np.minimum(i, n - 1 - i)
        s = [None, None, None]
        s[ax] = slice(None)
        m = m & (d >= ramp)[tuple(s)]
    return m


def fftn3(f):
    return sfft.fftn(f, axes=(-3, -2, -1))


def ifftn3(f):
    return sfft.ifftn(f, axes=(-3, -2, -1))
