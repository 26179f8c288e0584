"""Periodic square grid, unitary Fourier transforms and indicator sets.

Samples are stored as ``samples[j, i]`` with the row index j running along
x2 and the column index i along x1.  Frequency-side arrays use the same
layout with the zero frequency moved to the centre, so entry ``[b, a]``
holds the frequency ``((a - n/2)/L, (b - n/2)/L)``.

The transform is normalized as ``f_hat(k) = (1/L) * integral of
f(x) exp(-2 pi i k.x / L) dx``.  With this choice the constant 1 maps to
a single bin of height L and the plain sum of ``|f_hat|^2`` equals the
physical L2 norm ``sum |f|^2 h^2``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    n: int
    side_length: float = 1.0

    def __post_init__(self):
        n = int(self.n)
        if n < 32 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 32, got {self.n}")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")

    @property
    def spacing(self):
        return self.side_length / self.n

    def coordinates(self):
        """Return (x1, x2) arrays of shape (n, n) in physical units."""
        axis = np.arange(self.n) * self.spacing
        x1, x2 = np.meshgrid(axis, axis)
        return x1, x2

    def frequency_axis(self):
        """Centered frequencies -n/2 .. n/2-1, in units of 1/L."""
        return (np.arange(self.n) - self.n // 2) / self.side_length

    def frequencies(self):
        """Return (xi, eta) arrays of shape (n, n) matching centered layout."""
        axis = self.frequency_axis()
        xi, eta = np.meshgrid(axis, axis)
        return xi, eta


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: GridSpec
    samples: np.ndarray
    domain: str = "space"

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.shape != (self.spec.n, self.spec.n):
            raise ValueError(f"samples must have shape {(self.spec.n, self.spec.n)}, got {arr.shape}")
        if self.domain not in ("space", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "samples", arr)

    def norm(self):
        return np.sqrt(inner_product(self, self).real)


@dataclass(frozen=True, eq=False)
class IndicatorSet:
    spec: GridSpec
    mask: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mask, dtype=bool)
        if arr.shape != (self.spec.n, self.spec.n):
            raise ValueError(f"mask must have shape {(self.spec.n, self.spec.n)}, got {arr.shape}")
        object.__setattr__(self, "mask", arr)

    def measure(self):
        return np.count_nonzero(self.mask) * self.spec.spacing ** 2

    def as_function(self):
        return GridFunction(self.spec, self.mask.astype(float))


def fft_centered(samples, spec):
    """Array-level forward transform in the package normalization."""
    h = spec.spacing
    return np.fft.fftshift(np.fft.fft2(samples)) * (h / spec.n)


def ifft_centered(spectrum, spec):
    """Array-level inverse of :func:`fft_centered`."""
    h = spec.spacing
    return np.fft.ifft2(np.fft.ifftshift(spectrum)) * (spec.n / h)


def forward_transform(f):
    if f.domain != "space":
        raise ValueError("forward_transform expects a space-side function")
    return GridFunction(f.spec, fft_centered(f.samples, f.spec), "frequency")


def inverse_transform(fhat):
    if fhat.domain != "frequency":
        raise ValueError("inverse_transform expects a frequency-side function")
    return GridFunction(fhat.spec, ifft_centered(fhat.samples, fhat.spec), "space")


def _check_same(a, b):
    if a.spec != b.spec:
        raise ValueError(f"grid mismatch: {a.spec} vs {b.spec}")


def inner_product(f, g):
    """<f, g> = sum f conj(g) h^2 in space, or sum f conj(g) in frequency."""
    _check_same(f, g)
    if f.domain != g.domain:
        raise ValueError("inner product of functions on different sides")
    total = np.vdot(g.samples.ravel(), f.samples.ravel())
    if f.domain == "space":
        total = total * f.spec.spacing ** 2
    return complex(total)


def weighted_measure(s, w):
    """Sum of the real weight w over the cells of s, times the cell area."""
    _check_same(s, w)
    weight = np.asarray(w.samples)
    if np.iscomplexobj(weight):
        if np.any(weight.imag != 0):
            raise ValueError("weight must be real-valued")
        weight = weight.real
    return float(np.sum(weight[s.mask]) * s.spec.spacing ** 2)
