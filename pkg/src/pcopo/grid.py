"""Periodic 1D transverse grid and its conjugate wavenumbers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Collocation grid on a periodic domain of size ``length``.

    Wavenumbers are k_m = 2*pi*m/length for m in [-n/2, n/2), stored in
    ascending order. ``fft_wavenumbers`` carries the same set in numpy FFT
    ordering for spectral differentiation.
    """

    n_points: int
    length: float
    dx: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False)
    wavenumbers: np.ndarray = field(init=False, repr=False)
    fft_wavenumbers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dx", self.length / self.n_points)
        object.__setattr__(self, "x", self.dx * np.arange(self.n_points))
        kfft = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        object.__setattr__(self, "fft_wavenumbers", kfft)
        object.__setattr__(self, "wavenumbers", np.fft.fftshift(kfft))
        for a in ("x", "wavenumbers", "fft_wavenumbers"):
            getattr(self, a).setflags(write=False)

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.length

    def mode_index(self, k: float) -> int:
        """Index into ``wavenumbers`` of the grid mode closest to k."""
        return int(np.argmin(np.abs(self.wavenumbers - k)))

    def is_commensurate(self, k: float, rtol: float = 1e-9) -> bool:
        """True if k is an integer multiple of 2*pi/length."""
        j = k / self.dk
        return abs(j - round(j)) <= rtol * max(1.0, abs(j))


def build_grid(n_points: int, length: float) -> Grid:
    """Construct a periodic grid.

    n_points must be even and at least 8 (powers of two transform fastest);
    length must be positive.
    """
    if n_points < 8 or n_points % 2 != 0:
        raise ValueError(f"n_points must be even and >= 8, got {n_points}")
    if not length > 0:
        raise ValueError(f"length must be positive, got {length}")
    return Grid(n_points=int(n_points), length=float(length))
