"""Grids: logarithmic quadrature grid, periodic y-grid, graded space grid.

The y-domain is the 2*pi-periodic torus with Fourier lattice eta in Z
(d = 0 collapses to a single point with eta = 0), so Fourier multipliers
are exact.  The interior solver uses a graded x-grid obtained from the
stretching x(s) = X*(e^{kappa*s}-1)/(e^kappa-1) with s uniform on [0, 1];
unlike a pure log-grid this keeps x = 0 as a genuine node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class LogGrid:
    """Geometric grid on [x_min, x_max], uniform in log x."""

    x_min: float
    x_max: float
    n_points: int
    nodes: np.ndarray = field(init=False, repr=False)
    log_step: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 < self.x_min < self.x_max) or self.n_points < 2:
            raise ValidationError("LogGrid requires 0 < x_min < x_max and n >= 2")
        t = np.linspace(np.log(self.x_min), np.log(self.x_max), self.n_points)
        object.__setattr__(self, "nodes", np.exp(t))
        object.__setattr__(self, "log_step", float(t[1] - t[0]))

    def refine_x_min(self, factor: float) -> "LogGrid":
        """New grid reaching down to x_min/factor at (roughly) equal log spacing."""
        extra = int(np.ceil(np.log(factor) / self.log_step))
        return LogGrid(self.x_min / factor, self.x_max, self.n_points + extra)


@dataclass(frozen=True)
class YGrid:
    """Uniform periodic grid on [0, 2*pi); d = 0 degenerates to one point."""

    d: int
    n_points: int = 1

    def __post_init__(self):
        if self.d not in (0, 1):
            raise ValidationError("only d in {0, 1} supported")
        if self.d == 0:
            object.__setattr__(self, "n_points", 1)
        elif self.n_points < 4 or self.n_points % 2:
            raise ValidationError("d=1 needs an even number >= 4 of y-points")

    @property
    def nodes(self) -> np.ndarray:
        if self.d == 0:
            return np.zeros(1)
        return 2.0 * np.pi * np.arange(self.n_points) / self.n_points

    @property
    def modes(self) -> np.ndarray:
        """Integer Fourier lattice in FFT order."""
        if self.d == 0:
            return np.zeros(1)
        return np.fft.fftfreq(self.n_points, d=1.0 / self.n_points)

    @property
    def measure(self) -> float:
        """Quadrature weight per node (2*pi/J for d = 1, 1 for d = 0)."""
        return 2.0 * np.pi / self.n_points if self.d == 1 else 1.0

    def bracket(self) -> np.ndarray:
        """<eta> = (4 + |eta|^2)^(1/2) on the mode lattice (d=0: <0> = 2)."""
        return np.sqrt(4.0 + self.modes ** 2)


def fourier_coeffs(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Fourier coefficients w_hat_eta = (1/J) sum_j w(y_j) e^{-i eta y_j}."""
    return np.fft.fft(values, axis=axis) / values.shape[axis]


def fourier_values(coeffs: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.fft.ifft(coeffs, axis=axis) * coeffs.shape[axis]


def spectral_dy(values: np.ndarray, ygrid: YGrid, axis: int, order: int = 1) -> np.ndarray:
    """Spectral y-derivative of given order (exact for band-limited data)."""
    if ygrid.d == 0 or order == 0:
        return values if order == 0 else np.zeros_like(values)
    eta = ygrid.modes
    mult = (1j * eta) ** order
    shape = [1] * values.ndim
    shape[axis] = len(eta)
    return np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)


@dataclass(frozen=True)
class WeightLine:
    """Symmetric uniform grid in tau on the line Re z = beta."""

    beta: float
    tau_max: float = 200.0
    dtau: float = 0.05

    @property
    def taus(self) -> np.ndarray:
        n = int(round(self.tau_max / self.dtau))
        return self.dtau * np.arange(-n, n + 1)

    @property
    def zs(self) -> np.ndarray:
        return self.beta + 1j * self.taus


@dataclass(frozen=True)
class SpaceGrid:
    """Graded x-grid (x = 0 included) times a periodic y-grid."""

    n_x: int  # number of cells; nodes are 0..n_x
    x_max: float = 2.0
    kappa: float = 6.0
    ygrid: YGrid = field(default_factory=lambda: YGrid(0))

    def __post_init__(self):
        if self.x_max < 2.0:
            raise ValidationError("x_max >= 2 required so the cutoff region is resolved")
        if self.n_x < 8:
            raise ValidationError("n_x >= 8 required")

    @property
    def s_step(self) -> float:
        return 1.0 / self.n_x

    @property
    def s_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x + 1)

    @property
    def x_nodes(self) -> np.ndarray:
        s = self.s_nodes
        return self.x_max * np.expm1(self.kappa * s) / np.expm1(self.kappa)

    @property
    def dx_ds(self) -> np.ndarray:
        s = self.s_nodes
        return self.x_max * self.kappa * np.exp(self.kappa * s) / np.expm1(self.kappa)

    @property
    def degeneracy(self) -> np.ndarray:
        """c(s) = x(s)/x'(s); the factor turning d/ds into x d/dx (c(0) = 0)."""
        return self.x_nodes / self.dx_ds

    @property
    def x_weights(self) -> np.ndarray:
        """Trapezoid weights in x on the graded nodes."""
        x = self.x_nodes
        w = np.zeros_like(x)
        w[:-1] += 0.5 * np.diff(x)
        w[1:] += 0.5 * np.diff(x)
        return w

    def refined(self, factor: int = 2) -> "SpaceGrid":
        ny = self.ygrid.n_points * factor if self.ygrid.d == 1 else 1
        return SpaceGrid(self.n_x * factor, self.x_max, self.kappa, YGrid(self.ygrid.d, ny))

    def window_indices(self, x_a: float, x_b: float) -> np.ndarray:
        x = self.x_nodes
        return np.nonzero((x >= x_a) & (x <= x_b))[0]
