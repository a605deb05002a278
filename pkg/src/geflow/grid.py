"""Periodic grids, Wirtinger derivatives and deterministic quadrature.

Conventions used everywhere in the package:

* A point of the total space has complex coordinates ``(z^1 .. z^m, v)``
  with ``m`` base coordinates and one fiber coordinate.  Complex coordinate
  ``j`` occupies the pair of real grid axes ``(2j, 2j+1)`` storing its real
  and imaginary part, base coordinates first, fiber last.
* Every real axis is 2*pi-periodic.  Torus axes carry ``N`` uniform nodes
  ``x_k = k*h``.  A projective fiber is sampled on the uniform double cover
  of the sphere, ``w = tan(theta/2) * exp(i*sigma)`` with staggered theta
  nodes ``theta_j = (j + 1/2) * h_theta`` (no node hits the poles or the
  chart equator) and plain sigma nodes.
* Wirtinger operators are ``d/dz = (d/dx - i d/dy)/2`` and
  ``d/dzbar = (d/dx + i d/dy)/2``; the default realization is the 4th-order
  central stencil, optionally replaced by FFT differentiation.
* Form coefficients are always taken with respect to products of
  ``i dzeta^a wedge dzetabar^a``; the matching quadrature weight per complex
  pair is ``2 * h_x * h_y`` on a torus axis pair and the pulled-back area
  element of ``i dw wedge dwbar`` on a projective fiber.

All reductions go through :func:`tree_sum`, a fixed-order pairwise tree, so
results are identical run to run and independent of any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

PERIOD = 2.0 * np.pi

TORUS = "torus"
PROJECTIVE = "projective"

STENCIL4 = "stencil4"
SPECTRAL = "spectral"


@lru_cache(maxsize=8)
def _abs_sin_weight_tuple(n: int, stagger: float) -> tuple[float, ...]:
    theta = (np.arange(n) + stagger) * (PERIOD / n)
    # Fourier series |sin t| = 2/pi - (4/pi) sum_{m>=1} cos(2mt)/(4m^2-1);
    # the node weight is the exact integral of the cardinal interpolant.
    w = np.full(n, 2.0 * PERIOD / (np.pi * n))
    for m in range(1, (n // 2 - 1) // 2 + 1):
        coeff = -(4.0 / np.pi) / (4.0 * m * m - 1.0)
        w += coeff * np.cos(2.0 * m * theta) * (PERIOD / n)
    return tuple(w)


def _abs_sin_weights(n: int) -> np.ndarray:
    return np.asarray(_abs_sin_weight_tuple(n, 0.5))


def tree_sum(values: np.ndarray) -> complex | float:
    """Sum a flattened array by fixed-order pairwise reduction."""
    buf = np.ravel(values)
    n = buf.size
    if n == 0:
        return 0.0
    buf = buf.copy()
    while n > 1:
        half = n // 2
        buf[:half] = buf[:half] + buf[half : 2 * half]
        if n % 2:
            buf[half] = buf[2 * half]
            n = half + 1
        else:
            n = half
    return buf[0].item()


@dataclass(frozen=True)
class GridSpec:
    """Discrete model of the fibration's coordinate chart.

    ``base_dim`` is m (1 or 2), ``fiber_dim`` is fixed at 1.  ``points``
    is the node count per torus axis; ``fiber_points = (n_theta, n_sigma)``
    only matters for projective fibers.
    """

    base_dim: int
    fiber_dim: int = 1
    points: int = 16
    fiber_kind: str = TORUS
    fiber_points: tuple[int, int] = (32, 32)
    derivative: str = STENCIL4

    def __post_init__(self):
        if self.base_dim not in (1, 2):
            raise ConfigurationError(f"base_dim must be 1 or 2, got {self.base_dim}")
        if self.fiber_dim != 1:
            raise ConfigurationError("only fiber_dim = 1 is supported")
        if self.points % 2 or self.points < 8:
            raise ConfigurationError(
                f"points per axis must be even and >= 8, got {self.points}"
            )
        if 2 * (self.base_dim + self.fiber_dim) > 6:
            raise ConfigurationError("total real dimension exceeds 6")
        if self.fiber_kind not in (TORUS, PROJECTIVE):
            raise ConfigurationError(f"unknown fiber kind {self.fiber_kind!r}")
        if self.derivative not in (STENCIL4, SPECTRAL):
            raise ConfigurationError(f"unknown derivative mode {self.derivative!r}")
        if self.fiber_kind == PROJECTIVE:
            nt, ns = self.fiber_points
            if nt % 2 or nt < 8 or ns % 2 or ns < 8:
                raise ConfigurationError(
                    "projective fiber_points must be even and >= 8"
                )
        if self.base_dim == 2 and self.points > 12:
            raise ConfigurationError("base_dim = 2 scenarios are capped at 12 points/axis")

    # -- shapes ---------------------------------------------------------

    @property
    def n_coords(self) -> int:
        return self.base_dim + self.fiber_dim

    @property
    def base_shape(self) -> tuple[int, ...]:
        return (self.points,) * (2 * self.base_dim)

    @property
    def fiber_shape(self) -> tuple[int, ...]:
        if self.fiber_kind == TORUS:
            return (self.points, self.points)
        return tuple(self.fiber_points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.base_shape + self.fiber_shape

    @property
    def fiber_axes(self) -> tuple[int, int]:
        nb = 2 * self.base_dim
        return (nb, nb + 1)

    def coord_axes(self, coord: int) -> tuple[int, int]:
        """Real axis pair (re, im) of complex coordinate ``coord``."""
        if not 0 <= coord < self.n_coords:
            raise ConfigurationError(f"coordinate index {coord} out of range")
        return (2 * coord, 2 * coord + 1)

    def spacing(self, axis: int) -> float:
        if self.fiber_kind == PROJECTIVE and axis >= 2 * self.base_dim:
            nt, ns = self.fiber_points
            return PERIOD / (nt if axis == 2 * self.base_dim else ns)
        return PERIOD / self.points

    def axis_values(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        h = self.spacing(axis)
        vals = h * np.arange(n)
        if self.fiber_kind == PROJECTIVE and axis == 2 * self.base_dim:
            vals = vals + 0.5 * h  # staggered theta, keeps poles off-grid
        return vals

    def mesh(self, axis: int) -> np.ndarray:
        """Axis values broadcast to the full grid shape."""
        vals = self.axis_values(axis)
        shape = [1] * len(self.shape)
        shape[axis] = vals.size
        return vals.reshape(shape)

    # -- projective chart helpers ---------------------------------------

    def fiber_tan(self) -> np.ndarray:
        """tan(theta/2) over the fiber shape (projective only), signed."""
        if self.fiber_kind != PROJECTIVE:
            raise ConfigurationError("fiber_tan is only defined on projective fibers")
        theta = self.axis_values(self.fiber_axes[0])
        return np.tan(0.5 * theta)[:, None] * np.ones((1, self.fiber_points[1]))

    def fiber_w(self) -> np.ndarray:
        """Affine fiber coordinate w over the fiber shape."""
        if self.fiber_kind == PROJECTIVE:
            theta = self.axis_values(self.fiber_axes[0])[:, None]
            sigma = self.axis_values(self.fiber_axes[1])[None, :]
            return np.tan(0.5 * theta) * np.exp(1j * sigma)
        x = self.axis_values(self.fiber_axes[0])[:, None]
        y = self.axis_values(self.fiber_axes[1])[None, :]
        return x + 1j * y

    def antipode(self, fiber_field: np.ndarray) -> np.ndarray:
        """Pull a fiber-shaped array back along the double-cover involution.

        The sphere's double cover identifies (theta, sigma) with
        (2*pi - theta, sigma + pi); single-valued fields are fixed points.
        """
        if self.fiber_kind != PROJECTIVE:
            raise ConfigurationError("antipode only applies to projective fibers")
        ns = self.fiber_points[1]
        out = fiber_field[..., ::-1, :]
        return np.roll(out, ns // 2, axis=-1)

    # -- quadrature weights ---------------------------------------------

    @property
    def base_weight(self) -> float:
        """Scalar weight realizing the product of i dz^a wedge dzbar^a."""
        h = PERIOD / self.points
        return (2.0 * h * h) ** self.base_dim

    def fiber_weights(self) -> np.ndarray:
        """Per-node weight realizing i dv wedge dvbar over the fiber.

        On the projective fiber the pulled-back area element is
        (1+|w|^2)^2 * |sin(theta)|/2 dtheta dsigma.  The |sin| factor has a
        kink at the chart equator, so plain trapezoid weights in theta would
        drop to second order; instead theta carries the exact integrals of
        |sin(theta)| against the trigonometric cardinal functions, which
        keeps the quadrature spectrally accurate for smooth forms.
        """
        if self.fiber_kind == TORUS:
            h = PERIOD / self.points
            return np.full(self.fiber_shape, 2.0 * h * h)
        nt, ns = self.fiber_points
        hs = PERIOD / ns
        theta = self.axis_values(self.fiber_axes[0])
        w_theta = _abs_sin_weights(nt)
        t = np.tan(0.5 * theta)
        # pullback |sin theta|/2, another 1/2 folds the double cover
        w = 0.25 * w_theta * hs * (1.0 + t * t) ** 2
        return np.repeat(w[:, None], ns, axis=1)

    # -- reductions -------------------------------------------------------

    def integrate_fiber(self, values: np.ndarray) -> np.ndarray:
        """Fiberwise integral against i dv wedge dvbar; returns a base field.

        The fiber always occupies the two trailing axes, so the input may
        carry arbitrary leading (matrix) dimensions.
        """
        prod = values * self.fiber_weights()
        # Deterministic: numpy's pairwise sum over fixed trailing axes.
        return prod.sum(axis=(-2, -1))

    def integrate_base(self, base_values: np.ndarray) -> float | complex:
        return tree_sum(base_values) * self.base_weight

    def integrate_total(self, values: np.ndarray) -> float | complex:
        return self.integrate_base(self.integrate_fiber(values))

    # -- differentiation --------------------------------------------------

    def _axis_derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        h = self.spacing(axis)
        if self.derivative == SPECTRAL:
            n = f.shape[axis]
            k = np.fft.fftfreq(n, d=1.0 / n)
            k[n // 2] = 0.0  # drop the unpaired Nyquist mode
            shape = [1] * f.ndim
            shape[axis] = n
            fac = (1j * k * (PERIOD / (n * h))).reshape(shape)
            return np.fft.ifft(np.fft.fft(f, axis=axis) * fac, axis=axis)
        up1 = np.roll(f, -1, axis=axis)
        dn1 = np.roll(f, 1, axis=axis)
        up2 = np.roll(f, -2, axis=axis)
        dn2 = np.roll(f, 2, axis=axis)
        return (8.0 * (up1 - dn1) - (up2 - dn2)) / (12.0 * h)

    def _wirtinger_torus(self, f, coord, kind):
        ax_re, ax_im = self.coord_axes(coord)
        dx = self._axis_derivative(f, ax_re)
        dy = self._axis_derivative(f, ax_im)
        if kind == "d":
            return 0.5 * (dx - 1j * dy)
        return 0.5 * (dx + 1j * dy)

    def _wirtinger_sphere(self, f, kind):
        ax_t, ax_s = self.fiber_axes
        ft = self._axis_derivative(f, ax_t)
        fs = self._axis_derivative(f, ax_s)
        theta = self.mesh(ax_t)
        sigma = self.mesh(ax_s)
        t = np.tan(0.5 * theta)
        # dw = e^{i sigma}[(1+t^2)/2 dtheta + i t dsigma] inverted for d/dw.
        radial = ft / (1.0 + t * t)
        angular = fs / (2.0 * t)
        if kind == "d":
            return np.exp(-1j * sigma) * (radial - 1j * angular)
        return np.exp(1j * sigma) * (radial + 1j * angular)

    def d_dz(self, f: np.ndarray, coord: int) -> np.ndarray:
        """Holomorphic Wirtinger derivative along complex coordinate ``coord``."""
        if self.fiber_kind == PROJECTIVE and coord == self.base_dim:
            return self._wirtinger_sphere(f, "d")
        return self._wirtinger_torus(f, coord, "d")

    def d_dzbar(self, f: np.ndarray, coord: int) -> np.ndarray:
        """Antiholomorphic Wirtinger derivative along ``coord``."""
        if self.fiber_kind == PROJECTIVE and coord == self.base_dim:
            return self._wirtinger_sphere(f, "dbar")
        return self._wirtinger_torus(f, coord, "dbar")

    def d_dz_dzbar(self, f: np.ndarray, coord_a: int, coord_b: int) -> np.ndarray:
        """Mixed second derivative d^2 f / dz^a dzbar^b."""
        return self.d_dz(self.d_dzbar(f, coord_b), coord_a)


def wirtinger_derivative(grid: GridSpec, f: np.ndarray, coord: int, kind: str) -> np.ndarray:
    """Functional entry point; ``kind`` is 'd' (holomorphic) or 'dbar'."""
    if kind not in ("d", "dbar"):
        raise ConfigurationError(f"kind must be 'd' or 'dbar', got {kind!r}")
    if f.shape != grid.shape:
        raise ConfigurationError(
            f"field shape {f.shape} does not match grid shape {grid.shape}"
        )
    if kind == "d":
        return grid.d_dz(f, coord)
    return grid.d_dzbar(f, coord)
