"""Numerical machinery for the corrector system.

Everything lives in log-price coordinates z = ln x, where the pricing
operator becomes

    L = d_t + (mu - vbar(t)^2/2) d_z + (vbar(t)^2/2) d_zz.

``apply_L`` evaluates this operator with finite differences, ``solve_backward``
marches terminal-value problems L M = source backward with Crank-Nicolson
(two fully implicit half-steps first, damping terminal kinks), and
``duhamel_heat_solve`` integrates the constant-coefficient reduction
``d_zeta u - (1/2) d_zz u = source`` with the Gaussian kernel, using exact
kernel moments against a piecewise-linear source.  ``triangular_heat_solve``
is an alternative double-integral form kept only for comparison output; it
does not satisfy the heat equation and must never feed the correctors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from .errors import DomainError, PdeSolverError
from .processes import TimeGrid

__all__ = [
    "SpaceTimeGrid",
    "Surface",
    "ParabolicProblem",
    "TransformConstants",
    "apply_L",
    "solve_backward",
    "duhamel_heat_solve",
    "triangular_heat_solve",
    "transform_constants",
]


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid in z = ln x crossed with a uniform time grid on [0, T]."""

    z_min: float
    z_max: float
    n_z: int
    t_grid: TimeGrid

    def __post_init__(self):
        if self.n_z < 16:
            raise DomainError(f"n_z must be >= 16, got {self.n_z}")
        if self.z_max <= self.z_min:
            raise DomainError("z_max must exceed z_min")

    @classmethod
    def make(cls, z_min: float, z_max: float, n_z: int, horizon: float, n_t: int):
        if n_t < 2:
            raise DomainError("need at least two time levels")
        return cls(z_min, z_max, n_z, TimeGrid(0.0, horizon / (n_t - 1), n_t))

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.n_z)

    @property
    def t(self) -> np.ndarray:
        return self.t_grid.points

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.n_z - 1)

    @property
    def dt(self) -> float:
        return self.t_grid.step

    @property
    def horizon(self) -> float:
        return self.t_grid.end


class Surface:
    """Field tabulated on a SpaceTimeGrid, cubic in z and linear in t
    between nodes.  ``values`` has shape (time levels, z nodes)."""

    def __init__(self, grid: SpaceTimeGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.t_grid.count, grid.n_z):
            raise DomainError(
                f"surface shape {values.shape} does not match grid "
                f"({grid.t_grid.count}, {grid.n_z})"
            )
        self.grid = grid
        self.values = values
        self._splines: dict = {}

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "Surface":
        return cls(grid, np.zeros((grid.t_grid.count, grid.n_z)))

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn: Callable) -> "Surface":
        t = grid.t[:, None]
        z = grid.z[None, :]
        return cls(grid, np.broadcast_to(fn(t, z), (grid.t_grid.count, grid.n_z)).copy())

    def _row_spline(self, i: int) -> CubicSpline:
        sp = self._splines.get(i)
        if sp is None:
            sp = CubicSpline(self.grid.z, self.values[i])
            self._splines[i] = sp
        return sp

    def at(self, t: float, z):
        """Evaluate at (t, z); z may be an array.  Raises outside the grid.

        At the final time level the row is interpolated linearly in price
        coordinates: terminal data may carry a kink, where a spline would
        oscillate, and payoff rows are piecewise linear in x.
        """
        g = self.grid
        eps_t = 1e-9 * max(g.horizon, 1.0)
        if t < -eps_t or t > g.horizon + eps_t:
            raise DomainError(f"time {t} outside [0, {g.horizon}]")
        z_arr = np.asarray(z, dtype=float)
        eps_z = 1e-9 * (g.z_max - g.z_min)
        if np.any(z_arr < g.z_min - eps_z) or np.any(z_arr > g.z_max + eps_z):
            raise DomainError(f"z outside [{g.z_min}, {g.z_max}]")
        pos = min(max(t, 0.0), g.horizon) / g.dt
        if pos >= g.t_grid.count - 1 - 1e-12:
            out = np.interp(np.exp(z_arr), np.exp(g.z), self.values[-1])
            return float(out) if np.ndim(z) == 0 else out
        i0 = min(int(math.floor(pos)), g.t_grid.count - 2)
        w = pos - i0
        lo = self._row_spline(i0)(z_arr)
        hi = self._row_spline(i0 + 1)(z_arr)
        out = (1.0 - w) * lo + w * hi
        return float(out) if np.ndim(z) == 0 else out


@dataclass
class ParabolicProblem:
    """Backward problem L M = source with terminal data at t = horizon."""

    mu: float
    vbar: Callable
    source: Optional[Surface]
    terminal: np.ndarray


@dataclass(frozen=True)
class TransformConstants:
    """Exponents of the substitution M = u * exp(alpha_exp * tau + beta_exp * z)
    that reduces the constant-coefficient operator to the pure heat form."""

    alpha_exp: float
    beta_exp: float


def transform_constants(mu: float, vbar_const: float) -> TransformConstants:
    """Tilt exponents removing the first- and zeroth-order z-terms.

    With drift coefficient c = mu - vbar^2/2 the z-tilt must cancel c, giving
    ``beta_exp = 1/2 - mu / vbar^2`` (zero at the log-drift cancellation point
    mu = vbar^2/2, where no tilt is needed), and then
    ``alpha_exp = beta_exp * (mu/2 - vbar^2/4)``.  At mu = 0 these reduce to
    1/2 and -vbar^2/8.
    """
    if vbar_const <= 0.0:
        raise DomainError("vbar_const must be positive")
    v2 = vbar_const * vbar_const
    beta = 0.5 - mu / v2
    alpha = beta * (0.5 * mu - 0.25 * v2)
    return TransformConstants(alpha_exp=alpha, beta_exp=beta)


# ---------------------------------------------------------------------------
# discrete operator


def _d_dt(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return out


def _d_dz(values: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(values)
    out[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (2.0 * dz)
    out[:, 0] = (-3.0 * values[:, 0] + 4.0 * values[:, 1] - values[:, 2]) / (2.0 * dz)
    out[:, -1] = (3.0 * values[:, -1] - 4.0 * values[:, -2] + values[:, -3]) / (2.0 * dz)
    return out


def _d_dzz(values: np.ndarray, dz: float) -> np.ndarray:
    out = np.empty_like(values)
    out[:, 1:-1] = (values[:, 2:] - 2.0 * values[:, 1:-1] + values[:, :-2]) / (dz * dz)
    out[:, 0] = (values[:, 0] - 2.0 * values[:, 1] + values[:, 2]) / (dz * dz)
    out[:, -1] = (values[:, -1] - 2.0 * values[:, -2] + values[:, -3]) / (dz * dz)
    return out


def apply_L(surface: Surface, mu: float, vbar: Callable) -> Surface:
    """Evaluate the pricing operator on a tabulated field.

    Central differences inside, second-order one-sided stencils on the time
    and space boundaries.  In z-coordinates ``x d_x`` is ``d_z`` and
    ``x^2 d_xx`` is ``d_zz - d_z``.
    """
    g = surface.grid
    if g.t_grid.count < 3:
        raise DomainError("apply_L needs at least three time levels")
    vals = surface.values
    v2 = np.asarray(vbar(g.t), dtype=float) ** 2
    drift = (mu - 0.5 * v2)[:, None]
    diff = (0.5 * v2)[:, None]
    res = _d_dt(vals, g.dt) + drift * _d_dz(vals, g.dz) + diff * _d_dzz(vals, g.dz)
    return Surface(g, res)


# ---------------------------------------------------------------------------
# backward Crank-Nicolson solver


def _operator_diagonals(mu: float, v2: float, dz: float, n: int):
    diffusion = 0.5 * v2
    drift = mu - 0.5 * v2
    lo = diffusion / dz ** 2 - drift / (2.0 * dz)
    di = -2.0 * diffusion / dz ** 2
    up = diffusion / dz ** 2 + drift / (2.0 * dz)
    return lo, di, up


def _apply_operator(m: np.ndarray, lo: float, di: float, up: float) -> np.ndarray:
    """Operator applied at every node, closing the ends with ghost values
    from the vanishing second z-difference at the boundary nodes."""
    out = np.empty_like(m)
    out[1:-1] = lo * m[:-2] + di * m[1:-1] + up * m[2:]
    out[0] = (di + 2.0 * lo) * m[0] + (up - lo) * m[1]
    out[-1] = (lo - up) * m[-2] + (di + 2.0 * up) * m[-1]
    return out


def _implicit_step(n, coef, lo, di, up, rhs, time_index):
    """Solve (I - coef*A) m_new = rhs at all nodes, the operator closed at
    both ends by the ghost-node elimination of _apply_operator."""
    diag = np.full(n, 1.0 - coef * di)
    lower = np.full(n, -coef * lo)
    upper = np.full(n, -coef * up)
    diag[0] = 1.0 - coef * (di + 2.0 * lo)
    upper[0] = -coef * (up - lo)
    diag[-1] = 1.0 - coef * (di + 2.0 * up)
    lower[-1] = -coef * (lo - up)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        m_new = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise PdeSolverError(str(exc), time_index=time_index) from exc
    if not np.all(np.isfinite(m_new)):
        raise PdeSolverError("nonfinite solve result", time_index=time_index)
    return m_new


def solve_backward(problem: ParabolicProblem, grid: SpaceTimeGrid) -> Surface:
    """March L M = source backward from the terminal data.

    Crank-Nicolson in time with the first interval split into two fully
    implicit half-steps (damps kinked terminal data); linearity-in-price
    boundaries (vanishing second z-difference) at both edges; second-order
    accurate in dz and dt on smooth problems.
    """
    n_t, n_z = grid.t_grid.count, grid.n_z
    terminal = np.asarray(problem.terminal, dtype=float)
    if terminal.shape != (n_z,):
        raise DomainError("terminal data shape does not match the z-grid")
    t = grid.t
    dt = grid.dt
    v2 = np.asarray(problem.vbar(t), dtype=float) ** 2

    if problem.source is None:
        src_at = lambda level_t: None
    else:
        src = problem.source
        src_at = lambda level_t: np.asarray(src.at(level_t, grid.z), dtype=float)

    out = np.empty((n_t, n_z))
    out[-1] = terminal

    # first interval: two implicit half-steps
    m = terminal
    half = 0.5 * dt
    for t_new in (t[-1] - half, t[-2]):
        v2_new = float(np.asarray(problem.vbar(t_new), dtype=float) ** 2)
        lo, di, up = _operator_diagonals(problem.mu, v2_new, grid.dz, n_z)
        s_new = src_at(t_new)
        rhs = m.copy()
        if s_new is not None:
            rhs -= half * s_new
        m = _implicit_step(n_z, half, lo, di, up, rhs, time_index=n_t - 2)
    out[-2] = m

    # remaining intervals: Crank-Nicolson
    for i in range(n_t - 3, -1, -1):
        lo_o, di_o, up_o = _operator_diagonals(problem.mu, v2[i + 1], grid.dz, n_z)
        lo_n, di_n, up_n = _operator_diagonals(problem.mu, v2[i], grid.dz, n_z)
        half_dt = 0.5 * dt
        rhs = m + half_dt * _apply_operator(m, lo_o, di_o, up_o)
        s_old = src_at(t[i + 1])
        s_new = src_at(t[i])
        if s_old is not None:
            rhs = rhs - half_dt * (s_old + s_new)
        m = _implicit_step(n_z, half_dt, lo_n, di_n, up_n, rhs, time_index=i)
        out[i] = m

    return Surface(grid, out)


# ---------------------------------------------------------------------------
# Duhamel solution of the constant-coefficient reduction


def _gaussian_hat_kernel(s: float, dz: float, radius: int) -> np.ndarray:
    """Exact integrals of the heat kernel G(s, .) against unit hat functions
    on a uniform grid; entry l corresponds to offset y = l*dz."""
    y = dz * np.arange(-radius, radius + 1, dtype=float)
    root = math.sqrt(s)

    def cdf(v):
        return ndtr(v / root)

    def dens(v):
        return np.exp(-0.5 * v * v / s) / (root * math.sqrt(2.0 * math.pi))

    a = cdf(y + dz) - cdf(y - dz)
    b = y * (2.0 * cdf(y) - cdf(y - dz) - cdf(y + dz))
    c = s * (2.0 * dens(y) - dens(y - dz) - dens(y + dz))
    return a - (b + c) / dz


def _pad_linear(row: np.ndarray, pad: int) -> np.ndarray:
    """Extend a sampled row by linear extrapolation on both sides."""
    left = row[0] + (row[0] - row[1]) * np.arange(pad, 0, -1)
    right = row[-1] + (row[-1] - row[-2]) * np.arange(1, pad + 1)
    return np.concatenate([left, row, right])


_GAUSS3_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS3_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def duhamel_heat_solve(source: Surface, zeta_end: Optional[float] = None) -> Surface:
    """Solve ``d_zeta u - (1/2) d_zz u = source`` with u(0, .) = 0.

    The time axis of ``source`` is interpreted as zeta.  The solution is the
    kernel convolution ``u(zeta, z) = int_0^zeta (G(zeta-m) * source(m))(z) dm``
    evaluated panel by panel: the spatial convolution uses exact Gaussian
    moments against the piecewise-linear source (with linear extrapolation
    beyond the table), and the zeta-integral uses 3-point Gauss per panel.
    """
    g = source.grid
    zeta = g.t
    if zeta_end is not None and abs(zeta[-1] - zeta_end) > 1e-9 * max(1.0, zeta_end):
        raise DomainError("zeta_end does not match the source grid extent")
    dz = g.dz
    n_t, n_z = g.t_grid.count, g.n_z
    out = np.zeros((n_t, n_z))

    max_radius = int(math.ceil(8.0 * math.sqrt(zeta[-1]) / dz)) + 2
    padded = np.array([_pad_linear(source.values[k], max_radius) for k in range(n_t)])

    for i in range(1, n_t):
        acc = np.zeros(n_z)
        for k in range(i):
            m_lo, m_hi = zeta[k], zeta[k + 1]
            mid, rad = 0.5 * (m_hi + m_lo), 0.5 * (m_hi - m_lo)
            for node, weight in zip(_GAUSS3_NODES, _GAUSS3_WEIGHTS):
                m = mid + rad * node
                s = zeta[i] - m
                frac = (m - m_lo) / (m_hi - m_lo)
                row = (1.0 - frac) * padded[k] + frac * padded[k + 1]
                radius = min(int(math.ceil(8.0 * math.sqrt(s) / dz)) + 2, max_radius)
                kernel = _gaussian_hat_kernel(s, dz, radius)
                start = max_radius - radius
                seg = row[start: start + n_z + 2 * radius]
                acc += (rad * weight) * np.convolve(seg, kernel, mode="valid")
        out[i] = acc
    return Surface(g, out)


def triangular_heat_solve(source: Surface, zeta_end: Optional[float] = None) -> Surface:
    """Double integral over the triangular region
    ``u(zeta, z) = int_0^zeta int_{z-(zeta-m)/2}^{z+(zeta-m)/2} source(m, n) dn dm``.

    Comparison output only: on source = 1 this yields zeta^2/2 where the
    Duhamel solution yields zeta, and its residual under the heat operator
    does not vanish.  Never feeds the correctors.
    """
    g = source.grid
    zeta = g.t
    if zeta_end is not None and abs(zeta[-1] - zeta_end) > 1e-9 * max(1.0, zeta_end):
        raise DomainError("zeta_end does not match the source grid extent")
    z = g.z
    n_t, n_z = g.t_grid.count, g.n_z
    dz = g.dz

    # cumulative z-integral per level, linearly extended beyond the table
    cum = np.concatenate(
        [np.zeros((n_t, 1)), np.cumsum(0.5 * (source.values[:, 1:] + source.values[:, :-1]) * dz, axis=1)],
        axis=1,
    )

    def band_integral(level: int, width):
        lo = z - 0.5 * width
        hi = z + 0.5 * width
        c = cum[level]
        s = source.values[level]

        def cum_at(pos):
            inside = np.clip(pos, z[0], z[-1])
            base = np.interp(inside, z, c)
            below = np.minimum(pos - z[0], 0.0)
            above = np.maximum(pos - z[-1], 0.0)
            return base + below * s[0] + above * s[-1]

        return cum_at(hi) - cum_at(lo)

    out = np.zeros((n_t, n_z))
    for i in range(1, n_t):
        rows = [band_integral(k, zeta[i] - zeta[k]) for k in range(i + 1)]
        out[i] = np.trapezoid(np.array(rows), x=zeta[: i + 1], axis=0)
    return Surface(g, out)
