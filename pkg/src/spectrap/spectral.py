"""1D trap Hamiltonians on a uniform grid: bound-state solver, classical
spectrum-to-potential inversion, and iterative synthesis of a potential
realizing a prescribed spectrum.

Units: hbar = m = 1, energies in U0, lengths in a = hbar/sqrt(m*U0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.linalg import cholesky, cho_solve, eigh_tridiagonal, solveh_banded

from .numtheory import Spectrum


class ResolutionError(RuntimeError):
    """Grid too coarse: fewer bound states found than the Weyl estimate."""


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid of M midpoints on (-L, L), dx = 2L/M."""

    half_width: float
    points: int

    def __post_init__(self):
        if self.points < 2 or self.points % 2 != 0:
            raise ValueError("points must be an even integer >= 2")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def x(self) -> np.ndarray:
        # staggered so that x[M-1-i] = -x[i]; no sample sits exactly at 0
        return (np.arange(self.points) - (self.points - 1) / 2.0) * self.dx


@dataclass
class Potential:
    """Sampled potential with a continuum threshold, all in units of U0."""

    grid: Grid
    values: np.ndarray
    threshold: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.points,):
            raise ValueError("values must match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("potential values must be finite")

    def to_json(self) -> str:
        return json.dumps(
            {
                "grid": {"half_width": self.grid.half_width, "points": self.grid.points},
                "threshold": self.threshold,
                "values": self.values.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        data = json.loads(text)
        grid = Grid(data["grid"]["half_width"], data["grid"]["points"])
        return cls(grid, np.asarray(data["values"]), data["threshold"])


@dataclass
class EigenBasis:
    """Bound eigenpairs of a discretized trap, energies ascending.

    states[i] is the i-th wavefunction sampled on the grid, normalized so
    that sum(psi**2) * dx = 1. labels[i] is the sequence index behind the
    level when the basis came from a synthesized spectrum (1-based).
    """

    grid: Grid
    energies: np.ndarray
    states: np.ndarray  # (count, M)
    threshold: float
    labels: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.energies)

    def index_of(self, label: int) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no bound state labelled {label}") from None

    def matrix_of(self, f_values: np.ndarray) -> np.ndarray:
        """Full matrix <i|f(x)|j> by grid quadrature."""
        weighted = self.states * (np.asarray(f_values) * self.grid.dx)
        return weighted @ self.states.T


def matrix_element(basis: EigenBasis, f_values: np.ndarray, n_row: int, n_col: int) -> float:
    """<n_row| f(x) |n_col> by grid quadrature."""
    if not (0 <= n_row < basis.count and 0 <= n_col < basis.count):
        raise IndexError("state index out of range")
    f = np.asarray(f_values, dtype=float)
    return float(np.sum(basis.states[n_row] * f * basis.states[n_col]) * basis.grid.dx)


def weyl_count(potential: Potential) -> float:
    """Semiclassical estimate of the number of bound states below threshold."""
    depth = np.clip(potential.threshold - potential.values, 0.0, None)
    return float(np.sum(np.sqrt(2.0 * depth)) * potential.grid.dx / math.pi)


def solve_bound_states(
    potential: Potential,
    labels: tuple[int, ...] | None = None,
    check_resolution: bool = True,
) -> EigenBasis:
    """All eigenpairs below the threshold of the three-point Hamiltonian."""
    grid = potential.grid
    dx = grid.dx
    diag = 1.0 / dx**2 + potential.values
    off = np.full(grid.points - 1, -0.5 / dx**2)
    lo = float(potential.values.min()) - 1.0
    w, v = eigh_tridiagonal(diag, off, select="v", select_range=(lo, potential.threshold))
    if len(w) == 0:
        raise ResolutionError("no bound states below threshold")
    if check_resolution:
        expected = weyl_count(potential)
        if len(w) < 0.9 * expected - 2.0:
            raise ResolutionError(
                f"found {len(w)} bound states but the Weyl estimate is {expected:.1f}; "
                "the grid is too coarse"
            )
    psi = (v / math.sqrt(dx)).T
    # deterministic sign convention
    peak = np.argmax(np.abs(psi), axis=1)
    signs = np.sign(psi[np.arange(len(w)), peak])
    psi *= signs[:, None]
    if labels is None:
        labels = tuple(range(1, len(w) + 1))
    else:
        labels = tuple(labels)[: len(w)]
        if len(labels) < len(w):
            start = max(labels) + 1 if labels else 1
            labels = labels + tuple(range(start, start + len(w) - len(labels)))
    return EigenBasis(grid, w, psi, potential.threshold, labels)


def guard_threshold(energies) -> float:
    """Continuum edge for a synthesized spectrum: top level plus half a gap."""
    e = np.asarray(energies, dtype=float)
    if len(e) == 1:
        return float(e[0] + 0.5 * max(abs(e[0]), 1.0))
    return float(e[-1] + 0.5 * (e[-1] - e[-2]))


class ClassicalProfile:
    """Abel inversion of a discrete spectrum into an even classical potential.

    The level staircase nu(E) (nu(E_n) = n) is represented in log space,
    w(E) = ln nu(E), splined through the data and continued linearly outside
    it. The exponential continuation below the lowest level decays to zero
    carrying exactly the remaining count nu(E_1), so the inversion

        x(U) = 2**-0.5 * integral nu'(E) / sqrt(U - E) dE

    is exact (up to quadrature) for logarithmic spectra and remains
    well-behaved for power-law ones.
    """

    def __init__(self, energies, n_u: int = 800, quad_nodes: int = 256):
        e = np.asarray(energies, dtype=float)
        if len(e) < 2:
            raise ValueError("need at least two levels to invert")
        if np.any(np.diff(e) <= 0):
            raise ValueError("spectrum must be strictly increasing")
        self.energies = e
        w = np.log(np.arange(1, len(e) + 1, dtype=float))
        self._w_spline = CubicSpline(e, w)
        self._dw_spline = self._w_spline.derivative()
        self._e1, self._en = float(e[0]), float(e[-1])
        self._w1 = 0.0  # ln 1
        self._wn = float(w[-1])
        self._m1 = max(float(self._dw_spline(self._e1)), 1e-12)
        self._mn = max(float(self._dw_spline(self._en)), 1e-12)
        self.e_floor = self._e1 - 40.0 / self._m1

        self._nodes, self._weights = leggauss(quad_nodes)
        emax = guard_threshold(e) + 0.25 * (e[-1] - e[0]) / len(e)
        u_grid = np.linspace(self.e_floor + 1e-9, emax, n_u)
        x_grid = self._x_of_u(u_grid)
        keep = np.zeros(len(x_grid), dtype=bool)
        last = -np.inf
        for i, xv in enumerate(x_grid):
            if xv > last * (1 + 1e-12) + 1e-300:
                keep[i] = True
                last = xv
        self._u_grid = u_grid[keep]
        self._x_grid = x_grid[keep]
        self._u_of_x = PchipInterpolator(self._x_grid, self._u_grid)

    def _density(self, e):
        """nu'(E) = exp(w(E)) * w'(E), linearly continued in w outside data."""
        e = np.asarray(e, dtype=float)
        w = np.empty_like(e)
        dw = np.empty_like(e)
        below = e < self._e1
        above = e > self._en
        inside = ~(below | above)
        w[inside] = self._w_spline(e[inside])
        dw[inside] = self._dw_spline(e[inside])
        w[below] = self._w1 + self._m1 * (e[below] - self._e1)
        dw[below] = self._m1
        w[above] = self._wn + self._mn * (e[above] - self._en)
        dw[above] = self._mn
        return np.exp(w) * np.clip(dw, 0.0, None)

    def _x_of_u(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        smax = np.sqrt(np.clip(u - self.e_floor, 0.0, None))
        # E = U - s^2 removes the inverse-sqrt singularity
        s = 0.5 * smax[:, None] * (self._nodes[None, :] + 1.0)
        dens = self._density(u[:, None] - s**2)
        integral = 0.5 * smax * np.sum(self._weights[None, :] * dens, axis=1)
        return math.sqrt(2.0) * integral

    def x_of_energy(self, u) -> np.ndarray:
        """Positive turning point x(U)."""
        return np.interp(np.asarray(u, dtype=float), self._u_grid, self._x_grid)

    def energy_of_x(self, x) -> np.ndarray:
        """Even potential profile U(|x|), clamped to the sampled range."""
        ax = np.abs(np.asarray(x, dtype=float))
        ax = np.clip(ax, self._x_grid[0], self._x_grid[-1])
        return self._u_of_x(ax)

    @property
    def x_max(self) -> float:
        return float(self._x_grid[-1])


def classical_inverse(spectrum: Spectrum, grid: Grid | None = None) -> Potential:
    """Even potential whose classical frequencies reproduce the spectrum."""
    profile = ClassicalProfile(spectrum.energies)
    threshold = guard_threshold(spectrum.energies)
    if grid is None:
        grid = default_grid(spectrum)
    values = np.minimum(profile.energy_of_x(grid.x), threshold)
    return Potential(grid, values, threshold)


def default_grid(
    spectrum: Spectrum,
    margin: float = 1.5,
    points_per_wavelength: float = 10.0,
    max_points: int = 16384,
) -> Grid:
    """Grid sized from the classical turning point and de Broglie wavelength."""
    profile = ClassicalProfile(spectrum.energies)
    threshold = guard_threshold(spectrum.energies)
    e = np.asarray(spectrum.energies)
    half_width = margin * float(profile.x_of_energy(threshold))
    floor = max(profile.e_floor, float(e[0]) - 3.0)
    p_max = math.sqrt(2.0 * (threshold - floor))
    dx_target = 2.0 * math.pi / p_max / points_per_wavelength
    points = 2 ** math.ceil(math.log2(2.0 * half_width / dx_target))
    points = max(points, 512)
    if points > max_points:
        raise ValueError(
            f"grid would need {points} points (> {max_points}); enlarge max_points"
        )
    return Grid(half_width, points)


@dataclass(frozen=True)
class SynthesisOptions:
    tolerance: float = 1e-3  # max |E_n - E_n^target|, units U0
    max_iters: int = 60
    smoothness: float = 1.0  # weight on the second difference of the update
    ridge: float = 1e-6
    floor_depth: float = 4.0  # clip of the initial guess below E_1


@dataclass(frozen=True)
class SynthesisReport:
    iterations: int
    final_residual: float
    converged: bool
    residual_history: tuple[float, ...] = field(default=(), repr=False)


def _second_difference_R(n_half: int, smoothness: float, ridge: float) -> np.ndarray:
    """Banded (lower) form of smoothness * S^T S + ridge * I on the half grid.

    S is the second difference, with a mirror row at the x -> -x boundary so
    the update stays smooth across the center of the even potential.
    """
    from scipy import sparse

    rows = sparse.diags(
        [np.ones(n_half - 2), -2.0 * np.ones(n_half - 1), np.ones(n_half)],
        offsets=[-1, 0, 1],
        shape=(n_half - 1, n_half),
    ).tolil()
    rows[0, 0] = -1.0  # curvature across the mirrored center: u[1] - u[0]
    rows[0, 1] = 1.0
    s = rows.tocsr()
    sts = (s.T @ s).todia()
    banded = np.zeros((3, n_half))
    for offset, data in zip(sts.offsets, sts.data):
        if offset == 0:
            banded[0] = smoothness * data + ridge
        elif offset == -1:
            banded[1, : n_half - 1] = smoothness * data[: n_half - 1]
        elif offset == -2:
            banded[2, : n_half - 2] = smoothness * data[: n_half - 2]
    return banded


def synthesize_potential(
    target: Spectrum,
    grid: Grid | None = None,
    opts: SynthesisOptions = SynthesisOptions(),
) -> tuple[Potential, EigenBasis, SynthesisReport]:
    """Iteratively deform a classical initial guess until the lowest levels of
    the discretized Hamiltonian match the target spectrum.

    Each step solves the linearized problem with the Hellmann-Feynman
    sensitivity dE_n/dU(x_i) = |psi_n(x_i)|^2 dx, taking the minimum-norm
    update in a smoothness metric (second differences) with Levenberg
    damping. The returned potential is even in x and plateaus at the
    continuum threshold.
    """
    t = np.asarray(target.energies, dtype=float)
    n = len(t)
    threshold = guard_threshold(t)
    if grid is None:
        grid = default_grid(target)
    dx = grid.dx
    m = grid.points
    mh = m // 2

    profile = ClassicalProfile(t)
    init = np.minimum(profile.energy_of_x(grid.x), threshold)
    init = np.maximum(init, t[0] - opts.floor_depth)
    u_half = init[mh:].copy()  # x > 0 side; full potential is its mirror

    r_banded = _second_difference_R(mh, opts.smoothness, opts.ridge)
    diag_kin = 1.0 / dx**2
    off = np.full(m - 1, -0.5 / dx**2)

    def lowest_levels(u_full):
        w, v = eigh_tridiagonal(
            diag_kin + u_full, off, select="i", select_range=(0, n - 1)
        )
        return w, (v / math.sqrt(dx)).T

    def assemble(u_h):
        return np.concatenate((u_h[::-1], u_h))

    mu = 1e-3
    history = []
    u_full = assemble(u_half)
    energies, psi = lowest_levels(u_full)
    residual = t - energies
    best = float(np.max(np.abs(residual)))
    history.append(best)
    iterations = 0

    for iterations in range(1, opts.max_iters + 1):
        if best <= opts.tolerance * 0.5:
            break
        # J[n, j] = dE_n / dU_half[j] on the mirrored pair of grid points
        dens = psi**2 * dx
        j_half = dens[:, mh:] + dens[:, mh - 1 :: -1]
        # minimum-R-norm Gauss-Newton step: delta = R^-1 J^T (J R^-1 J^T + mu I)^-1 r
        rinv_jt = solveh_banded(r_banded, j_half.T, lower=True)
        core = j_half @ rinv_jt
        scale = np.trace(core) / n
        stepped = False
        for _ in range(8):
            try:
                c = cholesky(core + mu * scale * np.eye(n), lower=True)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            delta = rinv_jt @ cho_solve((c, True), residual)
            u_try = u_half + delta
            w_try, psi_try = lowest_levels(assemble(u_try))
            r_try = t - w_try
            worst = float(np.max(np.abs(r_try)))
            if worst < best:
                u_half, energies, psi = u_try, w_try, psi_try
                residual, best = r_try, worst
                mu = max(mu * 0.3, 1e-8)
                stepped = True
                break
            mu *= 10.0
        history.append(best)
        if not stepped:
            break

    potential = Potential(grid, assemble(u_half), threshold)
    basis = solve_bound_states(potential, labels=target.labels, check_resolution=False)
    if basis.count < n:
        final = float("inf")
    else:
        final = float(np.max(np.abs(basis.energies[:n] - t)))
    report = SynthesisReport(
        iterations=iterations,
        final_residual=final,
        converged=final <= opts.tolerance,
        residual_history=tuple(history),
    )
    return potential, basis, report
