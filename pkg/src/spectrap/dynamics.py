"""Time-dependent Schroedinger propagation under periodic drives, with the
Rabi, lineshape, and resonance-cascade protocols built on top.

Two interchangeable propagators are provided: a split-operator scheme on the
spatial grid (spectral kinetic step) and a Galerkin scheme in the bound
eigenbasis (exact exponentials of the drive matrix). Both are second-order
Strang compositions with the drive amplitude evaluated at step midpoints, so
a run is deterministic and exactly norm-conserving (absent an absorber).

A "window of silence" zeroes the drive for a stated interval while freezing
the drive phase: the phase accumulator pauses at the window start and resumes
there when the drive restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import curve_fit

from .numtheory import SequenceKind, SequenceSpec, Spectrum, target_spectrum
from .spectral import EigenBasis, Grid, Potential, matrix_element, synthesize_potential


class StabilityError(RuntimeError):
    """Timestep too coarse for the requested drive or norm drift detected."""


class DriveForm(str, Enum):
    LINEAR = "linear"  # beta * (x/a)
    QUADRATIC = "quadratic"  # beta * (x/a)^2
    PARAMETRIC = "parametric"  # beta * U(x)


class PropagationMode(str, Enum):
    GRID = "grid"
    EIGENBASIS = "eigenbasis"


class Verdict(str, Enum):
    LOCALIZED = "LOCALIZED"
    DESCENDED_TO_GROUND = "DESCENDED_TO_GROUND"
    STALLED_AT_HOLE = "STALLED_AT_HOLE"
    UNCLASSIFIED = "UNCLASSIFIED"


@dataclass(frozen=True)
class Drive:
    """Periodic perturbation descriptor.

    amplitude(t) = beta * cos(omega * tau(t)) outside windows of silence and
    zero inside them, where tau only advances while the drive is on. With a
    sampled envelope (piecewise-constant b values), amplitude(t) =
    beta * b(t) and no carrier is applied.
    """

    form: DriveForm
    beta: float
    omega: float = 0.0
    phase_freeze_windows: tuple[tuple[float, float], ...] = ()
    envelope: tuple[float, np.ndarray] | None = None  # (dt_env, values)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        ws = self.phase_freeze_windows
        if any(d <= 0 for _, d in ws):
            raise ValueError("window durations must be positive")
        starts = [s for s, _ in ws]
        if starts != sorted(starts):
            raise ValueError("windows must be time-ordered")
        if any(ws[i][0] + ws[i][1] > ws[i + 1][0] for i in range(len(ws) - 1)):
            raise ValueError("windows must not overlap")
        if self.envelope is not None and ws:
            raise ValueError("sampled envelopes cannot be combined with windows")

    def amplitude(self, t) -> np.ndarray:
        """Drive amplitude in units of U0 at times t (scalar or array)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.envelope is not None:
            dt_env, values = self.envelope
            idx = np.clip((t / dt_env).astype(int), 0, len(values) - 1)
            return self.beta * np.asarray(values)[idx]
        if not self.phase_freeze_windows:
            return self.beta * np.cos(self.omega * t)
        starts = np.array([s for s, _ in self.phase_freeze_windows])
        durations = np.array([d for _, d in self.phase_freeze_windows])
        cum = np.concatenate(([0.0], np.cumsum(durations)))
        idx = np.searchsorted(starts, t, side="right") - 1
        inside = (idx >= 0) & (t < starts[idx] + durations[idx])
        paused = np.where(idx >= 0, cum[np.maximum(idx, 0) + 1], 0.0)
        frozen = starts[idx] - cum[np.maximum(idx, 0)]
        tau = np.where(inside, frozen, t - paused)
        gate = np.where(inside, 0.0, 1.0)
        return self.beta * np.cos(self.omega * tau) * gate


def drive_profile(drive: Drive, potential: Potential) -> np.ndarray:
    """Spatial profile multiplying the drive amplitude."""
    if drive.form is DriveForm.LINEAR:
        return potential.grid.x
    if drive.form is DriveForm.QUADRATIC:
        return potential.grid.x**2
    return potential.values.copy()


@dataclass
class Trajectory:
    """Sampled observables along a propagation run."""

    times: np.ndarray
    populations: dict[int, np.ndarray]  # sequence label -> |<n|psi>|^2
    energy: np.ndarray  # <psi|H0|psi>
    norm: np.ndarray
    bound_total: np.ndarray
    mode: PropagationMode
    dt: float
    final_state: np.ndarray = field(repr=False, default=None)

    def population_sum(self, labels) -> np.ndarray:
        present = [l for l in labels if l in self.populations]
        if not present:
            return np.zeros_like(self.times)
        return np.sum([self.populations[l] for l in present], axis=0)


def _absorber_mask(grid: Grid, strength: float, fraction: float = 0.1) -> np.ndarray:
    x0 = (1.0 - fraction) * grid.half_width
    ramp = np.clip((np.abs(grid.x) - x0) / (grid.half_width - x0), 0.0, None)
    return strength * ramp**2


def propagate(
    potential: Potential,
    basis: EigenBasis,
    drive: Drive,
    psi0,
    t_final: float,
    dt: float,
    mode: PropagationMode = PropagationMode.EIGENBASIS,
    sample_stride: float = 0.5,
    tracked_labels=None,
    absorber_strength: float = 0.0,
    enforce_drive_resolution: bool = True,
) -> Trajectory:
    """Propagate psi0 for t_final under H0 + amplitude(t) * profile.

    psi0 may be a bound-state index (int) or an explicit state: expansion
    coefficients over the basis in EIGENBASIS mode, a grid wavefunction in
    GRID mode. Observables are sampled every sample_stride time units.
    """
    if drive.envelope is None and drive.omega > 0 and enforce_drive_resolution:
        dt_max = 2.0 * math.pi / (40.0 * drive.omega)
        if dt > dt_max * (1 + 1e-12):
            raise StabilityError(
                f"dt={dt} does not resolve the drive; need dt <= {dt_max:.4g}"
            )
    if drive.envelope is not None:
        # align steps with the piecewise-constant envelope edges
        dt_env = drive.envelope[0]
        dt = dt_env / math.ceil(dt_env / dt - 1e-12)

    n_steps = max(1, round(t_final / dt))
    t_mid = (np.arange(n_steps) + 0.5) * dt
    amps = drive.amplitude(t_mid)
    stride = max(1, round(sample_stride / dt))
    sample_at = np.arange(0, n_steps + 1, stride)
    if sample_at[-1] != n_steps:
        sample_at = np.append(sample_at, n_steps)

    if tracked_labels is None:
        tracked_labels = basis.labels
    tracked_idx = [basis.index_of(l) for l in tracked_labels]

    grid = potential.grid
    dx = grid.dx
    if mode is PropagationMode.EIGENBASIS:
        if isinstance(psi0, (int, np.integer)):
            c = np.zeros(basis.count, dtype=complex)
            c[psi0] = 1.0
        else:
            c = np.asarray(psi0, dtype=complex).copy()
        profile = drive_profile(drive, potential)
        v = basis.matrix_of(profile)
        lam, w = np.linalg.eigh(v)
        half = np.exp(-0.5j * dt * basis.energies)

        records = []
        samples = iter(sample_at)
        next_sample = next(samples)
        for step in range(n_steps + 1):
            if step == next_sample:
                pops = np.abs(c) ** 2
                records.append(
                    (step * dt, pops[tracked_idx], float(pops @ basis.energies),
                     float(pops.sum()), float(pops.sum()))
                )
                next_sample = next(samples, -1)
            if step == n_steps:
                break
            a = amps[step]
            c *= half
            c = w @ (np.exp(-1j * dt * a * lam) * (w.T @ c))
            c *= half
        final = c
    elif mode is PropagationMode.GRID:
        if isinstance(psi0, (int, np.integer)):
            psi = basis.states[psi0].astype(complex)
        else:
            psi = np.asarray(psi0, dtype=complex).copy()
        k = 2.0 * math.pi * np.fft.fftfreq(grid.points, dx)
        kin_phase = np.exp(-1j * dt * 0.5 * k**2)
        half_static = np.exp(-0.5j * dt * potential.values)
        if absorber_strength > 0:
            half_static = half_static * np.exp(-0.5 * dt * _absorber_mask(grid, absorber_strength))
        profile = drive_profile(drive, potential)
        proj = basis.states * dx  # row n = psi_n * dx for projections

        def observables(psi):
            coeffs = proj @ psi
            pops_all = np.abs(coeffs) ** 2
            tpsi = np.fft.ifft(0.5 * k**2 * np.fft.fft(psi))
            energy = float(np.real(np.vdot(psi, tpsi + potential.values * psi)) * dx)
            norm = float(np.real(np.vdot(psi, psi)) * dx)
            return pops_all, energy, norm

        records = []
        samples = iter(sample_at)
        next_sample = next(samples)
        for step in range(n_steps + 1):
            if step == next_sample:
                pops_all, energy, norm = observables(psi)
                records.append(
                    (step * dt, pops_all[tracked_idx], energy, norm, float(pops_all.sum()))
                )
                next_sample = next(samples, -1)
            if step == n_steps:
                break
            half = half_static * np.exp(-0.5j * dt * amps[step] * profile)
            psi = half * np.fft.ifft(kin_phase * np.fft.fft(half * psi))
        final = psi
    else:  # pragma: no cover
        raise ValueError(f"unknown mode {mode}")

    times = np.array([r[0] for r in records])
    pop_matrix = np.array([r[1] for r in records])
    traj = Trajectory(
        times=times,
        populations={l: pop_matrix[:, i] for i, l in enumerate(tracked_labels)},
        energy=np.array([r[2] for r in records]),
        norm=np.array([r[3] for r in records]),
        bound_total=np.array([r[4] for r in records]),
        mode=mode,
        dt=dt,
        final_state=final,
    )
    if (
        mode is PropagationMode.GRID
        and absorber_strength == 0.0
        and np.max(np.abs(traj.norm - traj.norm[0])) > 1e-4
    ):
        raise StabilityError("norm drift exceeded 1e-4; reduce dt or enlarge the box")
    return traj


def _transition_form(delta: int) -> DriveForm:
    return DriveForm.LINEAR if delta % 2 == 1 else DriveForm.QUADRATIC


@dataclass(frozen=True)
class RabiResult:
    trajectory: Trajectory
    peak_population: float
    t_peak: float
    rabi_frequency: float  # beta * |<i|f|j>|
    leakage: float  # max over time of bound population outside the pair


def rabi_experiment(
    potential: Potential,
    basis: EigenBasis,
    transition: tuple[int, int],
    beta: float,
    form: DriveForm | None = None,
    duration: float | None = None,
    dt: float | None = None,
    mode: PropagationMode = PropagationMode.EIGENBASIS,
) -> RabiResult:
    """Resonant transfer between two bound states (indices), driven at the
    level splitting. The drive parity is inferred from the index difference;
    passing a mismatched form raises.
    """
    i, j = transition
    delta = j - i
    required = _transition_form(delta)
    if form is None:
        form = required
    elif form is not required:
        raise ValueError(
            f"drive form {form.value} cannot couple states {i} and {j} of an even potential"
        )
    omega = float(basis.energies[j] - basis.energies[i])
    profile_values = potential.grid.x if form is DriveForm.LINEAR else potential.grid.x**2
    coupling = abs(matrix_element(basis, profile_values, i, j))
    omega_r = beta * coupling
    if omega_r == 0:
        raise ValueError("vanishing coupling for the requested transition")
    drive = Drive(form=form, beta=beta, omega=omega)
    t_final = duration if duration is not None else 1.3 * math.pi / omega_r
    if dt is None:
        dt = 2.0 * math.pi / omega / 400.0
    stride = (math.pi / omega_r) / 400.0
    traj = propagate(potential, basis, drive, i, t_final, dt, mode, sample_stride=stride)
    target_label = basis.labels[j]
    source_label = basis.labels[i]
    p_target = traj.populations[target_label]
    k = int(np.argmax(p_target))
    pair = traj.populations[source_label] + p_target
    leakage = float(np.max(traj.bound_total - pair))
    return RabiResult(
        trajectory=traj,
        peak_population=float(p_target[k]),
        t_peak=float(traj.times[k]),
        rabi_frequency=omega_r,
        leakage=leakage,
    )


@dataclass(frozen=True)
class LineshapeFit:
    detunings: np.ndarray
    peak_populations: np.ndarray
    fitted_rabi: float  # half width at half maximum of the fitted Lorentzian
    fwhm: float
    center: float
    matrix_rabi: float  # beta * |<i|f|j>| for reference
    underestimate_warning: bool


def lineshape_scan(
    potential: Potential,
    basis: EigenBasis,
    transition: tuple[int, int],
    beta: float,
    detunings=None,
    periods: float = 2.2,
    mode: PropagationMode = PropagationMode.EIGENBASIS,
) -> LineshapeFit:
    """Peak excited population vs drive detuning, fitted to a Lorentzian.

    The per-detuning window spans `periods` resonant Rabi periods; below two
    periods the far-detuned peaks may be missed and the fit is flagged.
    """
    i, j = transition
    form = _transition_form(j - i)
    omega0 = float(basis.energies[j] - basis.energies[i])
    profile_values = potential.grid.x if form is DriveForm.LINEAR else potential.grid.x**2
    omega_r = beta * abs(matrix_element(basis, profile_values, i, j))
    if detunings is None:
        detunings = np.linspace(-4.0 * omega_r, 4.0 * omega_r, 41)
    detunings = np.asarray(detunings, dtype=float)
    if detunings.max() - detunings.min() < 6.0 * omega_r:
        raise ValueError("detuning range must span at least +-3 Rabi frequencies")
    t_final = periods * 2.0 * math.pi / omega_r
    target_label = basis.labels[j]
    peaks = np.empty_like(detunings)
    for n, delta in enumerate(detunings):
        drive = Drive(form=form, beta=beta, omega=omega0 + delta)
        dt = 2.0 * math.pi / (omega0 + abs(delta)) / 200.0
        traj = propagate(
            potential, basis, drive, i, t_final, dt, mode,
            sample_stride=(math.pi / omega_r) / 200.0,
        )
        peaks[n] = float(np.max(traj.populations[target_label]))

    def lorentzian(delta, height, hwhm, center):
        return height * hwhm**2 / (hwhm**2 + (delta - center) ** 2)

    p0 = (1.0, omega_r, 0.0)
    params, _ = curve_fit(lorentzian, detunings, peaks, p0=p0)
    height, hwhm, center = params
    return LineshapeFit(
        detunings=detunings,
        peak_populations=peaks,
        fitted_rabi=abs(float(hwhm)),
        fwhm=2.0 * abs(float(hwhm)),
        center=float(center),
        matrix_rabi=omega_r,
        underestimate_warning=periods < 2.0,
    )


@dataclass(frozen=True)
class CascadeConfig:
    """Parameters of a resonance-cascade run on a logarithmic-spectrum trap."""

    n_levels: int = 120
    base: int = 3  # the resonant ladder visits base**m
    start_power: int = 3
    beta: float = 0.3
    holes: tuple[int, ...] = ()
    window_times: tuple[float, ...] = ()
    window_duration: float | None = None  # default: quarter drive period
    t_final: float = 500.0
    dt: float = 0.005
    mode: PropagationMode = PropagationMode.EIGENBASIS
    sample_stride: float = 0.5
    # classification thresholds
    pair_confinement: float = 0.90
    cascade_floor: float = 0.80
    visit_level: float = 0.10


@dataclass
class CascadeResult:
    trajectory: Trajectory
    verdict: Verdict
    cascade_labels: tuple[int, ...]
    cascade_fraction: np.ndarray
    min_cascade_fraction: float
    max_populations: dict[int, float]
    config: CascadeConfig


def cascade_spectrum(config: CascadeConfig) -> Spectrum:
    if config.holes:
        spec = SequenceSpec(
            SequenceKind.LN_NATURALS_WITH_HOLES, config.n_levels, frozenset(config.holes)
        )
    else:
        spec = SequenceSpec(SequenceKind.LN_NATURALS, config.n_levels)
    return target_spectrum(spec)


def cascade_experiment(
    config: CascadeConfig,
    potential: Potential | None = None,
    basis: EigenBasis | None = None,
) -> CascadeResult:
    """Drive a log-spectrum trap parametrically at Omega = ln(base) and watch
    the population walk the base**m ladder.

    Windows of silence (amplitude off, phase frozen) default to a quarter of
    the drive period; their placement is taken from the config. The verdict
    summarizes where the population ended up confined.
    """
    if (potential is None) != (basis is None):
        raise ValueError("pass both potential and basis, or neither")
    if potential is None:
        spectrum = cascade_spectrum(config)
        potential, basis, report = synthesize_potential(spectrum)
        if not report.converged:
            raise RuntimeError("trap synthesis did not converge")

    omega = math.log(config.base)
    start_label = config.base**config.start_power
    if start_label not in basis.labels:
        raise ValueError(f"initial state n={start_label} is not in the basis")
    ladder = []
    m = 0
    while config.base**m <= config.n_levels:
        ladder.append(config.base**m)
        m += 1
    tracked = tuple(l for l in ladder if l in basis.labels)

    duration = config.window_duration
    if duration is None:
        duration = math.pi / (2.0 * omega)
    windows = tuple((t, duration) for t in config.window_times)
    drive = Drive(
        form=DriveForm.PARAMETRIC, beta=config.beta, omega=omega,
        phase_freeze_windows=windows,
    )
    traj = propagate(
        potential, basis, drive, basis.index_of(start_label),
        config.t_final, config.dt, config.mode, sample_stride=config.sample_stride,
        tracked_labels=tracked,
    )

    fraction = traj.population_sum(tracked)
    min_fraction = float(np.min(fraction))
    max_pops = {l: float(np.max(traj.populations[l])) for l in tracked}

    down = start_label // config.base if start_label % config.base == 0 else None
    up = start_label * config.base
    pair_down = (
        traj.populations[start_label] + traj.populations[down]
        if down in traj.populations
        else None
    )
    pair_up = (
        traj.populations[start_label] + traj.populations[up]
        if up in traj.populations
        else None
    )

    descended = (
        min_fraction >= config.cascade_floor
        and all(p >= config.visit_level for p in max_pops.values())
        and 1 in max_pops
    )
    if descended:
        verdict = Verdict.DESCENDED_TO_GROUND
    elif pair_down is not None and float(np.min(pair_down)) >= config.pair_confinement:
        verdict = Verdict.LOCALIZED
    elif (
        pair_down is None
        and pair_up is not None
        and float(np.min(pair_up)) >= config.pair_confinement
    ):
        verdict = Verdict.STALLED_AT_HOLE
    else:
        verdict = Verdict.UNCLASSIFIED

    return CascadeResult(
        trajectory=traj,
        verdict=verdict,
        cascade_labels=tracked,
        cascade_fraction=fraction,
        min_cascade_fraction=min_fraction,
        max_populations=max_pops,
        config=config,
    )
