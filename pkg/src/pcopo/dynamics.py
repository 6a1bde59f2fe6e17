"""Time integration of the coupled pump/signal Langevin field equations.

The deterministic part is split: decay, mean detuning and diffraction are
applied exactly in Fourier space (pump diffraction coefficient 1, signal 2);
the detuning modulation, driving and nonlinear coupling are advanced in real
space with a Heun substep. The stochastic increment is Ito, evaluated at the
pre-step pump field and added between the two linear half-steps.

All field operations broadcast over a leading batch axis, so a stack of
trajectories can be advanced in one call; the random stream stays strictly
per-trajectory.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .model import FieldState, ModelParams, ValidityError

SCHEMES = ("strang-splitting", "euler-maruyama")


class IntegrationError(RuntimeError):
    """Field norm exceeded the blow-up guard."""


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 0.025
    scheme: str = "strang-splitting"
    max_field_norm: float = 1e3
    dt_guard: float = 0.05

    def __post_init__(self):
        if not 0 < self.dt <= self.dt_guard:
            raise ValueError(f"dt must be in (0, {self.dt_guard}], got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class NoiseIncrement:
    """Per-cell complex noise increments for one time step."""

    xi0: np.ndarray
    xi1: np.ndarray


def _laplacian(field: np.ndarray, grid: Grid) -> np.ndarray:
    k2 = grid.fft_wavenumbers**2
    return np.fft.ifft(-k2 * np.fft.fft(field, axis=-1), axis=-1)


def drift(state: FieldState, params: ModelParams, grid: Grid):
    """Deterministic time derivatives (d_t alpha0, d_t alpha1) of the model.

    The Laplacian is evaluated spectrally.
    """
    state.check(grid)
    a0, a1 = state.alpha0, state.alpha1
    d0 = params.delta0.evaluate(grid.x)
    d1 = params.delta1.evaluate(grid.x)
    f0 = -(1.0 + 1j * d0) * a0 + 1j * _laplacian(a0, grid) + params.pump_amplitude
    f1 = -(1.0 + 1j * d1) * a1 + 2j * _laplacian(a1, grid)
    if params.coupling_enabled:
        f0 = f0 - 0.5 * a1**2
        f1 = f1 + a0 * np.conj(a1)
    return f0, f1


def _noise_core(alpha0, params: ModelParams, dt: float, dx: float, eta, clamp: bool):
    eps = params.noise_strength
    scale = np.sqrt(eps * dt / dx)
    w = params.noise_anomalous * alpha0          # anomalous coefficient per cell
    aw = np.abs(w)
    violated = aw >= params.noise_diagonal
    if np.any(violated):
        if not clamp:
            raise ValidityError(
                "pump field outside the validity domain of the noise model "
                f"(|alpha0| reached {np.max(np.abs(alpha0)):.4g}, "
                f"limit {params.max_valid_pump_field:.4g})"
            )
        aw = np.minimum(aw, params.noise_diagonal)
    half_phase = np.exp(0.5j * np.angle(w))
    sig_p = np.sqrt(0.5 * (params.noise_diagonal + aw))
    sig_m = np.sqrt(0.5 * (params.noise_diagonal - aw))
    xi1 = scale * half_phase * (sig_p * eta[0] + 1j * sig_m * eta[1])
    xi0 = scale * (eta[2] + 1j * eta[3])
    return NoiseIncrement(xi0=xi0, xi1=xi1), np.any(violated, axis=-1)


def noise_from_normals(alpha0: np.ndarray, params: ModelParams, dt: float,
                       dx: float, eta: np.ndarray) -> NoiseIncrement:
    """Build one noise increment from unit normals ``eta`` of shape
    (4,) + field shape.

    Correlators realized in the ensemble mean (per cell, dt/dx discretized
    space-time delta):
        <xi0 xi0*> = 2 eps dt/dx          <xi0 xi0> = 0
        <xi1 xi1*> = noise_diagonal * eps dt/dx
        <xi1 xi1>  = noise_anomalous * alpha0 * eps dt/dx
    """
    inc, _ = _noise_core(alpha0, params, dt, dx, eta, clamp=False)
    return inc


def synthesize_noise(state: FieldState, params: ModelParams, grid: Grid,
                     dt: float, rng: np.random.Generator) -> NoiseIncrement:
    """Draw one additive-pump / multiplicative-signal noise increment."""
    eta = rng.standard_normal((4,) + state.alpha0.shape)
    return noise_from_normals(state.alpha0, params, dt, grid.dx, eta)


def _draw_eta(rng, shape):
    """Unit normals of (4,)+shape from one generator or one per batch row."""
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal((4,) + shape)
    eta = np.empty((4,) + shape)
    for b, r in enumerate(rng):
        eta[:, b, :] = r.standard_normal((4, shape[-1]))
    return eta


class Stepper:
    """Precomputed one-step propagator for a fixed (grid, params, settings)."""

    def __init__(self, params: ModelParams, grid: Grid, settings: IntegratorSettings,
                 flag_invalid: bool = False):
        self.params = params
        self.grid = grid
        self.settings = settings
        self.flag_invalid = flag_invalid
        self.invalid = None          # per-row out-of-validity flags (flag mode)
        self.max_abs_alpha0 = 0.0
        dt = settings.dt
        k2 = grid.fft_wavenumbers**2
        m0, m1 = params.delta0.mean, params.delta1.mean
        # exact linear flow over dt/2: decay + mean detuning + diffraction
        self._lin0 = np.exp(-(1.0 + 1j * m0 + 1j * k2) * dt / 2.0)
        self._lin1 = np.exp(-(1.0 + 1j * m1 + 2j * k2) * dt / 2.0)
        self._ddelta0 = params.delta0.evaluate(grid.x) - m0
        self._ddelta1 = params.delta1.evaluate(grid.x) - m1

    def _nonlinear_rhs(self, a0, a1):
        p = self.params
        f0 = -1j * self._ddelta0 * a0 + p.pump_amplitude
        f1 = -1j * self._ddelta1 * a1
        if p.coupling_enabled:
            f0 = f0 - 0.5 * a1**2
            f1 = f1 + a0 * np.conj(a1)
        return f0, f1

    def _linear_half(self, a0, a1):
        a0 = np.fft.ifft(self._lin0 * np.fft.fft(a0, axis=-1), axis=-1)
        a1 = np.fft.ifft(self._lin1 * np.fft.fft(a1, axis=-1), axis=-1)
        return a0, a1

    def step_arrays(self, a0, a1, t, rng):
        p, dt = self.params, self.settings.dt
        noise = None
        if p.noise_enabled:
            eta = _draw_eta(rng, a0.shape)
            noise, violated = _noise_core(a0, p, dt, self.grid.dx, eta,
                                          clamp=self.flag_invalid)
            if self.flag_invalid:
                self.invalid = violated if self.invalid is None else (self.invalid | violated)
        if self.settings.scheme == "euler-maruyama":
            st = FieldState(a0, a1, t)
            f0, f1 = drift(st, p, self.grid)
            a0 = a0 + dt * f0
            a1 = a1 + dt * f1
        else:
            a0, a1 = self._linear_half(a0, a1)
            f0, f1 = self._nonlinear_rhs(a0, a1)
            b0, b1 = a0 + dt * f0, a1 + dt * f1
            g0, g1 = self._nonlinear_rhs(b0, b1)
            a0 = a0 + 0.5 * dt * (f0 + g0)
            a1 = a1 + 0.5 * dt * (f1 + g1)
            if noise is not None:
                a0 = a0 + noise.xi0
                a1 = a1 + noise.xi1
            a0, a1 = self._linear_half(a0, a1)
        if self.settings.scheme == "euler-maruyama" and noise is not None:
            a0 = a0 + noise.xi0
            a1 = a1 + noise.xi1
        t = t + dt
        peak = max(np.max(np.abs(a0)), np.max(np.abs(a1)))
        if not np.isfinite(peak) or peak > self.settings.max_field_norm:
            raise IntegrationError(f"field norm {peak:.3g} exceeded blow-up guard at t={t:.4f}")
        self.max_abs_alpha0 = max(self.max_abs_alpha0, float(np.max(np.abs(a0))))
        return a0, a1, t

    def step(self, state: FieldState, rng) -> FieldState:
        a0, a1, t = self.step_arrays(state.alpha0, state.alpha1, state.time, rng)
        return FieldState(a0, a1, t)


def step(state: FieldState, params: ModelParams, grid: Grid,
         settings: IntegratorSettings, rng) -> FieldState:
    """Advance the state by one time step."""
    state.check(grid)
    return Stepper(params, grid, settings).step(state, rng)


def integrate(state: FieldState, params: ModelParams, grid: Grid,
              settings: IntegratorSettings, duration: float, rng,
              observers=(), stride: int = 1) -> FieldState:
    """Advance by ``duration``, invoking each observer every ``stride`` steps.

    Deterministic given (state, params, settings, rng seed). Observers are
    callables taking the current FieldState.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    state.check(grid)
    stepper = Stepper(params, grid, settings)
    n_steps = int(round(duration / settings.dt))
    cur = state.copy()
    for i in range(n_steps):
        cur = stepper.step(cur, rng)
        if (i + 1) % stride == 0:
            for obs in observers:
                obs(cur)
    return cur


class MaxPumpMonitor:
    """Observer recording the largest realized |alpha0|; flags validity."""

    def __init__(self, limit: float = 2.0):
        self.limit = limit
        self.max_abs = 0.0

    def __call__(self, state: FieldState):
        self.max_abs = max(self.max_abs, float(np.max(np.abs(state.alpha0))))

    @property
    def out_of_validity(self) -> bool:
        return self.max_abs >= self.limit


class TrajectoryDumper:
    """Observer writing one CSV per snapshot plus a JSON manifest."""

    def __init__(self, directory: str, grid: Grid, seed, settings: IntegratorSettings,
                 stride: int):
        self.directory = directory
        self.grid = grid
        self.count = 0
        os.makedirs(directory, exist_ok=True)
        manifest = {"seed": seed, "dt": settings.dt, "stride": stride,
                    "scheme": settings.scheme, "n": grid.n_points, "length": grid.length}
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)

    def __call__(self, state: FieldState):
        path = os.path.join(self.directory, f"snapshot_{self.count:06d}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "re_alpha0", "im_alpha0", "re_alpha1", "im_alpha1"])
            for j in range(self.grid.n_points):
                w.writerow([f"{self.grid.x[j]:.12g}",
                            f"{state.alpha0[j].real:.12g}", f"{state.alpha0[j].imag:.12g}",
                            f"{state.alpha1[j].real:.12g}", f"{state.alpha1[j].imag:.12g}"])
        self.count += 1
