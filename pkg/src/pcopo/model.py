"""Physical configuration: detuning profiles, parameters, field state, presets.

Dimensionless units throughout: time in cavity decay times (unit decay rate),
transverse lengths such that the pump diffraction coefficient is 1.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .grid import Grid, build_grid

PRESET_NAMES = ("opo", "pc-signal", "pc-pump", "pc-both")

#: Signal detuning used by all named presets (gives k_c = sqrt(0.5)).
PRESET_DELTA1 = -1.0
#: Modulation depth of the photonic-crystal presets.
PRESET_AMPLITUDE = 0.5


class ConfigError(ValueError):
    """Invalid or inconsistent model configuration."""


class ValidityError(RuntimeError):
    """Realized fields left the domain where the noise model is defined."""


def critical_wavenumber(delta1_mean: float) -> float:
    """Most unstable transverse wavenumber, sqrt(-delta1/2).

    Requires a negative mean signal detuning; otherwise there is no
    off-axis modulation instability.
    """
    if delta1_mean >= 0:
        raise ConfigError(
            f"no off-axis instability: signal detuning must be negative, got {delta1_mean}"
        )
    return float(np.sqrt(-delta1_mean / 2.0))


@dataclass(frozen=True)
class DetuningProfile:
    """Detuning Delta(x) = mean + amplitude*sin(wavenumber*x + phase).

    An optional ``samples`` array (one value per grid point) overrides the
    sinusoid for arbitrary periodic profiles; ``wavenumber`` then still
    declares the profile periodicity used by the Bloch analysis.
    """

    mean: float
    amplitude: float = 0.0
    wavenumber: float = 0.0
    phase: float = 0.0
    samples: Optional[tuple] = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigError(f"modulation amplitude must be >= 0, got {self.amplitude}")
        if self.wavenumber < 0:
            raise ConfigError(f"modulation wavenumber must be >= 0, got {self.wavenumber}")

    @property
    def modulated(self) -> bool:
        return self.amplitude > 0 or self.samples is not None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if self.samples is not None:
            s = np.asarray(self.samples, dtype=float)
            if s.shape != np.shape(x):
                raise ConfigError("sampled profile length does not match grid")
            return s
        if self.amplitude == 0:
            return np.full_like(np.asarray(x, dtype=float), self.mean)
        return self.mean + self.amplitude * np.sin(self.wavenumber * x + self.phase)

    def fourier_coefficient(self, j: int, grid: Grid) -> complex:
        """Coefficient of exp(i*j*wavenumber*x) in the profile expansion."""
        if self.samples is not None:
            vals = self.evaluate(grid.x)
            m = grid.mode_index(j * self.wavenumber)
            spec = np.fft.fftshift(np.fft.fft(vals)) / grid.n_points
            return complex(spec[m])
        if j == 0:
            return complex(self.mean)
        if self.amplitude == 0 or abs(j) != 1:
            return 0.0j
        # sin(kx+phase) = (e^{i(kx+phase)} - e^{-i(kx+phase)}) / 2i
        if j == 1:
            return complex(-0.5j * self.amplitude * np.exp(1j * self.phase))
        return complex(0.5j * self.amplitude * np.exp(-1j * self.phase))

    def check_commensurate(self, grid: Grid, name: str = "detuning") -> None:
        if self.modulated and self.wavenumber > 0 and not grid.is_commensurate(self.wavenumber):
            raise ConfigError(
                f"{name} modulation wavenumber {self.wavenumber} is not a multiple "
                f"of 2*pi/L = {grid.dk}"
            )


@dataclass(frozen=True)
class ModelParams:
    """Driving, detunings and noise model of the coupled field equations.

    ``noise_diagonal`` and ``noise_anomalous`` override the signal-noise
    correlators: <xi1 xi1*> = noise_diagonal * eps, <xi1 xi1> =
    noise_anomalous * alpha0 * eps. The defaults keep the diffusion matrix
    positive exactly while |alpha0| < 2.
    """

    pump_amplitude: float
    delta0: DetuningProfile
    delta1: DetuningProfile
    noise_strength: float = 1e-2
    noise_enabled: bool = True
    coupling_enabled: bool = True
    noise_diagonal: float = 2.0
    noise_anomalous: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.pump_amplitude < 0:
            raise ConfigError(f"pump amplitude must be >= 0, got {self.pump_amplitude}")
        if not self.noise_strength > 0:
            raise ConfigError(f"noise strength must be positive, got {self.noise_strength}")
        if self.noise_diagonal <= 0:
            raise ConfigError("noise_diagonal must be positive")

    @property
    def max_valid_pump_field(self) -> float:
        """Largest |alpha0| for which the signal diffusion matrix stays PSD."""
        a = abs(self.noise_anomalous)
        return np.inf if a == 0 else self.noise_diagonal / a


@dataclass
class FieldState:
    """Complex pump and signal envelopes on the grid at time ``time``."""

    alpha0: np.ndarray
    alpha1: np.ndarray
    time: float = 0.0

    def check(self, grid: Grid) -> None:
        for name, arr in (("alpha0", self.alpha0), ("alpha1", self.alpha1)):
            if arr.shape[-1] != grid.n_points:
                raise ConfigError(f"{name} has {arr.shape[-1]} points, grid has {grid.n_points}")
            if not np.all(np.isfinite(arr)):
                raise ValidityError(f"{name} contains non-finite entries at t={self.time}")

    def copy(self) -> "FieldState":
        return FieldState(self.alpha0.copy(), self.alpha1.copy(), self.time)


def vacuum_state(grid: Grid, batch: Optional[int] = None) -> FieldState:
    shape = (grid.n_points,) if batch is None else (batch, grid.n_points)
    return FieldState(np.zeros(shape, complex), np.zeros(shape, complex), 0.0)


def default_grid(delta1_mean: float = PRESET_DELTA1, periods: int = 16,
                 points_per_period: int = 16) -> Grid:
    """Domain holding ``periods`` pattern periods so k_c and 2*k_c are exact
    grid wavenumbers."""
    kc = critical_wavenumber(delta1_mean)
    return build_grid(periods * points_per_period, periods * 2.0 * np.pi / kc)


def make_preset(name: str, pump_amplitude: float = 0.9, grid: Optional[Grid] = None,
                amplitude: float = PRESET_AMPLITUDE, noise_strength: float = 1e-2,
                phase: float = 0.0, noise_enabled: bool = True) -> tuple[ModelParams, Grid]:
    """Build one of the four named configurations (opo, pc-signal, pc-pump,
    pc-both) on its default grid unless one is supplied."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}, expected one of {PRESET_NAMES}")
    if grid is None:
        grid = default_grid()
    kpc = 2.0 * critical_wavenumber(PRESET_DELTA1)
    m0 = amplitude if name in ("pc-pump", "pc-both") else 0.0
    m1 = amplitude if name in ("pc-signal", "pc-both") else 0.0
    params = ModelParams(
        pump_amplitude=pump_amplitude,
        delta0=DetuningProfile(0.0, m0, kpc if m0 else 0.0, phase if m0 else 0.0),
        delta1=DetuningProfile(PRESET_DELTA1, m1, kpc if m1 else 0.0, phase if m1 else 0.0),
        noise_strength=noise_strength,
        noise_enabled=noise_enabled,
    )
    return params, grid


@dataclass(frozen=True)
class CheckedConfig:
    """Validated parameter set with preset classification and config hash."""

    params: ModelParams
    grid: Grid
    preset: Optional[str]
    config_hash: str = ""

    def __post_init__(self):
        if not self.config_hash:
            object.__setattr__(self, "config_hash", config_hash(self.params, self.grid))


def _classify_preset(params: ModelParams, grid: Grid) -> Optional[str]:
    d0, d1 = params.delta0, params.delta1
    if d0.samples is not None or d1.samples is not None:
        return None
    if d0.mean != 0.0 or d1.mean != PRESET_DELTA1:
        return None
    kpc = 2.0 * critical_wavenumber(d1.mean)
    for prof in (d0, d1):
        if prof.modulated and not np.isclose(prof.wavenumber, kpc, rtol=1e-9):
            return None
    m0, m1 = d0.modulated, d1.modulated
    return {(False, False): "opo", (False, True): "pc-signal",
            (True, False): "pc-pump", (True, True): "pc-both"}[(m0, m1)]


def validate_config(params: ModelParams, grid: Grid) -> CheckedConfig:
    """Check commensurability and validity constraints, classify the preset.

    A signal-detuning modulation deep enough to flip the sign of Delta1(x)
    is flagged with a warning (the critical-wavenumber picture assumes a
    negative signal detuning everywhere), not rejected.
    """
    params.delta0.check_commensurate(grid, "pump detuning")
    params.delta1.check_commensurate(grid, "signal detuning")
    d1 = params.delta1.evaluate(grid.x)
    if np.any(d1 >= 0) and params.delta1.mean < 0:
        warnings.warn(
            "signal detuning changes sign across the domain; "
            "the k_c = sqrt(-delta1/2) picture assumes delta1 < 0 everywhere",
            stacklevel=2,
        )
    return CheckedConfig(params=params, grid=grid, preset=_classify_preset(params, grid))


def _profile_dict(p: DetuningProfile) -> dict:
    if p.samples is not None:
        return {"mean": p.mean, "samples": list(map(float, p.samples)),
                "k": p.wavenumber, "phase": p.phase}
    if p.amplitude == 0:
        # normalize so that zero modulation hashes identically to the
        # homogeneous profile regardless of leftover k/phase fields
        return {"mean": p.mean, "amplitude": 0.0, "k": 0.0, "phase": 0.0}
    return {"mean": p.mean, "amplitude": p.amplitude, "k": p.wavenumber, "phase": p.phase}


def config_dict(params: ModelParams, grid: Grid) -> dict:
    d = {
        "grid": {"n": grid.n_points, "length": grid.length},
        "pump": {"E": params.pump_amplitude},
        "delta0": _profile_dict(params.delta0),
        "delta1": _profile_dict(params.delta1),
        "noise": {"epsilon": params.noise_strength, "enabled": params.noise_enabled},
    }
    if not params.coupling_enabled:
        d["coupling_enabled"] = False
    if params.noise_diagonal != 2.0 or params.noise_anomalous != 1.0 + 0.0j:
        d["noise"]["diagonal"] = params.noise_diagonal
        d["noise"]["anomalous"] = [params.noise_anomalous.real, params.noise_anomalous.imag]
    return d


def config_hash(params: ModelParams, grid: Grid) -> str:
    blob = json.dumps(config_dict(params, grid), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _profile_from_dict(d: dict) -> DetuningProfile:
    if "samples" in d:
        return DetuningProfile(mean=float(d.get("mean", 0.0)),
                               wavenumber=float(d.get("k", 0.0)),
                               phase=float(d.get("phase", 0.0)),
                               samples=tuple(d["samples"]))
    return DetuningProfile(mean=float(d.get("mean", 0.0)),
                           amplitude=float(d.get("amplitude", 0.0)),
                           wavenumber=float(d.get("k", 0.0)),
                           phase=float(d.get("phase", 0.0)))


def load_config(source) -> CheckedConfig:
    """Build a validated configuration from a JSON file path or dict.

    A ``preset`` key fills in the named configuration first; any explicit
    keys then override it.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)

    if "preset" in data:
        params, grid = make_preset(data["preset"],
                                   pump_amplitude=data.get("pump", {}).get("E", 0.9))
    else:
        params, grid = None, None

    if "grid" in data:
        g = data["grid"]
        grid = build_grid(int(g.get("n", grid.n_points if grid else 256)),
                          float(g.get("length", grid.length if grid else default_grid().length)))
    elif grid is None:
        grid = default_grid()

    if params is None:
        if "delta1" not in data:
            raise ConfigError("config needs either a preset or an explicit delta1")
        params = ModelParams(
            pump_amplitude=float(data.get("pump", {}).get("E", 0.0)),
            delta0=_profile_from_dict(data.get("delta0", {"mean": 0.0})),
            delta1=_profile_from_dict(data["delta1"]),
        )
    else:
        if "delta0" in data:
            params = replace(params, delta0=_profile_from_dict(data["delta0"]))
        if "delta1" in data:
            params = replace(params, delta1=_profile_from_dict(data["delta1"]))

    noise = data.get("noise", {})
    kwargs = {}
    if "epsilon" in noise:
        kwargs["noise_strength"] = float(noise["epsilon"])
    if "enabled" in noise:
        kwargs["noise_enabled"] = bool(noise["enabled"])
    if "diagonal" in noise:
        kwargs["noise_diagonal"] = float(noise["diagonal"])
    if "anomalous" in noise:
        re, im = noise["anomalous"]
        kwargs["noise_anomalous"] = complex(re, im)
    if "coupling_enabled" in data:
        kwargs["coupling_enabled"] = bool(data["coupling_enabled"])
    if kwargs:
        params = replace(params, **kwargs)

    return validate_config(params, grid)
