"""Reproducible Monte Carlo campaigns over stochastic trajectories.

Each trajectory owns an independent random stream derived from the master
seed, so results are bit-identical in serial mode and independent of how
trajectories are partitioned across workers (merging follows trajectory
order). Trajectories in one worker are advanced as a single vectorized
batch; the noise is still drawn strictly per trajectory.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import IntegratorSettings, Stepper
from .grid import Grid
from .linear import find_threshold
from .model import ModelParams, config_hash, critical_wavenumber, make_preset
from .quantum import CalibrationRecord, ModePairMoments, far_field_arrays
from .streams import derive_stream


class CampaignAborted(RuntimeError):
    """Too many trajectories left the validity domain or blew up."""


@dataclass
class CampaignSpec:
    """Declarative description of one Monte Carlo campaign.

    Pump can be absolute (``pump``) or relative to the instability threshold
    (``pump_relative``, e.g. 0.95 for 5% below or 1.02 for 2% above); the
    relative form triggers a threshold computation during resolution.
    """

    preset: Optional[str] = None
    params: Optional[ModelParams] = None
    grid: Optional[Grid] = None
    pump: Optional[float] = None
    pump_relative: Optional[float] = None
    n_trajectories: int = 100
    burn_in: float = 100.0
    duration: float = 1000.0
    stride: int = 10
    master_seed: int = 12345
    worker_count: int = 1
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    pair_k: Optional[float] = None
    store_series: bool = True
    initialization: str = "auto"            # vacuum | pattern | auto
    invalid_fraction_limit: float = 0.01
    seed_amplitude: float = 0.1
    relax_tol: float = 1e-8
    relax_max: float = 400.0
    pattern_burn_in: float = 50.0

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.duration < 0 or self.burn_in < 0:
            raise ValueError("durations must be >= 0")
        if self.pump_relative is not None and self.preset is None and self.params is None:
            raise ValueError("relative pump needs a preset or explicit params")


@dataclass
class ResolvedCampaign:
    params: ModelParams
    grid: Grid
    settings: IntegratorSettings
    threshold: Optional[float]
    k_c: float
    pair_k: float
    init: str
    burn_in: float
    duration: float
    stride: int
    master_seed: int
    seed_amplitude: float
    relax_tol: float
    relax_max: float
    store_series: bool


def resolve_campaign(spec: CampaignSpec) -> ResolvedCampaign:
    if spec.params is not None:
        params, grid = spec.params, spec.grid
        if grid is None:
            raise ValueError("explicit params need an explicit grid")
    else:
        params, grid = make_preset(spec.preset, grid=spec.grid)
    kc = critical_wavenumber(params.delta1.mean)
    threshold = None
    need_threshold = spec.pump_relative is not None or spec.initialization == "auto"
    if need_threshold:
        threshold = find_threshold(params, grid)
    if spec.pump_relative is not None:
        pump = spec.pump_relative * threshold
    elif spec.pump is not None:
        pump = spec.pump
    else:
        pump = params.pump_amplitude
    params = replace(params, pump_amplitude=pump)
    init = spec.initialization
    if init == "auto":
        init = "pattern" if pump > threshold else "vacuum"
    if init not in ("vacuum", "pattern"):
        raise ValueError(f"unknown initialization {init!r}")
    burn_in = spec.burn_in if init == "vacuum" else max(spec.burn_in, spec.pattern_burn_in)
    return ResolvedCampaign(
        params=params, grid=grid, settings=spec.settings, threshold=threshold,
        k_c=kc, pair_k=spec.pair_k if spec.pair_k is not None else kc,
        init=init, burn_in=burn_in, duration=spec.duration, stride=spec.stride,
        master_seed=spec.master_seed, seed_amplitude=spec.seed_amplitude,
        relax_tol=spec.relax_tol, relax_max=spec.relax_max,
        store_series=spec.store_series,
    )


@dataclass
class TrajectoryRecord:
    index: int
    n_samples: int
    mode_mean: np.ndarray            # per-mode <|a_k|^2>_Q over the trajectory
    series_p: np.ndarray
    series_m: np.ndarray
    max_abs_alpha0: float
    out_of_validity: bool


def _run_trajectories(rc: ResolvedCampaign, indices) -> list:
    grid, params = rc.grid, rc.params
    rngs = [derive_stream(rc.master_seed, i) for i in indices]
    B, n = len(indices), grid.n_points
    dt = rc.settings.dt

    if rc.init == "vacuum":
        a0 = np.zeros((B, n), complex)
        a1 = np.zeros((B, n), complex)
    else:
        period = 2.0 * np.pi / rc.k_c
        x0s = np.array([r.uniform(0.0, period) for r in rngs])
        a1 = rc.seed_amplitude * np.cos(rc.k_c * (grid.x[None, :] - x0s[:, None])) + 0j
        a0 = np.full((B, n), params.pump_amplitude / (1.0 + 1j * params.delta0.mean))
        relax = Stepper(replace(params, noise_enabled=False), grid, rc.settings)
        t = 0.0
        block = max(1, int(round(2.0 / dt)))
        elapsed = 0.0
        while elapsed < rc.relax_max:
            prev0, prev1 = a0, a1
            for _ in range(block):
                a0, a1, t = relax.step_arrays(a0, a1, t, None)
            elapsed += block * dt
            rate = max(np.max(np.abs(a0 - prev0)), np.max(np.abs(a1 - prev1))) / (block * dt)
            if rate < rc.relax_tol:
                break

    stepper = Stepper(params, grid, rc.settings, flag_invalid=True)
    t = 0.0
    for _ in range(int(round(rc.burn_in / dt))):
        a0, a1, t = stepper.step_arrays(a0, a1, t, rngs)

    ip = grid.mode_index(rc.pair_k)
    im = grid.mode_index(-rc.pair_k)
    inten = np.zeros((B, n))
    sp, sm = [], []
    count = 0
    for s in range(int(round(rc.duration / dt))):
        a0, a1, t = stepper.step_arrays(a0, a1, t, rngs)
        if (s + 1) % rc.stride == 0:
            modes = far_field_arrays(a1, params, grid)
            inten += np.abs(modes) ** 2
            sp.append(modes[:, ip].copy())
            sm.append(modes[:, im].copy())
            count += 1

    invalid = stepper.invalid if stepper.invalid is not None else np.zeros(B, bool)
    series_p = np.stack(sp, axis=1) if count else np.zeros((B, 0), complex)
    series_m = np.stack(sm, axis=1) if count else np.zeros((B, 0), complex)
    max0 = float(stepper.max_abs_alpha0)
    out = []
    for b, idx in enumerate(indices):
        out.append(TrajectoryRecord(
            index=idx, n_samples=count,
            mode_mean=inten[b] / max(count, 1),
            series_p=series_p[b], series_m=series_m[b],
            max_abs_alpha0=max0,  # batch-level bound; per-row flag is exact
            out_of_validity=bool(np.atleast_1d(invalid)[b]),
        ))
    return out


def _pattern_centroids(series_p, series_m, k: float) -> np.ndarray:
    """Stripe position from the phase difference of the +-k amplitudes,
    modulo the pattern period pi/k."""
    return np.angle(series_m * np.conj(series_p)) / (2.0 * k)


def _unwrap_centroids(x0: np.ndarray, k: float) -> np.ndarray:
    """Continuous centroid track (removes pi/k jumps of the modular position)."""
    period = np.pi / k
    return np.unwrap(x0 * (2 * np.pi / period), axis=-1) * (period / (2 * np.pi))


def _fluctuations(rc: ResolvedCampaign, series_p, series_m):
    """Fluctuation series about the pattern, per the mean-subtraction policy:
    modulated configurations subtract the ensemble-mean (PC-locked) field;
    the translation-invariant configuration subtracts a per-trajectory mean
    pattern aligned by centroid and replaced at the trajectory's initial
    position, so pattern diffusion stays in the fluctuation record."""
    if rc.init == "vacuum" or series_p.shape[1] == 0:
        return series_p, series_m, None
    k = rc.pair_k
    x0 = _pattern_centroids(series_p, series_m, k)
    modulated = rc.params.delta0.modulated or rc.params.delta1.modulated
    if modulated:
        # The locked pattern is doubly degenerate (alpha1 -> -alpha1 leaves
        # the equations invariant), so trajectories split between two signs.
        # Align signs before the ensemble mean; all pair statistics are
        # invariant under a simultaneous sign flip of both modes.
        traj_mean = np.mean(series_p, axis=1, keepdims=True)
        sign = np.where(np.real(traj_mean * np.conj(traj_mean[0])) < 0, -1.0, 1.0)
        sp = series_p * sign
        sm = series_m * sign
        return sp - np.mean(sp), sm - np.mean(sm), x0
    xc = _unwrap_centroids(x0, k)
    aligned_p = series_p * np.exp(1j * k * xc)
    aligned_m = series_m * np.exp(-1j * k * xc)
    mp = np.mean(aligned_p, axis=1, keepdims=True)
    mm = np.mean(aligned_m, axis=1, keepdims=True)
    xr = xc[:, :1]
    dp = series_p - mp * np.exp(-1j * k * xr)
    dm = series_m - mm * np.exp(1j * k * xr)
    return dp, dm, x0


@dataclass
class CampaignResult:
    moments: ModePairMoments
    wavenumbers: np.ndarray
    mode_intensity_q: np.ndarray          # ensemble <|a_k|^2>_Q
    mode_intensity_se: np.ndarray
    centroids: Optional[np.ndarray]       # (ntraj, nt) modular stripe positions
    sample_dt: float
    diagnostics: list
    manifest: dict
    threshold: Optional[float]

    @property
    def normally_ordered_intensity(self) -> np.ndarray:
        return self.mode_intensity_q - 1.0

    def intensity_at(self, k: float, grid: Grid):
        i = grid.mode_index(k)
        return self.mode_intensity_q[i] - 1.0, self.mode_intensity_se[i]

    def save_accumulators(self, path) -> None:
        """JSON dump of the scalar accumulators and manifest (series omitted)."""
        m = self.moments
        blob = {
            "manifest": self.manifest,
            "moments": {
                "k": m.k, "n": m.n,
                "s_p": [m.s_p.real, m.s_p.imag], "s_m": [m.s_m.real, m.s_m.imag],
                "s_pp": m.s_pp, "s_mm": m.s_mm,
                "s_p2": [m.s_p2.real, m.s_p2.imag],
                "s_m2": [m.s_m2.real, m.s_m2.imag],
                "s_pm": [m.s_pm.real, m.s_pm.imag],
                "s_pmc": [m.s_pmc.real, m.s_pmc.imag],
            },
            "mode_intensity_q": self.mode_intensity_q.tolist(),
            "mode_intensity_se": self.mode_intensity_se.tolist(),
            "wavenumbers": self.wavenumbers.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(blob, fh, indent=2)


def _worker_cap() -> int:
    env = os.environ.get("PCOPO_WORKERS")
    return max(1, int(env)) if env else os.cpu_count() or 1


def run_campaign(spec: CampaignSpec,
                 calibration: Optional[CalibrationRecord] = None) -> CampaignResult:
    """Execute the campaign and merge per-trajectory statistics in index order."""
    rc = resolve_campaign(spec)
    n = spec.n_trajectories
    workers = min(spec.worker_count, _worker_cap(), n)
    if workers > 1:
        bounds = np.array_split(np.arange(n), workers)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_run_trajectories, rc, list(b)) for b in bounds if len(b)]
            records = [r for f in futures for r in f.result()]
    else:
        records = _run_trajectories(rc, list(range(n)))
    records.sort(key=lambda r: r.index)

    bad = [r for r in records if r.out_of_validity]
    if len(bad) > spec.invalid_fraction_limit * n:
        raise CampaignAborted(
            f"{len(bad)}/{n} trajectories left the validity domain "
            f"(limit {spec.invalid_fraction_limit:.0%})")

    valid = [r for r in records if not r.out_of_validity]
    series_p = np.stack([r.series_p for r in valid]) if valid else np.zeros((0, 0), complex)
    series_m = np.stack([r.series_m for r in valid]) if valid else np.zeros((0, 0), complex)
    dp, dm, centroids = _fluctuations(rc, series_p, series_m)

    sample_dt = rc.settings.dt * rc.stride
    moments = ModePairMoments(k=rc.pair_k)
    for b in range(dp.shape[0]):
        moments.add(dp[b], dm[b])
    if rc.store_series and dp.shape[1] > 0:
        moments.series_p = dp
        moments.series_m = dm
        moments.sample_dt = sample_dt
        moments.calibration = calibration

    if valid and valid[0].n_samples > 0:
        stack = np.stack([r.mode_mean for r in valid])
        mode_q = stack.mean(axis=0)
        mode_se = stack.std(axis=0, ddof=1) / np.sqrt(len(valid)) if len(valid) > 1 \
            else np.full(rc.grid.n_points, np.inf)
    else:
        mode_q = np.zeros(rc.grid.n_points)
        mode_se = np.full(rc.grid.n_points, np.inf)

    manifest = {
        "config_hash": config_hash(rc.params, rc.grid),
        "preset": spec.preset,
        "pump": rc.params.pump_amplitude,
        "threshold": rc.threshold,
        "master_seed": rc.master_seed,
        "n_trajectories": n,
        "burn_in": rc.burn_in,
        "duration": rc.duration,
        "stride": rc.stride,
        "dt": rc.settings.dt,
        "scheme": rc.settings.scheme,
        "initialization": rc.init,
        "pair_k": rc.pair_k,
        "n_invalid": len(bad),
    }
    diagnostics = [{"index": r.index, "out_of_validity": r.out_of_validity,
                    "max_abs_alpha0": r.max_abs_alpha0} for r in records]
    return CampaignResult(
        moments=moments, wavenumbers=rc.grid.wavenumbers.copy(),
        mode_intensity_q=mode_q, mode_intensity_se=mode_se,
        centroids=centroids, sample_dt=sample_dt,
        diagnostics=diagnostics, manifest=manifest, threshold=rc.threshold,
    )


def burn_in_check(result: CampaignResult) -> dict:
    """Compare pair intensities over the two halves of the measurement window;
    adequately burned-in campaigns agree within about one standard error."""
    m = result.moments
    if m.series_p is None or m.series_p.shape[1] < 4:
        raise ValueError("burn-in check needs stored series")
    half = m.series_p.shape[1] // 2
    i1 = np.abs(m.series_p[:, :half]) ** 2
    i2 = np.abs(m.series_p[:, half:]) ** 2
    m1, m2 = i1.mean(axis=1), i2.mean(axis=1)
    se = np.sqrt((m1.std(ddof=1) ** 2 + m2.std(ddof=1) ** 2) / len(m1))
    return {"first_half": float(m1.mean()), "second_half": float(m2.mean()),
            "difference": float(m2.mean() - m1.mean()), "stderr": float(se)}
