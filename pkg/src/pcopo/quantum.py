"""Far-field mode statistics: squeezing, EPR and inseparability criteria.

All mode amplitudes are normalized so a vacuum mode has unit Q-intensity;
quadrature variances are reported in shot-noise units where a single-mode
vacuum quadrature reads 1 (a symmetric two-mode joint quadrature with
lambda = 1 then reads 2). Equal-time variances subtract the antinormal
ordering excess analytically; zero-frequency variances subtract a measured
vacuum spectrum obtained from an identically processed calibration run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Grid
from .model import FieldState, ModelParams

# ---------------------------------------------------------------------------
# far field


@dataclass
class FarFieldModes:
    """Normalized far-field amplitudes a_k aligned with grid.wavenumbers."""

    amplitudes: np.ndarray
    wavenumbers: np.ndarray

    def at(self, k: float, grid: Grid) -> np.ndarray:
        return self.amplitudes[..., grid.mode_index(k)]


def far_field(state: FieldState, params: ModelParams, grid: Grid) -> FarFieldModes:
    """Signal far field, a_k = (dx/sqrt(L)) sum_j alpha1(x_j) e^{-i k x_j} / sqrt(eps).

    With this normalization a vacuum calibration run has <|a_k|^2> = 1 per mode.
    """
    state.check(grid)
    raw = np.fft.fft(state.alpha1, axis=-1) * (grid.dx / np.sqrt(grid.length))
    amps = np.fft.fftshift(raw, axes=-1) / np.sqrt(params.noise_strength)
    return FarFieldModes(amplitudes=amps, wavenumbers=grid.wavenumbers)


def far_field_arrays(alpha1: np.ndarray, params: ModelParams, grid: Grid) -> np.ndarray:
    """Array-level far_field for batched accumulation loops."""
    raw = np.fft.fft(alpha1, axis=-1) * (grid.dx / np.sqrt(grid.length))
    return np.fft.fftshift(raw, axes=-1) / np.sqrt(params.noise_strength)


# ---------------------------------------------------------------------------
# moment accumulation


class InsufficientStatistics(RuntimeError):
    """A variance was queried from an accumulator with too few samples."""


@dataclass
class ModePairMoments:
    """Accumulated first and second moments of an opposite mode pair (+k, -k).

    Optionally stores the per-trajectory time series of both amplitudes
    (rows = trajectories) for spectral estimates, together with the sampling
    interval and a vacuum calibration record.
    """

    k: float
    n: int = 0
    s_p: complex = 0j
    s_m: complex = 0j
    s_pp: float = 0.0          # sum |a+|^2
    s_mm: float = 0.0
    s_p2: complex = 0j         # sum a+^2
    s_m2: complex = 0j
    s_pm: complex = 0j         # sum a+ a-
    s_pmc: complex = 0j        # sum a+ conj(a-)
    series_p: Optional[np.ndarray] = None
    series_m: Optional[np.ndarray] = None
    sample_dt: Optional[float] = None
    calibration: Optional["CalibrationRecord"] = None
    min_samples: int = 2
    _exact: Optional[dict] = field(default=None, repr=False)

    def add(self, ap: np.ndarray, am: np.ndarray) -> None:
        ap = np.asarray(ap).ravel()
        am = np.asarray(am).ravel()
        self.n += ap.size
        self.s_p += complex(ap.sum())
        self.s_m += complex(am.sum())
        self.s_pp += float(np.sum(np.abs(ap) ** 2))
        self.s_mm += float(np.sum(np.abs(am) ** 2))
        self.s_p2 += complex(np.sum(ap**2))
        self.s_m2 += complex(np.sum(am**2))
        self.s_pm += complex(np.sum(ap * am))
        self.s_pmc += complex(np.sum(ap * np.conj(am)))

    def merge(self, other: "ModePairMoments") -> "ModePairMoments":
        """Associative, commutative accumulator merge (series concatenate)."""
        if other.k != self.k:
            raise ValueError("cannot merge moments of different mode pairs")
        out = ModePairMoments(k=self.k, min_samples=self.min_samples)
        for f in ("n", "s_p", "s_m", "s_pp", "s_mm", "s_p2", "s_m2", "s_pm", "s_pmc"):
            setattr(out, f, getattr(self, f) + getattr(other, f))
        if self.series_p is not None and other.series_p is not None:
            out.series_p = np.vstack([np.atleast_2d(self.series_p),
                                      np.atleast_2d(other.series_p)])
            out.series_m = np.vstack([np.atleast_2d(self.series_m),
                                      np.atleast_2d(other.series_m)])
        out.sample_dt = self.sample_dt or other.sample_dt
        out.calibration = self.calibration or other.calibration
        return out

    @classmethod
    def from_central_moments(cls, k: float, npp: float, nmm: float, app: complex,
                             amm: complex, apm: complex, apmc: complex) -> "ModePairMoments":
        """Exact (noise-free) moments of a zero-mean Gaussian pair state."""
        m = cls(k=k, n=10**9)
        m._exact = {"npp": npp, "nmm": nmm, "app": complex(app), "amm": complex(amm),
                    "apm": complex(apm), "apmc": complex(apmc)}
        return m

    def central_moments(self) -> dict:
        """Central second moments in Q units."""
        if self._exact is not None:
            return dict(self._exact)
        if self.n < self.min_samples:
            raise InsufficientStatistics(
                f"{self.n} samples accumulated, need at least {self.min_samples}")
        n = self.n
        mp, mm = self.s_p / n, self.s_m / n
        return {
            "npp": self.s_pp / n - abs(mp) ** 2,
            "nmm": self.s_mm / n - abs(mm) ** 2,
            "app": self.s_p2 / n - mp**2,
            "amm": self.s_m2 / n - mm**2,
            "apm": self.s_pm / n - mp * mm,
            "apmc": self.s_pmc / n - mp * np.conj(mm),
        }

    def covariance_matrix(self) -> np.ndarray:
        """Real 4x4 covariance of (Re a+, Im a+, Re a-, Im a-), Q ordering."""
        c = self.central_moments()
        return _complex_to_real_cov(c)

    def is_psd(self, tol: float = 1e-9) -> bool:
        ev = np.linalg.eigvalsh(self.covariance_matrix())
        scale = max(1.0, float(np.max(np.abs(ev))))
        return bool(ev.min() > -tol * scale)


def _complex_to_real_cov(c: dict) -> np.ndarray:
    """Map complex pair moments to the real covariance of (X+, Y+, X-, Y-)."""
    npp, nmm = np.real(c["npp"]), np.real(c["nmm"])
    app, amm, apm, apmc = c["app"], c["amm"], c["apm"], c["apmc"]
    C = np.empty((4, 4))
    C[0, 0] = 0.5 * (npp + np.real(app))
    C[1, 1] = 0.5 * (npp - np.real(app))
    C[0, 1] = C[1, 0] = 0.5 * np.imag(app)
    C[2, 2] = 0.5 * (nmm + np.real(amm))
    C[3, 3] = 0.5 * (nmm - np.real(amm))
    C[2, 3] = C[3, 2] = 0.5 * np.imag(amm)
    C[0, 2] = C[2, 0] = 0.5 * np.real(apm + apmc)
    C[0, 3] = C[3, 0] = 0.5 * np.imag(apm - apmc)
    C[1, 2] = C[2, 1] = 0.5 * np.imag(apm + apmc)
    C[1, 3] = C[3, 1] = 0.5 * np.real(apmc - apm)
    return C


# ---------------------------------------------------------------------------
# quadrature specifications and equal-time variances

ORDERINGS = ("equal-time", "zero-frequency")


@dataclass(frozen=True)
class QuadratureSpec:
    theta: float
    phi: float
    lam: float = 1.0
    a: float = 1.0
    ordering: str = "equal-time"

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("weight a must be positive")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")


def _q_variance(c: dict, theta: float, phi: float, wp: float, wm: float) -> float:
    """Q-ordered variance of (wp a+ + wm a- e^{i phi}) e^{i theta} + c.c."""
    u2 = np.exp(2j * theta) * (wp**2 * c["app"]
                               + wm**2 * np.exp(2j * phi) * c["amm"]
                               + 2 * wp * wm * np.exp(1j * phi) * c["apm"])
    uu = (wp**2 * np.real(c["npp"]) + wm**2 * np.real(c["nmm"])
          + 2 * wp * wm * np.real(np.exp(1j * phi) * np.conj(c["apmc"])))
    return float(2 * np.real(u2) + 2 * uu)


def quad_variance_equal_time(m: ModePairMoments, theta: float, phi: float,
                             wp: float = 1.0, wm: float = 1.0) -> float:
    """Shot-noise-referenced variance: Q variance minus the antinormal excess
    wp^2 + wm^2 (vacuum then reads wp^2 + wm^2)."""
    c = m.central_moments()
    return _q_variance(c, theta, phi, wp, wm) - (wp**2 + wm**2)


def joint_quadrature_variance(m: ModePairMoments, q: QuadratureSpec) -> float:
    """Variance of the joint quadrature in shot-noise units.

    Equal-time path uses accumulated moments; the zero-frequency path uses the
    stored time series and the attached vacuum calibration.
    """
    if q.ordering == "equal-time":
        return quad_variance_equal_time(m, q.theta, q.phi, 1.0, q.lam)
    sm = spectral_moments(m)
    return quad_variance_spectral(sm, q.theta, q.phi, 1.0, q.lam)


# ---------------------------------------------------------------------------
# spectral (zero-frequency) variances

#: Welch settings used for every spectral estimate, calibration included.
WELCH_SEGMENTS = 8
LOW_FREQ_BINS = (1, 2)


def _quad_coeffs(theta: float, phi: float, wp: float, wm: float) -> np.ndarray:
    """Coefficients c with Sigma = c . (X+, Y+, X-, Y-)."""
    return np.array([2 * wp * np.cos(theta), -2 * wp * np.sin(theta),
                     2 * wm * np.cos(theta + phi), -2 * wm * np.sin(theta + phi)])


def _welch_cross_matrix(series_p: np.ndarray, series_m: np.ndarray, sample_dt: float,
                        n_fft: int, bins) -> np.ndarray:
    """Averaged 4x4 real cross-spectral matrix of (X+, Y+, X-, Y-) at the
    requested low-frequency bins, Hann windowed, 50% segment overlap.

    Spectra follow the one-sided-cosine convention (half the two-sided PSD):
    a unit-damping vacuum mode quadrature gives 2/(1+omega^2).
    """
    comps = np.stack([series_p.real, series_p.imag, series_m.real, series_m.imag])
    nt = comps.shape[-1]
    if n_fft > nt:
        n_fft = nt
    hop = max(1, n_fft // 2)
    window = np.hanning(n_fft)
    norm = sample_dt / np.sum(window**2)
    acc = np.zeros((4, 4))
    count = 0
    for start in range(0, nt - n_fft + 1, hop):
        seg = comps[..., start:start + n_fft] * window
        F = np.fft.rfft(seg, axis=-1)[..., list(bins)]
        # cross-periodogram, averaged over trajectories and bins
        cross = np.einsum("iab,jab->ij", F, np.conj(F)).real
        acc += norm * cross / (F.shape[1] * F.shape[2])
        count += 1
    if count == 0:
        raise InsufficientStatistics("time series shorter than one Welch segment")
    return 0.5 * acc / count  # /2: one-sided-cosine convention


@dataclass
class SpectralMoments:
    """Low-frequency cross-spectral matrix of the pair plus its vacuum twin."""

    matrix: np.ndarray
    vacuum: np.ndarray


def spectral_moments(m: ModePairMoments, segments: int = WELCH_SEGMENTS,
                     bins=LOW_FREQ_BINS) -> SpectralMoments:
    if m.series_p is None or m.sample_dt is None:
        raise InsufficientStatistics("no time series stored for spectral estimates")
    if m.calibration is None:
        raise InsufficientStatistics("zero-frequency path requires a vacuum calibration")
    sp = np.atleast_2d(m.series_p)
    smx = np.atleast_2d(m.series_m)
    n_fft = max(8, sp.shape[-1] // segments)
    mat = _welch_cross_matrix(sp, smx, m.sample_dt, n_fft, bins)
    vac = m.calibration.cross_matrix(m.k, m.sample_dt, n_fft, bins)
    return SpectralMoments(matrix=mat, vacuum=vac)


def quad_variance_spectral(sm: SpectralMoments, theta: float, phi: float,
                           wp: float = 1.0, wm: float = 1.0) -> float:
    """Low-frequency output variance: shot level plus twice the vacuum-
    subtracted quadrature spectrum."""
    c = _quad_coeffs(theta, phi, wp, wm)
    s = float(c @ sm.matrix @ c)
    s_vac = float(c @ sm.vacuum @ c)
    return (wp**2 + wm**2) + 2.0 * (s - s_vac)


# ---------------------------------------------------------------------------
# derived criteria


def _variance_terms(m, theta, phi, ordering):
    """(VarA, VarB, Cov) of the two single-mode quadratures in physical units
    (vacuum VarA = VarB = 1), for either ordering path."""
    if ordering == "equal-time":
        c = m.central_moments()
        var_a = _q_variance(c, theta, 0.0, 1.0, 0.0) - 1.0
        var_b = _q_variance(c, theta + phi, 0.0, 0.0, 1.0) - 1.0
        # V(lambda) = VarA + 2 lambda Cov + lambda^2 VarB
        cov = 0.5 * (_q_variance(c, theta, phi, 1.0, 1.0)
                     - _q_variance(c, theta, 0.0, 1.0, 0.0)
                     - _q_variance(c, theta + phi, 0.0, 0.0, 1.0))
    else:
        sm = m if isinstance(m, SpectralMoments) else spectral_moments(m)
        ca = _quad_coeffs(theta, 0.0, 1.0, 0.0)
        cb = _quad_coeffs(theta + phi, 0.0, 0.0, 1.0)
        var_a = 1.0 + 2.0 * float(ca @ (sm.matrix - sm.vacuum) @ ca)
        var_b = 1.0 + 2.0 * float(cb @ (sm.matrix - sm.vacuum) @ cb)
        cov = 2.0 * float(ca @ sm.matrix @ cb)
    return var_a, var_b, cov


def optimal_lambda(m, theta: float, phi: float, ordering: str = "equal-time"):
    """Weight minimizing the joint-quadrature variance, with the residual
    conditional variance: lambda* = -Cov/Var(X_B), V = Var(X_A) - Cov^2/Var(X_B)."""
    var_a, var_b, cov = _variance_terms(m, theta, phi, ordering)
    if abs(var_b) < 1e-30:
        raise ZeroDivisionError("degenerate second-mode quadrature variance")
    lam = -cov / var_b
    return lam, var_a - cov**2 / var_b


def epr_product(m, theta0: float, phi0: float, ordering: str = "equal-time") -> float:
    """Reid EPR product of the lambda-minimized conjugate joint-quadrature
    variances; below 1 flags the EPR paradox."""
    _, v1 = optimal_lambda(m, theta0, phi0, ordering)
    _, v2 = optimal_lambda(m, theta0 + np.pi / 2, phi0 + np.pi, ordering)
    return v1 * v2


def inseparability(m, theta0: float, phi0: float, a: float = 1.0,
                   ordering: str = "equal-time"):
    """Weighted-quadrature variance sum and its ratio to the separability
    boundary 2(a^2 + 1/a^2); ratio below 1 certifies inseparability."""
    if a <= 0:
        raise ValueError("weight a must be positive")
    wp, wm = a, 1.0 / a
    if ordering == "equal-time":
        v1 = quad_variance_equal_time(m, theta0, phi0, wp, wm)
        v2 = quad_variance_equal_time(m, theta0 + np.pi / 2, phi0 + np.pi, wp, wm)
    else:
        sm = m if isinstance(m, SpectralMoments) else spectral_moments(m)
        v1 = quad_variance_spectral(sm, theta0, phi0, wp, wm)
        v2 = quad_variance_spectral(sm, theta0 + np.pi / 2, phi0 + np.pi, wp, wm)
    total = v1 + v2
    bound = 2.0 * (a**2 + a**-2)
    return total, total / bound


def best_phi(m, theta_grid: np.ndarray, phi_grid: np.ndarray, lam: float = 1.0,
             ordering: str = "equal-time") -> float:
    """Interference angle whose best theta gives the deepest variance
    (ties broken towards the smallest phi)."""
    if len(theta_grid) == 0 or len(phi_grid) == 0:
        raise ValueError("angle grids must be non-empty")
    sm = spectral_moments(m) if ordering == "zero-frequency" else None
    best = None
    best_phi_val = None
    for phi in phi_grid:
        if ordering == "equal-time":
            vmin = min(quad_variance_equal_time(m, th, phi, 1.0, lam) for th in theta_grid)
        else:
            vmin = min(quad_variance_spectral(sm, th, phi, 1.0, lam) for th in theta_grid)
        if best is None or vmin < best - 1e-15:
            best, best_phi_val = vmin, float(phi)
    return best_phi_val


@dataclass
class AngleScan:
    thetas: np.ndarray
    phis: np.ndarray
    values: np.ndarray          # shape (n_theta, n_phi)
    criterion: str
    min_value: float
    min_at: tuple
    max_value: float
    max_at: tuple
    squeezed_measure: float     # measure of {theta : V(theta, best phi) < 1}


def angle_scan(m, theta_grid: np.ndarray, phi_grid: np.ndarray,
               criterion: str = "variance", lam: float = 1.0, a: float = 1.0,
               ordering: str = "equal-time") -> AngleScan:
    """Dense map of a criterion over the two angles.

    For the variance criterion, also reports the measure of squeezed angles
    {theta : V < 1} along the best interference angle.
    """
    if len(theta_grid) == 0 or len(phi_grid) == 0:
        raise ValueError("angle grids must be non-empty")
    sm = None
    if ordering == "zero-frequency":
        sm = m if isinstance(m, SpectralMoments) else spectral_moments(m)
    vals = np.empty((len(theta_grid), len(phi_grid)))
    for i, th in enumerate(theta_grid):
        for j, ph in enumerate(phi_grid):
            if criterion == "variance":
                if ordering == "equal-time":
                    vals[i, j] = quad_variance_equal_time(m, th, ph, 1.0, lam)
                else:
                    vals[i, j] = quad_variance_spectral(sm, th, ph, 1.0, lam)
            elif criterion == "epr":
                vals[i, j] = epr_product(sm if sm is not None else m, th, ph, ordering)
            elif criterion == "insep":
                vals[i, j] = inseparability(sm if sm is not None else m, th, ph, a,
                                            ordering)[1]
            else:
                raise ValueError(f"unknown criterion {criterion!r}")
    imin = np.unravel_index(np.argmin(vals), vals.shape)
    imax = np.unravel_index(np.argmax(vals), vals.shape)
    measure = 0.0
    if criterion == "variance":
        jbest = int(np.argmin(vals.min(axis=0)))
        dtheta = np.pi / len(theta_grid)
        measure = float(np.count_nonzero(vals[:, jbest] < 1.0) * dtheta)
    return AngleScan(
        thetas=np.asarray(theta_grid), phis=np.asarray(phi_grid), values=vals,
        criterion=criterion,
        min_value=float(vals[imin]), min_at=(float(theta_grid[imin[0]]), float(phi_grid[imin[1]])),
        max_value=float(vals[imax]), max_at=(float(theta_grid[imax[0]]), float(phi_grid[imax[1]])),
        squeezed_measure=measure,
    )


def default_theta_grid(n: int = 64) -> np.ndarray:
    return np.linspace(0.0, np.pi, n, endpoint=False)


def default_phi_grid(n: int = 64) -> np.ndarray:
    return np.linspace(0.0, 2 * np.pi, n, endpoint=False)


# ---------------------------------------------------------------------------
# shot-noise calibration


@dataclass
class CalibrationRecord:
    """Vacuum reference: per-mode Q intensities and raw vacuum mode series.

    A pure function of (grid, epsilon, dt, seed, durations): identical inputs
    reproduce the record exactly, so it can be shared across presets.
    """

    wavenumbers: np.ndarray
    mode_intensity: np.ndarray           # <|a_k|^2>_Q per mode, vacuum ~ 1
    series: dict                         # mode index -> complex array (ntraj, nt)
    sample_dt: float
    seed: int
    manifest: dict

    def vacuum_series(self, k: float, grid_dk: float):
        idx = min(self.series, key=lambda i: abs(self.wavenumbers[i] - k))
        if abs(self.wavenumbers[idx] - k) > 0.5 * grid_dk:
            raise KeyError(f"no vacuum series stored near k={k}")
        return self.series[idx]

    def cross_matrix(self, k: float, sample_dt: float, n_fft: int, bins) -> np.ndarray:
        if self.sample_dt != sample_dt:
            raise ValueError("calibration sampled at a different interval than the data")
        dk = np.min(np.diff(self.wavenumbers))
        sp = np.atleast_2d(self.vacuum_series(k, dk))
        smx = np.atleast_2d(self.vacuum_series(-k, dk))
        return _welch_cross_matrix(sp, smx, sample_dt, n_fft, bins)


def calibrate_shot_noise(params: ModelParams, grid: Grid, settings, master_seed: int,
                         n_trajectories: int = 64, duration: float = 400.0,
                         burn_in: float = 20.0, stride: int = 10,
                         store_modes=()) -> CalibrationRecord:
    """Run the identical pipeline with driving and parametric coupling off.

    Returns per-mode vacuum Q intensities (expected 1) and, for the modes in
    ``store_modes`` (wavenumber values), the raw vacuum amplitude series used
    by all zero-frequency estimates.
    """
    from dataclasses import replace as _replace

    from .dynamics import Stepper
    from .streams import derive_stream

    vac_params = _replace(params, pump_amplitude=0.0, coupling_enabled=False,
                          noise_enabled=True)
    rngs = [derive_stream(master_seed, i) for i in range(n_trajectories)]
    a0 = np.zeros((n_trajectories, grid.n_points), complex)
    a1 = np.zeros_like(a0)
    stepper = Stepper(vac_params, grid, settings)
    t = 0.0
    n_burn = int(round(burn_in / settings.dt))
    n_meas = int(round(duration / settings.dt))
    for _ in range(n_burn):
        a0, a1, t = stepper.step_arrays(a0, a1, t, rngs)
    idxs = sorted({grid.mode_index(k) for k in store_modes})
    inten = np.zeros(grid.n_points)
    count = 0
    snaps = {i: [] for i in idxs}
    for s in range(n_meas):
        a0, a1, t = stepper.step_arrays(a0, a1, t, rngs)
        if (s + 1) % stride == 0:
            modes = far_field_arrays(a1, vac_params, grid)
            inten += np.sum(np.abs(modes) ** 2, axis=0)
            count += n_trajectories
            for i in idxs:
                snaps[i].append(modes[:, i].copy())
    series = {i: np.stack(snaps[i], axis=1) for i in idxs} if count else {}
    manifest = {"seed": master_seed, "n_trajectories": n_trajectories,
                "duration": duration, "burn_in": burn_in, "stride": stride,
                "dt": settings.dt, "epsilon": params.noise_strength,
                "grid": {"n": grid.n_points, "length": grid.length}}
    return CalibrationRecord(
        wavenumbers=grid.wavenumbers.copy(),
        mode_intensity=inten / max(count, 1),
        series=series,
        sample_dt=settings.dt * stride,
        seed=master_seed,
        manifest=manifest,
    )
