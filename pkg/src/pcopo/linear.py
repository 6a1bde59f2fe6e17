"""Linearized analysis: pump steady states, Bloch growth rates, thresholds
and below-threshold stationary covariances.

Below threshold the signal vanishes on average, so the pump steady state
decouples and is solved by a truncated harmonic expansion. The signal
linearization couples modes k + n*k_pc to conjugate modes at -k + n*k_pc;
the resulting doubled coupled-mode matrix yields growth rates (instability
thresholds) and, with the noise diffusion matrix, stationary Q-ordered
second moments through a Lyapunov equation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .grid import Grid
from .model import ConfigError, ModelParams, critical_wavenumber

DEFAULT_TRUNCATION = 8


class ThresholdError(RuntimeError):
    """No instability threshold found in the search bracket."""


class NotHurwitzError(RuntimeError):
    """Lyapunov solve requested at or above threshold."""


def _profile_kpc(params: ModelParams) -> float:
    """Periodicity wavenumber of the modulation; falls back to 2*k_c for the
    homogeneous configuration so the Bloch sector still tiles all modes."""
    for prof in (params.delta0, params.delta1):
        if prof.modulated and prof.wavenumber > 0:
            return prof.wavenumber
    return 2.0 * critical_wavenumber(params.delta1.mean)


@dataclass
class PumpSteadyState:
    """Pump profile solving (1 + i*delta0(x)) a0 - i a0'' = E with a1 = 0."""

    alpha0_ss: np.ndarray
    harmonic_coefficients: np.ndarray   # c_n at n*k_pc, n = -N..N
    k_pc: float
    truncation: int
    residual: float

    def harmonic(self, n: int) -> complex:
        N = self.truncation
        if abs(n) > N:
            return 0.0j
        return complex(self.harmonic_coefficients[n + N])

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.alpha0_ss)))


def pump_steady_state(params: ModelParams, grid: Grid,
                      truncation: int = DEFAULT_TRUNCATION) -> PumpSteadyState:
    """Solve the pump equation by harmonic expansion in multiples of k_pc."""
    E = params.pump_amplitude
    kpc = _profile_kpc(params)
    N = truncation
    ns = np.arange(-N, N + 1)
    dim = 2 * N + 1
    M = np.zeros((dim, dim), complex)
    for i, n in enumerate(ns):
        M[i, i] = 1.0 + 1j * (n * kpc) ** 2
        for j, m in enumerate(ns):
            d = params.delta0.fourier_coefficient(n - m, grid) if abs(n - m) <= 2 * N else 0.0
            if d:
                M[i, j] += 1j * d
    rhs = np.zeros(dim, complex)
    rhs[N] = E
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(
            f"pump steady-state system ill-conditioned (cond ~ {cond:.3g})")
    coeffs = np.linalg.solve(M, rhs)
    profile = np.zeros(grid.n_points, complex)
    for c, n in zip(coeffs, ns):
        profile += c * np.exp(1j * n * kpc * grid.x)
    # defect of the full grid equation, spectral Laplacian
    k2 = grid.fft_wavenumbers**2
    lap = np.fft.ifft(-k2 * np.fft.fft(profile))
    defect = (1.0 + 1j * params.delta0.evaluate(grid.x)) * profile - 1j * lap - E
    residual = float(np.max(np.abs(defect)))
    return PumpSteadyState(alpha0_ss=profile, harmonic_coefficients=coeffs,
                           k_pc=kpc, truncation=N, residual=residual)


@dataclass
class BlochOperator:
    """Doubled coupled-mode linearization at Bloch wavenumber ``base_k``.

    Basis ordering: (u_-N..u_N, w_-N..w_N) with u_n the signal mode at
    base_k + n*k_pc and w_n the conjugate mode at -base_k + n*k_pc.
    """

    base_k: float
    truncation: int
    k_pc: float
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return 2 * (2 * self.truncation + 1)

    def mode_wavenumbers(self) -> np.ndarray:
        n = np.arange(-self.truncation, self.truncation + 1)
        return self.base_k + n * self.k_pc

    def conjugation_involution(self) -> np.ndarray:
        """Block-swap permutation P with A(-k) = P conj(A(k)) P.

        The doubled basis pairs each signal harmonic with its conjugate
        partner; complex conjugation therefore exchanges the two blocks
        while reversing the base wavenumber.
        """
        m = 2 * self.truncation + 1
        P = np.zeros((2 * m, 2 * m))
        for i in range(m):
            P[i, m + i] = 1.0
            P[m + i, i] = 1.0
        return P


def assemble_bloch(base_k: float, steady: PumpSteadyState, params: ModelParams,
                   grid: Grid, truncation: int = DEFAULT_TRUNCATION) -> BlochOperator:
    N = truncation
    kpc = steady.k_pc
    ns = np.arange(-N, N + 1)
    m = 2 * N + 1
    d1mean = params.delta1.mean
    A = np.zeros((2 * m, 2 * m), complex)
    d1 = {j: params.delta1.fourier_coefficient(j, grid) for j in range(-2 * N, 2 * N + 1)
          if j != 0}
    for i, n in enumerate(ns):
        kn = base_k + n * kpc
        qn = -base_k + n * kpc
        A[i, i] = -(1.0 + 1j * (d1mean + 2.0 * kn**2))
        A[m + i, m + i] = -(1.0 - 1j * (d1mean + 2.0 * qn**2))
        for j, mm in enumerate(ns):
            dj = d1.get(n - mm, 0.0)
            if dj:
                A[i, j] += -1j * dj
                A[m + i, m + j] += 1j * np.conj(dj)
            A[i, m + j] += steady.harmonic(n + mm)
            A[m + i, j] += np.conj(steady.harmonic(n + mm))
    return BlochOperator(base_k=base_k, truncation=N, k_pc=kpc, matrix=A)


def growth_rate_homogeneous(k: float, alpha0_abs: float, delta1_mean: float) -> float:
    """Closed-form maximal growth rate of the unmodulated signal
    linearization: -1 + sqrt(|a0|^2 - (delta1 + 2k^2)^2) when real."""
    rad = alpha0_abs**2 - (delta1_mean + 2.0 * k**2) ** 2
    return -1.0 + np.sqrt(rad) if rad >= 0 else -1.0


def growth_rate(base_k: float, steady: PumpSteadyState, params: ModelParams,
                grid: Grid, truncation: int = DEFAULT_TRUNCATION,
                boundary_tol: float = 1e-6) -> float:
    """Largest real part of the Bloch spectrum at ``base_k``."""
    op = assemble_bloch(base_k, steady, params, grid, truncation)
    vals, vecs = np.linalg.eig(op.matrix)
    idx = int(np.argmax(vals.real))
    top = float(vals.real[idx])
    # with the coupling effectively off every eigenvalue decays at the cavity
    # rate and the "dominant" eigenvector is arbitrary; skip the check there
    if _modulated(params) and top > -1.0 + 1e-9:
        vec = vecs[:, idx]
        m = 2 * truncation + 1
        weight = (abs(vec[0])**2 + abs(vec[m - 1])**2 + abs(vec[m])**2 + abs(vec[-1])**2)
        if weight / float(np.sum(np.abs(vec) ** 2)) > boundary_tol:
            warnings.warn("boundary harmonics of the dominant Bloch eigenvector "
                          "exceed tolerance; increase the truncation", stacklevel=2)
    return top


def _modulated(params: ModelParams) -> bool:
    return params.delta0.modulated or params.delta1.modulated


def max_growth_rate(params: ModelParams, grid: Grid,
                    truncation: int = DEFAULT_TRUNCATION, scan_points: int = 64,
                    steady: PumpSteadyState | None = None):
    """Maximum growth rate over the reduced Bloch zone, with local refinement
    around the scan maximizer (the neutral mode is sharply peaked near k_c)."""
    from scipy.optimize import minimize_scalar

    if steady is None:
        steady = pump_steady_state(params, grid, truncation)
    kpc = steady.k_pc
    ks = np.linspace(0.0, kpc, scan_points, endpoint=False)
    rates = np.array([growth_rate(k, steady, params, grid, truncation) for k in ks])
    i = int(np.argmax(rates))
    lo = ks[i] - kpc / scan_points
    hi = ks[i] + kpc / scan_points
    res = minimize_scalar(
        lambda k: -growth_rate(k, steady, params, grid, truncation),
        bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-6 * kpc})
    if -res.fun >= rates[i]:
        return float(-res.fun), float(res.x)
    return float(rates[i]), float(ks[i])


def find_threshold(params: ModelParams, grid: Grid,
                   truncation: int = DEFAULT_TRUNCATION, tol: float = 1e-4,
                   bracket: tuple = (0.0, 2.0), scan_points: int = 64) -> float:
    """Pump amplitude where the maximal Bloch growth rate crosses zero.

    Bisection over E; the pump steady state is linear in E below threshold,
    so its unit-pump harmonic profile is computed once and rescaled.
    """
    if params.delta1.mean >= 0:
        raise ConfigError("no off-axis instability: mean signal detuning must be negative")
    unit = pump_steady_state(replace(params, pump_amplitude=1.0), grid, truncation)

    def mg(E: float) -> float:
        st = PumpSteadyState(alpha0_ss=E * unit.alpha0_ss,
                             harmonic_coefficients=E * unit.harmonic_coefficients,
                             k_pc=unit.k_pc, truncation=unit.truncation,
                             residual=E * unit.residual)
        return max_growth_rate(params, grid, truncation, scan_points, steady=st)[0]

    lo, hi = bracket
    if mg(hi) <= 0:
        raise ThresholdError(f"no threshold below E = {hi}")
    glo = mg(lo)
    if glo > 0:
        raise ThresholdError(f"growth rate already positive at E = {lo}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mg(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# stationary covariance (Lyapunov) and spectra


@dataclass
class CovarianceSolution:
    """Q-ordered stationary second moments of one Bloch sector.

    ``second_moments`` is <v v^H> for v = (u_-N..u_N, w_-N..w_N); vacuum
    (E = 0) gives the identity. ``spectra`` maps each requested analysis
    frequency to (A + i w)^-1 D (A^H - i w)^-1.
    """

    operator: BlochOperator
    second_moments: np.ndarray
    spectra: dict

    def _indices(self, k: float):
        N = self.operator.truncation
        m = 2 * N + 1
        kpc = self.operator.k_pc
        nu = (k - self.operator.base_k) / kpc
        if abs(nu - round(nu)) > 1e-9:
            raise KeyError(f"mode k={k} not in this Bloch sector")
        return N + int(round(nu)), m

    def intensity_q(self, k: float) -> float:
        """Q-ordered <a_k a_k^dagger> (vacuum = 1)."""
        i, _ = self._indices(k)
        return float(np.real(self.second_moments[i, i]))

    def intensity(self, k: float) -> float:
        """Normally ordered intensity <a_k^dagger a_k>."""
        return self.intensity_q(k) - 1.0

    def anomalous_pair(self, k: float) -> complex:
        """<a_k a_-k>: u index of k against w index of -(-k)... the w_n mode
        with -base_k + n*k_pc = -k."""
        i, m = self._indices(k)
        N = self.operator.truncation
        nu = (self.operator.base_k - k) / self.operator.k_pc
        j = N + int(round(nu))
        if abs(nu - round(nu)) > 1e-9 or not 0 <= j < m:
            raise KeyError(f"mode -k for k={k} not in this Bloch sector")
        return complex(self.second_moments[i, m + j])

    def anomalous_self(self, k: float) -> complex:
        """<a_k a_k>, nonzero only when 2k is a multiple of k_pc."""
        i, m = self._indices(k)
        N = self.operator.truncation
        nu = (self.operator.base_k + k) / self.operator.k_pc
        j = N + int(round(nu))
        if abs(nu - round(nu)) > 1e-9 or not 0 <= j < m:
            return 0.0j
        return complex(self.second_moments[i, m + j])

    def pair_moments(self, k: float) -> dict:
        """Central Q moments of the (+k, -k) pair in quantum-stats form."""
        i, m = self._indices(k)
        jm, _ = self._indices_neg(k)
        S = self.second_moments
        # <a_+ a_-^*> lives in the u-u block when -k is itself a sector mode
        # (2k a multiple of k_pc); otherwise it vanishes by Bloch symmetry.
        N = self.operator.truncation
        nu2 = (-k - self.operator.base_k) / self.operator.k_pc
        i2 = N + int(round(nu2))
        if abs(nu2 - round(nu2)) <= 1e-9 and 0 <= i2 < m:
            apmc = complex(S[i, i2])
        else:
            apmc = 0.0j
        return {
            "npp": float(np.real(S[i, i])),
            "nmm": float(np.real(S[m + jm, m + jm])),
            "app": self.anomalous_self(k),
            "amm": self._anomalous_self_neg(k),
            "apm": self.anomalous_pair(k),
            "apmc": apmc,
        }

    def _indices_neg(self, k: float):
        # w_n with -base_k + n*k_pc = -k
        N = self.operator.truncation
        nu = (self.operator.base_k - k) / self.operator.k_pc
        j = N + int(round(nu))
        if abs(nu - round(nu)) > 1e-9:
            raise KeyError(f"mode -k for k={k} not in this Bloch sector")
        return j, 2 * N + 1

    def _anomalous_self_neg(self, k: float) -> complex:
        # <a_-k a_-k> = <u_n w_j^*> with base_k + n*k_pc = -k
        N = self.operator.truncation
        m = 2 * N + 1
        nu = (-k - self.operator.base_k) / self.operator.k_pc
        i = N + int(round(nu))
        if abs(nu - round(nu)) > 1e-9 or not 0 <= i < m:
            return 0.0j
        j, _ = self._indices_neg(k)
        return complex(self.second_moments[i, m + j])


def noise_diffusion(op: BlochOperator, steady: PumpSteadyState,
                    params: ModelParams) -> np.ndarray:
    """Diffusion matrix <dW dW^H>/dt of the doubled Bloch sector in
    normalized far-field units (vacuum diagonal = noise_diagonal)."""
    N = op.truncation
    m = 2 * N + 1
    D = np.zeros((2 * m, 2 * m), complex)
    D[:m, :m] = params.noise_diagonal * np.eye(m)
    D[m:, m:] = params.noise_diagonal * np.eye(m)
    for i in range(m):
        for j in range(m):
            c = steady.harmonic((i - N) + (j - N))
            D[i, m + j] = params.noise_anomalous * c
    D[m:, :m] = D[:m, m:].conj().T
    return D


def stationary_covariance(base_k: float, steady: PumpSteadyState, params: ModelParams,
                          grid: Grid, truncation: int = DEFAULT_TRUNCATION,
                          omegas=()) -> CovarianceSolution:
    """Solve A S + S A^H + D = 0 for the stationary Q moments, plus the
    spectral matrices at the requested analysis frequencies."""
    op = assemble_bloch(base_k, steady, params, grid, truncation)
    A = op.matrix
    ev = np.linalg.eigvals(A)
    if np.max(ev.real) >= 0:
        raise NotHurwitzError(
            f"Lyapunov solve undefined, A not Hurwitz (max Re eig = {np.max(ev.real):.3g})")
    D = noise_diffusion(op, steady, params)
    S = scipy.linalg.solve_continuous_lyapunov(A, -D)
    S = 0.5 * (S + S.conj().T)
    spectra = {}
    for w in omegas:
        M = np.linalg.inv(A + 1j * w * np.eye(A.shape[0]))
        spectra[float(w)] = M @ D @ M.conj().T
    return CovarianceSolution(operator=op, second_moments=S, spectra=spectra)


def intensity_spectrum(params: ModelParams, grid: Grid,
                       truncation: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """Normally ordered stationary intensity <a_k^dagger a_k> for every grid
    wavenumber, from per-sector Lyapunov solves."""
    steady = pump_steady_state(params, grid, truncation)
    kpc = steady.k_pc
    out = np.empty(grid.n_points)
    cache: dict = {}
    for idx, k in enumerate(grid.wavenumbers):
        base = k - np.floor(k / kpc) * kpc
        key = round(base / grid.dk)
        if key not in cache:
            cache[key] = stationary_covariance(base, steady, params, grid, truncation)
        try:
            out[idx] = cache[key].intensity(k)
        except KeyError:
            # beyond the truncated sector; strongly damped, essentially vacuum
            out[idx] = 0.0
    return out


# ---------------------------------------------------------------------------
# CSV emitters


def write_threshold_table(path, rows) -> None:
    """rows: iterable of (preset_name, E_th)."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["preset", "E_th"])
        for name, eth in rows:
            w.writerow([name, f"{eth:.6f}"])


def write_intensity_vs_pump(path, pumps, intensities, errors=None, label="") -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["E", "intensity"] + (["stderr"] if errors is not None else [])
        if label:
            w.writerow([f"# {label}"])
        w.writerow(header)
        for i, E in enumerate(pumps):
            row = [f"{E:.6g}", f"{intensities[i]:.8g}"]
            if errors is not None:
                row.append(f"{errors[i]:.3g}")
            w.writerow(row)


def write_growth_vs_k(path, ks, rates) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "growth_rate"])
        for k, r in zip(ks, rates):
            w.writerow([f"{k:.8g}", f"{r:.8g}"])
