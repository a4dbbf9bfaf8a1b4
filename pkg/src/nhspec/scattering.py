"""Scattering matrix from resonance pole data.

Pole-sum and resolvent forms of S, the elastic cross section
|1 - S_cc|^2, unwrapped phase shifts, the second-order-pole lineshape
with its vanishing cross section and 2 pi phase sweep, and detection of
zero-width states through their pi phase jump.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarse, PoleOnRealAxis, SingularResolvent


@dataclass
class SMatrixModel:
    """Resonance poles z_k with channel couplings and an optional background."""

    poles: np.ndarray           # (K,)
    couplings: np.ndarray       # (K, C)
    background: np.ndarray = None    # (C, C), subtracted smooth term
    energy_grid: np.ndarray = None

    def __post_init__(self):
        self.poles = np.asarray(self.poles, complex)
        self.couplings = np.atleast_2d(np.asarray(self.couplings, complex))
        if self.couplings.shape[0] != len(self.poles):
            raise ValueError("one coupling row per pole required")
        if (self.poles.imag > 0).any():
            raise ValueError("resonance poles must lie in Im z <= 0")
        if self.background is not None:
            self.background = np.asarray(self.background, complex)
        if self.energy_grid is not None:
            self.energy_grid = np.asarray(self.energy_grid, float)

    @property
    def n_channels(self):
        return self.couplings.shape[1]

    @classmethod
    def from_effective_hamiltonian(cls, h_b, gamma_hat, energy_grid=None):
        """Pole data from the eigendecomposition of H_B - (i/2) g g^T."""
        from . import linalg

        h_b = np.asarray(h_b, float)
        g = np.atleast_2d(np.asarray(gamma_hat, float))
        heff = h_b - 0.5j * g @ g.T
        sys = linalg.c_normalize(linalg.eig(
            linalg.ComplexMatrix(heff, linalg.COMPLEX_SYMMETRIC)))
        couplings = sys.right_vectors.T @ g        # gamma_k^c = sum_i phi_ki g_ic
        return cls(poles=sys.values, couplings=couplings,
                   energy_grid=energy_grid)


def s_matrix_polesum(m, energy, real_pole_tol=0.0):
    """S(E) = 1 - i sum_k gamma_k^c gamma_k^c' / (E - z_k) - background."""
    denom = energy - m.poles
    on_axis = (np.abs(m.poles.imag) <= real_pole_tol) & (denom.real == 0.0) \
        & (denom.imag == 0.0)
    if on_axis.any():
        raise PoleOnRealAxis(
            "requested energy coincides with a zero-width pole",
            energy=float(energy))
    c = m.n_channels
    s = np.eye(c, dtype=complex)
    s = s - 1j * np.einsum("kc,kd,k->cd", m.couplings, m.couplings, 1.0 / denom)
    if m.background is not None:
        s = s - m.background
    return s


def s_matrix_resolvent(h_b, gamma_hat, energy):
    """S = 1 - i g^T (E - H_B + (i/2) g g^T)^{-1} g; unitary for real input."""
    h_b = np.asarray(h_b, float)
    g = np.atleast_2d(np.asarray(gamma_hat, float))
    n = h_b.shape[0]
    a = energy * np.eye(n) - h_b + 0.5j * g @ g.T
    try:
        x = np.linalg.solve(a, g)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent(f"resolvent singular at E = {energy!r}") from exc
    return np.eye(g.shape[1], dtype=complex) - 1j * g.T @ x


# ---------------------------------------------------------------------------
# lineshapes

@dataclass
class LineshapeReport:
    grid: np.ndarray
    s_values: np.ndarray
    sigma: np.ndarray
    phase: np.ndarray           # unwrapped elastic phase shift arg(S)/2
    total_phase_change: float
    sigma_at_center: float
    halfmax_span: float
    breit_wigner_span: float
    minima: list = field(default_factory=list)
    maxima: list = field(default_factory=list)


def _unwrapped_phase(s_values):
    return 0.5 * np.unwrap(np.angle(s_values))


def _extrema(grid, y):
    minima, maxima = [], []
    for i in range(1, len(y) - 1):
        if y[i] < y[i - 1] and y[i] <= y[i + 1]:
            minima.append(float(grid[i]))
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            maxima.append(float(grid[i]))
    return minima, maxima


def _halfmax_span(grid, sigma):
    peak = sigma.max()
    above = sigma >= 0.5 * peak
    idx = np.flatnonzero(above)
    return float(grid[idx[-1]] - grid[idx[0]]) if len(idx) else 0.0


def double_pole_lineshape(e_d, gamma_d, grid):
    """Lineshape of a second-order pole at E_d - (i/2) Gamma_d.

    S = 1 - 2 i Gamma_d D - Gamma_d^2 D^2 with D = 1/(E - E_d + i Gamma_d/2):
    S(E_d) = 1 exactly (the cross section vanishes by interference), the
    unwrapped phase sweeps 2 pi across the feature, and the feature is
    broader than the one-pole resonance of the same width.
    """
    if gamma_d <= 0:
        raise ValueError("gamma_d must be positive")
    grid = np.asarray(grid, float)
    if grid[0] > e_d - 10 * gamma_d or grid[-1] < e_d + 10 * gamma_d:
        raise GridTooCoarse("grid must span E_d +/- 10 Gamma_d")
    if grid[1] - grid[0] > gamma_d / 8.0:
        raise GridTooCoarse("grid must resolve the width by >= 8 points")
    d = 1.0 / (grid - e_d + 0.5j * gamma_d)
    s = 1.0 - 2j * gamma_d * d - gamma_d ** 2 * d ** 2
    sigma = np.abs(1.0 - s) ** 2
    phase = _unwrapped_phase(s)
    minima, maxima = _extrema(grid, sigma)

    d_c = 1.0 / (0.0 + 0.5j * gamma_d)
    s_center = 1.0 - 2j * gamma_d * d_c - gamma_d ** 2 * d_c ** 2

    bw = np.abs(1j * gamma_d / (grid - e_d + 0.5j * gamma_d)) ** 2
    return LineshapeReport(
        grid=grid, s_values=s, sigma=sigma, phase=phase,
        total_phase_change=float(phase[-1] - phase[0]),
        sigma_at_center=float(abs(1.0 - s_center) ** 2),
        halfmax_span=_halfmax_span(grid, sigma),
        breit_wigner_span=_halfmax_span(grid, bw),
        minima=minima, maxima=maxima)


def lineshape(m, grid, channel=0):
    """Elastic cross section and unwrapped phase for a pole model."""
    grid = np.asarray(grid, float)
    widths = -2.0 * m.poles.imag
    # zero-width states can never be resolved on a real grid; they are the
    # business of detect_bic, so only displayable widths gate the step size
    span = grid[-1] - grid[0]
    finite = widths[widths > 1e-12 * span]
    if len(finite) and grid[1] - grid[0] > finite.min() / 8.0:
        raise GridTooCoarse("grid must resolve the narrowest width by >= 8 points")
    s = np.array([s_matrix_polesum(m, e)[channel, channel] for e in grid])
    sigma = np.abs(1.0 - s) ** 2
    phase = _unwrapped_phase(s)
    minima, maxima = _extrema(grid, sigma)
    return LineshapeReport(
        grid=grid, s_values=s, sigma=sigma, phase=phase,
        total_phase_change=float(phase[-1] - phase[0]),
        sigma_at_center=float(sigma[len(grid) // 2]),
        halfmax_span=_halfmax_span(grid, sigma), breit_wigner_span=0.0,
        minima=minima, maxima=maxima)


# ---------------------------------------------------------------------------
# zero-width states

@dataclass
class BicDetection:
    index: int
    energy: float
    phase_jump: float
    peak_resolved: bool


def detect_bic(m, bic_tol=1e-12, channel=0, local_points=401):
    """Flag zero-width states and verify their pi phase-jump signature.

    For each state with width below tolerance inside the grid span, the
    elastic phase is unwrapped on a local grid spanning a few widths
    around the state: it must jump by pi while the cross section shows
    no feature wider than the local window.
    """
    out = []
    widths = -2.0 * m.poles.imag
    if m.energy_grid is not None:
        span_lo, span_hi = float(m.energy_grid[0]), float(m.energy_grid[-1])
    else:
        span_lo, span_hi = -np.inf, np.inf
    for k, z in enumerate(m.poles):
        if widths[k] > bic_tol or not (span_lo <= z.real <= span_hi):
            continue
        half = max(50.0 * max(widths[k], 1e-300), 1e-14 * max(abs(z.real), 1.0))
        local = z.real + np.linspace(-half, half, local_points)
        s = np.array([s_matrix_polesum(m, e)[channel, channel] for e in local])
        phase = _unwrapped_phase(s)
        jump = float(phase[-1] - phase[0])
        coarse = m.energy_grid if m.energy_grid is not None else local
        step = coarse[1] - coarse[0] if len(coarse) > 1 else half
        sig_lo = abs(1.0 - s_matrix_polesum(m, z.real - 0.5 * step)[channel,
                                                                   channel]) ** 2
        sig_hi = abs(1.0 - s_matrix_polesum(m, z.real + 0.5 * step)[channel,
                                                                    channel]) ** 2
        resolved = abs(sig_hi - sig_lo) > 0.1 * max(sig_hi, sig_lo, 1e-300)
        out.append(BicDetection(index=k, energy=float(z.real),
                                phase_jump=jump, peak_resolved=resolved))
    return out
