"""KP-I solitary waves: lump, Petviashvili iteration, energies, scalings, kernels.

Solitary waves of speed sigma satisfy, after one x1-derivative,

    d1^4 w - sigma d1^2 w - d2^2 w + 1/2 d1^2 (w^2) = 0,

equivalently the convolution fixed point w = 1/2 K0 * w^2 for sigma = 1 with
K0_hat = xi1^2 / (|xi|^2 + xi1^4).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
import numpy as np
from scipy import integrate as sint
from scipy import special

from . import _kernels
from .spectral_core import (
    Grid2,
    RealField2,
    Symbol2,
    inv_d1_values,
    integrate_values,
    tail_indicator,
)

log = logging.getLogger(__name__)


class IterationDivergedError(RuntimeError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class NotConvergedError(RuntimeError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message}: residual {residual:.3e} after {iterations} iterations")
        self.iterations = iterations
        self.residual = residual


class UnconvergedStateError(ValueError):
    pass


class DivergentIntegralError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KPState:
    """A KP-I solitary-wave candidate and its scalar diagnostics."""

    w: RealField2
    sigma: float
    residual_l2: float
    mass: float
    energy: float
    action: float
    identity_gap: float
    action_gap: float
    tail_indicator: float
    iterations: int = 0
    normalization: float = float("nan")
    history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not self.residual_l2 >= 0:
            raise ValueError("residual must be non-negative")

    def summary(self) -> dict:
        g = self.w.grid
        return {
            "sigma": self.sigma,
            "residual_l2": self.residual_l2,
            "mass": self.mass,
            "energy": self.energy,
            "action": self.action,
            "identity_gap": self.identity_gap,
            "action_gap": self.action_gap,
            "tail_indicator": self.tail_indicator,
            "iterations": self.iterations,
            "normalization": self.normalization,
            "grid": [g.n1, g.n2],
            "box": [g.L1, g.L2],
        }


@dataclass(frozen=True)
class KernelSpec:
    i: int
    j: int
    eps: float

    def __post_init__(self):
        if not (0 <= self.i <= 4 and 0 <= self.j <= 4 and 2 <= self.i + self.j <= 4):
            raise ValueError(f"need 0<=i,j<=4 and 2<=i+j<=4, got ({self.i},{self.j})")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")


# ------------------------------------------------------------------ lump

def lump_value(x1, x2):
    """Closed-form lump 24(3 - x1^2 + x2^2)/(3 + x1^2 + x2^2)^2 (broadcasting)."""
    a = np.asarray(x1, float) ** 2
    b = np.asarray(x2, float) ** 2
    return 24.0 * (3.0 - a + b) / (3.0 + a + b) ** 2


def lump(grid: Grid2) -> RealField2:
    return RealField2(grid, _kernels.lump_values(grid.x1, grid.x2))


# ------------------------------------------------------------- operators

def kp_denominator(k1, k2, eps: float = 0.0):
    return k1**2 + k2**2 + k1**4 + eps**2 * k1**2 * k2**2 + eps**4 / 4.0 * k2**4


def kernel_symbol(spec: KernelSpec) -> Symbol2:
    """xi1^i xi2^j / (|xi|^2 + xi1^4 + eps^2 xi1^2 xi2^2 + eps^4/4 xi2^4), 0 at xi = 0."""
    i, j, eps = spec.i, spec.j, spec.eps

    def ev(k1, k2):
        k1 = np.asarray(k1, float)
        k2 = np.asarray(k2, float)
        q = kp_denominator(k1, k2, eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(q > 0, k1**i * k2**j / np.where(q > 0, q, 1.0), 0.0)

    return Symbol2(ev, f"K^{i},{j}_eps={eps:g}", lambda k1, k2: (k1 == 0) & (k2 == 0))


def kernel_values(grid: Grid2, i: int, j: int, eps: float) -> np.ndarray:
    q = kp_denominator(grid.K1, grid.K2, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(q > 0, grid.K1**i * grid.K2**j / np.where(q > 0, q, 1.0), 0.0)


def _linear_symbol(grid: Grid2, sigma: float = 1.0) -> np.ndarray:
    return grid.K1**4 + sigma * grid.K1**2 + grid.K2**2


def _square_hat(grid: Grid2, w: np.ndarray, dealias: bool) -> np.ndarray:
    h = grid.fft(w * w)
    return grid.dealias(h) if dealias else h


def sw_residual(w: RealField2, sigma: float = 1.0, dealias: bool = True) -> float:
    """||d1^4 w - sigma d1^2 w - d2^2 w + 1/2 d1^2(w^2)|| / ||w||."""
    grid = w.grid
    wh = grid.fft(w.values)
    nw = np.sqrt(np.sum(np.abs(wh) ** 2))
    if nw == 0:
        raise ValueError("residual undefined for the zero field")
    r = _linear_symbol(grid, sigma) * wh - 0.5 * grid.K1**2 * _square_hat(grid, w.values, dealias)
    return float(np.sqrt(np.sum(np.abs(r) ** 2)) / nw)


def fixed_point_defect(w: RealField2, dealias: bool = True) -> float:
    """||w - 1/2 K0 * w^2|| / ||w||."""
    grid = w.grid
    K = kernel_values(grid, 2, 0, 0.0)
    wh = grid.fft(w.values)
    d = wh - 0.5 * K * _square_hat(grid, w.values, dealias)
    return float(np.sqrt(np.sum(np.abs(d) ** 2) / np.sum(np.abs(wh) ** 2)))


# --------------------------------------------------------------- energies

@dataclass(frozen=True)
class KPEnergy:
    value: float
    zero_mode_fraction: float


def energy_kp_report(w: RealField2) -> KPEnergy:
    """E_KP with the xi1 = 0 energy fraction of d2 w as a quality flag."""
    grid = w.grid
    wh = grid.fft(w.values)
    d1 = grid.ifft_real(grid.deriv_symbol(1, 1) * wh)
    d2h = grid.deriv_symbol(2, 1) * wh
    tot = np.sum(np.abs(d2h) ** 2)
    frac = float(np.sum(np.abs(d2h[0, :]) ** 2) / tot) if tot > 0 else 0.0
    a = inv_d1_values(grid, d2h)
    dens = 0.5 * d1**2 + 0.5 * a**2 - w.values**3 / 6.0
    return KPEnergy(integrate_values(grid, dens), frac)


def energy_kp(w: RealField2) -> float:
    """1/2 int (d1 w)^2 + 1/2 int (d1^-1 d2 w)^2 - 1/6 int w^3."""
    return energy_kp_report(w).value


def mass(w: RealField2) -> float:
    return integrate_values(w.grid, w.values**2)


def action(w: RealField2, sigma: float) -> float:
    """S = E_KP + sigma/2 int w^2."""
    return energy_kp(w) + 0.5 * sigma * mass(w)


def _gaps(E: float, M: float, S: float, sigma: float) -> tuple[float, float]:
    # Converged speed-sigma waves satisfy E = -sigma/6 int w^2 and S = sigma/3 int w^2.
    g1 = abs(E + sigma * M / 6.0) / abs(E) if E != 0 else 0.0
    g2 = abs(S - sigma * M / 3.0) / abs(S) if S != 0 else 0.0
    return g1, g2


def make_state(w: RealField2, sigma: float = 1.0, dealias: bool = True, **extra) -> KPState:
    M = mass(w)
    E = energy_kp(w)
    S = E + 0.5 * sigma * M
    g1, g2 = _gaps(E, M, S, sigma)
    res = sw_residual(w, sigma, dealias) if M > 0 else 0.0
    return KPState(w=w, sigma=sigma, residual_l2=res, mass=M, energy=E, action=S,
                   identity_gap=g1, action_gap=g2, tail_indicator=tail_indicator(w), **extra)


# ------------------------------------------------------------ Petviashvili

def petviashvili_solve(init: RealField2, tol: float = 1e-10, max_iter: int = 300,
                       gamma: float = 2.0, dealias: bool = True) -> KPState:
    """Normalized fixed-point iteration for w = 1/2 K0 * w^2 (speed 1).

    w_{n+1}^ = M_n^gamma 1/2 K0^ (w_n^2)^ with
    M_n = <w, L w> / <w, 1/2 xi1^2 (w^2)^>, L^ = xi1^4 + |xi|^2, so M = 1 at a
    solution. Stops when the residual drops below tol, or when the relative
    change drops below tol with the residual already below 10*tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = init.grid
    Lsym = _linear_symbol(grid)
    K0 = kernel_values(grid, 2, 0, 0.0)
    half_k1sq = 0.5 * grid.K1**2
    w = np.array(init.values)
    hist = []
    for it in range(1, max_iter + 1):
        wh = grid.fft(w)
        sqh = _square_hat(grid, w, dealias)
        num = np.sum(Lsym * np.abs(wh) ** 2)
        den = np.sum(half_k1sq * np.real(np.conj(wh) * sqh))
        with np.errstate(divide="ignore", invalid="ignore"):
            M = float(num / den) if den != 0 else float("nan")
        if not np.isfinite(M) or not (1e-3 <= M <= 1e3):
            raise IterationDivergedError(f"normalization factor out of range: M={M!r}", it)
        w_new = grid.ifft_real(M**gamma * 0.5 * K0 * sqh)
        if not np.all(np.isfinite(w_new)):
            raise IterationDivergedError("non-finite iterate", it)
        change = float(np.linalg.norm(w_new - w) / max(np.linalg.norm(w_new), 1e-300))
        w = w_new
        res = sw_residual(RealField2(grid, w), 1.0, dealias)
        hist.append((it, M, res, change))
        if it % 25 == 0:
            log.debug("petviashvili it=%d M=%.12f res=%.3e change=%.3e", it, M, res, change)
        # A small change alone is accepted only once the residual is within 10*tol.
        if res < tol or (change < tol and res <= 10.0 * tol):
            state = make_state(RealField2(grid, w), 1.0, dealias, iterations=it,
                               normalization=M, history=tuple(hist))
            log.info("petviashvili converged in %d iterations, residual %.3e", it, state.residual_l2)
            return state
    raise NotConvergedError("Petviashvili iteration did not converge", max_iter, hist[-1][2])


# ---------------------------------------------------------------- scalings

def rescale_speed(w: RealField2, sigma: float) -> RealField2:
    """w_sigma(x) = sigma w(sqrt(sigma) x1, sigma x2) on the box (L1/sqrt(sigma), L2/sigma)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    g = w.grid
    new = g.scaled(1.0 / math.sqrt(sigma), 1.0 / sigma)
    return RealField2(new, sigma * w.values)


def emin(mu: float, s_kp: float) -> float:
    """Minimal KP energy at mass mu: -mu^3 / (54 S_KP^2)."""
    if mu < 0 or not s_kp > 0:
        raise ValueError("need mu >= 0 and s_kp > 0")
    return -(mu**3) / (54.0 * s_kp**2)


@dataclass(frozen=True)
class SKPEstimate:
    value: float
    action_per_speed: float
    cross_check: float


def s_kp_estimate(state: KPState, max_residual: float = 1e-6) -> SKPEstimate:
    """S_KP estimate (1/3) int w^2, cross-checked against S(w, sigma)/sigma."""
    if not state.residual_l2 < max_residual:
        raise UnconvergedStateError(
            f"state residual {state.residual_l2:.3e} is above {max_residual:.1e}")
    est = state.mass / 3.0
    a = action(state.w, state.sigma) / state.sigma
    return SKPEstimate(est, a, abs(a - est) / abs(a))


# ------------------------------------------------------------ kernel norms

@dataclass(frozen=True)
class KernelNorm:
    value: float
    abs_error: float
    rel_error: float


def kernel_norm_convergent(spec: KernelSpec, alpha: float) -> bool:
    """Whether int |xi|^{2 alpha} |K^{i,j}|^2 dxi is finite."""
    m = spec.i + spec.j
    if not (alpha > -1 and alpha + m - 1 > 0 and alpha + m < 3):
        return False
    if spec.eps == 0:
        # Near xi1 = 0 the angular weight behaves like cos^{2i - 4(alpha + m - 1)}.
        return 2 * spec.i - 4 * (alpha + m - 1) > -1
    return True


def kernel_norm(spec: KernelSpec, alpha: float = 0.0, rtol: float = 1e-6) -> KernelNorm:
    """Homogeneous H^alpha norm (int |xi|^{2 alpha} |K^_eps^{i,j}|^2 dxi)^{1/2}.

    Two-dimensional adaptive quadrature in polar coordinates: an inner
    semi-infinite radial integral nested inside an outer angular integral over
    the first quadrant (the integrand has the four-fold reflection symmetry).
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if not kernel_norm_convergent(spec, alpha):
        raise DivergentIntegralError(
            f"integral diverges for (i,j)=({spec.i},{spec.j}), eps={spec.eps}, alpha={alpha}")
    i, j, eps = spec.i, spec.j, spec.eps
    m = i + j
    a = 2 * alpha + 2 * m - 3  # radial power including the Jacobian
    inner_err = [0.0]

    def radial(t):
        c2 = math.cos(t) ** 2
        qt = (c2 + 0.5 * eps * eps * (1.0 - c2)) ** 2
        if qt == 0.0:
            return 0.0
        f = lambda r: r**a / (1.0 + qt * r * r) ** 2
        r0 = 1.0 / math.sqrt(qt)
        v1, e1 = sint.quad(f, 0.0, r0, epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        v2, e2 = sint.quad(f, r0, np.inf, epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        v = v1 + v2
        inner_err[0] = max(inner_err[0], (e1 + e2) / max(v, 1e-300))
        return c2**i * (1.0 - c2) ** j * v

    # Split the angle where the anisotropic factor switches scale.
    t_break = [math.atan(1.0 / max(eps, 1e-12))] if eps > 0 else []
    pts = [0.0] + [t for t in t_break if 0 < t < math.pi / 2] + [math.pi / 2]
    total, err = 0.0, 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        v, e = sint.quad(radial, lo, hi, epsabs=0.0, epsrel=rtol, limit=400)
        total += v
        err += e
    total *= 4.0
    err = 4.0 * err + inner_err[0] * total
    val = math.sqrt(total)
    return KernelNorm(val, 0.5 * err / val, 0.5 * err / total)


def kernel_norm_closed_form(spec: KernelSpec, alpha: float = 0.0) -> float:
    """Same norm via the exact radial reduction (Beta function) and 1-D angular quadrature."""
    i, j, eps = spec.i, spec.j, spec.eps
    m = i + j
    b = alpha + m - 1
    radial = 0.5 * special.beta(b, 2.0 - b)

    def f(t):
        c2 = math.cos(t) ** 2
        qt = (c2 + 0.5 * eps * eps * (1.0 - c2)) ** 2
        return math.cos(t) ** (2 * i) * math.sin(t) ** (2 * j) / qt**b

    v, _ = sint.quad(f, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-12, limit=500,
                     points=[math.atan(1.0 / eps)] if eps > 0 else None)
    return math.sqrt(4.0 * radial * v)


def fit_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, float))
    ly = np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])
