"""Gross-Pitaevskii travelling waves on a periodic box.

Profile equation for speed c:  i c d1 u + Lap u + u (1 - |u|^2) = 0.
With the real inner product <a, b> = Re(a conj b), the gradients of the
Ginzburg-Landau energy and of the momentum are

    grad E = -Lap u - u (1 - |u|^2),    grad p = i d1 u,

so travelling waves are the critical points grad E = c grad p.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import _kernels
from .spectral_core import (
    ComplexField2,
    Grid2,
    RealField2,
    inv_d1_values,
    integrate_values,
    load_field,
)

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class LiftingError(ValueError):
    """The wavefunction comes too close to zero (or winds) to be lifted."""


class StagnationError(RuntimeError):
    pass


class MinimizationError(RuntimeError):
    pass


# ------------------------------------------------------------ primitives

def _grad_hat(grid: Grid2, uh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return grid.deriv_symbol(1, 1) * uh, grid.deriv_symbol(2, 1) * uh


def _lap_symbol(grid: Grid2) -> np.ndarray:
    # Square of the first-derivative symbols so the gradient matches the
    # discrete energy exactly (Nyquist modes carry no gradient energy).
    return grid.deriv_symbol(1, 1) ** 2 + grid.deriv_symbol(2, 1) ** 2


def gl_energy_values(grid: Grid2, u: np.ndarray) -> float:
    uh = grid.fft(u)
    g1h, g2h = _grad_hat(grid, uh)
    kin = grid.cell_area / (grid.n1 * grid.n2) * 0.5 * np.sum(np.abs(g1h) ** 2 + np.abs(g2h) ** 2)
    pot = 0.25 * integrate_values(grid, (1.0 - np.abs(u) ** 2) ** 2)
    return float(kin + pot)


def gl_energy(u: ComplexField2) -> float:
    """1/2 int |grad u|^2 + 1/4 int (1 - |u|^2)^2."""
    return gl_energy_values(u.grid, u.values)


def momentum_values(grid: Grid2, u: np.ndarray) -> float:
    d1u = grid.ifft(grid.deriv_symbol(1, 1) * grid.fft(u))
    return 0.5 * integrate_values(grid, np.real(1j * d1u * np.conj(u - 1.0)))


def momentum(u: ComplexField2) -> float:
    """1/2 int <i d1 u, u - 1> with <a, b> = Re(a conj b)."""
    return momentum_values(u.grid, u.values)


def energy_gradient(grid: Grid2, u: np.ndarray, uh: Optional[np.ndarray] = None) -> np.ndarray:
    """L2 gradient of gl_energy (per unit area, i.e. without the cell weight)."""
    if uh is None:
        uh = grid.fft(u)
    return -grid.ifft(_lap_symbol(grid) * uh) - _kernels.gp_nonlinear(u)


def momentum_gradient(grid: Grid2, u: np.ndarray, uh: Optional[np.ndarray] = None) -> np.ndarray:
    if uh is None:
        uh = grid.fft(u)
    return 1j * grid.ifft(grid.deriv_symbol(1, 1) * uh)


def _inner(grid: Grid2, a: np.ndarray, b: np.ndarray) -> float:
    return integrate_values(grid, np.real(a * np.conj(b)))


def _l2(grid: Grid2, a: np.ndarray) -> float:
    return math.sqrt(max(_inner(grid, a, a), 0.0))


@dataclass(frozen=True)
class TWCResidual:
    value: float
    trivial: bool


def twc_residual_report(u: ComplexField2, c: float) -> TWCResidual:
    grid = u.grid
    uh = grid.fft(u.values)
    g1h, g2h = _grad_hat(grid, uh)
    grad_norm = math.sqrt(grid.cell_area / (grid.n1 * grid.n2)
                          * np.sum(np.abs(g1h) ** 2 + np.abs(g2h) ** 2))
    pot_norm = _l2(grid, 1.0 - np.abs(u.values) ** 2)
    scale = grad_norm + pot_norm
    if scale <= 1e-14 * math.sqrt(grid.area):
        return TWCResidual(0.0, True)
    r = c * momentum_gradient(grid, u.values, uh) - energy_gradient(grid, u.values, uh)
    return TWCResidual(_l2(grid, r) / scale, False)


def twc_residual(u: ComplexField2, c: float) -> float:
    """||i c d1 u + Lap u + u(1-|u|^2)|| / (||grad u|| + ||1 - |u|^2||); 0 for constants."""
    return twc_residual_report(u, c).value


# ----------------------------------------------------------------- lifting

def lift_values(grid: Grid2, u: np.ndarray, min_modulus: float = 0.5,
                max_correction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    rho = np.abs(u)
    if rho.min() < min_modulus:
        raise LiftingError(f"min|u| = {rho.min():.4f} < {min_modulus}: vortex risk, lifting refused")
    uh = grid.fft(u)
    g1 = grid.ifft(grid.deriv_symbol(1, 1) * uh)
    g2 = grid.ifft(grid.deriv_symbol(2, 1) * uh)
    cu = np.conj(u)
    p1 = np.imag(cu * g1) / rho**2
    p2 = np.imag(cu * g2) / rho**2
    # Least-squares potential for (p1, p2): zero-mean phase.
    D1, D2 = grid.deriv_symbol(1, 1), grid.deriv_symbol(2, 1)
    den = np.abs(D1) ** 2 + np.abs(D2) ** 2
    num = np.conj(D1) * grid.fft(p1) + np.conj(D2) * grid.fft(p2)
    with np.errstate(divide="ignore", invalid="ignore"):
        phih = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    phi = grid.ifft_real(phih)
    # Global constant fixed at the point of maximal modulus.
    k = np.unravel_index(np.argmax(rho), rho.shape)
    phi = phi + np.angle(u[k] * np.exp(-1j * phi[k]))
    corr = np.angle(u * np.exp(-1j * phi))
    if np.max(np.abs(corr)) > max_correction:
        raise LiftingError(
            f"phase reconstruction mismatch {np.max(np.abs(corr)):.3f} rad: field winds or is under-resolved")
    return rho, phi + corr


def lift(u: ComplexField2) -> tuple[RealField2, RealField2]:
    """u = rho exp(i phi) with rho = |u| and phi integrated from its gradient."""
    rho, phi = lift_values(u.grid, u.values)
    return RealField2(u.grid, rho), RealField2(u.grid, phi)


def compose(rho: RealField2, phi: RealField2) -> ComplexField2:
    return ComplexField2(rho.grid, rho.values * np.exp(1j * phi.values))


def polar_residuals(rho: RealField2, phi: RealField2, c: float) -> tuple[float, float]:
    """Relative L2 residuals of the amplitude/phase form of the profile equation.

    r1 = c/2 d1 rho^2 + div(rho^2 grad phi)
    r2 = c rho d1 phi - Lap rho - rho (1 - rho^2) + rho |grad phi|^2
    Each is normalized by the sum of the L2 norms of its terms.
    """
    grid = rho.grid
    if rho.values.min() <= 0:
        raise ValueError("amplitude must be positive")
    r = rho.values
    rh = grid.fft(r)
    ph = grid.fft(phi.values)
    D1, D2 = grid.deriv_symbol(1, 1), grid.deriv_symbol(2, 1)
    f1 = grid.ifft_real(D1 * ph)
    f2 = grid.ifft_real(D2 * ph)
    lap_r = grid.ifft_real((grid.deriv_symbol(1, 2) + grid.deriv_symbol(2, 2)) * rh)
    r2sq = r * r
    t_a = 0.5 * c * grid.ifft_real(D1 * grid.fft(r2sq))
    t_b = grid.ifft_real(D1 * grid.fft(r2sq * f1) + D2 * grid.fft(r2sq * f2))
    terms2 = [c * r * f1, -lap_r, -r * (1.0 - r2sq), r * (f1**2 + f2**2)]

    def rel(terms):
        tot = sum(terms)
        scale = sum(_l2(grid, t) for t in terms)
        return 0.0 if scale == 0 else _l2(grid, tot) / scale

    return rel([t_a, t_b]), rel(terms2)


# ----------------------------------------------------------------- states

@dataclass(frozen=True, eq=False)
class GPState:
    """GP travelling-wave candidate."""

    u: ComplexField2
    c: float
    p: float
    E: float
    lifted: Optional[tuple[RealField2, RealField2]] = None
    twc_residual: float = float("nan")
    iterations: int = 0
    trivial: bool = False
    trace: tuple = field(default=(), repr=False)
    eps: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.c < SQRT2:
            raise ValueError(f"speed must lie in [0, sqrt 2), got {self.c}")
        object.__setattr__(self, "eps", math.sqrt(2.0 - self.c * self.c))
        if self.lifted is not None:
            rho, phi = self.lifted
            if rho.values.min() < 0.5 or rho.values.max() > 2.0:
                raise ValueError("lifted amplitude outside [1/2, 2]")
            err = np.max(np.abs(rho.values * np.exp(1j * phi.values) - self.u.values))
            if err > 1e-10:
                raise ValueError(f"lifting recomposition error {err:.2e}")

    @property
    def sigma(self) -> float:
        return discrepancy(self)

    def summary(self) -> dict:
        g = self.u.grid
        return {
            "c": self.c, "eps": self.eps, "p": self.p, "E": self.E,
            "Sigma": discrepancy(self), "twc_residual": self.twc_residual,
            "iterations": self.iterations, "trivial": self.trivial,
            "grid": [g.n1, g.n2], "box": [g.L1, g.L2],
        }


def make_gp_state(u: ComplexField2, c: float, lift_it: bool = True, **extra) -> GPState:
    lifted = lift(u) if lift_it else None
    return GPState(u=u, c=c, p=momentum(u), E=gl_energy(u), lifted=lifted,
                   twc_residual=twc_residual(u, c), **extra)


def trivial_state(grid: Grid2) -> GPState:
    u = ComplexField2.ones(grid)
    return GPState(u=u, c=0.0, p=0.0, E=0.0, lifted=lift(u), twc_residual=0.0, trivial=True)


def discrepancy(state: GPState) -> float:
    """Sigma = sqrt(2) p - E."""
    return SQRT2 * state.p - state.E


# ------------------------------------------------------------ diagnostics

@dataclass(frozen=True)
class PohozaevReport:
    pohozaev_d1: float        # E = int |d1 u|^2
    pohozaev_d2: float        # E = int |d2 u|^2 + c p
    momentum_phase: float     # c p = int rho^2 |grad phi|^2
    momentum_eta: float       # c p = 1/2 int eta^2
    discrepancy_identity: float  # Sigma + 1/2 int |grad rho|^2 = eps^2 p / (sqrt2 + c)
    gradient_balance: float   # int |grad rho|^2 (1 + 1/rho^2) = int eta |grad phi|^2
    energy_bound_holds: bool  # E <= 7 c^2 int eta^2

    def max_defect(self) -> float:
        return max(abs(v) for k, v in self.__dict__.items() if k != "energy_bound_holds")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else (a - b) / scale


def pohozaev_diagnostics(state: GPState) -> PohozaevReport:
    """Signed relative defects of the integral identities satisfied by travelling waves."""
    if state.lifted is None:
        raise ValueError("state carries no lifting")
    grid = state.u.grid
    u = state.u.values
    rho, phi = state.lifted[0].values, state.lifted[1].values
    c, p, E = state.c, state.p, state.E
    uh = grid.fft(u)
    g1h, g2h = _grad_hat(grid, uh)
    w = grid.cell_area / (grid.n1 * grid.n2)
    d1sq = w * np.sum(np.abs(g1h) ** 2)
    d2sq = w * np.sum(np.abs(g2h) ** 2)
    rh, ph = grid.fft(rho), grid.fft(phi)
    r1 = grid.ifft_real(grid.deriv_symbol(1, 1) * rh)
    r2 = grid.ifft_real(grid.deriv_symbol(2, 1) * rh)
    f1 = grid.ifft_real(grid.deriv_symbol(1, 1) * ph)
    f2 = grid.ifft_real(grid.deriv_symbol(2, 1) * ph)
    grho = r1**2 + r2**2
    gphi = f1**2 + f2**2
    eta = 1.0 - rho**2
    eps2 = 2.0 - c * c
    sig = SQRT2 * p - E
    return PohozaevReport(
        pohozaev_d1=_rel(E, d1sq),
        pohozaev_d2=_rel(E, d2sq + c * p),
        momentum_phase=_rel(c * p, integrate_values(grid, rho**2 * gphi)),
        momentum_eta=_rel(c * p, 0.5 * integrate_values(grid, eta**2)),
        discrepancy_identity=_rel(sig + 0.5 * integrate_values(grid, grho),
                                  eps2 * p / (SQRT2 + c)),
        gradient_balance=_rel(integrate_values(grid, grho * (1.0 + 1.0 / rho**2)),
                              integrate_values(grid, eta * gphi)),
        energy_bound_holds=bool(E <= 7.0 * c * c * integrate_values(grid, eta**2) + 1e-300),
    )


# ------------------------------------------------------ 1-D exact solution

def oracle_1d(eps: float, x) -> tuple[np.ndarray, np.ndarray]:
    """KdV soliton N(x) = 3/cosh^2(x/2) and the reference phase-derivative closed form

    dTheta(x) = sqrt(1 - eps^2/2) N(x) / (1 - eps^2/2 N(x)).

    The denominator differs from the exact dark soliton (see ``oracle_1d_exact``).
    """
    if not 0 < eps < SQRT2:
        raise ValueError("eps must lie in (0, sqrt 2)")
    x = np.asarray(x, float)
    N = 3.0 / np.cosh(0.5 * x) ** 2
    dT = math.sqrt(1.0 - eps * eps / 2.0) * N / (1.0 - eps * eps / 2.0 * N)
    return N, dT


def oracle_1d_exact(eps: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Same soliton with the phase derivative integrated from the exact dark soliton:

    dTheta(x) = sqrt(1 - eps^2/2) N(x) / (1 - eps^2/6 N(x)).
    """
    if not 0 < eps < SQRT2:
        raise ValueError("eps must lie in (0, sqrt 2)")
    x = np.asarray(x, float)
    N = 3.0 / np.cosh(0.5 * x) ** 2
    dT = math.sqrt(1.0 - eps * eps / 2.0) * N / (1.0 - eps * eps / 6.0 * N)
    return N, dT


@dataclass(frozen=True)
class TravellingWave1D:
    x: np.ndarray
    rho: np.ndarray
    dphi: np.ndarray
    c: float
    residual: float
    iterations: int

    @property
    def eps(self) -> float:
        return math.sqrt(2.0 - self.c * self.c)


def _d2_matrix(n: int, L: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=2.0 * L / n)
    eye = np.eye(n)
    return np.real(np.fft.ifft(-(k**2)[:, None] * np.fft.fft(eye, axis=0), axis=0))


def solve_tw_1d(c: float, n: int = 512, L: float = 40.0, tol: float = 1e-13,
                max_iter: int = 50) -> TravellingWave1D:
    """One-dimensional travelling wave of speed c by Newton's method on x in [-L, L).

    The phase is eliminated through the conserved flux of the amplitude/phase
    system, phi' = (c/2)(1 - rho^2)/rho^2, leaving
    rho'' = rho (c phi' + phi'^2 - (1 - rho^2)) for an even, localized rho.
    """
    if not 0 < c < SQRT2:
        raise ValueError("c must lie in (0, sqrt 2)")
    eps = math.sqrt(2.0 - c * c)
    x = -L + 2.0 * L / n * np.arange(n)
    D2 = _d2_matrix(n, L)
    mirror = (-np.arange(n)) % n
    # Start below the soliton amplitude so Newton does not fall onto rho = 1.
    rho = np.sqrt(1.0 - 0.9 * 0.5 * eps * eps / np.cosh(0.5 * eps * x) ** 2)

    def parts(r):
        dphi = 0.5 * c * (1.0 - r * r) / (r * r)
        G = r * (c * dphi + dphi * dphi - (1.0 - r * r))
        dd = -c / r**3
        dG = c * dphi + c * r * dd + dphi**2 + 2.0 * r * dphi * dd - 1.0 + 3.0 * r * r
        return dphi, G, dG

    res = float("inf")
    for it in range(1, max_iter + 1):
        _, G, dG = parts(rho)
        F = D2 @ rho - G
        res = float(np.max(np.abs(F)))
        if res < tol:
            break
        J = D2 - np.diag(dG)
        step = np.linalg.lstsq(J, -F, rcond=1e-12)[0]
        rho = rho + step
        # Keep the even branch: the Jacobian is nearly singular along translations.
        rho = 0.5 * (rho + rho[mirror])
        if rho.min() <= 0:
            raise MinimizationError("1-D Newton iteration lost positivity")
    else:
        raise MinimizationError(f"1-D Newton iteration did not converge (residual {res:.3e})")
    dphi, _, _ = parts(rho)
    return TravellingWave1D(x=x, rho=rho, dphi=dphi, c=c, residual=res, iterations=it)


def rescale_1d(tw: TravellingWave1D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slow samples (X, N, dTheta): X = eps x, N = 6 eta/eps^2, dTheta = 6 sqrt2 phi'/eps^2."""
    eps = tw.eps
    X = eps * tw.x
    N = 6.0 * (1.0 - tw.rho**2) / eps**2
    dT = 6.0 * SQRT2 * tw.dphi / eps**2
    return X, N, dT


# ------------------------------------------------------------ minimizer

@dataclass(frozen=True)
class MinimizeParams:
    step: float = 1.0
    max_iter: int = 2000
    grad_tol: float = 1e-7
    momentum_tol: float = 1e-10
    init_eps: Optional[float] = None
    init_field: Optional[Union[str, Path]] = None
    dealias: bool = False
    stagnation_steps: int = 50
    memory: int = 10
    trace_path: Optional[Union[str, Path]] = None

    def __post_init__(self):
        for name in ("step", "grad_tol", "momentum_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


class _Preconditioner:
    """Inverse of the Hessian of E - c0 p at u = 1, applied mode by mode.

    With u - 1 = a + i b the quadratic form has the 2x2 Fourier symbol
    [[k^2 + 2, i c0 k1], [-i c0 k1, k^2]].
    """

    def __init__(self, grid: Grid2, shift: float = 1e-3):
        self.grid = grid
        self.shift = shift
        self.k2 = grid.ksq
        self.k1 = grid.K1
        self.set_speed(SQRT2 * 0.9)

    def set_speed(self, c0: float):
        c0 = min(max(c0, 0.0), SQRT2 * (1.0 - 1e-4))
        self.c0 = c0
        a = self.k2 + 2.0 + self.shift
        d = self.k2 + self.shift
        det = a * d - c0 * c0 * self.k1**2
        self.m11 = d / det
        self.m22 = a / det
        self.m12 = -1j * c0 * self.k1 / det  # acts on b_hat
        self.m21 = 1j * c0 * self.k1 / det   # acts on a_hat

    def __call__(self, g: np.ndarray) -> np.ndarray:
        grid = self.grid
        gh = grid.fft(g)
        gm = np.conj(gh[np.ix_(grid.neg_index1, grid.neg_index2)])
        ah = 0.5 * (gh + gm)
        bh = -0.5j * (gh - gm)
        na = self.m11 * ah + self.m12 * bh
        nb = self.m21 * ah + self.m22 * bh
        return grid.ifft(na) + 1j * grid.ifft(nb)


def _restore_momentum(grid: Grid2, u: np.ndarray, v: np.ndarray, p_target: float) -> np.ndarray:
    """Move along v so that p(u + s v) = p_target (p is quadratic on a periodic box)."""
    d1 = lambda a: grid.ifft(grid.deriv_symbol(1, 1) * grid.fft(a))
    p0 = momentum_values(grid, u)
    b = _inner(grid, 1j * d1(u), v)
    a = 0.5 * _inner(grid, 1j * d1(v), v)
    rhs = p0 - p_target
    if abs(a) < 1e-300:
        s = -rhs / b
    else:
        disc = b * b - 4.0 * a * rhs
        if disc < 0:
            s = -rhs / b
        else:
            r = math.sqrt(disc)
            roots = [(-b + r) / (2 * a), (-b - r) / (2 * a)]
            s = min(roots, key=abs)
    return u + s * v


def initial_guess(p_target: float, grid: Grid2, eps0: Optional[float] = None) -> np.ndarray:
    """Transonic ansatz sqrt(1 - eps^2 N/6) exp(i eps Theta/(6 sqrt2)) from the lump."""
    from .kp_solver import lump_value

    def build(eps):
        slow = grid.scaled(eps, eps * eps / SQRT2)
        X1, X2 = slow.mesh
        N = lump_value(X1, X2)
        T = inv_d1_values(slow, slow.fft(N))
        amp = 1.0 - eps * eps / 6.0 * N
        if amp.min() <= 0.25:
            raise MinimizationError(f"ansatz at eps={eps:.3f} is not liftable (min|u|^2={amp.min():.3f})")
        return np.sqrt(amp) * np.exp(1j * eps * T / (6.0 * SQRT2))

    if eps0 is None:
        eps0 = 0.4
        for _ in range(30):
            u = build(eps0)
            p = momentum_values(grid, u)
            new = eps0 * p_target / p
            if abs(new - eps0) < 1e-10 * eps0:
                break
            eps0 = new
    return build(eps0)


def minimize_fixed_momentum(p_target: float, grid: Grid2,
                            params: MinimizeParams = MinimizeParams()) -> GPState:
    """Minimize E at fixed momentum by preconditioned projected descent.

    The constrained gradient is r = grad E - c grad p with the multiplier
    c = <grad p, P grad E> / <grad p, P grad p>, which makes P r tangent to
    the momentum level set; c is reported as the speed. Search directions come
    from a limited-memory BFGS recursion on r with P as the initial inverse
    Hessian, projected back onto the tangent space. After every step p is
    restored exactly along P grad p, and backtracking keeps the energy trace
    non-increasing.
    """
    if p_target < 0:
        raise ValueError("p_target must be non-negative")
    if p_target == 0:
        return trivial_state(grid)
    if params.init_field is not None:
        f = load_field(params.init_field)
        if not isinstance(f, ComplexField2) or f.grid != grid:
            raise MinimizationError("initial field must be a complex dump on the requested grid")
        u = np.array(f.values)
    else:
        u = initial_guess(p_target, grid, params.init_eps)
    if np.abs(u).min() < 0.5:
        raise LiftingError("initial guess is not liftable (min|u| < 1/2)")

    P = _Preconditioner(grid)
    for _ in range(2):
        u = _restore_momentum(grid, u, P(momentum_gradient(grid, u)), p_target)
    E = gl_energy_values(grid, u)
    ip = lambda a, b: _inner(grid, a, b)
    mem: list[tuple[np.ndarray, np.ndarray, float]] = []
    trace = []
    stalled = 0
    converged = False
    c = float("nan")
    r_prev = u_prev = None
    for it in range(1, params.max_iter + 1):
        uh = grid.fft(u)
        g = energy_gradient(grid, u, uh)
        h = momentum_gradient(grid, u, uh)
        if it == 1 or it % 25 == 0:
            P.set_speed(ip(h, g) / ip(h, h))
        Pg, Ph = P(g), P(h)
        hPh = ip(h, Ph)
        c = ip(h, Pg) / hPh
        r = g - c * h
        gnorm = _l2(grid, r) / twc_scale(grid, u, uh)
        p_now = momentum_values(grid, u)
        trace.append((it, E, p_now, gnorm, c))
        if gnorm < params.grad_tol and abs(p_now - p_target) < params.momentum_tol:
            converged = True
            break
        if it % 50 == 0:
            log.info("gp-min it=%d E=%.12f p=%.12f |grad|=%.3e c=%.10f", it, E, p_now, gnorm, c)

        if r_prev is not None:
            s_k, y_k = u - u_prev, r - r_prev
            sy = ip(s_k, y_k)
            if sy > 1e-14 * math.sqrt(ip(s_k, s_k) * ip(y_k, y_k)):
                mem.append((s_k, y_k, 1.0 / sy))
                if len(mem) > params.memory:
                    mem.pop(0)
        # Two-loop recursion with P as the initial inverse Hessian.
        q = r.copy()
        alphas = []
        for s_k, y_k, rho_k in reversed(mem):
            a_k = rho_k * ip(s_k, q)
            alphas.append(a_k)
            q -= a_k * y_k
        d = P(q)
        for (s_k, y_k, rho_k), a_k in zip(mem, reversed(alphas)):
            d += (a_k - rho_k * ip(y_k, d)) * s_k
        d = -(d - ip(h, d) / hPh * Ph)
        slope = ip(r, d)
        if not slope < 0:
            mem.clear()
            d = -(Pg - c * Ph)
            slope = ip(r, d)

        tau = params.step
        accepted = False
        slack = 1e-14 * abs(E)
        while tau > 1e-12:
            trial = _restore_momentum(grid, u + tau * d, Ph, p_target)
            E_new = gl_energy_values(grid, trial)
            if E_new <= E + 1e-4 * tau * slope + slack:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            stalled += 1
            mem.clear()
            r_prev = None
            if stalled >= params.stagnation_steps:
                raise StagnationError(
                    f"energy did not decrease for {stalled} consecutive steps (|grad|={gnorm:.3e})")
            continue
        stalled = 0
        if np.abs(trial).min() < 0.5:
            raise LiftingError(
                f"lifting lost at iteration {it}: min|u| = {np.abs(trial).min():.4f}")
        u_prev, r_prev = u, r
        u, E = trial, min(E_new, E)
    if params.trace_path is not None:
        write_trace(params.trace_path, trace)
    if not converged:
        raise MinimizationError(
            f"no convergence in {params.max_iter} iterations (|grad|={trace[-1][3]:.3e})")
    uf = ComplexField2(grid, u)
    return make_gp_state(uf, c, iterations=len(trace), trace=tuple(trace))


def twc_scale(grid: Grid2, u: np.ndarray, uh: np.ndarray) -> float:
    g1h, g2h = _grad_hat(grid, uh)
    gn = math.sqrt(grid.cell_area / (grid.n1 * grid.n2) * np.sum(np.abs(g1h) ** 2 + np.abs(g2h) ** 2))
    return gn + _l2(grid, 1.0 - np.abs(u) ** 2)


def write_trace(path: Union[str, Path], trace) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "E", "p", "grad", "c"])
        for it, E, p, g, c in trace:
            wr.writerow([it, f"{E:.17g}", f"{p:.17g}", f"{g:.17g}", f"{c:.17g}"])
