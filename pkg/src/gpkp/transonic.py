"""Slow-variable description of transonic travelling waves.

A liftable wavefunction u = rho exp(i phi) of speed c = sqrt(2 - eps^2) is
described on the stretched grid X1 = eps x1, X2 = eps^2 x2 / sqrt2 by

    N = 6 eta / eps^2,    Theta = 6 sqrt2 phi / eps,    eta = 1 - rho^2.

As eps -> 0 both N and d1 Theta approach a KP ground state. This module holds
the change of variables, the energy and momentum expansions in (N, Theta),
the rescaled equations, a fixed-point solver working directly in slow
variables and the eps-sweep harness.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .gp_solver import GPState, discrepancy, lift_values
from .kp_solver import (
    emin,
    energy_kp,
    fit_slope,
    kp_denominator,
    lump_value,
    mass,
    petviashvili_solve,
    s_kp_estimate,
)
from .spectral_core import (
    ComplexField2,
    Grid2,
    RealField2,
    d_real,
    dump_field,
    integrate_values,
    norm_l2,
    shift_align,
)

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class AmplitudeError(ValueError):
    """1 - eps^2 N / 6 is not positive somewhere."""


class FixedPointDivergedError(RuntimeError):
    pass


class FixedPointNotConvergedError(RuntimeError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < SQRT2:
        raise ValueError(f"eps must lie in (0, sqrt 2), got {eps}")


def _amplitude(N: np.ndarray, eps: float) -> np.ndarray:
    rho2 = 1.0 - eps * eps / 6.0 * N
    if rho2.min() <= 0:
        raise AmplitudeError(f"1 - eps^2 N/6 reaches {rho2.min():.4f} at eps={eps}")
    return rho2


def fast_grid(slow: Grid2, eps: float) -> Grid2:
    """Fast grid whose stretched image is ``slow``: box (L1/eps, sqrt2 L2/eps^2)."""
    return slow.scaled(1.0 / eps, SQRT2 / (eps * eps))


def slow_grid(fast: Grid2, eps: float) -> Grid2:
    return fast.scaled(eps, eps * eps / SQRT2)


# ---------------------------------------------------------------- SlowPair

@dataclass(frozen=True, eq=False)
class SlowPair:
    """Slow fields (N, Theta) at parameter eps.

    ``dTheta`` optionally supplies (d1 Theta, d2 Theta) directly; this is used
    for one-dimensional sections where the phase is not periodic but its
    derivative is.
    """

    N: RealField2
    Theta: RealField2
    eps: float
    dTheta: Optional[tuple[RealField2, RealField2]] = None

    def __post_init__(self):
        _check_eps(self.eps)
        if self.N.grid != self.Theta.grid:
            raise ValueError("N and Theta must share a grid")

    @property
    def grid(self) -> Grid2:
        return self.N.grid

    @cached_property
    def _Nh(self) -> np.ndarray:
        return self.grid.fft(self.N.values)

    @cached_property
    def _Th(self) -> np.ndarray:
        return self.grid.fft(self.Theta.values)

    @cached_property
    def N1(self) -> np.ndarray:
        return d_real(self.grid, self._Nh, 1)

    @cached_property
    def N2(self) -> np.ndarray:
        return d_real(self.grid, self._Nh, 2)

    @cached_property
    def T1(self) -> np.ndarray:
        if self.dTheta is not None:
            return np.asarray(self.dTheta[0].values)
        return d_real(self.grid, self._Th, 1)

    @cached_property
    def T2(self) -> np.ndarray:
        if self.dTheta is not None:
            return np.asarray(self.dTheta[1].values)
        return d_real(self.grid, self._Th, 2)

    # diagnostics ---------------------------------------------------------
    @cached_property
    def energies(self) -> tuple[float, float, float]:
        return energy_expansion(self)

    @property
    def E0(self) -> float:
        return self.energies[0]

    @property
    def E2(self) -> float:
        return self.energies[1]

    @property
    def E4(self) -> float:
        return self.energies[2]

    @cached_property
    def momentum_slow(self) -> float:
        return momentum_slow(self)

    @cached_property
    def dist_N_dTheta(self) -> float:
        return math.sqrt(integrate_values(self.grid, (self.N.values - self.T1) ** 2))

    @cached_property
    def ekp_of_dTheta(self) -> float:
        return energy_kp(RealField2(self.grid, self.T1))

    @cached_property
    def mass_dTheta(self) -> float:
        return integrate_values(self.grid, self.T1**2)

    @cached_property
    def sigma_value(self) -> float:
        """Discrepancy sqrt2 p - E evaluated through the slow expansions."""
        e = self.eps
        return SQRT2 * self.momentum_slow - SQRT2 * e / 144.0 * (self.E0 + e**2 * self.E2 + e**4 * self.E4)

    def summary(self) -> dict:
        return {
            "eps": self.eps, "p": self.momentum_slow,
            "E0": self.E0, "E2": self.E2, "E4": self.E4,
            "Sigma": self.sigma_value, "dist_N_dTheta": self.dist_N_dTheta,
            "ekp_dTheta": self.ekp_of_dTheta, "mass_dTheta": self.mass_dTheta,
        }


# ------------------------------------------------------- change of variables

def rescale(u: ComplexField2, eps: float) -> SlowPair:
    """(N, Theta) = (6 eta/eps^2, 6 sqrt2 phi/eps) sampled on the stretched grid."""
    _check_eps(eps)
    rho, phi = lift_values(u.grid, u.values)
    g = slow_grid(u.grid, eps)
    N = 6.0 * (1.0 - rho**2) / eps**2
    T = 6.0 * SQRT2 * phi / eps
    return SlowPair(RealField2(g, N), RealField2(g, T), eps)


def unrescale(N: RealField2, Theta: RealField2, eps: float) -> ComplexField2:
    """u = sqrt(1 - eps^2 N/6) exp(i eps Theta / (6 sqrt2)) on the fast grid."""
    _check_eps(eps)
    rho2 = _amplitude(N.values, eps)
    return ComplexField2(fast_grid(N.grid, eps),
                         np.sqrt(rho2) * np.exp(1j * eps * Theta.values / (6.0 * SQRT2)))


# --------------------------------------------------------- expansions

def energy_expansion(sp: SlowPair) -> tuple[float, float, float]:
    """(E0, E2, E4) with E = sqrt2 eps/144 (E0 + eps^2 E2 + eps^4 E4)."""
    g, e = sp.grid, sp.eps
    N, N1, N2, T1, T2 = sp.N.values, sp.N1, sp.N2, sp.T1, sp.T2
    if (1.0 - e * e / 6.0 * N).min() <= 0:
        raise AmplitudeError("E4 denominators are not positive")
    E0 = integrate_values(g, N**2 + T1**2)
    E2 = integrate_values(g, 0.5 * N1**2 + 0.5 * T2**2 - N * T1**2 / 6.0)
    E4 = integrate_values(g, _kernels.e4_density(N, N1, N2, T2, e))
    return E0, E2, E4


def momentum_slow(sp: SlowPair) -> float:
    """p = eps/72 int N d1 Theta."""
    return sp.eps / 72.0 * integrate_values(sp.grid, sp.N.values * sp.T1)


@dataclass(frozen=True)
class RemainderFields:
    R20: RealField2
    R11: RealField2
    R02: RealField2
    nu20: RealField2
    nu02: RealField2


def remainder_fields(sp: SlowPair, form: str = "printed") -> RemainderFields:
    """Quadratic remainder fields of the N equation, evaluated pointwise.

    ``form="printed"`` uses the reference coefficient list, ``form="exact"``
    the coefficients obtained by combining the two rescaled polar equations;
    the fixed-point solver uses the latter.
    """
    _amplitude(sp.N.values, sp.eps)
    out = _kernels.remainder_pointwise(sp.N.values, sp.N1, sp.N2, sp.T1, sp.T2, sp.eps, form)
    g = sp.grid
    return RemainderFields(*(RealField2(g, a) for a in out))


def remainder_l1(rf: RemainderFields) -> tuple[float, float]:
    """(int |R11| + |R02|, int |R20| + |nu20| + |nu02|)."""
    g = rf.R20.grid
    a = integrate_values(g, np.abs(rf.R11.values) + np.abs(rf.R02.values))
    b = integrate_values(g, np.abs(rf.R20.values) + np.abs(rf.nu20.values) + np.abs(rf.nu02.values))
    return a, b


# ------------------------------------------------------ rescaled equations

def _trunc(grid: Grid2, a: np.ndarray, dealias: bool) -> np.ndarray:
    h = grid.fft(a)
    return grid.dealias(h) if dealias else h


def _slow1_hat(grid, N, N1, N2, T1, T2, eps, dealias):
    """Transform of N - s d1 Theta - eps^2 (1/2 d1^2 N + eps^2/4 d2^2 N + R1)."""
    s = math.sqrt(1.0 - eps * eps / 2.0)
    R1h = _trunc(grid, _kernels.slow1_remainder(N, N1, N2, T1, T2, eps), dealias)
    Nh = grid.fft(N)
    lin = Nh * (1.0 + eps**2 * 0.5 * grid.K1**2 + eps**4 / 4.0 * grid.K2**2)
    return lin - s * grid.fft(T1) - eps**2 * R1h, R1h


def _r2_hat(grid, N, T1, T2, eps, dealias):
    """Transform of R2 = -1/6 d1(N d1 Theta) - eps^2/12 d2(N d2 Theta)."""
    a = _trunc(grid, N * T1, dealias)
    b = _trunc(grid, N * T2, dealias)
    return -grid.deriv_symbol(1, 1) * a / 6.0 - eps**2 / 12.0 * grid.deriv_symbol(2, 1) * b


def _slow2_hat(grid, N, T1, T2, eps, dealias):
    """Transform of s d1 N - d1^2 Theta - eps^2/2 d2^2 Theta - eps^2 R2."""
    s = math.sqrt(1.0 - eps * eps / 2.0)
    D1 = grid.deriv_symbol(1, 1)
    D2 = grid.deriv_symbol(2, 1)
    return (s * D1 * grid.fft(N) - D1 * grid.fft(T1) - eps**2 / 2.0 * D2 * grid.fft(T2)
            - eps**2 * _r2_hat(grid, N, T1, T2, eps, dealias))


def _l2_hat(grid: Grid2, ah: np.ndarray) -> float:
    return math.sqrt(grid.cell_area / (grid.n1 * grid.n2) * np.sum(np.abs(ah) ** 2))


def residual_slow1(sp: SlowPair, dealias: bool = True) -> float:
    """Relative L2 residual of the first rescaled equation.

    N - d1 Theta = eps^2 (L1 + R1), normalized by ||N|| + ||d1 Theta||.
    """
    g = sp.grid
    r, _ = _slow1_hat(g, sp.N.values, sp.N1, sp.N2, sp.T1, sp.T2, sp.eps, dealias)
    scale = norm_l2(sp.N) + math.sqrt(integrate_values(g, sp.T1**2))
    return 0.0 if scale == 0 else _l2_hat(g, r) / scale


def residual_slow2(sp: SlowPair, dealias: bool = True) -> float:
    """Relative L2 residual of the second rescaled equation.

    d1 N - d1^2 Theta = eps^2 (L2 + R2), normalized by ||d1 N|| + ||d1^2 Theta||.
    """
    g = sp.grid
    r = _slow2_hat(g, sp.N.values, sp.T1, sp.T2, sp.eps, dealias)
    T11 = d_real(g, g.fft(sp.T1), 1)
    scale = math.sqrt(integrate_values(g, sp.N1**2)) + math.sqrt(integrate_values(g, T11**2))
    return 0.0 if scale == 0 else _l2_hat(g, r) / scale


# ------------------------------------------------------------ fixed point

@dataclass(frozen=True)
class FixedPointResult:
    pair: SlowPair
    iterations: int
    residual1: float
    residual2: float
    normalization: float
    history: tuple = field(default=(), repr=False)


def _derivs(grid: Grid2, N: np.ndarray, T: np.ndarray):
    Nh, Th = grid.fft(N), grid.fft(T)
    return (d_real(grid, Nh, 1), d_real(grid, Nh, 2), d_real(grid, Th, 1), d_real(grid, Th, 2))


def _theta_from(grid: Grid2, N: np.ndarray, T: np.ndarray, eps: float, dealias: bool) -> np.ndarray:
    """One phase-recovery sweep from the second rescaled equation."""
    s = math.sqrt(1.0 - eps * eps / 2.0)
    Th = grid.fft(T)
    T1 = d_real(grid, Th, 1)
    T2 = d_real(grid, Th, 2)
    den = grid.K1**2 + eps**2 / 2.0 * grid.K2**2
    num = eps**2 * _r2_hat(grid, N, T1, T2, eps, dealias) - 1j * s * grid.K1 * grid.fft(N)
    num = np.where(grid.nyquist1, 0.0, num)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return grid.ifft_real(out)


def _n_map(grid: Grid2, N: np.ndarray, T: np.ndarray, eps: float, gamma: float,
           dealias: bool) -> tuple[np.ndarray, float]:
    """Normalized convolution map for N; returns the new field and the normalization."""
    N1, N2, T1, T2 = _derivs(grid, N, T)
    Q = kp_denominator(grid.K1, grid.K2, eps)
    k1sq = grid.K1**2
    fh = _trunc(grid, N * N / 3.0 + T1 * T1 / 6.0, dealias)
    R20, R11, R02, _, _ = _kernels.remainder_pointwise(N, N1, N2, T1, T2, eps, "exact")
    Rh = -(k1sq * _trunc(grid, R20, dealias)
           + grid.K1 * grid.K2 * _trunc(grid, R11, dealias)
           + grid.K2**2 * _trunc(grid, R02, dealias))
    Nh = grid.fft(N)
    num = np.sum(np.real(np.conj(Nh) * (Q * Nh - eps**2 * Rh)))
    den = np.sum(np.real(np.conj(Nh) * k1sq * fh))
    M = float(num / den) if den != 0 else float("nan")
    with np.errstate(divide="ignore", invalid="ignore"):
        new = np.where(Q > 0, (M**gamma * k1sq * fh + eps**2 * Rh) / np.where(Q > 0, Q, 1.0), 0.0)
    # Zero mode from the first rescaled equation.
    R1h0 = _trunc(grid, _kernels.slow1_remainder(N, N1, N2, T1, T2, eps), dealias)[0, 0]
    new[0, 0] = eps**2 * R1h0
    return grid.ifft_real(new), M


def fixed_point_map(sp: SlowPair, gamma: float = 2.0, dealias: bool = True) -> RealField2:
    """One undamped application of the N map at the current (N, Theta)."""
    new, _ = _n_map(sp.grid, sp.N.values, sp.Theta.values, sp.eps, gamma, dealias)
    return RealField2(sp.grid, new)


def lump_seed(grid: Grid2, eps: float, dealias: bool = True) -> SlowPair:
    N = lump_value(*grid.mesh)
    T = _theta_from(grid, N, np.zeros_like(N), eps, dealias)
    return SlowPair(RealField2(grid, N), RealField2(grid, T), eps)


def fixed_point_solve(eps: float, init: Union[SlowPair, Grid2], tol: float = 1e-8,
                      max_iter: int = 3000, tau: float = 0.5, gamma: float = 2.0,
                      dealias: bool = True) -> FixedPointResult:
    """Damped fixed-point iteration for (N, Theta) at parameter eps.

    Each step applies the normalized convolution map to N, mixes it with
    weight ``tau`` and recovers Theta from the second rescaled equation. The
    damping is halved whenever the combined residual grows. Iteration stops
    once both rescaled residuals and the relative map defect ||map(N) - N||/||N||
    are below ``tol``. ``init`` is either a starting pair or a grid on which
    the lump seeds the iteration.
    """
    _check_eps(eps)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    if isinstance(init, Grid2):
        init = lump_seed(init, eps, dealias)
    elif init.eps != eps:
        init = SlowPair(init.N, init.Theta, eps)
    grid = init.grid
    N = np.array(init.N.values)
    T = np.array(init.Theta.values)
    hist = []
    best = float("inf")
    M = float("nan")
    r1 = r2 = float("inf")
    for it in range(1, max_iter + 1):
        new, M = _n_map(grid, N, T, eps, gamma, dealias)
        if not np.isfinite(M) or not np.all(np.isfinite(new)):
            raise FixedPointDivergedError(f"non-finite iterate at iteration {it}")
        defect = float(np.linalg.norm(new - N) / max(np.linalg.norm(N), 1e-300))
        N = (1.0 - tau) * N + tau * new
        if (1.0 - eps * eps / 6.0 * N).min() <= 0:
            raise AmplitudeError(f"amplitude positivity lost at iteration {it}")
        T = _theta_from(grid, N, T, eps, dealias)
        sp = SlowPair(RealField2(grid, N), RealField2(grid, T), eps)
        r1, r2 = residual_slow1(sp, dealias), residual_slow2(sp, dealias)
        res = max(r1, r2)
        hist.append((it, M, r1, r2, defect, tau))
        if res <= tol and defect <= tol:
            log.info("fixed point eps=%g converged in %d iterations (%.2e, %.2e)", eps, it, r1, r2)
            return FixedPointResult(sp, it, r1, r2, M, tuple(hist))
        if not np.isfinite(res) or res > 1e3:
            raise FixedPointDivergedError(f"residual {res:.3e} at iteration {it}")
        if res > 1.5 * best and tau > 1e-3:
            tau *= 0.5
            log.debug("fixed point eps=%g: damping halved to %g", eps, tau)
        best = min(best, res)
    raise FixedPointNotConvergedError("fixed-point iteration did not converge", max_iter, max(r1, r2))


# ---------------------------------------------------------- asymptotics

@dataclass(frozen=True)
class SigmaReport:
    sigma_direct: float
    sigma_decomposed: float
    decomposition_defect: float
    leading: float
    ratio: float

    def as_dict(self) -> dict:
        return asdict(self)


def sigma_decomposition(sp: SlowPair) -> float:
    """-sqrt2 eps/144 (||N - d1 Theta||^2 + eps^2 E2 + eps^4 E4)."""
    e = sp.eps
    return -SQRT2 * e / 144.0 * (sp.dist_N_dTheta**2 + e**2 * sp.E2 + e**4 * sp.E4)


def sigma_leading(sp: SlowPair) -> float:
    """Leading discrepancy term -sqrt2 eps^3 E_KP(d1 Theta) / 144."""
    return -SQRT2 * sp.eps**3 * sp.ekp_of_dTheta / 144.0


def sigma_expansion_check(sp: SlowPair, gp: Optional[GPState] = None) -> SigmaReport:
    """Compare the discrepancy with its exact slow decomposition and its leading term.

    With ``gp`` the direct value sqrt2 p - E is taken from the GP state, otherwise
    from the slow expansions of the pair itself.
    """
    direct = discrepancy(gp) if gp is not None else sp.sigma_value
    dec = sigma_decomposition(sp)
    scale = max(abs(direct), abs(dec))
    defect = 0.0 if scale == 0 else abs(direct - dec) / scale
    lead = sigma_leading(sp)
    if lead == 0:
        ratio = 1.0 if direct == 0 else float("inf")
    else:
        ratio = direct / lead
    return SigmaReport(direct, dec, defect, lead, ratio)


@dataclass(frozen=True)
class KPBoundReport:
    mass: float
    ekp: float
    lower: float
    gap: float
    lower_holds: bool

    def as_dict(self) -> dict:
        return asdict(self)


def kp_bound_check(sp: Union[SlowPair, RealField2], s_kp: float, slack: float = 1e-12) -> KPBoundReport:
    """E_KP(d1 Theta) against the minimal energy -mu^3/(54 S_KP^2) at its mass mu.

    ``gap`` is (E_KP - lower)/|lower|. A bare field is treated as d1 Theta.
    """
    if isinstance(sp, SlowPair):
        mu, ekp = sp.mass_dTheta, sp.ekp_of_dTheta
    else:
        mu, ekp = mass(sp), energy_kp(sp)
    lower = emin(mu, s_kp)
    gap = (ekp - lower) / abs(lower) if lower != 0 else 0.0
    return KPBoundReport(mu, ekp, lower, gap, bool(ekp >= lower - slack * abs(lower)))


# ------------------------------------------------------------------ sweep

@dataclass(frozen=True)
class SweepConfig:
    n1: int = 256
    n2: int = 256
    L1: float = 60.0
    L2: float = 60.0
    tol: float = 1e-8
    max_iter: int = 3000
    tau: float = 0.5
    dealias: bool = True
    workers: int = 1
    kp_tol: float = 1e-10
    dump_dir: Optional[str] = None

    @property
    def grid(self) -> Grid2:
        return Grid2(self.n1, self.n2, self.L1, self.L2)


@dataclass
class ConvergenceReport:
    rows: list
    failures: dict
    s_kp: float
    mass_N0: float
    ekp_N0: float
    slopes: dict
    config: dict

    def row(self, eps: float) -> dict:
        for r in self.rows:
            if r["eps"] == eps:
                return r
        raise KeyError(eps)

    def as_dict(self) -> dict:
        return {
            "config": self.config, "s_kp": self.s_kp, "mass_N0": self.mass_N0,
            "ekp_N0": self.ekp_N0, "slopes": self.slopes, "rows": self.rows,
            "failures": {repr(k): v for k, v in self.failures.items()},
        }

    def write(self, out_dir: Union[str, Path]) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        jp, cp = out / "convergence.json", out / "convergence.csv"
        jp.write_text(json.dumps(self.as_dict(), indent=2))
        cols = ROW_KEYS
        with open(cp, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for r in sorted(self.rows, key=lambda r: -r["eps"]):
                wr.writerow([format_number(r[k]) for k in cols])
        return jp, cp


ROW_KEYS = ["eps", "p", "E0", "E2", "E4", "Sigma", "sigma_ratio", "dist_N_dTheta",
            "dist_N_N0", "dist_dTheta_N0", "ekp_dTheta", "mass_dTheta", "kp_lower",
            "kp_gap", "kp_lower_holds", "residual1", "residual2", "iterations", "shift"]


def format_number(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _sweep_case(eps: float, cfg: SweepConfig, N0: np.ndarray, s_kp: float) -> dict:
    res = fixed_point_solve(eps, cfg.grid, tol=cfg.tol, max_iter=cfg.max_iter,
                            tau=cfg.tau, dealias=cfg.dealias)
    sp = res.pair
    g = sp.grid
    Na, shift = shift_align(N0, sp.N.values)
    Ta = np.roll(sp.T1, shift, axis=(0, 1))
    sig = sigma_expansion_check(sp)
    kb = kp_bound_check(sp, s_kp)
    if cfg.dump_dir is not None:
        d = Path(cfg.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        dump_field(d / f"N_eps{eps:g}.twf", sp.N)
        dump_field(d / f"Theta_eps{eps:g}.twf", sp.Theta)
    return {
        "eps": eps, "p": sp.momentum_slow, "E0": sp.E0, "E2": sp.E2, "E4": sp.E4,
        "Sigma": sig.sigma_direct, "sigma_ratio": sig.ratio,
        "dist_N_dTheta": sp.dist_N_dTheta,
        "dist_N_N0": math.sqrt(integrate_values(g, (Na - N0) ** 2)),
        "dist_dTheta_N0": math.sqrt(integrate_values(g, (Ta - N0) ** 2)),
        "ekp_dTheta": sp.ekp_of_dTheta, "mass_dTheta": sp.mass_dTheta,
        "kp_lower": kb.lower, "kp_gap": kb.gap, "kp_lower_holds": kb.lower_holds,
        "residual1": res.residual1, "residual2": res.residual2,
        "iterations": res.iterations, "shift": list(shift),
    }


def reference_ground_state(grid: Grid2, tol: float = 1e-10, dealias: bool = True):
    """Petviashvili state seeded by the lump on ``grid`` and its S_KP estimate."""
    from .kp_solver import lump

    st = petviashvili_solve(lump(grid), tol=tol, dealias=dealias)
    return st, s_kp_estimate(st).value


def sweep(eps_list: Sequence[float], config: SweepConfig = SweepConfig()) -> ConvergenceReport:
    """Solve at every eps, compare with the KP ground state and fit the rates.

    Cases run in a process pool when ``config.workers > 1``. A failing case is
    recorded in ``failures`` and the remaining cases continue.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    for e in eps_list:
        _check_eps(e)
    grid = config.grid
    ref, s_kp = reference_ground_state(grid, config.kp_tol, config.dealias)
    N0 = np.array(ref.w.values)
    rows, failures = [], {}
    if config.workers > 1:
        with cf.ProcessPoolExecutor(max_workers=config.workers) as ex:
            futs = {ex.submit(_sweep_case, e, config, N0, s_kp): e for e in eps_list}
            for f in cf.as_completed(futs):
                e = futs[f]
                try:
                    rows.append(f.result())
                except Exception as exc:  # recorded, sweep continues
                    failures[e] = f"{type(exc).__name__}: {exc}"
    else:
        for e in eps_list:
            try:
                rows.append(_sweep_case(e, config, N0, s_kp))
            except Exception as exc:  # recorded, sweep continues
                failures[e] = f"{type(exc).__name__}: {exc}"
    rows.sort(key=lambda r: -r["eps"])
    slopes = {}
    if len(rows) >= 2:
        eps = [r["eps"] for r in rows]
        slopes["dist_N_dTheta"] = {"slope": fit_slope(eps, [r["dist_N_dTheta"] for r in rows]),
                                   "range": [min(eps), max(eps)]}
        slopes["dist_N_N0"] = {"slope": fit_slope(eps, [r["dist_N_N0"] for r in rows]),
                               "range": [min(eps), max(eps)]}
        gaps = [abs(r["kp_gap"]) for r in rows]
        if all(g > 0 for g in gaps):
            slopes["kp_gap"] = {"slope": fit_slope(eps, gaps), "range": [min(eps), max(eps)]}
    cfg = asdict(config)
    cfg["eps_list"] = eps_list
    return ConvergenceReport(rows=rows, failures=failures, s_kp=s_kp, mass_N0=ref.mass,
                             ekp_N0=ref.energy, slopes=slopes, config=cfg)
