"""Pointwise kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and the environment variable
``TW_NUMBA`` is not set to a false-like value ("0", "false", "off", "no").
Both paths compute the same quantities; the benchmark in
``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _flag_enabled() -> bool:
    return os.environ.get("TW_NUMBA", "1").strip().lower() not in {"0", "false", "off", "no"}


USE_NUMBA = HAS_NUMBA and _flag_enabled()

# Coefficient tables for the N-equation remainder fields.
#   R20 = a0 N T1^2 + a1 N1^2/rho2 + a2 T2^2 + eps^2 (a3 N2^2/rho2 + a4 N T2^2)
#   R02 = b0 N^2 + b1 s N T1 + b2 T1^2
#         + eps^2 (b3 N1^2/rho2 + b4 N T1^2 + b5 T2^2) + eps^4 (b6 N2^2/rho2 + b7 N T2^2)
#   R11 = c0 s N T2
# with rho2 = 1 - eps^2 N / 6, T1 = d1 Theta, T2 = d2 Theta, Ni = di N.
# "exact" is the combination of the two rescaled polar equations;
# "printed" is the reference coefficient list, kept for comparison.
REMAINDER_COEFFS = {
    "exact": np.array(
        [1 / 36, -1 / 12, -1 / 12, -1 / 24, 1 / 72,
         -1 / 6, 1 / 6, -1 / 12, -1 / 24, 1 / 72, -1 / 24, -1 / 48, 1 / 144,
         -1 / 6]
    ),
    "printed": np.array(
        [1 / 36, -1 / 12, -1 / 24, -1 / 48, 1 / 144,
         -1 / 3, 1 / 6, -1 / 12, -1 / 24, 1 / 72, -1 / 48, -1 / 96, 1 / 288,
         -1 / 12]
    ),
}


# ---------------------------------------------------------------- numpy path

def _lump_np(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    a = x1[:, None] ** 2
    b = x2[None, :] ** 2
    return 24.0 * (3.0 - a + b) / (3.0 + a + b) ** 2


def _gp_nonlinear_np(u: np.ndarray) -> np.ndarray:
    return u * (1.0 - (u.real**2 + u.imag**2))


def _remainder_np(N, N1, N2, T1, T2, eps, s, c):
    e2 = eps * eps
    inv_rho2 = 1.0 / (1.0 - e2 * N / 6.0)
    N1q = N1 * N1 * inv_rho2
    N2q = N2 * N2 * inv_rho2
    T1q = T1 * T1
    T2q = T2 * T2
    nu20 = c[3] * N2q + c[4] * N * T2q
    R20 = c[0] * N * T1q + c[1] * N1q + c[2] * T2q + e2 * nu20
    nu02 = c[8] * N1q + c[9] * N * T1q + c[10] * T2q + e2 * (c[11] * N2q + c[12] * N * T2q)
    R02 = c[5] * N * N + c[6] * s * N * T1 + c[7] * T1q + e2 * nu02
    R11 = c[13] * s * N * T2
    return R20, R11, R02, nu20, nu02


def _slow1_remainder_np(N, N1, N2, T1, T2, eps, s):
    e2 = eps * eps
    inv_rho2 = 1.0 / (1.0 - e2 * N / 6.0)
    out = (2.0 * N * N - 2.0 * s * N * T1 + T1 * T1) / 12.0
    out = out + e2 / 72.0 * (3.0 * N1 * N1 * inv_rho2 - N * T1 * T1 + 3.0 * T2 * T2)
    out = out + e2 * e2 / 144.0 * (3.0 * N2 * N2 * inv_rho2 - N * T2 * T2)
    return out


def _e4_density_np(N, N1, N2, T2, eps):
    e2 = eps * eps
    return (N2 * N2 / (4.0 - (2.0 * e2 / 3.0) * N)
            + N * N1 * N1 / (12.0 - 2.0 * e2 * N)
            - N * T2 * T2 / 12.0)


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _lump_nb(x1, x2):
        out = np.empty((x1.size, x2.size))
        for i in range(x1.size):
            a = x1[i] * x1[i]
            for j in range(x2.size):
                b = x2[j] * x2[j]
                d = 3.0 + a + b
                out[i, j] = 24.0 * (3.0 - a + b) / (d * d)
        return out

    @numba.njit(cache=True)
    def _gp_nonlinear_nb(u):
        flat = u.ravel()
        out = np.empty_like(flat)
        for k in range(flat.size):
            z = flat[k]
            out[k] = z * (1.0 - (z.real * z.real + z.imag * z.imag))
        return out.reshape(u.shape)

    @numba.njit(cache=True)
    def _remainder_nb(N, N1, N2, T1, T2, eps, s, c):
        e2 = eps * eps
        n = N.size
        Nf, N1f, N2f, T1f, T2f = N.ravel(), N1.ravel(), N2.ravel(), T1.ravel(), T2.ravel()
        R20 = np.empty(n)
        R11 = np.empty(n)
        R02 = np.empty(n)
        nu20 = np.empty(n)
        nu02 = np.empty(n)
        for k in range(n):
            nk = Nf[k]
            inv_rho2 = 1.0 / (1.0 - e2 * nk / 6.0)
            n1q = N1f[k] * N1f[k] * inv_rho2
            n2q = N2f[k] * N2f[k] * inv_rho2
            t1 = T1f[k]
            t2 = T2f[k]
            t1q = t1 * t1
            t2q = t2 * t2
            v20 = c[3] * n2q + c[4] * nk * t2q
            v02 = c[8] * n1q + c[9] * nk * t1q + c[10] * t2q + e2 * (c[11] * n2q + c[12] * nk * t2q)
            nu20[k] = v20
            nu02[k] = v02
            R20[k] = c[0] * nk * t1q + c[1] * n1q + c[2] * t2q + e2 * v20
            R02[k] = c[5] * nk * nk + c[6] * s * nk * t1 + c[7] * t1q + e2 * v02
            R11[k] = c[13] * s * nk * t2
        sh = N.shape
        return R20.reshape(sh), R11.reshape(sh), R02.reshape(sh), nu20.reshape(sh), nu02.reshape(sh)

    @numba.njit(cache=True)
    def _slow1_remainder_nb(N, N1, N2, T1, T2, eps, s):
        e2 = eps * eps
        Nf, N1f, N2f, T1f, T2f = N.ravel(), N1.ravel(), N2.ravel(), T1.ravel(), T2.ravel()
        out = np.empty(N.size)
        for k in range(N.size):
            nk = Nf[k]
            t1 = T1f[k]
            t2 = T2f[k]
            inv_rho2 = 1.0 / (1.0 - e2 * nk / 6.0)
            v = (2.0 * nk * nk - 2.0 * s * nk * t1 + t1 * t1) / 12.0
            v += e2 / 72.0 * (3.0 * N1f[k] * N1f[k] * inv_rho2 - nk * t1 * t1 + 3.0 * t2 * t2)
            v += e2 * e2 / 144.0 * (3.0 * N2f[k] * N2f[k] * inv_rho2 - nk * t2 * t2)
            out[k] = v
        return out.reshape(N.shape)

    @numba.njit(cache=True)
    def _e4_density_nb(N, N1, N2, T2, eps):
        e2 = eps * eps
        Nf, N1f, N2f, T2f = N.ravel(), N1.ravel(), N2.ravel(), T2.ravel()
        out = np.empty(N.size)
        for k in range(N.size):
            nk = Nf[k]
            out[k] = (N2f[k] * N2f[k] / (4.0 - (2.0 * e2 / 3.0) * nk)
                      + nk * N1f[k] * N1f[k] / (12.0 - 2.0 * e2 * nk)
                      - nk * T2f[k] * T2f[k] / 12.0)
        return out.reshape(N.shape)


# ---------------------------------------------------------------- dispatch

def _pick(use_numba: bool | None) -> bool:
    if use_numba is None:
        return USE_NUMBA
    return bool(use_numba) and HAS_NUMBA


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def lump_values(x1: np.ndarray, x2: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Closed-form lump sampled on the tensor grid x1 (rows) by x2 (columns)."""
    if _pick(use_numba):
        return _lump_nb(_c(x1), _c(x2))
    return _lump_np(np.asarray(x1, float), np.asarray(x2, float))


def gp_nonlinear(u: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """u (1 - |u|^2)."""
    if _pick(use_numba):
        return _gp_nonlinear_nb(np.ascontiguousarray(u, dtype=np.complex128))
    return _gp_nonlinear_np(u)


def remainder_pointwise(N, N1, N2, T1, T2, eps: float, form: str = "exact",
                        use_numba: bool | None = None):
    """Pointwise (R20, R11, R02, nu20, nu02) for the N-equation remainder."""
    coeffs = REMAINDER_COEFFS[form]
    s = float(np.sqrt(1.0 - eps * eps / 2.0))
    if _pick(use_numba):
        return _remainder_nb(_c(N), _c(N1), _c(N2), _c(T1), _c(T2), float(eps), s, coeffs)
    return _remainder_np(N, N1, N2, T1, T2, eps, s, coeffs)


def slow1_remainder(N, N1, N2, T1, T2, eps: float, use_numba: bool | None = None):
    """Pointwise nonlinear remainder of the first rescaled polar equation."""
    s = float(np.sqrt(1.0 - eps * eps / 2.0))
    if _pick(use_numba):
        return _slow1_remainder_nb(_c(N), _c(N1), _c(N2), _c(T1), _c(T2), float(eps), s)
    return _slow1_remainder_np(N, N1, N2, T1, T2, eps, s)


def e4_density(N, N1, N2, T2, eps: float, use_numba: bool | None = None):
    """Integrand of the fourth-order term of the slow energy expansion."""
    if _pick(use_numba):
        return _e4_density_nb(_c(N), _c(N1), _c(N2), _c(T2), float(eps))
    return _e4_density_np(N, N1, N2, T2, eps)
