"""Periodic grids, sampled fields, spectral differentiation and quadrature.

The domain is [-L1, L1) x [-L2, L2) sampled with n1 x n2 points. Arrays are
indexed ``values[i1, i2]`` so x2 is the fast (contiguous) axis. Transforms use
``scipy.fft`` on demand; fields are stored in physical space.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy import fft as sfft


class GridMismatchError(ValueError):
    """Two fields living on different grids were combined."""


@dataclass(frozen=True)
class Grid2:
    """Periodic rectangular grid with cached wavenumber tables."""

    n1: int
    n2: int
    L1: float
    L2: float

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"sample counts must be even integers >= 8, got {n}")
            if n & (n - 1):
                raise ValueError(f"sample counts must be powers of two, got {n}")
        if not (self.L1 > 0 and self.L2 > 0 and np.isfinite(self.L1) and np.isfinite(self.L2)):
            raise ValueError("half-periods must be positive and finite")
        object.__setattr__(self, "L1", float(self.L1))
        object.__setattr__(self, "L2", float(self.L2))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def dx1(self) -> float:
        return 2.0 * self.L1 / self.n1

    @property
    def dx2(self) -> float:
        return 2.0 * self.L2 / self.n2

    @property
    def cell_area(self) -> float:
        return self.dx1 * self.dx2

    @property
    def area(self) -> float:
        return 4.0 * self.L1 * self.L2

    @cached_property
    def x1(self) -> np.ndarray:
        return -self.L1 + self.dx1 * np.arange(self.n1)

    @cached_property
    def x2(self) -> np.ndarray:
        return -self.L2 + self.dx2 * np.arange(self.n2)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @cached_property
    def xi1(self) -> np.ndarray:
        """Wavenumbers pi*m/L1 in FFT order (Nyquist m = -n1/2 included)."""
        return 2.0 * np.pi * sfft.fftfreq(self.n1, d=self.dx1)

    @cached_property
    def xi2(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.n2, d=self.dx2)

    @cached_property
    def K1(self) -> np.ndarray:
        return np.broadcast_to(self.xi1[:, None], self.shape)

    @cached_property
    def K2(self) -> np.ndarray:
        return np.broadcast_to(self.xi2[None, :], self.shape)

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.K1**2 + self.K2**2

    @cached_property
    def nyquist1(self) -> np.ndarray:
        """Boolean mask of the x1-Nyquist row."""
        m = np.zeros(self.shape, dtype=bool)
        m[self.n1 // 2, :] = True
        return m

    @cached_property
    def nyquist2(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[:, self.n2 // 2] = True
        return m

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with |m_k| < n_k/3 on both axes."""
        m1 = np.abs(sfft.fftfreq(self.n1) * self.n1) < self.n1 / 3.0
        m2 = np.abs(sfft.fftfreq(self.n2) * self.n2) < self.n2 / 3.0
        return m1[:, None] & m2[None, :]

    @cached_property
    def neg_index1(self) -> np.ndarray:
        return (-np.arange(self.n1)) % self.n1

    @cached_property
    def neg_index2(self) -> np.ndarray:
        return (-np.arange(self.n2)) % self.n2

    def scaled(self, s1: float, s2: float) -> "Grid2":
        """Same sample counts with half-periods multiplied by (s1, s2)."""
        return Grid2(self.n1, self.n2, self.L1 * s1, self.L2 * s2)

    # transforms -----------------------------------------------------------
    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.fft2(a)

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return sfft.ifft2(a)

    def ifft_real(self, a: np.ndarray) -> np.ndarray:
        return sfft.ifft2(a).real

    def deriv_symbol(self, axis: int, order: int) -> np.ndarray:
        if axis not in (1, 2):
            raise ValueError("axis must be 1 or 2")
        if order < 0 or int(order) != order:
            raise ValueError("order must be a non-negative integer")
        k = self.K1 if axis == 1 else self.K2
        sym = (1j * k) ** order
        if order % 2:
            sym = np.where(self.nyquist1 if axis == 1 else self.nyquist2, 0.0, sym)
        return sym

    def dealias(self, ahat: np.ndarray) -> np.ndarray:
        return np.where(self.dealias_mask, ahat, 0.0)


def _check_values(grid: Grid2, values: np.ndarray, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.size != grid.n1 * grid.n2:
        raise ValueError(f"sample count {arr.size} does not match grid {grid.shape}")
    arr = arr.reshape(grid.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RealField2:
    """Real samples on a Grid2 (immutable)."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, np.float64))

    def __neg__(self):
        return RealField2(self.grid, -self.values)

    def __add__(self, other):
        return RealField2(self.grid, self.values + _vals(self, other))

    def __sub__(self, other):
        return RealField2(self.grid, self.values - _vals(self, other))

    def __mul__(self, other):
        return RealField2(self.grid, self.values * _vals(self, other))

    __radd__ = __add__
    __rmul__ = __mul__

    @classmethod
    def from_function(cls, grid: Grid2, f: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        X1, X2 = grid.mesh
        return cls(grid, np.broadcast_to(f(X1, X2), grid.shape))

    @classmethod
    def zeros(cls, grid: Grid2):
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True, eq=False)
class ComplexField2:
    """Complex samples on a Grid2 (immutable)."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, np.complex128))

    def conj(self) -> "ComplexField2":
        return ComplexField2(self.grid, np.conj(self.values))

    @classmethod
    def from_function(cls, grid: Grid2, f):
        X1, X2 = grid.mesh
        return cls(grid, np.broadcast_to(f(X1, X2), grid.shape))

    @classmethod
    def ones(cls, grid: Grid2):
        return cls(grid, np.ones(grid.shape, dtype=complex))


Field2 = Union[RealField2, ComplexField2]


def _vals(a: Field2, b) -> np.ndarray:
    if isinstance(b, (RealField2, ComplexField2)):
        check_same_grid(a, b)
        return b.values
    return b


def check_same_grid(*fields: Field2) -> Grid2:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {f.grid}")
    return g


def _like(f: Field2, values: np.ndarray) -> Field2:
    if isinstance(f, RealField2):
        return RealField2(f.grid, values.real if np.iscomplexobj(values) else values)
    return ComplexField2(f.grid, values)


# ------------------------------------------------------------------ symbols

@dataclass(frozen=True)
class Symbol2:
    """Fourier multiplier (xi1, xi2) -> complex value.

    ``excluded`` optionally flags wavenumbers where the evaluator is not
    defined; the multiplier is set to zero there.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "symbol"
    excluded: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(default=None)

    def on_grid(self, grid: Grid2) -> np.ndarray:
        K1, K2 = grid.K1, grid.K2
        mask = None if self.excluded is None else np.asarray(self.excluded(K1, K2), bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(self.evaluator(K1, K2), dtype=complex)
        vals = np.broadcast_to(vals, grid.shape).copy()
        if mask is not None:
            vals[np.broadcast_to(mask, grid.shape)] = 0.0
        bad = ~np.isfinite(vals)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"symbol '{self.name}' is not finite at wavenumber "
                f"({grid.xi1[i]:.6g}, {grid.xi2[j]:.6g})"
            )
        return vals

    def __mul__(self, other: "Symbol2") -> "Symbol2":
        def ev(k1, k2):
            return np.asarray(self.evaluator(k1, k2)) * np.asarray(other.evaluator(k1, k2))

        def ex(k1, k2):
            a = np.zeros(np.broadcast(k1, k2).shape, bool)
            for s in (self, other):
                if s.excluded is not None:
                    a = a | np.asarray(s.excluded(k1, k2), bool)
            return a

        return Symbol2(ev, f"{self.name}*{other.name}", ex)


def conjugate_symmetrize(grid: Grid2, sym: np.ndarray) -> tuple[np.ndarray, bool]:
    """Project a gridded symbol onto conjugate-symmetric multipliers.

    Returns the projected symbol and whether the input was conjugate-symmetric
    away from the self-conjugate (Nyquist) wavenumbers.
    """
    mirrored = np.conj(sym[np.ix_(grid.neg_index1, grid.neg_index2)])
    self_conj = (grid.neg_index1[:, None] == np.arange(grid.n1)[:, None]) & (
        grid.neg_index2[None, :] == np.arange(grid.n2)[None, :]
    )
    scale = max(np.max(np.abs(sym)), 1e-300)
    off = ~(grid.nyquist1 | grid.nyquist2)
    symmetric = bool(np.all(np.abs(sym - mirrored)[off] <= 1e-12 * scale))
    proj = 0.5 * (sym + mirrored)
    # Self-conjugate wavenumbers keep only their real part.
    proj = np.where(self_conj, proj.real, proj)
    return proj, symmetric


def apply_symbol(f: Field2, s: Symbol2) -> Field2:
    """Inverse transform of s(xi) * fhat(xi).

    For a real input and a conjugate-symmetric symbol, the output is real:
    the symbol is projected at the Nyquist wavenumbers and the residual
    imaginary part is verified to be below 1e-10 ||f|| before it is dropped.
    Otherwise a ComplexField2 is returned.
    """
    grid = f.grid
    sym = s.on_grid(grid)
    if isinstance(f, RealField2):
        proj, symmetric = conjugate_symmetrize(grid, sym)
        if symmetric:
            out = grid.ifft(proj * grid.fft(f.values))
            ref = np.sqrt(np.sum(f.values**2)) + 1e-300
            im = np.sqrt(np.sum(out.imag**2))
            if im > 1e-10 * ref:
                raise ArithmeticError(f"imaginary residue {im:.3e} exceeds tolerance")
            return RealField2(grid, out.real)
        return ComplexField2(grid, grid.ifft(sym * grid.fft(f.values)))
    return ComplexField2(grid, grid.ifft(sym * grid.fft(f.values)))


# ------------------------------------------------------------- operations

def derivative(f: Field2, axis: int, order: int = 1) -> Field2:
    """Spectral derivative d^order/dx_axis^order (Nyquist zeroed for odd order)."""
    grid = f.grid
    if order == 0:
        return f
    sym = grid.deriv_symbol(axis, order)
    out = grid.ifft(sym * grid.fft(f.values))
    return _like(f, out)


def d_real(grid: Grid2, fhat: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Real physical-space derivative from a precomputed transform."""
    return grid.ifft_real(grid.deriv_symbol(axis, order) * fhat)


@dataclass(frozen=True)
class InvD1Result:
    field: RealField2
    zero_mode_fraction: float
    warning: bool


def inv_d1_values(grid: Grid2, ghat: np.ndarray) -> np.ndarray:
    """Spectral anti-derivative in x1 of a transformed field (xi1 = 0 modes dropped)."""
    K1 = grid.K1
    keep = (K1 != 0) & ~grid.nyquist1
    with np.errstate(divide="ignore", invalid="ignore"):
        hhat = np.where(keep, ghat / (1j * np.where(keep, K1, 1.0)), 0.0)
    return grid.ifft_real(hhat)


def inv_d1(g: RealField2, threshold: float = 1e-8) -> InvD1Result:
    """Anti-derivative with respect to x1.

    h_hat = g_hat / (i xi1) for xi1 != 0 and 0 on xi1 = 0. The xi1 = 0 energy
    fraction of g is reported; a fraction above ``threshold`` sets ``warning``.
    """
    grid = g.grid
    ghat = grid.fft(g.values)
    total = np.sum(np.abs(ghat) ** 2)
    zero = np.sum(np.abs(ghat[0, :]) ** 2)
    frac = float(zero / total) if total > 0 else 0.0
    h = RealField2(grid, inv_d1_values(grid, ghat))
    return InvD1Result(h, frac, frac > threshold)


def integrate(f: Field2) -> float:
    """Rectangle rule dx1*dx2*sum (spectrally exact for periodic band-limited data)."""
    s = f.grid.cell_area * np.sum(f.values)
    return float(s.real) if isinstance(f, RealField2) else complex(s)


def integrate_values(grid: Grid2, a: np.ndarray) -> float:
    return float(grid.cell_area * np.sum(a))


def norm_l2(f: Field2) -> float:
    return float(np.sqrt(f.grid.cell_area * np.sum(np.abs(f.values) ** 2)))


def norm_linf(f: Field2) -> float:
    return float(np.max(np.abs(f.values)))


def dist_l2(f: Field2, g: Field2) -> float:
    check_same_grid(f, g)
    return float(np.sqrt(f.grid.cell_area * np.sum(np.abs(f.values - g.values) ** 2)))


def spectral_l2sq(f: Field2) -> float:
    """Parseval form of integrate(|f|^2)."""
    g = f.grid
    return float(g.cell_area / (g.n1 * g.n2) * np.sum(np.abs(g.fft(f.values)) ** 2))


def tail_indicator(f: Field2) -> float:
    """max |f| on the outer boundary rows/columns divided by max |f|."""
    a = np.abs(f.values)
    top = a.max()
    if top == 0:
        return 0.0
    edge = max(a[0, :].max(), a[-1, :].max(), a[:, 0].max(), a[:, -1].max())
    return float(edge / top)


def shift_align(ref: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Integer periodic shift of ``a`` maximizing its cross-correlation with ``ref``."""
    cc = sfft.ifft2(sfft.fft2(ref) * np.conj(sfft.fft2(a))).real
    i, j = np.unravel_index(np.argmax(cc), cc.shape)
    return np.roll(a, (i, j), axis=(0, 1)), (int(i), int(j))


# --------------------------------------------------------------- file dump

_HDR = struct.Struct("<4sQQdd")


def dump_field(path: Union[str, Path], f: Field2) -> None:
    """Binary dump: magic, n1, n2 (u64 LE), L1, L2 (f64 LE), row-major samples."""
    g = f.grid
    if isinstance(f, RealField2):
        magic, data = b"TWF1", np.ascontiguousarray(f.values, dtype="<f8")
    else:
        inter = np.empty(g.shape + (2,), dtype="<f8")
        inter[..., 0] = f.values.real
        inter[..., 1] = f.values.imag
        magic, data = b"TWC1", inter
    with open(path, "wb") as fh:
        fh.write(_HDR.pack(magic, g.n1, g.n2, g.L1, g.L2))
        fh.write(data.tobytes(order="C"))


def load_field(path: Union[str, Path]) -> Field2:
    raw = Path(path).read_bytes()
    if len(raw) < _HDR.size:
        raise ValueError(f"{path}: truncated header")
    magic, n1, n2, L1, L2 = _HDR.unpack_from(raw)
    grid = Grid2(int(n1), int(n2), L1, L2)
    body = np.frombuffer(raw, dtype="<f8", offset=_HDR.size)
    if magic == b"TWF1":
        if body.size != n1 * n2:
            raise ValueError(f"{path}: expected {n1 * n2} samples, found {body.size}")
        return RealField2(grid, body.reshape(grid.shape))
    if magic == b"TWC1":
        if body.size != 2 * n1 * n2:
            raise ValueError(f"{path}: expected {2 * n1 * n2} values, found {body.size}")
        pairs = body.reshape(grid.shape + (2,))
        return ComplexField2(grid, pairs[..., 0] + 1j * pairs[..., 1])
    raise ValueError(f"{path}: unknown magic {magic!r}")
