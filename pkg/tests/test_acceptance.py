"""Acceptance criteria, one check per criterion at the stated tolerances.

Run under pytest, or directly with ``python tests/test_acceptance.py`` to print
one PASS/FAIL line per criterion.
"""

import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import _cases  # noqa: E402
from gpkp import gp_solver, kp_solver, transonic  # noqa: E402
from gpkp.kp_solver import KernelSpec  # noqa: E402
from gpkp.spectral_core import ComplexField2, Grid2, RealField2, tail_indicator  # noqa: E402

SQRT2 = math.sqrt(2.0)


def _smooth(grid, rng, kmax=3, amp=1.0):
    X1, X2 = grid.mesh
    f = np.zeros(grid.shape)
    for m1 in range(kmax + 1):
        for m2 in range(-kmax, kmax + 1):
            a, b = rng.standard_normal(2)
            ph = math.pi * (m1 * X1 / grid.L1 + m2 * X2 / grid.L2)
            f += a * np.cos(ph) + b * np.sin(ph)
    f -= f.mean()
    return amp * f / np.abs(f).max()


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b))


# ---------------------------------------------------------------- criteria

def criterion_1():
    t = time.perf_counter()
    w = kp_solver.lump(Grid2(1024, 1024, 120.0, 120.0))
    res = kp_solver.sw_residual(w)
    tail = tail_indicator(w)
    dt = time.perf_counter() - t
    ok = res < 1e-3 and dt < 30
    return ok, f"lump residual {res:.3e} (< 1e-3), tail indicator {tail:.2e}, {dt:.1f} s"


def criterion_2():
    st, dt = _cases.ground_state(512, 60.0, 0.8)
    e_gap = abs(st.energy + st.mass / 6) / abs(st.energy)
    s_gap = abs(st.action - st.mass / 3) / abs(st.action)
    ok = st.residual_l2 < 1e-9 and st.iterations <= 300 and e_gap < 1e-6 and s_gap < 1e-6 and dt < 60
    return ok, (f"residual {st.residual_l2:.2e} in {st.iterations} it; energy identity {e_gap:.2e}, "
                f"action identity {s_gap:.2e} (< 1e-6), tail {st.tail_indicator:.2e}, {dt:.1f} s")


def criterion_3():
    st, _ = _cases.ground_state(512, 60.0, 0.8)
    w = st.w
    M, E = kp_solver.mass(w), kp_solver.energy_kp(w)
    worst = 0.0
    for s in (0.25, 4.0):
        r = kp_solver.rescale_speed(w, s)
        worst = max(worst, _rel(kp_solver.energy_kp(r), s**1.5 * E), _rel(kp_solver.mass(r), math.sqrt(s) * M))
    return worst <= 1e-8, f"max relative defect {worst:.2e} (<= 1e-8)"


def criterion_4():
    t = time.perf_counter()
    eps = [0.05, 0.1, 0.2, 0.4]
    slopes = {}
    for ij in ((0, 2), (1, 1), (2, 0)):
        v = [kp_solver.kernel_norm(KernelSpec(*ij, e), 0.0).value for e in eps]
        slopes[ij] = kp_solver.fit_slope(eps, v)
    dt = time.perf_counter() - t
    ok = (abs(slopes[(0, 2)] + 1.5) <= 0.1 and abs(slopes[(1, 1)] + 0.5) <= 0.1
          and slopes[(2, 0)] >= -0.1 and dt < 300)
    return ok, ("slopes (0,2) {:.3f} [-1.5+-0.1], (1,1) {:.3f} [-0.5+-0.1], (2,0) {:.3f} [>= -0.1], "
                "{:.1f} s").format(slopes[(0, 2)], slopes[(1, 1)], slopes[(2, 0)], dt)


def _identity_defects(sp, u):
    p = gp_solver.momentum(u)
    E = gp_solver.gl_energy(u)
    e = sp.eps
    E_slow = SQRT2 * e / 144 * (sp.E0 + e**2 * sp.E2 + e**4 * sp.E4)
    sig = SQRT2 * p - E
    return (_rel(sp.momentum_slow, p), _rel(E_slow, E), _rel(transonic.sigma_decomposition(sp), sig))


def criterion_5():
    worst = np.zeros(3)
    slow = Grid2(64, 64, 20.0, 20.0)
    rng = np.random.default_rng(20240501)
    for k in range(10):
        e = (0.1, 0.25, 0.4, 0.6)[k % 4]
        N = RealField2(slow, _smooth(slow, rng, 3, 2.0))
        T = RealField2(slow, _smooth(slow, rng, 3, 3.0))
        sp = transonic.SlowPair(N, T, e)
        worst = np.maximum(worst, _identity_defects(sp, transonic.unrescale(N, T, e)))
    fp = _cases.fixed_point_fine()[0].pair
    solver = np.array(_identity_defects(fp, transonic.unrescale(fp.N, fp.Theta, fp.eps)))
    gp = _cases.gp_moderate()[0]
    sp = transonic.rescale(gp.u, gp.eps)
    solver = np.maximum(solver, _identity_defects(sp, gp.u))
    ok = worst.max() <= 1e-8 and solver.max() <= 1e-8
    return ok, ("random: p {:.1e}, E {:.1e}, Sigma {:.1e}; solver outputs: p {:.1e}, E {:.1e}, "
                "Sigma {:.1e} (<= 1e-8)").format(*worst, *solver)


def criterion_6():
    errs_N, errs_printed, errs_exact = [], [], []
    for e in (0.2, 0.4, 0.6):
        tw = gp_solver.solve_tw_1d(math.sqrt(2 - e * e), n=512, L=40.0 / e)
        X, N, dT = gp_solver.rescale_1d(tw)
        No, dTp = gp_solver.oracle_1d(e, X)
        _, dTx = gp_solver.oracle_1d_exact(e, X)
        errs_N.append(np.abs(N - No).max())
        errs_printed.append(np.abs(dT - dTp).max())
        errs_exact.append(np.abs(dT - dTx).max())
    ok = max(errs_N) <= 1e-6 and max(errs_printed) <= 1e-6
    f = lambda v: ", ".join(f"{x:.1e}" for x in v)
    return ok, (f"N error [{f(errs_N)}] (<= 1e-6); phase derivative vs printed form [{f(errs_printed)}] "
                f"(<= 1e-6); vs exact dark soliton [{f(errs_exact)}]")


def criterion_7():
    rep, dt = _cases.sweep_report()
    if rep.failures:
        return False, f"failed cases {rep.failures}"
    r10 = rep.row(0.10)
    s = rep.s_kp
    slope = rep.slopes["dist_N_dTheta"]["slope"]
    a = abs(slope - 2.0) <= 0.3
    b = abs(r10["sigma_ratio"] - 1.0) <= 0.1
    c = r10["dist_N_N0"] <= 0.05 * math.sqrt(rep.mass_N0)
    d = all(r["kp_lower_holds"] for r in rep.rows)
    m_err = abs(r10["mass_dTheta"] - 3 * s) / (3 * s)
    k_err = abs(r10["ekp_dTheta"] + s / 2) / (s / 2)
    e = m_err <= 0.05 and k_err <= 0.05
    ok = a and b and c and d and e and dt < 900
    return ok, (f"(a) slope {slope:.3f} (b) Sigma ratio {r10['sigma_ratio']:.4f} "
                f"(c) ||N-N0|| {r10['dist_N_N0']:.4f} vs 5% {0.05 * math.sqrt(rep.mass_N0):.4f} "
                f"(d) lower bound {'holds' if d else 'VIOLATED'} (e) mass {m_err:.2%}, E_KP {k_err:.2%}; "
                f"{dt:.1f} s")


def criterion_8():
    st, dt = _cases.gp_large()
    sp = transonic.rescale(st.u, st.eps)
    r1 = transonic.residual_slow1(sp, dealias=False)
    r2 = transonic.residual_slow2(sp, dealias=False)
    poh = gp_solver.pohozaev_diagnostics(st).max_defect()
    sig = gp_solver.discrepancy(st)
    bound = st.eps**2 * st.p / SQRT2
    ok = r1 <= 1e-3 and r2 <= 1e-3 and poh <= 1e-3 and 0 < sig <= bound and dt < 600
    return ok, (f"eps {st.eps:.4f}: slow residuals {r1:.1e}, {r2:.1e}; Pohozaev max defect {poh:.1e}; "
                f"Sigma {sig:.4f} in (0, {bound:.4f}]; {dt:.1f} s")


def criterion_9():
    rng = np.random.default_rng(7)
    g = Grid2(64, 64, 20.0, 20.0)
    sw = kp_solver.sw_residual(RealField2(g, _smooth(g, rng, 4, 5.0)))
    u = (1 + 0.2 * _smooth(g, rng)) * np.exp(0.5j * _smooth(g, rng))
    tw = gp_solver.twc_residual(ComplexField2(g, u), 1.0)
    sp = transonic.SlowPair(RealField2(g, _smooth(g, rng, 3, 2.0)), RealField2(g, _smooth(g, rng, 3, 3.0)), 0.3)
    s1, s2 = transonic.residual_slow1(sp), transonic.residual_slow2(sp)
    ok = min(sw, tw, s1, s2) > 0.1
    return ok, f"sw {sw:.2f}, twc {tw:.2f}, slow1 {s1:.2f}, slow2 {s2:.2f} (> 0.1)"


CRITERIA = {
    1: ("lump exactness", criterion_1),
    2: ("Petviashvili convergence and identities", criterion_2),
    3: ("speed scaling covariance", criterion_3),
    4: ("kernel-norm exponents", criterion_4),
    5: ("exact identity tier", criterion_5),
    6: ("1-D exact travelling wave", criterion_6),
    7: ("transonic sweep", criterion_7),
    8: ("GP minimizer cross-check", criterion_8),
    9: ("negative controls", criterion_9),
}


def line(k, ok, detail):
    return f"criterion {k} [{'PASS' if ok else 'FAIL'}] {CRITERIA[k][0]}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    from conftest import ACCEPTANCE_LINES

    ok, detail = CRITERIA[k][1]()
    msg = line(k, ok, detail)
    ACCEPTANCE_LINES[k] = msg
    print(msg)
    assert ok, msg


if __name__ == "__main__":
    which = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    failed = 0
    for k in which:
        ok, detail = CRITERIA[k][1]()
        failed += not ok
        print(line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
