"""The thirteen acceptance criteria, one test and one PASS/FAIL line each."""

import math
import time

import numpy as np
import pytest

from maxreg.converge import convergence_experiment
from maxreg.cq import (
    convolve,
    cq_weights_contour,
    cq_weights_impulse,
    kernel_decay_report,
    max_relative_deviation,
)
from maxreg.methods import (
    _stability_vec,
    bdf_coefficients,
    backward_euler,
    check_a_stability,
    crank_nicolson,
    delta_at,
    delta_matrix,
    gauss_tableau,
    multiplier,
    r_infinity,
    radau_iia_tableau,
    stability_function,
)
from maxreg.regularity import (
    linfty_bruteforce,
    linfty_log_factor,
    solution_map_norm,
    uniformity_scan,
)
from maxreg.spatial import DiscreteOperator, laplacian_1d
from maxreg.stepper import ForcingSequence, run_lmm, run_rk

TABLEAUX = [radau_iia_tableau(s) for s in (1, 2, 3)] + [gauss_tableau(s) for s in (1, 2, 3)]


def lap(h, bc):
    """1D Laplacian on [0, 1] with mesh width exactly h."""
    cells = round(1 / h)
    return laplacian_1d(cells - 1 if bc == "dirichlet" else cells, bc)


def test_01_bdf_angles(verdict):
    t0 = time.perf_counter()
    expected = [90.0, 90.0, 86.03, 73.35, 51.84, 17.84]
    got = [check_a_stability(bdf_coefficients(k)).alpha_degrees for k in range(1, 7)]
    err = max(abs(g - e) for g, e in zip(got, expected))
    dt = time.perf_counter() - t0
    detail = "angles " + ", ".join(f"{g:.3f}" for g in got) + f"; max dev {err:.4f} deg; {dt:.1f}s"
    verdict("1 BDF A(alpha) angles", err <= 0.05 and dt < 5, detail)


def test_02_r_infinity(verdict):
    radau = max(abs(r_infinity(radau_iia_tableau(s))) for s in (1, 2, 3))
    gauss = max(abs(r_infinity(gauss_tableau(s)) - (-1) ** s) for s in (1, 2, 3))
    verdict("2 R(inf)", radau < 1e-12 and gauss < 1e-12,
            f"Radau max |R(inf)| = {radau:.2e}; Gauss max |R(inf) - (-1)^s| = {gauss:.2e}")


def test_03_order_conditions(verdict):
    worst = 0.0
    for rk in TABLEAUX:
        top = 2 * rk.s - 1 if rk.label.startswith("Radau") else 2 * rk.s
        for q in range(1, top + 1):
            worst = max(worst, abs(rk.b @ rk.c ** (q - 1) - 1 / q))
    verdict("3 order conditions", worst < 1e-12, f"max |b^T c^(q-1) - 1/q| = {worst:.2e}")


def _resolvent_formula(rk, zeta, z):
    eye = np.eye(rk.s)
    inv = np.linalg.inv(eye - z * rk.a)
    ones = np.ones(rk.s)
    r = stability_function(rk, z)
    return rk.a @ inv + inv @ np.outer(ones, rk.b) @ inv * zeta / (1 - r * zeta)


def test_04_delta_resolvent_and_spectrum(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    ident, spec = 0.0, 0.0
    for rk in TABLEAUX:
        poles = np.linalg.eigvals(np.linalg.inv(rk.a))
        for _ in range(50):
            zeta = np.sqrt(rng.uniform(0, 0.98)) * np.exp(2j * np.pi * rng.uniform())
            z = complex(rng.normal(), rng.normal())
            dm = delta_matrix(rk, zeta)
            direct = np.linalg.inv(dm - z * np.eye(rk.s))
            formula = _resolvent_formula(rk, zeta, z)
            ident = max(ident, np.abs(direct - formula).max() / np.abs(direct).max())
            for mu in np.linalg.eigvals(dm):
                d_pole = np.abs(poles - mu).min()
                d_curve = abs(_stability_vec(rk, np.array([mu]))[0] * zeta - 1)
                spec = max(spec, min(d_pole, d_curve))
    dt = time.perf_counter() - t0
    verdict("4 Delta resolvent identity and spectrum", ident < 1e-12 and spec < 1e-9 and dt < 5,
            f"identity rel err {ident:.2e}; spectrum distance {spec:.2e}; {dt:.1f}s")


def _d6(f, z, h=1e-3):
    """Sixth-order central difference along the real direction (f analytic)."""
    c = (-1, 9, -45, 0, 45, -9, 1)
    return sum(ci * f(z + (i - 3) * h) for i, ci in enumerate(c) if ci) / (60 * h)


def test_05_generating_function_identities(verdict):
    rng = np.random.default_rng(5)
    b, c = rng.normal(size=(2, 6, 6))
    # negative definite symmetric part: a stable nonnormal matrix
    a = -(b @ b.T + 0.5 * np.eye(6)) + (c - c.T)
    tau = 0.1
    worst = {"BE": 0.0, "CN": 0.0}
    for _ in range(100):
        zeta = np.sqrt(rng.uniform(0, 0.8)) * np.exp(2j * np.pi * rng.uniform())
        for name, meth, lhs, c in (("BE", backward_euler(), lambda z: 1 - z, 1.0),
                                   ("CN", crank_nicolson(), lambda z: (1 - z) * (1 + z), 2.0)):
            m = multiplier(meth, zeta, a, tau)
            dm = _d6(lambda z: multiplier(meth, z, a, tau), zeta)
            rel = np.abs(lhs(zeta) * dm - c * (-m + m @ m)).max() / np.abs(m).max()
            worst[name] = max(worst[name], rel)
    verdict("5 generating-function identities", max(worst.values()) < 1e-8,
            f"max rel err BE {worst['BE']:.2e}, CN {worst['CN']:.2e}")


def test_06_uniform_l2_regularity(verdict):
    t0 = time.perf_counter()
    methods = [backward_euler(), crank_nicolson(), bdf_coefficients(2), radau_iia_tableau(2), gauss_tableau(2)]
    taus = [2.0**-j for j in range(4, 11)]
    ratios = {}
    for m in methods:
        est = []
        for bc in ("dirichlet", "neumann"):
            ops = {h: lap(h, bc) for h in (1 / 16, 1 / 32, 1 / 64, 1 / 128)}
            table = uniformity_scan(m, ops, [16, 64, 256, 1024], taus, mode="power-iteration", tol=1e-4)
            assert not any(r.error for r in table.rows)
            est.extend(table.estimates())
        ratios[m.label] = max(est) / min(est)
    dt = time.perf_counter() - t0
    worst = max(ratios.values())
    detail = ", ".join(f"{k} {v:.4f}" for k, v in ratios.items()) + f"; {dt:.0f}s"
    verdict("6 uniform l2 regularity max/min", worst < 1.25 and dt < 600, detail)


def test_07_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    q = np.linalg.qr(rng.normal(size=(6, 6)))[0]
    sym = DiscreteOperator.dense(q @ np.diag(-rng.uniform(0.5, 50, 6)) @ q.T)
    cases = [
        (backward_euler(), sym, 8, 0.1),
        (bdf_coefficients(2), lap(1 / 16, "dirichlet"), 64, 2**-6),
        (crank_nicolson(), lap(1 / 16, "neumann"), 128, 2**-5),
        (radau_iia_tableau(2), lap(1 / 16, "dirichlet"), 64, 2**-4),
        (gauss_tableau(2), sym, 100, 0.05),
    ]
    power, boyd = 0.0, 0.0
    for m, op, n, tau in cases:
        exact = solution_map_norm(m, op, n, tau, mode="exact-svd").estimate
        pw = solution_map_norm(m, op, n, tau, mode="power-iteration", tol=1e-10).estimate
        by = solution_map_norm(m, op, n, tau, p=2, q=2, mode="boyd-ascent").estimate
        power = max(power, abs(pw - exact) / exact)
        boyd = max(boyd, abs(by - exact) / exact)
    dt = time.perf_counter() - t0
    verdict("7 power/Boyd vs dense SVD", power < 1e-6 and boyd < 1e-4 and dt < 120,
            f"power rel dev {power:.2e}; Boyd p=2 rel dev {boyd:.2e}; {dt:.0f}s")


def test_08_lp_lower_bounds(verdict):
    t0 = time.perf_counter()
    op = lap(1 / 32, "dirichlet")
    m = bdf_coefficients(2)
    ratios = {}
    for p in ("4/3", "4"):
        table = uniformity_scan(m, op, [16, 64, 256, 1024], [2.0**-4, 2.0**-6, 2.0**-8, 2.0**-10],
                                p=p, q=2, mode="boyd-ascent", rtol=1e-4)
        assert not any(r.error for r in table.rows)
        ratios[p] = table.ratio
    dt = time.perf_counter() - t0
    verdict("8 l^p Boyd lower-bound scans", max(ratios.values()) < 1.5 and dt < 600,
            f"max/min p=4/3 {ratios['4/3']:.4f}, p=4 {ratios['4']:.4f}; {dt:.0f}s")


def test_09_cq_routes_and_reconstruction(verdict):
    t0 = time.perf_counter()
    op = laplacian_1d(32, "dirichlet")
    rng = np.random.default_rng(9)
    dual, recon = 0.0, 0.0
    methods = [bdf_coefficients(k) for k in range(1, 7)] + [crank_nicolson()] + TABLEAUX
    for m in methods:
        tau, n = 2**-6, 128
        imp = cq_weights_impulse(m, op, tau, n)
        con = cq_weights_contour(m, op, tau, n)
        dual = max(dual, max_relative_deviation(imp, con))
        # arbitrary forcing through the stepper versus the discrete convolution
        if hasattr(m, "s"):
            f = rng.normal(size=(n, m.s, op.size))
            series = run_rk(m, op, ForcingSequence(stage_values=f), tau, n)
            ref = series.stage_frames
            conv = convolve(imp, f)
        else:
            k = m.k
            f = np.zeros((n + k + 1, op.size))
            f[k:] = rng.normal(size=(n + 1, op.size))
            series = run_lmm(m, op, f, tau, n + k)
            ref = series.frames[k : k + n]
            conv = convolve(imp, f[k : k + n])
        recon = max(recon, np.abs(conv - ref).max() / np.abs(ref).max())
    dt = time.perf_counter() - t0
    verdict("9 CQ dual route and reconstruction", dual < 1e-8 and recon < 1e-10 and dt < 60,
            f"route deviation {dual:.2e}; reconstruction {recon:.2e}; {dt:.1f}s")


def test_10_kernel_decay(verdict):
    t0 = time.perf_counter()
    ops = {"scalar": (DiscreteOperator.diagonal([-1.0]), 4.0), "laplacian": (lap(1 / 32, "dirichlet"), 1.0)}
    worst, where = 0.0, ""
    for m in [bdf_coefficients(k) for k in range(1, 7)] + [radau_iia_tableau(2)]:
        for name, (op, horizon) in ops.items():
            sups = []
            for j in range(2, 11):
                tau = 2.0**-j
                n = max(16, math.ceil(horizon / tau))
                sups.append(kernel_decay_report(cq_weights_impulse(m, op, tau, n), op).sup)
            r = max(sups) / min(sups)
            if r > worst:
                worst, where = r, f"{m.label}/{name}"
    dt = time.perf_counter() - t0
    verdict("10 kernel decay sup t||A e_n|| over tau", worst < 2 and dt < 120,
            f"worst max/min {worst:.3f} at {where}; {dt:.1f}s")


def test_11_linfty_log_factor(verdict):
    t0 = time.perf_counter()
    n_list = [2**j for j in range(3, 13)]
    ops = {"scalar": (DiscreteOperator.diagonal([-1.0]), 1.0), "laplacian": (lap(1 / 32, "dirichlet"), 0.1)}
    worst, where = 0.0, ""
    for m in (bdf_coefficients(1), bdf_coefficients(2), radau_iia_tableau(2)):
        for name, (op, tau) in ops.items():
            rows = linfty_log_factor(m, op, n_list, tau)
            at64 = rows[n_list.index(64)].ratio
            r = max(x.ratio for x in rows) / at64
            if r > worst:
                worst, where = r, f"{m.label}/{name}"
    brute = 0.0
    for m in (bdf_coefficients(1), bdf_coefficients(2), radau_iia_tableau(2)):
        for op in (DiscreteOperator.diagonal([-1.0]), laplacian_1d(2, "dirichlet"), laplacian_1d(3, "neumann")):
            block = getattr(m, "s", 1)
            for n in (2, 3, 4, 6, 12):
                if n * op.size > 12 or n * op.size * block > 16:
                    continue
                exact = solution_map_norm(m, op, n, 0.3, p="inf", q="inf", mode="linfty-exact").components
                for which in (0, 1):
                    bf = linfty_bruteforce(m, op, 0.3, n, which=which)
                    brute = max(brute, abs(exact[which] - bf) / bf)
    dt = time.perf_counter() - t0
    verdict("11 l^inf log factor", worst < 3 and brute < 1e-12 and dt < 300,
            f"max (C/log N)/(value at N=64) {worst:.3f} at {where}; brute-force dev {brute:.1e}; {dt:.1f}s")


def test_12_nonlinear_convergence(verdict):
    t0 = time.perf_counter()
    report = convergence_experiment(p=4)
    orders = report.orders()
    dt = time.perf_counter() - t0
    ok = bool(np.all(np.isfinite(orders)) and np.all(np.abs(orders - 1) <= 0.1)) and dt < 300
    verdict("12 nonlinear backward Euler order", ok,
            "orders (lap, dot, W1inf) " + "; ".join(", ".join(f"{x:.3f}" for x in row) for row in orders)
            + f"; {dt:.0f}s")


def test_13_negative_control(verdict):
    t0 = time.perf_counter()
    m = bdf_coefficients(3)
    phi = 88.0  # outside the 86.03 degree sector
    op = lap(1 / 16, "dirichlet")
    op.eigensystem()
    op = op.rotated(math.radians(phi))
    table = uniformity_scan(m, op, [16, 64, 256, 1024], [2.0**-4], mode="power-iteration", tol=1e-6)
    col = [r.estimate for r in sorted(table.rows, key=lambda r: r.N)]
    growth = col[-1] / col[0]
    dt = time.perf_counter() - t0
    verdict("13 negative control growth", growth > 2 and table.monotone_growth and dt < 120,
            "C(N) " + ", ".join(f"{c:.4g}" for c in col) + f"; growth x{growth:.1f}; {dt:.1f}s")
