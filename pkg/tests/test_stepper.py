import math

import numpy as np
import pytest

from maxreg.methods import bdf_coefficients, crank_nicolson, gauss_tableau, radau_iia_tableau
from maxreg.spatial import DiscreteOperator, laplacian_1d
from maxreg.stepper import (
    ForcingSequence,
    NewtonConfig,
    StepFailure,
    TimeSeries,
    read_frames_binary,
    run_bdf_with_rk_startup,
    run_lmm,
    run_nonlinear_euler,
    run_one_step,
    run_rk,
    write_frames_binary,
    write_trajectory_csv,
)


def scalar(lam):
    return DiscreteOperator.diagonal([lam])


def test_backward_euler_scalar_closed_form():
    tau, lam = 0.1, -3.0
    s = run_one_step("be", scalar(lam), None, tau, 5, u0=[1.0])
    expected = (1 / (1 - tau * lam)) ** np.arange(6)
    assert np.allclose(s.frames[:, 0], expected, rtol=1e-14)


def test_crank_nicolson_scalar_closed_form():
    tau, lam = 0.2, -1.0
    s = run_one_step(crank_nicolson(), scalar(lam), None, tau, 4, u0=[1.0])
    r = (1 + tau * lam / 2) / (1 - tau * lam / 2)
    assert np.allclose(s.frames[:, 0], r ** np.arange(5), rtol=1e-14)


def test_unknown_one_step_name():
    with pytest.raises(ValueError):
        run_one_step("rk4", scalar(-1.0), None, 0.1, 2)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_bdf_order(k):
    # u' = -u + f with u = sin t, started from exact values
    lam = -1.0
    f = lambda t: np.array([math.cos(t) + math.sin(t)])  # noqa: E731
    errs = []
    for n in (20, 40):
        tau = 1.0 / n
        start = np.array([[math.sin(j * tau)] for j in range(k)])
        s = run_lmm(bdf_coefficients(k), scalar(lam), f, tau, n, starting=start)
        errs.append(abs(s.frames[-1, 0] - math.sin(1.0)))
    assert math.log2(errs[0] / errs[1]) > k - 0.3


@pytest.mark.parametrize("rk,order", [(radau_iia_tableau(2), 3), (gauss_tableau(2), 4)])
def test_rk_order(rk, order):
    f = lambda t: np.array([math.cos(t) + math.sin(t)])  # noqa: E731
    errs = []
    for n in (10, 20):
        s = run_rk(rk, scalar(-1.0), f, 1.0 / n, n)
        errs.append(abs(s.frames[-1, 0] - math.sin(1.0)))
    assert math.log2(errs[0] / errs[1]) > order - 0.3


def test_rk_stage_paths_agree():
    op = laplacian_1d(6)
    rng = np.random.default_rng(3)
    stages = rng.standard_normal((4, 3, 6))
    forcing = ForcingSequence(stage_values=stages)
    a = run_rk(radau_iia_tableau(3), op, forcing, 0.05, 4)
    b = run_rk(radau_iia_tableau(3), op, forcing, 0.05, 4, force_dense=True)
    assert np.abs(a.frames - b.frames).max() < 1e-12


def test_bdf_startup_meta():
    s = run_bdf_with_rk_startup(bdf_coefficients(3), radau_iia_tableau(3), laplacian_1d(5),
                                lambda t: np.ones(5), 0.01, 10)
    assert len(s.meta["startup"]["u_over_tau"]) == 3
    with pytest.raises(ValueError):
        run_bdf_with_rk_startup(bdf_coefficients(3), radau_iia_tableau(3), laplacian_1d(5), None, 0.1, 1)


def test_lmm_rejects_explicit_and_bad_start():
    from maxreg.methods import lmm_from_coefficients
    ee = lmm_from_coefficients([1.0, -1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        run_lmm(ee, scalar(-1.0), None, 0.1, 3)
    with pytest.raises(ValueError):
        run_lmm(bdf_coefficients(2), scalar(-1.0), None, 0.1, 3, starting=np.zeros((1, 1)))


def test_nonlinear_euler_newton_modes_agree():
    op = laplacian_1d(12, "neumann")
    x = op.grid.axis()
    g = lambda u, p: u * p**2  # noqa: E731
    dg = lambda u, p: (p**2, 2 * u * p)  # noqa: E731
    a = run_nonlinear_euler(op, g, None, np.cos(np.pi * x), 0.05, 5, NewtonConfig(jacobian="analytic"), dg=dg)
    b = run_nonlinear_euler(op, g, None, np.cos(np.pi * x), 0.05, 5)
    assert np.abs(a.frames - b.frames).max() < 1e-8


def test_newton_failure_reported():
    op = laplacian_1d(8, "neumann")
    g = lambda u, p: u**3  # noqa: E731
    with pytest.raises(StepFailure) as info:
        run_nonlinear_euler(op, g, None, 50 * np.ones(8), 1.0, 2, NewtonConfig(max_iter=1, tol=1e-14))
    assert info.value.step >= 1
    with pytest.raises(ValueError):
        run_nonlinear_euler(op, g, None, np.ones(8), 0.1, 1, NewtonConfig(jacobian="analytic"))


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(tol=0)
    with pytest.raises(ValueError):
        NewtonConfig(jacobian="secant")


def test_binary_and_csv_round_trip(tmp_path):
    s = run_one_step("be", laplacian_1d(4), lambda t: np.ones(4), 0.25, 3)
    write_frames_binary(s, tmp_path / "f.bin")
    header, frames = read_frames_binary(tmp_path / "f.bin")
    assert header == {"dim": 1, "n": 4, "N": 3, "tau": 0.25}
    assert np.array_equal(frames, s.frames)
    write_trajectory_csv(s, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "n,t_n,u0,u1,u2,u3" and len(lines) == 5


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeries(0.1, np.zeros((3, 2)), stage_frames=np.zeros((1, 1, 2)))
    with pytest.raises(ValueError):
        TimeSeries(0.1, np.zeros((3, 2))).frame(0)
