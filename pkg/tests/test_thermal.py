import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smasafe.thermal import (AugmentedState, CalibrationError, LumpedThermalParams,
                             LumpedThermalRegressor, PhysicalThermalParams, TraceFormatError,
                             augment, build_block_system, fit_lumped, lump, prbs_duties,
                             read_trace_csv, simulate_trace, step_block, step_temperature,
                             to_states, write_trace_csv)

from conftest import random_system

unit = st.floats(0.0, 1.0)
decay = st.floats(0.01, 0.99)
gain = st.floats(0.01, 20.0)
offset = st.floats(0.0, 10.0)
temp = st.floats(-20.0, 200.0)


def test_lump_reference_values():
    # cooling rate 0.1 /s, dt 1 s, T_0 20 °C, rho*J^2*dt/C_v = 3
    phys = PhysicalThermalParams(h_c=1.0, A_c=0.1, C_v=1.0, rho=3.0, J=1.0, T_0=20.0, dt=1.0)
    p = lump(phys)
    assert p.as_tuple() == pytest.approx((0.9, 3.0, 2.0), abs=1e-15)


def test_lump_small_dt_limit():
    phys = PhysicalThermalParams(1.0, 0.1, 1.0, 3.0, 1.0, 20.0, dt=1e-9)
    p = lump(phys)
    assert p.as_tuple() == pytest.approx((1.0, 0.0, 0.0), abs=1e-8)


@given(h=st.floats(0.1, 50), area=st.floats(1e-4, 1e-2), cv=st.floats(0.01, 1),
       t0=st.floats(-10, 40), dt=st.floats(1e-3, 0.5))
def test_lump_ambient_equilibrium_and_euler_step(h, area, cv, t0, dt):
    phys = PhysicalThermalParams(h, area, cv, 2.0, 1.5, t0, dt)
    if not 0 < 1 - phys.cooling_rate * dt < 1:
        with pytest.raises(ValueError, match="unstable"):
            lump(phys)
        return
    p = lump(phys)
    # 1 - a1 cancels catastrophically for tiny decay; allow the matching rounding
    assert p.ambient == pytest.approx(t0, abs=1e-14 * max(1.0, abs(t0)) / (1.0 - p.a1))
    # one lumped step against the forward-Euler update written out directly
    for T, u in [(t0, 0.0), (t0 + 30, 0.5), (t0 - 5, 1.0)]:
        direct = T - phys.cooling_rate * (T - t0) * dt + dt / cv * phys.rho * phys.J**2 * u
        assert step_temperature(p, T, u) == pytest.approx(direct, abs=1e-12 * max(1, abs(direct)))


def test_lump_rejects_unstable_discretization():
    with pytest.raises(ValueError, match="unstable"):
        lump(PhysicalThermalParams(1.0, 1.0, 1.0, 1.0, 1.0, 20.0, dt=2.0))


@pytest.mark.parametrize("T,u,expected", [(20.0, 0.0, 20.0), (20.0, 1.0, 23.0), (50.0, 0.0, 47.0)])
def test_step_temperature_examples(p_ref, T, u, expected):
    assert step_temperature(p_ref, T, u) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("u", [-0.01, 1.01, np.nan])
def test_step_temperature_rejects_bad_duty(p_ref, u):
    with pytest.raises(ValueError):
        step_temperature(p_ref, 20.0, u)


def test_augmented_state_slot_is_fixed():
    assert AugmentedState(25.0).one == 1.0
    with pytest.raises(ValueError):
        AugmentedState(25.0, one=0.5)


def test_check_physical():
    LumpedThermalParams(0.9, 3.0, 2.0).check_physical()
    for bad in [(1.0, 3.0, 2.0), (0.9, 0.0, 2.0), (0.9, 3.0, -1.0)]:
        with pytest.raises(ValueError):
            LumpedThermalParams(*bad).check_physical()


def test_build_block_system_single(p_ref):
    sys = build_block_system([p_ref])
    (A, B), = sys.blocks
    np.testing.assert_array_equal(A, [[0.9, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(B, [3.0, 0.0])


def test_build_block_system_replication_and_order(p_ref):
    sys = build_block_system([p_ref] * 10)
    assert sys.m == 10
    assert all(np.array_equal(A, sys.blocks[0][0]) for A, _ in sys.blocks)
    params = [LumpedThermalParams(0.5 + 0.01 * k, 1.0 + k, 0.1 * k) for k in range(7)]
    assert build_block_system(params).params == params


def test_build_block_system_empty():
    with pytest.raises(ValueError):
        build_block_system([])


def test_step_block_matches_step_temperature(p_ref, rng):
    params = [LumpedThermalParams(0.9 - 0.05 * k, 3.0 + k, 2.0 * k) for k in range(4)]
    sys = build_block_system(params)
    T = rng.uniform(0, 90, 4)
    u = rng.uniform(0, 1, 4)
    x_next = step_block(sys, augment(T), u)
    expected = [step_temperature(p, t, v) for p, t, v in zip(params, T, u)]
    np.testing.assert_allclose(x_next[:, 0], expected, rtol=0, atol=1e-12)
    assert np.all(x_next[:, 1] == 1.0)


def test_step_block_accepts_state_objects(p_ref):
    sys = build_block_system([p_ref] * 2)
    out = step_block(sys, [AugmentedState(20.0), AugmentedState(50.0)], [1.0, 0.0])
    assert [s.temp for s in to_states(out)] == pytest.approx([23.0, 47.0])


def test_step_block_ambient_fixed_point(rng):
    sys = random_system(rng)
    x = augment(sys.ambient)
    np.testing.assert_allclose(step_block(sys, x, np.zeros(sys.m)), x, atol=1e-12)


def test_step_block_dimension_mismatch(p_ref):
    sys = build_block_system([p_ref] * 3)
    with pytest.raises(ValueError):
        step_block(sys, augment([20.0, 20.0]), [0, 0, 0])
    with pytest.raises(ValueError):
        step_block(sys, augment([20.0] * 3), [0, 0])


def _dense(sys):
    """Explicit 2m x 2m and 2m x m matrices assembled block by block."""
    m = sys.m
    A = np.zeros((2 * m, 2 * m))
    B = np.zeros((2 * m, m))
    for i in range(m):
        A[2 * i, 2 * i] = sys.a1[i]
        A[2 * i, 2 * i + 1] = sys.a3[i]
        A[2 * i + 1, 2 * i + 1] = 1.0
        B[2 * i, i] = sys.a2[i]
    return A, B


@pytest.mark.parametrize("m", [1, 2, 5, 10])
def test_step_block_matches_dense_oracle(rng, m):
    for _ in range(50):
        sys = random_system(rng, m)
        x = augment(rng.uniform(-10, 120, m))
        u = rng.uniform(0, 1, m)
        A, B = _dense(sys)
        expected = A @ x.reshape(-1) + B @ u
        np.testing.assert_allclose(step_block(sys, x, u).reshape(-1), expected, rtol=0, atol=1e-12)


@settings(max_examples=200)
@given(a1=decay, a2=gain, a3=offset, u=unit, T=temp)
def test_constant_input_converges_geometrically(a1, a2, a3, u, T):
    p = LumpedThermalParams(a1, a2, a3)
    eq = p.equilibrium(u)
    err = T - eq
    for _ in range(5):
        T = step_temperature(p, T, u)
        err_next = T - eq
        assert err_next == pytest.approx(a1 * err, abs=1e-9 * max(1.0, abs(eq), abs(T)))
        err = err_next


@settings(max_examples=300)
@given(a1=decay, a2=gain, a3=offset, T=temp, dT=st.floats(0, 50), u=unit, du=unit)
def test_step_is_monotone(a1, a2, a3, T, dT, u, du):
    p = LumpedThermalParams(a1, a2, a3)
    u_hi = min(1.0, u + du)
    assert step_temperature(p, T, u) <= step_temperature(p, T + dT, u_hi)


def test_fit_noiseless_round_trip(p_ref):
    duties = np.arange(50) % 2
    trace = simulate_trace(p_ref, 20.0, duties)
    reg = LumpedThermalRegressor().fit_trace(trace[:, 0], trace[:, 1])
    np.testing.assert_allclose(reg.params_.as_tuple(), p_ref.as_tuple(), atol=1e-9)
    assert reg.residual_rms_ < 1e-9
    assert fit_lumped(trace) == reg.params_


def test_fit_constant_trace_is_rank_deficient(p_ref):
    trace = simulate_trace(p_ref, 20.0, np.zeros(30))
    with pytest.raises(CalibrationError, match="rank-deficient"):
        fit_lumped(trace)


def test_fit_too_short(p_ref):
    with pytest.raises(CalibrationError):
        fit_lumped([(20.0, 1.0), (23.0, 0.0), (22.7, 1.0)])


def test_fit_reports_unphysical_result():
    # heating with a negative gain: fitted a2 < 0 must not be clamped
    trace = simulate_trace(LumpedThermalParams(0.9, -3.0, 5.0), 50.0, np.arange(40) % 2)
    with pytest.raises(CalibrationError, match="a2"):
        fit_lumped(trace)
    reg = LumpedThermalRegressor(validate=False).fit_trace(trace[:, 0], trace[:, 1])
    assert reg.params_.a2 == pytest.approx(-3.0)


def test_fit_noisy_within_one_percent(p_ref):
    rng = np.random.default_rng(7)
    trace = simulate_trace(p_ref, 20.0, prbs_duties(2000, rng=rng), noise=0.1, rng=rng)
    fitted = np.array(fit_lumped(trace).as_tuple())
    rel = np.abs(fitted - p_ref.as_tuple()) / np.array(p_ref.as_tuple())
    assert rel.max() < 0.01


def test_regressor_estimator_api(p_ref):
    trace = simulate_trace(p_ref, 20.0, np.arange(20) % 2)
    X = trace[:-1]
    y = trace[1:, 0]
    reg = LumpedThermalRegressor().fit(X, y)
    assert reg.get_params() == {"validate": True}
    np.testing.assert_allclose(reg.predict(X), y, atol=1e-9)
    assert reg.score(X, y) == pytest.approx(1.0)


def test_trace_csv_round_trip(tmp_path, p_ref):
    trace = simulate_trace(p_ref, 20.0, np.arange(10) % 2)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, trace)
    assert path.read_text().splitlines()[0] == "step,temp_c,duty"
    np.testing.assert_array_equal(read_trace_csv(path), trace)


@pytest.mark.parametrize("body,match", [
    ("time,temp,duty\n", "header"),
    ("step,temp_c,duty\n0,20,0.5,1\n", ":2:"),
    ("step,temp_c,duty\n0,20,0.5\n1,abc,0\n", ":3:"),
    ("step,temp_c,duty\n0,20,1.5\n", "duty"),
])
def test_trace_csv_errors(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(TraceFormatError, match=match):
        read_trace_csv(path)
