import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genpolicy.transforms import (ActionContext, Rule, Schedule, SmootherState, activate, baseline_action,
                                  clamp_variant, default_schedule, evaluate_rule, init_offset,
                                  inv_softplus, smooth, softplus)

finite = st.floats(-30, 30, allow_nan=False)


def test_cosine_mask_schedule_values():
    s = default_schedule("maskgit")
    for t in range(1, 9):
        assert baseline_action(s, t, 8)["m"] == pytest.approx(np.cos(0.5 * np.pi * t / 8), abs=1e-15)


def test_rule_table_values():
    assert evaluate_rule(Rule("arccos"), 1, 2) == pytest.approx(2 * np.arccos(0.5) / np.pi)
    assert evaluate_rule(Rule("tau_decay"), 0, 4) == pytest.approx(1.3)
    assert evaluate_rule(Rule("linear_down", 2.0), 1, 4) == pytest.approx(1.5)
    assert evaluate_rule(Rule("linear_up", 2.0), 1, 4) == pytest.approx(0.5)
    assert evaluate_rule(Rule("cosine_power", 2.0, 1.0), 2, 4) == pytest.approx(1.0)
    assert evaluate_rule(Rule("uniform"), 1, 4) == 750.0
    assert evaluate_rule(Rule("quadratic"), 1, 4) == 562.0
    assert evaluate_rule(Rule("linear"), 1, 4) == 0.75
    assert evaluate_rule(Rule("cosine_power_kappa", 3.0, 1.0), 1, 4, 1000, 500.0) == pytest.approx(1.5)


def test_unknown_rule_and_bad_schedule():
    with pytest.raises(ValueError):
        evaluate_rule(Rule("nope"), 1, 2)
    with pytest.raises(ValueError):
        Schedule("diffusion", {"kappa": Rule("cosine"), "w": Rule("constant", 0.0)})
    with pytest.raises(ValueError):
        Schedule("flow", {"kappa": Rule("linear")})


def test_baseline_index_bounds():
    s = default_schedule("flow")
    assert baseline_action(s, 4, 4)["kappa"] == 0.0
    with pytest.raises(ValueError):
        baseline_action(s, 5, 4)


def test_schedule_round_trip():
    s = default_schedule("maskgit", w=Rule("cosine_power", 2.0, 0.5))
    assert Schedule.from_dict("maskgit", s.to_dict()) == s


def test_ema_impulse_response_exact():
    st_ = SmootherState(0.8)
    out, st_ = smooth(st_, np.zeros(1))
    resp = []
    out, st_ = smooth(st_, np.ones(1))
    resp.append(out[0])
    for _ in range(10):
        out, st_ = smooth(st_, np.zeros(1))
        resp.append(out[0])
    expected = [0.2 * 0.8 ** k for k in range(11)]
    np.testing.assert_allclose(resp, expected, rtol=1e-14, atol=0)


def test_ema_constant_input_fixed_point_and_beta_zero():
    st_ = SmootherState(0.8)
    for _ in range(5):
        out, st_ = smooth(st_, np.full(3, 2.5))
    np.testing.assert_allclose(out, 2.5, rtol=1e-15)
    st0 = SmootherState(0.0)
    raw = np.arange(3.0)
    out, st0 = smooth(st0, np.zeros(3))
    out, _ = smooth(st0, raw)
    np.testing.assert_array_equal(out, raw)


def test_smoother_beta_range():
    with pytest.raises(ValueError):
        SmootherState(1.5)


def test_softplus_inverse():
    y = np.array([0.1, 0.5, 3.0, 40.0])
    np.testing.assert_allclose(softplus(inv_softplus(y)), y, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4), st.integers(0, 6))
def test_maskgit_activation_ranges(raw, t):
    a = activate(np.array([raw]), ActionContext("maskgit", t, 7))
    assert 0 <= a["m"][0] <= 1
    assert a["tau"][0] >= 0 and a["zeta"][0] >= 0 and a["w"][0] >= 0


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4), st.integers(2, 50))
def test_ar_activation_ranges(raw, V):
    a = activate(np.array([raw]), ActionContext("ar", 0, 3, vocab_size=V))
    assert 1 <= a["k"][0] <= V and a["k"].dtype.kind == "i"
    assert 0 <= a["rho"][0] <= 1


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=8, max_size=8), st.sampled_from(["diffusion", "flow"]),
       st.sampled_from(["activation", "clamp"]))
def test_kappa_trajectory_strictly_decreasing(raws, paradigm, mode):
    T = 8
    kap = np.array([1000.0 if paradigm == "diffusion" else 1.0])
    seq = [kap[0]]
    for t in range(T):
        ctx = ActionContext(paradigm, t, T, kappa=kap)
        raw = np.array([[raws[t], 0.0]])
        a = activate(raw, ctx) if mode == "activation" else clamp_variant(raw, ctx)
        kap = a["kappa"]
        seq.append(kap[0])
    seq = np.array(seq)
    assert np.all(np.diff(seq) < 0)
    assert seq[-1] == 0.0
    if paradigm == "diffusion":
        assert np.all(seq == np.round(seq))
    else:
        assert np.all(seq[1:-1] >= 1e-4)


@pytest.mark.parametrize("paradigm,V", [("maskgit", None), ("ar", 5), ("diffusion", None), ("flow", None)])
def test_zero_raw_plus_offset_reproduces_schedule(paradigm, V):
    s = default_schedule(paradigm, vocab_size=V)
    T = 5
    kap = np.array([1000.0 if paradigm == "diffusion" else 1.0])
    for t in range(T):
        ctx = ActionContext(paradigm, t, T, kappa=kap, vocab_size=V)
        a = activate(init_offset(s, ctx), ctx)
        ref = baseline_action(s, t + 1, T)
        for key, val in a.items():
            if key in ("m", "rho"):
                assert val[0] == pytest.approx(np.clip(ref[key], 0.02, 0.98), abs=1e-12)
            elif key in ("tau", "zeta", "w"):
                assert val[0] == pytest.approx(max(ref[key], 0.1), abs=1e-12)
            elif key == "k":
                assert val[0] == ref[key]
            else:
                assert val[0] == pytest.approx(ref[key], abs=1e-9 if paradigm == "flow" else 0.5)
        if "kappa" in a:
            kap = a["kappa"]


def test_clamp_offset_is_identity():
    s = default_schedule("maskgit")
    ctx = ActionContext("maskgit", 2, 8)
    a = clamp_variant(init_offset(s, ctx, "clamp"), ctx)
    ref = baseline_action(s, 3, 8)
    for key in ("m", "tau", "zeta", "w"):
        assert a[key][0] == pytest.approx(ref[key], abs=1e-15)
