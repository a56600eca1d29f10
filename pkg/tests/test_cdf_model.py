import math

import numpy as np
import pytest

from cdftpp import autodiff as ad
from cdftpp import cdf_model as cm
from cdftpp.autodiff import ParamVector
from cdftpp.modelbase import ModelConfig, make_batch
from cdftpp.synthetic import EventSequence
from oracles import assert_close, fd_param_grad


def sigmoid(x):
    return 0.5 * (math.tanh(0.5 * x) + 1.0)


def toy_model():
    """Width-1 everything, weights 1, biases 0 (except where stated)."""
    model = cm.CdfModel(ModelConfig(hidden_width=1, mnn_width=1, hidden_layers=1))
    params = ParamVector.from_specs(model.param_specs())
    for name in ("mnn.tau_w", "mnn.hist_w", "mnn.layer0_w", "mnn.out_w"):
        params.view(name)[...] = 1.0
    return model, params


def random_model(seed, hidden_width=6, mnn_width=5):
    model = cm.CdfModel(ModelConfig(hidden_width=hidden_width,
                                    mnn_width=mnn_width, hidden_layers=1))
    return model, model.init_params(seed)


def test_cdf_toy_hand_value():
    model, params = toy_model()
    f = cm.cdf(1.0, [1.0], params, model)
    assert f == pytest.approx(sigmoid(math.tanh(1.0)), abs=1e-9)
    assert f == pytest.approx(0.6817, abs=5e-4)


def test_cdf_toy_limit_at_zero_shows_defect_mass():
    model, params = toy_model()
    assert cm.cdf(1e-12, [1.0], params, model) == pytest.approx(0.5, abs=1e-9)


def test_cdf_monotone_in_tau():
    rng = np.random.default_rng(0)
    for seed in range(5):
        model, params = random_model(seed)
        hs = rng.uniform(0.0, 1.0, size=(500, model.config.hidden_width))
        tau1 = rng.uniform(1e-6, 50.0, size=500)
        tau2 = tau1 + rng.uniform(1e-6, 50.0, size=500)
        f1, _ = cm._eval_many(tau1, hs, params, model)
        f2, _ = cm._eval_many(tau2, hs, params, model)
        assert np.all(f1 <= f2)


def test_cdf_range_strictly_inside_unit_interval():
    for seed in range(5):
        model, params = random_model(seed)
        h = np.abs(np.random.default_rng(seed).normal(size=model.config.hidden_width))
        for tau in (1e-6, 1e6):
            f = cm.cdf(tau, h, params, model)
            assert 0.0 < f < 1.0


def test_density_toy_chain_rule_value():
    model, params = toy_model()
    p = cm.density(1e-9, [1.0], params, model)
    assert p == pytest.approx(0.25, abs=1e-6)


def test_density_nonnegative_everywhere_sampled():
    rng = np.random.default_rng(1)
    model, params = random_model(3)
    hs = rng.uniform(0.0, 2.0, size=(1000, model.config.hidden_width))
    taus = rng.uniform(1e-6, 100.0, size=1000)
    _, p = cm._eval_many(taus, hs, params, model)
    assert np.all(p >= 0.0)


def test_density_matches_central_difference_of_cdf():
    model, params = random_model(7)
    h = np.abs(np.random.default_rng(7).normal(size=model.config.hidden_width))
    eps = 1e-6
    for tau in (0.05, 0.7, 3.0, 12.0):
        p = cm.density(tau, h, params, model)
        fd = (cm.cdf(tau + eps, h, params, model)
              - cm.cdf(tau - eps, h, params, model)) / (2 * eps)
        assert p == pytest.approx(fd, rel=1e-5, abs=1e-12)


def test_survivor_complements_cdf():
    model, params = toy_model()
    s = cm.survivor(1.0, [1.0], params, model)
    assert s == pytest.approx(1.0 - 0.6817, abs=5e-4)
    f = cm.cdf(1.0, [1.0], params, model)
    assert f + s == pytest.approx(1.0, abs=1e-15)
    taus = np.linspace(0.1, 20.0, 50)
    svals = [cm.survivor(t, [1.0], params, model) for t in taus]
    assert np.all(np.diff(svals) <= 0.0)


def test_intensity_toy_ratio():
    model, params = toy_model()
    lam = cm.intensity(1e-9, [1.0], params, model)
    assert lam == pytest.approx(0.25 / 0.5, abs=1e-6)


def test_intensity_consistency_with_log_survivor_slope():
    model, params = random_model(11)
    h = np.abs(np.random.default_rng(11).normal(size=model.config.hidden_width))
    eps = 1e-6
    checked = 0
    for tau in (0.1, 0.2, 0.5, 1.0, 2.0):
        # need a non-degenerate density: the finite difference of log S is
        # pure rounding noise once the CDF has saturated
        if cm.density(tau, h, params, model) < 1e-4:
            continue
        lam = cm.intensity(tau, h, params, model)
        fd = -(math.log(cm.survivor(tau + eps, h, params, model))
               - math.log(cm.survivor(tau - eps, h, params, model))) / (2 * eps)
        assert lam == pytest.approx(fd, rel=1e-5)
        checked += 1
    assert checked >= 3


def test_intensity_mutual_consistency_lambda_s_equals_p():
    model, params = random_model(13)
    rng = np.random.default_rng(13)
    for _ in range(20):
        tau = float(rng.uniform(0.05, 5.0))
        h = rng.uniform(0.0, 1.5, size=model.config.hidden_width)
        out = cm.evaluate(tau, h, params, model)
        assert out.intensity * out.S == pytest.approx(out.p, rel=1e-10)


def test_nll_single_event_floored_density():
    model, params = toy_model()
    seq = EventSequence(np.array([1.0]), 1.0)
    # h_0 = 0 and zero history bias make the CDF flat: density 0, floored
    result = cm.nll(seq, params, model)
    assert result.per_event == pytest.approx(-math.log(1e-12), rel=1e-12)
    assert result.n_events == 1


def test_nll_additivity_across_sequences():
    model, params = random_model(17)
    rng = np.random.default_rng(17)
    t_a = np.cumsum(rng.exponential(1.0, size=6))
    t_b = np.cumsum(rng.exponential(1.0, size=9))
    a = EventSequence(t_a, t_a[-1])
    b = EventSequence(t_b, t_b[-1])
    total = cm.nll(a, params, model).total + cm.nll(b, params, model).total
    batch = make_batch([a, b], max_len=16)
    tape = ad.Tape()
    logp, _ = model.log_density_graph(tape, tape.bind(params), batch)
    batched = -float((logp.value * batch.flat_mask()).sum())
    assert batched == pytest.approx(total, rel=1e-12)


def test_nll_gradient_matches_fd():
    model, params = random_model(19, hidden_width=4, mnn_width=3)
    rng = np.random.default_rng(19)
    times = np.cumsum(rng.exponential(1.0, size=7))
    seq = EventSequence(times, times[-1])
    batch = make_batch([seq], max_len=8)

    tape = ad.Tape()
    bindings = tape.bind(params)
    logp, _ = model.log_density_graph(tape, bindings, batch)
    loss = -ad.asum(logp * tape.constant(batch.flat_mask()))
    g = tape.grad_params(loss, params, bindings)

    fd = fd_param_grad(lambda pv: cm.nll(seq, pv, model).total, params, eps=1e-6)
    assert_close(g.data, fd, rtol=1e-4, atol=1e-7, label="nll gradient")


def test_project_positive_rules():
    model, params = random_model(23)
    params.view("mnn.tau_w")[0, 0] = -0.3
    params.view("mnn.hist_b")[0] = -0.2
    params.view("mnn.tau_b")[0] = -0.9  # free bias stays untouched
    model.project_positive(params)
    assert params.view("mnn.tau_w")[0, 0] == pytest.approx(0.3)
    assert params.view("mnn.hist_b")[0] == pytest.approx(0.2)
    assert params.view("mnn.tau_b")[0] == pytest.approx(-0.9)
    snapshot = params.data.copy()
    model.project_positive(params)
    assert np.array_equal(params.data, snapshot)


def test_defect_mass_reported_not_renormalized():
    model, params = random_model(29)
    h = np.abs(np.random.default_rng(29).normal(size=model.config.hidden_width))
    below, above = cm.defect_mass(h, params, model)
    assert 0.0 < below < 1.0
    assert 0.0 < above < 1.0


def test_eval_rejects_invalid_inputs():
    model, params = toy_model()
    with pytest.raises(ValueError):
        cm.cdf(-1.0, [1.0], params, model)
    with pytest.raises(ValueError):
        cm.cdf(1.0, [-0.5], params, model)


def test_sign_assertion_fires_on_corrupted_weights():
    model, params = random_model(31)
    params.view("mnn.out_w")[0, 0] = -1.0
    with pytest.raises(AssertionError):
        cm.cdf(1.0, np.zeros(model.config.hidden_width), params, model)
