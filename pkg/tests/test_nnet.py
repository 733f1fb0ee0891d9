import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnn2prog.nnet import (Adam, Arch, RnnModel, TrainConfig, TrainingDiverged, accuracy,
                           f_step, g_step, init_model, loss, loss_and_grads, loss_grad, rnn_forward,
                           train)
from rnn2prog.tasks import Dataset, generate_dataset, get_task


def identity_model() -> RnnModel:
    """f(h, x) = x, g(h) = h."""
    f = [(np.array([[0.0, 1.0]]), np.zeros(1))]
    g = [(np.array([[1.0]]), np.zeros(1))]
    return RnnModel(Arch(1, 1, 1, 1, 1), 1, f, g)


def test_identity_model_solves_current_number():
    ds = generate_dataset(get_task("Current_Number"), 1000, 0)
    ys, trace = rnn_forward(identity_model(), ds.inputs)
    assert np.array_equal(ys, ds.targets)
    assert trace.shape == (1000, 20, 1)
    assert accuracy(identity_model(), ds) == 1.0


def test_zero_model_outputs_bias_composition():
    m = init_model(Arch(2, 3, 2, 4, 2), 1, np.random.default_rng(0))
    m.f_layers = [(np.zeros_like(w), np.zeros_like(b)) for w, b in m.f_layers]
    h0 = np.zeros((1, 2))
    expect = g_step(m, h0)[0]
    ys, _ = rnn_forward(m, np.ones((3, 1, 5)))
    assert np.allclose(ys, expect)


def test_trace_matches_stepwise_recomputation(rng):
    m = init_model(Arch(3, 4, 2, 5, 2), 2, rng)
    x = rng.integers(0, 2, size=(7, 2, 6)).astype(float)
    ys, trace = rnn_forward(m, x)
    h = np.zeros((7, 3))
    for t in range(6):
        assert np.allclose(f_step(m, h, x[:, :, t]), trace[:, t])
        assert np.allclose(g_step(m, trace[:, t]), ys[:, t])
        h = trace[:, t]


def test_forward_is_causal(rng):
    m = init_model(Arch(2, 3, 2, 3, 2), 1, rng)
    x = rng.integers(-10, 11, size=(4, 1, 12)).astype(float)
    y0, _ = rnn_forward(m, x)
    x2 = x.copy()
    x2[:, :, 7:] = rng.integers(-10, 11, size=(4, 1, 5))
    y1, _ = rnn_forward(m, x2)
    assert np.array_equal(y0[:, :7], y1[:, :7])


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        rnn_forward(identity_model(), np.zeros((1, 2, 5)))


def test_loss_values():
    assert loss(3.0, 3.0) == 0.0
    assert loss(1.0, 0.0) == pytest.approx(0.5 * np.log(2), abs=1e-12)
    assert loss(1.0, 0.0) == pytest.approx(0.34657, abs=1e-5)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_loss_symmetric_and_nonnegative(a, b):
    assert loss(a, b) == loss(b, a)
    assert loss(a, b) >= 0
    assert (loss(a, b) == 0) == (a == b) or abs(a - b) < 1e-150


def test_loss_gradient_matches_finite_differences(rng):
    p = rng.normal(0, 3, size=100)
    t = rng.normal(0, 3, size=100)
    h = 1e-6
    num = (loss(p + h, t) - loss(p - h, t)) / (2 * h)
    assert np.allclose(loss_grad(p, t), num, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("arch,k", [((2, 3, 2, 3, 2), 1), ((1, 1, 1, 1, 1), 2), ((2, 2, 3, 2, 3), 1)])
def test_parameter_gradients_match_finite_differences(arch, k):
    rng = np.random.default_rng(3)
    m = init_model(Arch(*arch), k, rng)
    x = rng.normal(size=(5, k, 3))
    y = rng.normal(size=(5, 3))
    _, grads = loss_and_grads(m, x, y, l1=1e-3)
    for p, g in zip(m.parameters(), grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + 1e-6
            up = loss_and_grads(m, x, y, l1=1e-3)[0]
            p[idx] = old - 1e-6
            down = loss_and_grads(m, x, y, l1=1e-3)[0]
            p[idx] = old
            num = (up - down) / 2e-6
            assert abs(num - g[idx]) <= 1e-4 * max(1.0, abs(num)), (idx, num, g[idx])


def test_adam_first_step_moves_by_learning_rate():
    p = [np.array([1.0, -2.0])]
    opt = Adam(p, lr=0.1)
    opt.step([np.array([3.0, -0.5])])
    # bias-corrected first step is lr * sign(g)
    assert np.allclose(p[0], [0.9, -1.9], atol=1e-6)


def test_training_is_deterministic():
    task = get_task("Current_Number")
    a = train(Arch(1, 1, 1, 1, 1), task, 50, 4, TrainConfig(batch_size=64))
    b = train(Arch(1, 1, 1, 1, 1), task, 50, 4, TrainConfig(batch_size=64))
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_current_number_learns_perfectly():
    task = get_task("Current_Number")
    m = train(Arch(1, 1, 1, 1, 1), task, 1500, 0, TrainConfig(batch_size=256, lr=3e-3))
    assert accuracy(m, generate_dataset(task, 65536, 11)) == 1.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    task = get_task("Sum_All")
    with pytest.raises(TrainingDiverged):
        train(Arch(1, 1, 1, 1, 1), task, 5, 0, TrainConfig(lr=np.inf, batch_size=8))


def test_zero_model_on_xor_is_a_coin_flip():
    m = init_model(Arch(1, 1, 1, 1, 1), 2, np.random.default_rng(0))
    m.f_layers = [(np.zeros_like(w), np.zeros_like(b)) for w, b in m.f_layers]
    m.g_layers = [(np.zeros_like(w), np.zeros_like(b)) for w, b in m.g_layers]
    acc = accuracy(m, generate_dataset(get_task("Bitwise_Xor"), 65536, 0))
    assert abs(acc - 0.5) < 0.02


def test_self_consistent_targets_give_perfect_accuracy(rng):
    m = init_model(Arch(2, 2, 2, 2, 2), 1, rng)
    ds = generate_dataset(get_task("Sum_Last2"), 200, 0)
    own = np.rint(rnn_forward(m, ds.inputs)[0]).astype(np.int64)
    assert accuracy(m, Dataset(ds.task_id, ds.inputs, own, 0)) == 1.0


def test_model_file_round_trip(tmp_path, rng):
    m = init_model(Arch(2, 3, 2, 4, 3), 2, rng)
    m.save(tmp_path / "m.json")
    back = RnnModel.load(tmp_path / "m.json")
    assert back.arch == m.arch and back.num_inputs == 2
    for p, q in zip(m.parameters(), back.parameters()):
        assert np.array_equal(p, q)


def test_arch_parse():
    assert Arch.parse("2,1,1,4,2") == Arch(2, 1, 1, 4, 2)
    assert Arch.parse("(1, 1, 2, 1, 1)") == Arch(1, 1, 2, 1, 1)
    with pytest.raises(ValueError):
        Arch.parse("1,2,3")


def test_affine_views():
    m = init_model(Arch(3, 1, 1, 2, 2), 2, np.random.default_rng(1))
    w, b = m.f_layers[0]
    assert m.W.shape == (3, 3) and m.V.shape == (3, 2)
    assert np.array_equal(np.hstack([m.W, m.V]), w) and np.array_equal(m.b, b)
    assert m.U.shape == (2, 3)
