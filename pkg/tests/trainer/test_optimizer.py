import numpy as np

from tensor.tensor import Tensor
from trainer.optimizer import OptimState, sgd_step


def make_params(rng, n=3):
    return {f"p{i}": Tensor(rng.normal(size=(4, 5)), requires_grad=True) for i in range(n)}


def test_plain_step_is_exact(rng):
    params = make_params(rng)
    start = {k: p.data.copy() for k, p in params.items()}
    grads = {k: rng.normal(size=p.shape) for k, p in params.items()}
    for k, p in params.items():
        p.grad = grads[k]
    assert sgd_step(params, OptimState(), 0.1, momentum=0.0, weight_decay=0.0)
    for k, p in params.items():
        np.testing.assert_array_equal(p.data, start[k] - 0.1 * grads[k])


def test_quadratic_bowl_matches_recurrence(rng):
    lr, m, wd, steps = 0.05, 0.9, 0.01, 60
    p0 = rng.normal(size=8)
    param = Tensor(p0.copy(), requires_grad=True)
    state = OptimState()
    for _ in range(steps):
        param.grad = param.data.copy()  # f = |p|^2 / 2
        assert sgd_step({"p": param}, state, lr, m, wd)

    # [p, v] evolves by a fixed 2x2 matrix per coordinate
    a = np.array([[1.0 - lr * (1.0 + wd), -lr * m],
                  [1.0 + wd, m]])
    a_n = np.linalg.matrix_power(a, steps)
    expected = a_n[0, 0] * p0
    np.testing.assert_allclose(param.data, expected, rtol=0, atol=1e-10)
    assert state.step == steps


def test_frozen_parameters_keep_their_bytes(rng):
    params = make_params(rng)
    frozen = {"p1"}
    before = params["p1"].data.tobytes()
    before_p0 = params["p0"].data.tobytes()
    state = OptimState()
    for _ in range(100):
        for p in params.values():
            p.grad = rng.normal(size=p.shape)
        sgd_step(params, state, 0.01, frozen=frozen)
    assert params["p1"].data.tobytes() == before
    assert "p1" not in state.buffers
    assert params["p0"].data.tobytes() != before_p0


def test_non_finite_gradient_skips_whole_step(rng):
    params = make_params(rng)
    before = {k: p.data.copy() for k, p in params.items()}
    for p in params.values():
        p.grad = np.ones(p.shape)
    params["p2"].grad[0, 0] = np.nan
    state = OptimState()
    assert not sgd_step(params, state, 0.1)
    for k, p in params.items():
        np.testing.assert_array_equal(p.data, before[k])
    assert state.step == 0 and state.skipped == 1
    assert not state.buffers


def test_missing_gradient_counts_as_zero(rng):
    params = make_params(rng, n=1)
    start = params["p0"].data.copy()
    assert sgd_step(params, OptimState(), 0.1, momentum=0.0, weight_decay=0.5)
    np.testing.assert_allclose(params["p0"].data, start - 0.1 * 0.5 * start)
