import numpy as np
import pytest

from psrolab.errors import ConfigError, ContractError, NumericError
from psrolab.nn import (Adam, DqnHyper, DQNLearner, QNetwork, ReplayBuffer, Transition,
                        act_epsilon_greedy, boltzmann, clip_by_global_norm, global_norm,
                        kl_divergence, trajectory_transitions)


def finite_difference_error(net, x, acts, targets, step=1e-5):
    _, grads, _ = net.gradient(x, acts, targets)
    worst = 0.0
    for p, g in zip(net.params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = net.gradient(x, acts, targets)[0]
            flat[i] = old - step
            down = net.gradient(x, acts, targets)[0]
            flat[i] = old
            fd = (up - down) / (2 * step)
            worst = max(worst, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6))
    return worst


def test_zero_net_outputs_zero():
    net = QNetwork((4, 5, 3), zero=True)
    assert np.all(net.forward(np.arange(4.0)) == 0)


def test_linear_layer_is_a_projection():
    net = QNetwork((3, 2), zero=True)
    net.params[0][:] = [[1, 0], [0, 1], [0, 0]]
    assert np.allclose(net.forward([2.0, -7.0, 9.0]), [2.0, -7.0])


def test_forward_is_pure_and_checks_width():
    net = QNetwork((3, 8, 2), np.random.default_rng(1))
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(net.forward(x), net.forward(x))
    with pytest.raises(ContractError):
        net.forward(np.zeros(4))


def test_gradient_matches_finite_difference_2_8_3():
    rng = np.random.default_rng(0)
    net = QNetwork((2, 8, 3), rng)
    x = rng.normal(size=(5, 2))
    assert finite_difference_error(net, x, rng.integers(0, 3, 5), rng.normal(size=5)) <= 1e-4


def test_zero_td_error_gives_zero_gradient():
    rng = np.random.default_rng(2)
    net = QNetwork((2, 8, 3), rng)
    x = rng.normal(size=(4, 2))
    acts = np.array([0, 1, 2, 0])
    targets = net.forward(x)[np.arange(4), acts]
    _, grads, td = net.gradient(x, acts, targets)
    assert np.all(td == 0)
    assert all(np.all(g == 0) for g in grads)


def test_duplicated_batch_has_same_gradient():
    rng = np.random.default_rng(3)
    net = QNetwork((2, 8, 3), rng)
    x = rng.normal(size=(1, 2))
    _, g1, _ = net.gradient(x, [1], [0.5])
    _, g2, _ = net.gradient(np.vstack([x, x]), [1, 1], [0.5, 0.5])
    for a, b in zip(g1, g2):
        assert np.allclose(a, b)


def test_non_finite_target_is_rejected():
    net = QNetwork((2, 3))
    with pytest.raises(NumericError):
        net.gradient(np.zeros((1, 2)), [0], [np.nan])


def test_blob_round_trip():
    net = QNetwork((3, 4, 2), np.random.default_rng(4))
    back = QNetwork.from_bytes(net.to_bytes())
    assert back.sizes == net.sizes and back.checksum() == net.checksum()


def test_adam_single_step_closed_form():
    lr, b1, b2, eps, g = 0.01, 0.9, 0.999, 1e-8, 0.3
    p = [np.array([1.5])]
    Adam(p, lr=lr, beta1=b1, beta2=b2, eps=eps).step(p, [np.array([g])])
    m_hat = (1 - b1) * g / (1 - b1)
    v_hat = (1 - b2) * g * g / (1 - b2)
    assert p[0][0] == pytest.approx(1.5 - lr * m_hat / (np.sqrt(v_hat) + eps), abs=1e-15)


def test_adam_zero_gradient_is_a_no_op():
    p = [np.array([1.0, -2.0])]
    Adam(p).step(p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0])


def test_clip_halves_norm_20_at_bound_10():
    grads = [np.array([12.0, 16.0])]
    assert global_norm(grads) == 20.0
    clipped = clip_by_global_norm(grads, 10.0)
    assert np.allclose(clipped[0], [6.0, 8.0])
    assert clip_by_global_norm(grads, None) is grads


def test_epsilon_greedy_argmax_and_mask():
    rng = np.random.default_rng(0)
    q = np.array([1.0, 5.0, 3.0])
    assert act_epsilon_greedy(q, None, np.ones(3, bool), 0.0, rng) == 1
    assert act_epsilon_greedy(q, None, np.array([True, False, True]), 0.0, rng) == 2
    assert act_epsilon_greedy(np.zeros(3), None, np.ones(3, bool), 0.0, rng) == 0
    with pytest.raises(ContractError):
        act_epsilon_greedy(q, None, np.zeros(3, bool), 0.0, rng)


def test_epsilon_one_is_uniform_over_legal():
    rng = np.random.default_rng(0)
    mask = np.array([True, False, True, True])
    n = 10_000
    draws = [act_epsilon_greedy(np.arange(4.0), None, mask, 1.0, rng) for _ in range(n)]
    counts = np.bincount(draws, minlength=4)
    assert counts[1] == 0
    sd = np.sqrt(n * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts[[0, 2, 3]] - n / 3) <= 3 * sd)


def test_boltzmann_properties():
    mask = np.array([True, True, False, True])
    assert np.allclose(boltzmann(np.zeros(4), mask), mask / 3)
    q = np.array([1.0, -2.0, 9.0, 4.0])
    assert np.allclose(boltzmann(q, mask, temperature=1e6), mask / 3, atol=1e-4)
    p = boltzmann(np.array([50.0, 0.0, 0.0, 0.0]), mask)
    assert abs(p.sum() - 1) <= 1e-9 and p[2] == 0
    assert p[mask].min() >= 1e-3 / 3
    with pytest.raises(ContractError):
        boltzmann(q, mask, temperature=0)


def test_kl_identity_and_hand_value():
    p, q = np.array([0.9, 0.1]), np.array([0.1, 0.9])
    assert kl_divergence(p, p) == 0
    assert kl_divergence(p, q) == pytest.approx(0.9 * np.log(9) + 0.1 * np.log(1 / 9))


def test_per_with_equal_priorities_samples_uniformly():
    buf = ReplayBuffer(8, 1, 2, alpha=0.6)
    for i in range(8):
        buf.add(Transition(np.array([i]), 0, 0.0, np.zeros(1), np.ones(2, bool), True))
    assert np.allclose(buf.sampling_probabilities(), 1 / 8)
    idx, w = buf.sample(8000, np.random.default_rng(0))
    counts = np.bincount(idx, minlength=8)
    chi2 = float(((counts - 1000) ** 2 / 1000).sum())
    # chi-square with 7 dof: mean 7, sd sqrt(14)
    assert chi2 <= 7 + 3 * np.sqrt(14)
    assert np.all(w == 1.0)


def test_per_priorities_positive_and_ring_capacity():
    buf = ReplayBuffer(3, 1, 2, alpha=0.6)
    for i in range(5):
        buf.add(Transition(np.array([i]), 0, 0.0, np.zeros(1), np.ones(2, bool), True))
    assert len(buf) == 3
    buf.update_priorities(np.array([0, 1]), np.array([0.0, 2.0]))
    assert np.all(buf.priorities[:3] > 0)
    with pytest.raises(ConfigError):
        ReplayBuffer(0, 1, 2)


def test_hyper_validation():
    with pytest.raises(ConfigError):
        DqnHyper(gamma=1.5).validate()
    with pytest.raises(ConfigError):
        DqnHyper(epsilon=-0.1).validate()
    DqnHyper().validate()


def small_learner(**kw):
    hyper = DqnHyper(hidden=(8,), batch_size=2, buffer_size=16, **kw)
    return DQNLearner(2, 2, hyper, np.random.default_rng(0))


def test_terminal_and_gamma_zero_targets():
    learner = small_learner()
    learner.add(Transition(np.ones(2), 0, 0.7, np.ones(2), np.ones(2, bool), True))
    assert learner.td_targets(np.array([0]))[0] == 0.7
    learner = small_learner(gamma=0.0)
    learner.add(Transition(np.ones(2), 0, -0.4, np.ones(2), np.ones(2, bool), False))
    assert learner.td_targets(np.array([0]))[0] == -0.4


def test_next_state_mask_excludes_illegal_actions():
    learner = small_learner()
    learner.target.params[-1][:] = [5.0, -1.0]
    for p in learner.target.params[:-1]:
        p[...] = 0
    learner.add(Transition(np.ones(2), 0, 0.0, np.ones(2), np.array([False, True]), False))
    assert learner.td_targets(np.array([0]))[0] == -1.0


def test_underfull_buffer_signals_no_step():
    learner = small_learner()
    assert learner.train_step(np.random.default_rng(0)) is None


def test_trajectory_transitions_chain_masks_and_reward():
    steps = [(np.array([1.0]), np.array([True, True]), 0),
             (np.array([2.0]), np.array([True, False]), 1)]
    ts = trajectory_transitions(steps, 1.0, 2, shaped=[0.1, 0.2])
    assert ts[0].reward == 0.1 and not ts[0].done
    assert np.array_equal(ts[0].next_mask, [True, False])
    assert ts[1].reward == pytest.approx(1.2) and ts[1].done


def chain_transitions(gamma):
    """3-state chain: action 0 advances (reward 1 off the end), action 1 stops with 0.2(i+1)."""
    eye = np.eye(3)
    out = []
    for i in range(3):
        if i < 2:
            out.append(Transition(eye[i], 0, 0.0, eye[i + 1], np.ones(2, bool), False))
        else:
            out.append(Transition(eye[i], 0, 1.0, np.zeros(3), np.zeros(2, bool), True))
        out.append(Transition(eye[i], 1, 0.2 * (i + 1), np.zeros(3), np.zeros(2, bool), True))
    return out


def chain_value_iteration(gamma):
    q = np.zeros((3, 2))
    for _ in range(50):
        v = q.max(axis=1)
        for i in range(3):
            q[i, 0] = 1.0 if i == 2 else gamma * v[i + 1]
            q[i, 1] = 0.2 * (i + 1)
    return q


def test_chain_mdp_converges_to_value_iteration():
    gamma = 0.9
    hyper = DqnHyper(hidden=(16,), learning_rate=1e-2, gamma=gamma, batch_size=6,
                     buffer_size=6, target_update_every=25)
    rng = np.random.default_rng(0)
    learner = DQNLearner(3, 2, hyper, rng)
    for t in chain_transitions(gamma):
        learner.add(t)
    for _ in range(4000):
        learner.train_step(rng)
    assert np.allclose(learner.q_values(np.eye(3)), chain_value_iteration(gamma), atol=1e-2)


def test_same_seed_same_parameters():
    def train():
        rng = np.random.default_rng(5)
        learner = DQNLearner(3, 2, DqnHyper(hidden=(8,), batch_size=4, buffer_size=6), rng)
        for t in chain_transitions(1.0):
            learner.add(t)
        for _ in range(20):
            learner.train_step(rng)
        return learner.net.checksum()
    assert train() == train()
