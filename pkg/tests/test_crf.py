import numpy as np
import pytest

from iskg.autodiff import Adam, Parameter, Rng, Tensor, grad_check, sum_all
from iskg.crf import (
    NEG_INF,
    IlConfig,
    init_crf_params,
    log_partition,
    loss_il,
    loss_mle,
    make_il_config,
    perturb,
    project_emissions,
    score_path,
    viterbi,
)

from oracles import brute_best_path, brute_log_partition, brute_score


def random_instance(rng, n, L, trans_scale=1.0):
    e = Parameter(rng.normal((n, L)), "e")
    T = rng.normal((L + 2, L + 2)) * trans_scale
    T[:, L] = NEG_INF
    T[L + 1, :] = NEG_INF
    return e, Parameter(T, "T")


def test_score_path_zero_potentials():
    e = Tensor(np.zeros((4, 3)))
    T = Tensor(np.zeros((5, 5)))
    for y in ([0, 1, 2, 0], [2, 2, 2, 2]):
        assert score_path(e, T, y).item() == 0.0


def test_score_path_single_token_definition():
    rng = Rng(0)
    e, T = random_instance(rng, 1, 4)
    y = 2
    got = score_path(e, T, [y]).item()
    want = e.data[0, y] + T.data[4, y] + T.data[y, 5]
    assert got == pytest.approx(want, abs=1e-12)


def test_score_path_matches_term_by_term_oracle():
    rng = Rng(1)
    for seed in range(20):
        e, T = random_instance(rng, 5, 4)
        y = [int(v) for v in rng.integers(0, 4, (5,))]
        assert score_path(e, T, y).item() == pytest.approx(brute_score(e.data, T.data, y), abs=1e-10)


def test_score_path_batched_matches_per_sentence():
    rng = Rng(2)
    e, T = random_instance(rng, 4, 3)
    eb = Parameter(rng.normal((6, 4, 3)), "eb")
    ys = rng.integers(0, 3, (6, 4))
    batched = score_path(eb, T, ys)
    for b in range(6):
        single = score_path(Tensor(eb.data[b]), T, ys[b]).item()
        assert batched.data[b] == pytest.approx(single, abs=1e-12)


def test_log_partition_zero_potentials_counts_paths():
    n, L = 3, 4
    e = Tensor(np.zeros((n, L)))
    T = Tensor(np.zeros((L + 2, L + 2)))
    assert log_partition(e, T).item() == pytest.approx(n * np.log(L), abs=1e-10)


def test_log_partition_matches_enumeration():
    rng = Rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 7))
        L = int(rng.integers(2, 5))
        e, T = random_instance(rng, n, L)
        assert log_partition(e, T).item() == pytest.approx(
            brute_log_partition(e.data, T.data), abs=1e-8)


def test_log_partition_dominates_any_path():
    rng = Rng(4)
    e, T = random_instance(rng, 5, 3)
    lz = log_partition(e, T).item()
    for _ in range(30):
        y = [int(v) for v in rng.integers(0, 3, (5,))]
        assert lz >= score_path(e, T, y).item()


def test_log_partition_batched_matches_per_sentence():
    rng = Rng(5)
    _, T = random_instance(rng, 2, 3)
    eb = Parameter(rng.normal((5, 4, 3)), "eb")
    batched = log_partition(eb, T)
    for b in range(5):
        assert batched.data[b] == pytest.approx(log_partition(Tensor(eb.data[b]), T).item(), abs=1e-10)


def test_viterbi_dominant_column():
    e = np.zeros((6, 4))
    e[:, 2] = 100.0
    T = np.zeros((6, 6))
    path, _ = viterbi(e, Tensor(T))
    assert path == [2] * 6


def test_viterbi_matches_brute_force():
    rng = Rng(6)
    for _ in range(60):
        n = int(rng.integers(1, 7))
        L = int(rng.integers(2, 5))
        e, T = random_instance(rng, n, L)
        path, score = viterbi(e, T)
        bpath, bscore = brute_best_path(e.data, T.data)
        assert path == bpath
        assert score == pytest.approx(bscore, abs=1e-9)
        assert score == pytest.approx(score_path(e, T, path).item(), abs=1e-9)


def test_viterbi_batch_matches_per_sentence():
    from iskg.crf import viterbi_batch

    rng = Rng(30)
    _, T = random_instance(rng, 2, 4)
    eb = rng.normal((16, 6, 4))
    paths, scores = viterbi_batch(eb, T)
    for b in range(16):
        path, score = viterbi(eb[b], T)
        assert list(paths[b]) == path
        assert scores[b] == pytest.approx(score, abs=1e-12)


def test_viterbi_invariant_under_joint_positive_scaling():
    rng = Rng(7)
    for c in (0.5, 2.0, 7.3):
        e, T = random_instance(rng, 6, 4)
        base, _ = viterbi(e, T)
        scaled, _ = viterbi(Tensor(e.data * c), Tensor(T.data * c))
        assert base == scaled


def test_loss_mle_limits():
    rng = Rng(8)
    n, L = 4, 3
    gold = [0, 2, 1, 1]
    e = np.zeros((n, L))
    for t, y in enumerate(gold):
        e[t, y] = 100.0  # huge margin toward gold
    T = np.zeros((L + 2, L + 2))
    assert loss_mle(Tensor(e), Tensor(T), gold).item() == pytest.approx(0.0, abs=1e-3)
    zeros = loss_mle(Tensor(np.zeros((n, L))), Tensor(T), gold).item()
    assert zeros == pytest.approx(n * np.log(L), abs=1e-10)
    for _ in range(20):
        e2, T2 = random_instance(rng, 5, 4)
        y = [int(v) for v in rng.integers(0, 4, (5,))]
        assert loss_mle(e2, T2, y).item() >= -1e-12


def test_loss_mle_grad_check():
    rng = Rng(9)
    e, T = random_instance(rng, 4, 3, trans_scale=0.5)
    gold = [0, 2, 1, 0]

    def f():
        return loss_mle(e, T, gold)

    assert grad_check(f, [e, T]) <= 1e-4


def test_log_partition_grad_check_batched():
    rng = Rng(10)
    _, T = random_instance(rng, 2, 3)
    eb = Parameter(rng.normal((3, 4, 3)), "eb")

    def f():
        return sum_all(log_partition(eb, T))

    assert grad_check(f, [eb, T]) <= 1e-4


def test_perturb_identity_configuration():
    rng = Rng(11)
    e = Tensor(rng.normal((5, 4)))
    il = make_il_config(alpha=1.0, beta=1.0, noise_scale=0.0)
    out = perturb(e, rng.normal((5,)), il, Rng(0))
    assert np.array_equal(out.data, e.data)  # bitwise


def test_perturb_alpha_branch_scales_exactly():
    rng = Rng(12)
    e = Tensor(rng.normal((5, 4)))
    il = make_il_config(noise_scale=0.0, s_init=0.0)  # threshold = 0.5
    high = np.full(5, 50.0)  # tau = sigmoid(50) ~ 1 > 0.5
    out = perturb(e, high, il, Rng(0))
    assert np.array_equal(out.data, e.data * 1.15)
    low = np.full(5, -50.0)  # tau ~ 0 <= 0.5: beta branch
    out2 = perturb(e, low, il, Rng(0))
    assert np.array_equal(out2.data, e.data * 1.0)


def test_half_normal_noise_nonnegative():
    rng = Rng(13)
    e = Tensor(np.zeros((100, 10)))
    il = make_il_config(noise_scale=0.7)
    # alpha branch adds |N|: with zero emissions the output IS |N_alpha|
    for seed in range(100):
        out = perturb(e, np.full(100, 50.0), il, Rng(seed))
        assert np.all(out.data >= 0.0)
    # 100 draws x 1000 entries = 1e5 sampled values


def test_loss_il_reduces_to_mle():
    rng = Rng(14)
    e, T = random_instance(rng, 5, 4)
    gold = [0, 1, 2, 3, 0]
    il = make_il_config(alpha=1.0, beta=1.0, noise_scale=0.0)
    a = loss_il(e, T, gold, il, Rng(0)).item()
    b = loss_mle(e, T, gold).item()
    assert a == b  # bitwise


def test_loss_il_alpha_branch_composition():
    rng = Rng(15)
    e, T = random_instance(rng, 5, 4)
    e.data += 3.0  # push viterbi-path scores up so tau > 0.5 = threshold
    gold = [0, 1, 2, 3, 0]
    il = make_il_config(noise_scale=0.0)
    got = loss_il(e, T, gold, il, Rng(0)).item()
    want = log_partition(Tensor(e.data * 1.15), T).item() - score_path(e, T, gold).item()
    assert got == pytest.approx(want, abs=1e-10)


def test_loss_il_can_be_negative():
    # beta branch subtracts |N| from the partition term only
    rng = Rng(16)
    n, L = 3, 3
    gold = [0, 1, 2]
    e = Parameter(np.full((n, L), -5.0), "e")
    for t, y in enumerate(gold):
        e.data[t, y] = 5.0
    T = Parameter(np.zeros((L + 2, L + 2)), "T")
    il = make_il_config(alpha=1.0, beta=1.0, noise_scale=3.0, s_init=50.0)  # force beta branch
    vals = [loss_il(e, T, gold, il, Rng(s)).item() for s in range(10)]
    assert min(vals) < 0.0


def test_loss_il_grad_check_frozen_noise():
    rng = Rng(17)
    e, T = random_instance(rng, 4, 3, trans_scale=0.5)
    gold = [0, 2, 1, 0]
    il = make_il_config(noise_scale=0.3, s_init=-0.7)

    def f():
        # fresh Rng per call freezes the noise sample across evaluations;
        # s_raw is excluded: its gradient is a surrogate by design, not the
        # (zero almost everywhere) true derivative of the hard branch
        return loss_il(e, T, gold, il, Rng(99))

    assert grad_check(f, [e, T]) <= 1e-4


def test_threshold_parameter_receives_surrogate_gradient():
    rng = Rng(18)
    e, T = random_instance(rng, 4, 3)
    il = make_il_config(noise_scale=0.2)
    il.s_raw.grad[...] = 0.0
    loss_il(e, T, [0, 1, 2, 0], il, Rng(5)).backward()
    assert il.s_raw.grad != 0.0


def test_threshold_stays_in_unit_interval():
    il = make_il_config()
    opt = Adam([il.s_raw], lr=0.5)
    rng = Rng(19)
    for _ in range(200):
        opt.zero_grad()
        il.s_raw.grad[...] = rng.normal(())
        opt.step()
        assert 0.0 < il.threshold < 1.0


def test_il_config_validation():
    with pytest.raises(ValueError):
        make_il_config(alpha=-1.0)
    with pytest.raises(ValueError):
        make_il_config(noise_scale=-0.1)


def test_init_crf_params_pins_virtual_transitions():
    crf = init_crf_params(Rng(20), context_dim=8, n_labels=11)
    T = crf.transitions.data
    assert np.all(T[:, crf.start] == NEG_INF)
    assert np.all(T[crf.stop, :] == NEG_INF)
    assert crf.n_labels == 11


def test_project_emissions_shapes():
    crf = init_crf_params(Rng(21), context_dim=6, n_labels=5)
    ctx = Tensor(Rng(22).normal((7, 6)))
    assert project_emissions(crf, ctx).shape == (7, 5)
    ctx_b = Tensor(Rng(23).normal((2, 7, 6)))
    assert project_emissions(crf, ctx_b).shape == (2, 7, 5)
