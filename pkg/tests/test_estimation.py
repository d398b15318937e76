import math

import numpy as np
import pytest

from lowdegtomo.channels import (
    chi_from_kraus,
    compose_with_layer,
    decaying_dephasing_channel,
    iswap_layer,
    site_product,
)
from lowdegtomo.estimation import (
    EstimatorAccumulator,
    FrameAssignment,
    analytic_variance,
    analytic_variance_exact,
    convergence_samples,
    estimate_entries,
    eval_G,
    eval_G_stream,
    mom_plan,
    plain_frames,
    rotated_frames,
)
from lowdegtomo.pauli import PauliString, low_degree_index
from lowdegtomo.sampling import Snapshot, exact_distribution
from lowdegtomo.pauli import StateString

XP, XM, YP, YM, Z0, Z1 = range(6)


def identity_channel(n):
    return site_product([[np.eye(2, dtype=complex)] for _ in range(n)])


def all_pairs_eval(assign, gamma, delta, n):
    """G values on the full 36^n grid, for exact-expectation oracles."""
    grids = np.meshgrid(*([np.arange(6)] * (2 * n)), indexing="ij")
    R = np.stack([g.ravel() for g in grids[:n]], axis=1)
    S = np.stack([g.ravel() for g in grids[n:]], axis=1)
    return S, R, eval_G_stream(assign, gamma, delta, S, R)


def dist_lookup(dist, S, R):
    r_joint = np.zeros(S.shape[0], dtype=np.int64)
    s_joint = np.zeros(S.shape[0], dtype=np.int64)
    for q in range(S.shape[1]):
        r_joint = 6 * r_joint + R[:, q]
        s_joint = 6 * s_joint + S[:, q]
    return dist.table[r_joint, s_joint]


# ---------------------------------------------------------------------------
# dual evaluation
# ---------------------------------------------------------------------------

def test_eval_G_identity_entry(gmin):
    assign = plain_frames(2, gmin)
    ident = PauliString(2)
    snap = Snapshot(StateString((Z0, Z0)), StateString((Z0, Z0)))
    assert eval_G(assign, ident, ident, snap) == pytest.approx(1.0)
    flipped = Snapshot(StateString((XM, Z0)), StateString((XP, Z0)))
    assert eval_G(assign, ident, ident, flipped) == pytest.approx(-3.5)


def test_eval_G_diagonal_entry_vanishes_on_equal_pair(gmin):
    assign = plain_frames(1, gmin)
    x0 = PauliString.parse("X0", 1)
    snap = Snapshot(StateString((Z0,)), StateString((Z0,)))
    assert eval_G(assign, x0, x0, snap) == pytest.approx(0.0)


def test_eval_G_requires_full_cover(gmin):
    with pytest.raises(ValueError):
        FrameAssignment(2, [((0,), gmin.entries, None)])


def test_exact_expectation_plain_oracle(gmin):
    # brute force over all 36^2 pairs: the estimator mean is the chi entry
    channel = decaying_dephasing_channel(2, 0.1, 0.1)
    dist = exact_distribution(channel)
    assign = plain_frames(2, gmin)
    chi = chi_from_kraus(channel, 1)
    index = low_degree_index(2, 1)
    for gamma in index.strings:
        for delta in index.strings:
            S, R, G = all_pairs_eval(assign, gamma, delta, 2)
            expect = (dist_lookup(dist, S, R) * G).sum()
            assert abs(expect - chi.entry(gamma, delta)) < 1e-10


def test_exact_expectation_rotated_targets_noise_only(gmin):
    channel = decaying_dephasing_channel(2, 0.1, 0.1)
    layer = iswap_layer(2)
    dist = exact_distribution(channel, layer)
    assign = rotated_frames(layer, gmin)
    chi_noise = chi_from_kraus(channel, 1)
    chi_full = chi_from_kraus(compose_with_layer(channel, layer), 1)
    index = low_degree_index(2, 1)
    diffs = []
    for gamma in index.strings:
        for delta in index.strings:
            S, R, G = all_pairs_eval(assign, gamma, delta, 2)
            expect = (dist_lookup(dist, S, R) * G).sum()
            assert abs(expect - chi_noise.entry(gamma, delta)) < 1e-10
            diffs.append(abs(expect - chi_full.entry(gamma, delta)))
    # the noise-only target differs from the raw noisy-layer chi
    assert max(diffs) > 0.1


# ---------------------------------------------------------------------------
# accumulators
# ---------------------------------------------------------------------------

def test_accumulator_mean_merge_bit_identical():
    rng = np.random.default_rng(0)
    values = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    whole = EstimatorAccumulator()
    whole.add(values)
    for split in (1, 137, 500, 999):
        left = EstimatorAccumulator()
        right = EstimatorAccumulator()
        left.add(values[:split])
        right.add(values[split:])
        left.merge(right)
        assert left.estimate() == whole.estimate()


def test_accumulator_mom_blocks_in_arrival_order():
    acc = EstimatorAccumulator(mode="mom", block_size=3)
    acc.add(np.array([1.0, 1.0, 1.0]))
    acc.add(np.array([100.0, 100.0, 100.0]))
    acc.add(np.array([2.0, 2.0, 2.0]))
    assert acc.estimate() == pytest.approx(2.0)  # median of {1, 100, 2}


def test_accumulator_mom_merge_at_boundaries():
    values = np.arange(12, dtype=float)
    whole = EstimatorAccumulator(mode="mom", block_size=4)
    whole.add(values)
    left = EstimatorAccumulator(mode="mom", block_size=4)
    right = EstimatorAccumulator(mode="mom", block_size=4)
    left.add(values[:8])
    right.add(values[8:])
    left.merge(right)
    assert left.estimate() == whole.estimate()
    ragged = EstimatorAccumulator(mode="mom", block_size=4)
    ragged.add(values[:3])
    with pytest.raises(ValueError):
        ragged.merge(right)


def test_accumulator_mode_mismatch():
    with pytest.raises(ValueError):
        EstimatorAccumulator().merge(EstimatorAccumulator(mode="mom", block_size=2))
    with pytest.raises(ValueError):
        EstimatorAccumulator().estimate()


def test_estimate_entries_zero_variance_case(gmin):
    # identity channel, identity entry: every on-support value is exactly 1
    channel = identity_channel(2)
    dist = exact_distribution(channel)
    assign = plain_frames(2, gmin)
    ident = PauliString(2)
    S, R, G = all_pairs_eval(assign, ident, ident, 2)
    p = dist_lookup(dist, S, R)
    on_support = p > 0
    assert np.allclose(G[on_support], 1.0)
    est = estimate_entries(assign, [(ident, ident)], S[on_support], R[on_support])
    assert est[(ident, ident)] == pytest.approx(1.0)


def test_estimate_entries_empty_stream(gmin):
    assign = plain_frames(1, gmin)
    ident = PauliString(1)
    with pytest.raises(ValueError):
        estimate_entries(assign, [(ident, ident)], np.zeros((0, 1), int), np.zeros((0, 1), int))


# ---------------------------------------------------------------------------
# sample planning
# ---------------------------------------------------------------------------

def test_mom_plan_example():
    plan, budgets = mom_plan(1.0, 0.1, 0.05)
    assert plan.b == 3400
    assert plan.k_blocks == 8
    assert plan.M == 27200
    assert budgets["entry"] == 27200


def test_mom_plan_monotone_in_delta():
    k_prev = None
    for delta in (0.01, 0.05, 0.1, 0.3):
        plan, _ = mom_plan(1.0, 0.1, delta)
        if k_prev is not None:
            assert plan.k_blocks <= k_prev
        k_prev = plan.k_blocks


def test_mom_plan_budgets_use_cardinality():
    D = low_degree_index(2, 1).D
    assert D == 7
    plan, budgets = mom_plan(1.0, 0.1, 0.05, D=D)
    k_all = math.ceil(2 * math.log(2 * D / 0.05))
    assert budgets["all_entries"] == plan.b * k_all
    assert budgets["l2"] == D * plan.b * k_all


def test_mom_plan_validates():
    with pytest.raises(ValueError):
        mom_plan(1.0, 0.0, 0.05)
    with pytest.raises(ValueError):
        mom_plan(1.0, 0.1, 1.5)


# ---------------------------------------------------------------------------
# analytic variance
# ---------------------------------------------------------------------------

def test_variance_identity_channel_min_dual(gmin):
    channel = identity_channel(3)
    chi = chi_from_kraus(channel, 0)
    assign = plain_frames(3, gmin)
    ident = PauliString(3)
    assert analytic_variance(chi, assign, ident, ident) == pytest.approx(
        0.0, abs=1e-10
    )


def test_variance_identity_channel_shadow_dual(gsh):
    # independent 36-term oracle at n=1
    channel = identity_channel(1)
    chi = chi_from_kraus(channel, 0)
    assign = plain_frames(1, gsh)
    ident = PauliString(1)
    var = analytic_variance(chi, assign, ident, ident)
    from lowdegtomo.frames import build_f

    f1 = build_f(1)
    oracle = (np.abs(gsh.entries[:, 0]) ** 2 * f1.entries[:, 0].real).sum() - 1
    assert var == pytest.approx(oracle, abs=1e-12)
    assert var == pytest.approx(9 / 8)
    assert var >= 3 / 8


def test_variance_dense_oracle_n2(gmin):
    # Var from the exact joint law equals both analytic paths
    channel = decaying_dephasing_channel(2, 0.1, 0.1)
    assign = plain_frames(2, gmin)
    dist = exact_distribution(channel)
    chi_full = chi_from_kraus(channel, 2)
    for name in (("", ""), ("X0", "X0"), ("", "X0"), ("Y0", "Z1")):
        gamma = PauliString.parse(name[0], 2)
        delta = PauliString.parse(name[1], 2)
        S, R, G = all_pairs_eval(assign, gamma, delta, 2)
        p = dist_lookup(dist, S, R)
        mean = (p * G).sum()
        dense_var = (p * np.abs(G) ** 2).sum() - abs(mean) ** 2
        assert analytic_variance(chi_full, assign, gamma, delta) == pytest.approx(
            dense_var, abs=1e-10
        )
        assert analytic_variance_exact(channel, assign, gamma, delta) == pytest.approx(
            dense_var, abs=1e-10
        )


def test_variance_dense_oracle_rotated(gmin):
    channel = decaying_dephasing_channel(2, 0.1, 0.1)
    layer = iswap_layer(2)
    assign = rotated_frames(layer, gmin)
    dist = exact_distribution(channel, layer)
    ident = PauliString(2)
    x0 = PauliString.parse("X0", 2)
    for gamma, delta in ((ident, ident), (ident, x0)):
        S, R, G = all_pairs_eval(assign, gamma, delta, 2)
        p = dist_lookup(dist, S, R)
        dense_var = (p * np.abs(G) ** 2).sum() - abs((p * G).sum()) ** 2
        assert analytic_variance_exact(channel, assign, gamma, delta) == pytest.approx(
            dense_var, abs=1e-10
        )


def test_variance_bound_only_drops_subtraction(gmin):
    channel = decaying_dephasing_channel(2, 0.1, 0.1)
    assign = plain_frames(2, gmin)
    ident = PauliString(2)
    chi = chi_from_kraus(channel, 2)
    var = analytic_variance(chi, assign, ident, ident)
    bound = analytic_variance(chi, assign, ident, ident, bound_only=True)
    assert bound == pytest.approx(var + abs(chi.entry(ident, ident)) ** 2)


# ---------------------------------------------------------------------------
# running-mean convergence
# ---------------------------------------------------------------------------

def test_convergence_constant_stream():
    chunks = [np.full(40, 0.7 + 0j), np.full(100, 0.7 + 0j)]
    assert convergence_samples(iter(chunks), 0.7, 0.05, window=100) == 100


def test_convergence_censored():
    chunks = [np.full(500, 5.0 + 0j)]
    assert convergence_samples(iter(chunks), 0.0, 0.05, window=10, cap=400) is None


def test_convergence_split_invariance():
    rng = np.random.default_rng(8)
    values = 0.5 + 0.2 * rng.normal(size=5000)
    whole = convergence_samples(iter([values]), 0.5, 0.05, window=50)
    pieces = np.array_split(values, 13)
    split = convergence_samples(iter(pieces), 0.5, 0.05, window=50)
    assert whole == split


def test_convergence_window_must_complete_after_break():
    # a spike at sample 31 pushes the running mean to 1 + 4/k, which
    # re-enters the strict eps band at k = 41; the window completes 50
    # consecutive in-band samples later
    values = np.concatenate(
        [np.full(30, 1.0), np.array([5.0]), np.full(100, 1.0)]
    ).astype(complex)
    hit = convergence_samples(iter([values]), 1.0, 0.1, window=50)
    assert hit == 40 + 50
