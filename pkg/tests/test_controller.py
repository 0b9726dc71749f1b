"""Aggregation cache, staleness weighting, and the async mixing path."""

import threading

import numpy as np
import pytest

from fedsim.controller import (
    DegenerateWeightError,
    WeightingScheme,
    cached_update,
    compute_contribution,
    fedasync_update,
    get_community,
    init_community,
    poly_staleness,
    record_fetch,
    snapshot,
    staleness_discount,
)
from fedsim.params import (
    ParamSet,
    StructureError,
    equal,
    max_abs_diff,
    weighted_average,
    zeros_like,
)


def rand_params(rng, shapes=((5, 3), (3,))):
    return ParamSet([f"p{i}" for i in range(len(shapes))],
                    [rng.standard_normal(s) for s in shapes])


def fresh_state(rng, ids):
    return init_community(rand_params(rng), list(ids))


def test_initial_community_is_broadcast():
    rng = np.random.default_rng(1)
    initial = rand_params(rng)
    state = init_community(initial, [0, 1, 2])
    assert equal(get_community(state), initial)
    assert state.version == 0 and state.committed_steps == 0


def test_record_fetch_reports_counters():
    rng = np.random.default_rng(2)
    state = fresh_state(rng, [0, 1])
    model, steps, version = record_fetch(state, 1)
    assert steps == 0 and version == 0
    assert equal(model, state.broadcast_model)
    cached_update(state, 0, rand_params(rng), 10.0, steps=7)
    model, steps, version = record_fetch(state, 1)
    assert steps == 7 and version == 1
    assert state.fetch_versions[1] == 1


def test_single_contribution_dominates():
    rng = np.random.default_rng(3)
    state = fresh_state(rng, [0])
    w = rand_params(rng)
    out = cached_update(state, 0, w, 123.0, steps=5)
    assert max_abs_diff(out, w) <= 1e-12
    assert state.normalizer == 123.0
    assert state.committed_steps == 5
    assert state.version == 1


def test_replacement_uses_latest_contribution_only():
    rng = np.random.default_rng(4)
    state = fresh_state(rng, [0, 1])
    a0, a1 = rand_params(rng), rand_params(rng)
    b = rand_params(rng)
    cached_update(state, 0, a0, 2.0, steps=1)
    cached_update(state, 1, b, 3.0, steps=1)
    out = cached_update(state, 0, a1, 5.0, steps=1)
    expect = weighted_average([a1, b], [5.0, 3.0])
    assert max_abs_diff(out, expect) <= 1e-12
    assert state.normalizer == pytest.approx(8.0)
    assert len(state.records) == 2


def test_cache_matches_full_recompute_interleaved():
    """Incremental updates against recomputing from every live record."""
    rng = np.random.default_rng(5)
    ids = list(range(10))
    state = fresh_state(rng, ids)
    latest = {}
    for step in range(100):
        k = int(rng.integers(0, 10))
        w = rand_params(rng)
        p = float(rng.uniform(0.5, 20.0))
        out = cached_update(state, k, w, p, steps=int(rng.integers(1, 9)))
        latest[k] = (w, p)
        models = [latest[j][0] for j in sorted(latest)]
        weights = [latest[j][1] for j in sorted(latest)]
        assert max_abs_diff(out, weighted_average(models, weights)) <= 1e-9


def test_cache_scale_invariance():
    rng = np.random.default_rng(6)
    updates = [(int(rng.integers(0, 4)), rand_params(rng),
                float(rng.uniform(0.1, 5.0))) for _ in range(40)]
    outs = []
    for c in (1.0, 1000.0):
        state = init_community(updates[0][1], [0, 1, 2, 3])
        for k, w, p in updates:
            out = cached_update(state, k, w, c * p, steps=1)
        outs.append(out)
    assert max_abs_diff(outs[0], outs[1]) <= 1e-12


def test_cached_update_rejects_degenerate_total():
    rng = np.random.default_rng(7)
    state = fresh_state(rng, [0])
    with pytest.raises(DegenerateWeightError):
        cached_update(state, 0, rand_params(rng), 0.0, steps=1)
    # and the state must be untouched afterwards
    assert state.normalizer == 0.0 and state.version == 0
    assert not state.records


def test_cached_update_validates_inputs():
    rng = np.random.default_rng(8)
    state = fresh_state(rng, [0])
    w = rand_params(rng)
    with pytest.raises(ValueError):
        cached_update(state, 0, w, float("nan"), steps=1)
    with pytest.raises(ValueError):
        cached_update(state, 0, w, -1.0, steps=1)
    with pytest.raises(ValueError):
        cached_update(state, 0, w, 1.0, steps=0)
    bad = ParamSet(["other"], [np.zeros((2, 2))])
    with pytest.raises(StructureError):
        cached_update(state, 0, bad, 1.0, steps=1)


def test_staleness_discount_pinned_values():
    # 110 committed, fetched at 100, did 5 local: base 5, weight 6^-0.5
    assert staleness_discount(110, 100, 5) == 6.0 ** -0.5
    # nothing landed in between: full weight
    assert staleness_discount(105, 100, 5) == 1.0
    assert staleness_discount(100, 100, 0) == 1.0
    # raw form has no +1 cushion
    assert staleness_discount(110, 100, 5, guarded=False) == 5.0 ** -0.5
    with pytest.raises(ValueError):
        staleness_discount(105, 100, 5, guarded=False)


def test_staleness_discount_monotone():
    prev = 2.0
    for intervening in range(0, 200, 7):
        s = staleness_discount(100 + 5 + intervening, 100, 5)
        assert s <= prev
        assert 0.0 < s <= 1.0
        prev = s


def test_poly_staleness_pinned_values():
    assert poly_staleness(0, 0) == 1.0
    assert poly_staleness(3, 0) == 0.5
    assert abs(poly_staleness(8, 0) - 1.0 / 3.0) <= 1e-12
    assert poly_staleness(10, 7) == 0.5
    with pytest.raises(ValueError):
        poly_staleness(5, 6)


def test_compute_contribution_dispatch():
    rng = np.random.default_rng(9)
    state = fresh_state(rng, [0])
    static = WeightingScheme("fedavg_static")
    assert compute_contribution(static, state, 1234, 0, 5) == 1234.0
    rec = WeightingScheme("fedrec_staleness")
    state.committed_steps = 110
    assert compute_contribution(rec, state, 50, 100, 5) == 6.0 ** -0.5
    poly = WeightingScheme("fedasync_poly")
    with pytest.raises(ValueError):
        compute_contribution(poly, state, 50, 0, 5)


def test_fedasync_update_alpha_and_mixing():
    rng = np.random.default_rng(10)
    initial = rand_params(rng)
    state = init_community(initial, [0])
    local = rand_params(rng)
    # fresh fetch: gap 0, alpha = mixing
    out, alpha = fedasync_update(state, 0, local, 0.5, fetch_version=0)
    assert alpha == 0.5
    for c, i, l in zip(out.arrays, initial.arrays, local.arrays):
        assert np.allclose(c, 0.5 * i + 0.5 * l, rtol=0, atol=1e-12)
    assert state.version == 1
    assert equal(get_community(state), out)


def test_fedasync_alpha_decays_with_version_gap():
    rng = np.random.default_rng(11)
    state = init_community(rand_params(rng), [0])
    local = rand_params(rng)
    state.version = 3
    _, alpha = fedasync_update(state, 0, local, 1.0, fetch_version=0)
    assert alpha == 0.5  # (3 + 1) ** -0.5
    state.version = 8
    _, alpha = fedasync_update(state, 0, local, 1.0, fetch_version=0)
    assert abs(alpha - 1.0 / 3.0) <= 1e-12


def test_fedasync_fixed_alpha_mode():
    rng = np.random.default_rng(12)
    state = init_community(rand_params(rng), [0])
    state.version = 50
    _, alpha = fedasync_update(state, 0, rand_params(rng), 0.25,
                               fetch_version=0, staleness_adaptive=False)
    assert alpha == 0.25


def test_fedasync_rejects_bad_mixing():
    rng = np.random.default_rng(13)
    state = init_community(rand_params(rng), [0])
    with pytest.raises(ValueError):
        fedasync_update(state, 0, rand_params(rng), 0.0, fetch_version=0)
    with pytest.raises(ValueError):
        fedasync_update(state, 0, rand_params(rng), 1.5, fetch_version=0)


def test_weighting_scheme_validation():
    with pytest.raises(ValueError):
        WeightingScheme("uniform")
    with pytest.raises(ValueError):
        WeightingScheme("fedasync_poly", mixing=0.0)
    with pytest.raises(ValueError):
        WeightingScheme("fedasync_poly", rho=-0.1)
    WeightingScheme("fedasync_poly", mixing=1.0, rho=0.0)


def test_snapshot_shape():
    rng = np.random.default_rng(14)
    state = fresh_state(rng, [0, 1])
    cached_update(state, 1, rand_params(rng), 4.0, steps=3)
    snap = snapshot(state)
    assert snap["format_version"] == 1
    assert snap["version"] == 1
    assert snap["committed_steps"] == 3
    assert snap["normalizer"] == 4.0
    assert list(snap["learners"]) == ["1"]
    assert snap["learners"]["1"]["local_steps"] == 3


def test_concurrent_commits_linearize():
    """Hammer the cache from many threads; the result must equal the
    weighted average of each learner's final contribution."""
    rng = np.random.default_rng(15)
    num_learners, per_thread = 8, 50
    state = fresh_state(rng, range(num_learners))
    plans = []
    for k in range(num_learners):
        models = [rand_params(np.random.default_rng([20, k, i]))
                  for i in range(per_thread)]
        values = np.random.default_rng([21, k]).uniform(0.5, 10.0, per_thread)
        plans.append((models, values))

    errors = []

    def worker(k):
        try:
            models, values = plans[k]
            for w, p in zip(models, values):
                cached_update(state, k, w, float(p), steps=2)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(k,))
               for k in range(num_learners)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert not errors
    assert state.version == num_learners * per_thread
    assert state.committed_steps == 2 * num_learners * per_thread
    finals = [plans[k][0][-1] for k in range(num_learners)]
    weights = [float(plans[k][1][-1]) for k in range(num_learners)]
    assert max_abs_diff(get_community(state),
                        weighted_average(finals, weights)) <= 1e-9
