import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmlearn.config import ExperimentConfig, Stopping, default_config
from swarmlearn.orchestrator import (
    Decision,
    DeviceShard,
    StoppingState,
    SwarmSession,
    build_devices,
    compare_reports,
    device_id,
    init_model,
    prepare_fold,
    run_centralized_learning,
    run_local_epoch_sweep,
    run_local_learning,
    run_primary_experiment,
    run_swarm_learning,
    run_swarm_round,
    stopping_step,
    volume_paths,
)
from swarmlearn.trainer import GruModel, LocalUpdateConfig, TrainBatch, evaluate, gru_backward, local_update


def controller_trace(losses, constants):
    state = StoppingState(learning_rate=1.0)
    out = []
    for e, v in enumerate(losses, start=1):
        d = stopping_step(state, v, e, constants)
        out.append(d)
        if d == Decision.STOP:
            break
    return out, state


TRACE_A = Stopping(e_max=99, e_pre=0, c_switchcriterion=2, c_tol=1, c_maxswitch=1, c_maxneswitch=99)
TRACE_B = Stopping(e_max=99, e_pre=0, c_switchcriterion=2, c_tol=1, c_maxswitch=99, c_maxneswitch=99)


def test_trace_halve_then_stop():
    decisions, state = controller_trace([1.0, 1.1, 1.2, 1.3, 1.4, 1.5], TRACE_A)
    assert [d.value for d in decisions] == ["Continue", "Continue", "HalveLR", "Stop"]
    assert state.learning_rate == 0.5 and state.best_epoch == 1


def test_trace_tolerance_restart():
    decisions, state = controller_trace([1.0] * 9, TRACE_B)
    halves = [e for e, d in enumerate(decisions, start=1) if d == Decision.HALVE]
    # the first halve needs 2 non-improving epochs, later ones need 2 + 1
    assert halves == [3, 6, 9]
    assert state.c_nobest == -1 and state.learning_rate == 1.0 / 8


def test_decreasing_losses_never_stop():
    losses = list(np.linspace(1.0, 0.1, 50))
    decisions, state = controller_trace(losses, Stopping())
    assert all(d == Decision.CONTINUE for d in decisions) and len(decisions) == 50
    assert state.learning_rate == 1.0 and state.best_epoch == 50


def test_no_halving_before_e_pre():
    c = Stopping(e_pre=5, c_switchcriterion=1, c_tol=0, c_maxswitch=1, c_maxneswitch=1)
    decisions, _ = controller_trace([1.0] * 8, c)
    assert [d.value for d in decisions[:5]] == ["Continue"] * 5
    assert decisions[5] == Decision.HALVE and decisions[6] == Decision.STOP


def test_best_weights_are_kept():
    state = StoppingState(0.1)
    for e, (v, w) in enumerate([(2.0, [1.0]), (1.0, [2.0]), (3.0, [3.0])], start=1):
        stopping_step(state, v, e, Stopping(), np.array(w))
    assert state.w_best.tolist() == [2.0] and state.best_val == 1.0
    with pytest.raises(ValueError):
        stopping_step(state, 1.0, 0, Stopping())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=40))
def test_controller_invariants(losses):
    c = Stopping(e_pre=2, c_switchcriterion=2, c_tol=1, c_maxswitch=3, c_maxneswitch=2)
    state = StoppingState(0.8)
    lrs = [state.learning_rate]
    for e, v in enumerate(losses, start=1):
        d = stopping_step(state, v, e, c, np.array([v]))
        assert min(state.c_nobest, state.c_switch, state.c_neswitch) >= -c.c_tol
        lrs.append(state.learning_rate)
        if d == Decision.STOP:
            break
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert state.best_val == min(losses[: state.epoch])
    assert state.w_best[0] == state.best_val


# -- rounds ------------------------------------------------------------------


def _shards(K, n, seed, k=2, T=3):
    rng = np.random.default_rng(seed)
    return [TrainBatch(rng.normal(size=(n, T, k)), rng.normal(size=(n, 1))) for _ in range(K)]


def _session(shards, cfg, model, seed=0):
    devices = [DeviceShard(device_id(i, cfg.topology.orgs), i, [f"s{i}"], s, s, {}) for i, s in enumerate(shards)]
    return SwarmSession(cfg, devices, model, seed)


def _round_cfg(n, scale, K):
    return default_config("Gas").replace(
        scale=scale, p=1.0, lam=1.0, local={"local_epochs": 1, "batch_size": n, "learning_rate": 0.1}, topology={"orgs": 2, "nodes_per_org": 2}
    )


def aggregation_equivalence_gap(K, n=6, seed=0):
    """One lossless SL round against one full-batch step on the pooled shards."""
    shards = _shards(K, n, seed)
    model = GruModel.init(2, 3, 1, seed=seed)
    cfg = _round_cfg(n, 0, K)
    session = _session(shards, cfg, model)
    out = run_swarm_round(session, 1, 0.1)
    assert out.aggregated
    grad, _ = gru_backward(model, TrainBatch.concat(shards))
    central = model.flatten() - 0.1 * grad
    return float(np.max(np.abs(session.current_weights() - central)))


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([2, 3, 5]), st.integers(2, 8), st.integers(0, 10**6))
def test_round_equals_centralized_step(K, n, seed):
    assert aggregation_equivalence_gap(K, n, seed) <= 1e-10


def test_two_devices_give_mean_of_local_steps():
    shards = _shards(2, 5, 1)
    model = GruModel.init(2, 3, 1, seed=2)
    cfg = _round_cfg(5, 10**6, 2)
    session = _session(shards, cfg, model, seed=4)
    w0 = session.current_weights()
    run_swarm_round(session, 1, 0.1)
    locals_ = [local_update(model.with_weights(w0), s, LocalUpdateConfig(1, 5, 0.1), seed=[4, 1, i])[0] for i, s in enumerate(shards)]
    err = np.max(np.abs(session.current_weights() - (locals_[0] + locals_[1]) / 2))
    assert err <= 3 * 0.5e-6


def test_single_device_round_is_plain_sgd():
    shards = _shards(1, 4, 2)
    model = GruModel.init(2, 3, 1, seed=0)
    session = _session(shards, _round_cfg(4, 10**6, 1), model)
    w0 = session.current_weights()
    run_swarm_round(session, 1, 0.1)
    grad, _ = gru_backward(model.with_weights(w0), shards[0])
    assert np.max(np.abs(session.current_weights() - (w0 - 0.1 * grad))) <= 0.5e-6 + 1e-12


def test_sampling_gate_blocks_aggregation():
    shards = _shards(4, 4, 3)
    cfg = _round_cfg(4, 10**6, 4).replace(p=1.0, screen_threshold=2.0)  # everything is withheld
    session = _session(shards, cfg, GruModel.init(2, 3, 1, seed=0))
    out = run_swarm_round(session, 1, 0.1)
    assert out.commit is None and not out.aggregated and len(out.flagged) == 4


# -- full runs ----------------------------------------------------------------


def tiny_config(**changes) -> ExperimentConfig:
    cfg = default_config("Gas").replace(
        labels=["W1", "W2", "W3", "W4", "W5"],
        n_external=1,
        series_length=90,
        hidden_dim=3,
        seeds=[0],
        folds=[0],
        window={"history": 5},
        stopping={"e_max": 4, "e_pre": 1, "c_switchcriterion": 1, "c_tol": 0, "c_maxswitch": 2, "c_maxneswitch": 2},
        topology={"orgs": 2, "nodes_per_org": 2},
    )
    return cfg.replace(**changes) if changes else cfg


def test_prepare_fold_layout():
    cfg = tiny_config()
    data = prepare_fold(cfg, 0)
    assert list(data.external) == ["W1"] and list(data.internal) == ["W2", "W3", "W4", "W5"]
    sp = data.internal["W2"]
    assert (len(sp.train), len(sp.val), len(sp.test)) == (63 - 5, 18 - 5, 9 - 5)
    assert data.input_dim == 4 and data.output_dim == 1
    # min-max fitted on the training rows
    assert sp.train.inputs.min() >= 0.0 and sp.train.inputs.max() <= 1.0


def test_welllog_uses_pooled_standardization():
    cfg = default_config("WellLog").replace(labels=["A1", "A2", "A3"], n_external=1, series_length=120, window={"history": 8, "stride": 8})
    data = prepare_fold(cfg, 0)
    assert data.output_dim == 8
    # pooled statistics standardize the union of internal training rows to mean 0
    rows = np.concatenate([s.train.inputs[:, :, 0].ravel() for s in data.internal.values()])
    assert abs(rows.mean()) < 0.2


def test_pv_fold_shapes():
    cfg = default_config("PV").replace(labels=["P1", "P2", "P3"], n_external=1)
    data = prepare_fold(cfg, 0)
    sp = data.internal["P2"]
    assert data.output_dim == 12 and sp.train.inputs.shape[1:] == (48, 4)
    assert len(sp.test) > 0


def test_swarm_learning_is_deterministic_and_uses_best_weights():
    cfg = tiny_config()
    data = prepare_fold(cfg, 0)
    devices = build_devices(cfg, data)
    a, sa = run_swarm_learning(cfg, data, devices, 0)
    b, _ = run_swarm_learning(cfg, data, devices, 0)
    assert a.rows() == b.rows() and np.array_equal(a.w_best, b.w_best)
    assert [h.val_loss for h in a.history] == [h.val_loss for h in b.history]
    best = min(h.val_loss for h in a.history)
    assert a.best_val == best
    model = init_model(cfg, data, 0)
    assert a.test_mse[("P_ex", "W1")] == evaluate(model.with_weights(a.w_best), data.external["W1"])
    assert sa.network.honest_views_agree() and sa.network.height == a.e_final + 1


def test_baselines_and_comparison_cells():
    cfg = tiny_config()
    data = prepare_fold(cfg, 0)
    devices = build_devices(cfg, data)
    ll = run_local_learning(cfg, data, devices, 0)
    cl = run_centralized_learning(cfg, data, devices, 0)
    sl, _ = run_swarm_learning(cfg, data, devices, 0)
    assert len(ll) == 4 and all(len(r.test_mse) == 2 for r in ll)
    assert set(cl.test_mse) == set(sl.test_mse)
    cells = compare_reports("Gas", ll + [cl, sl])
    kinds = {(c.baseline, c.dataset_set) for c in cells}
    assert kinds == {("LL", "P_in"), ("LL", "P_ex"), ("CL", "P_in"), ("CL", "P_ex")}
    assert sum(1 for c in cells if c.baseline == "LL" and c.dataset_set == "P_ex") == 4


def test_primary_experiment_runs():
    res = run_primary_experiment(tiny_config())
    assert {r.dataset_set for r in res.summary} == {"P_in", "P_ex"}
    assert res.first_session is not None
    assert len(res.run_rows()) == 4 * 2 + 5 + 5


def test_volume_paths():
    labels = [f"W{i}" for i in range(5, 25)]
    path = volume_paths(labels, 4, selseed=0)
    assert [len(step) for step in path] == [4] * 5
    assert sorted(x for g in path[0] for x in g) == sorted(labels)
    for prev, nxt in zip(path, path[1:]):
        for gp, gn in zip(prev, nxt):
            assert len(gn) == len(gp) - 1 and set(gn) < set(gp)
    assert volume_paths(labels, 4, 0) == path and volume_paths(labels, 4, 1) != path
    uneven = volume_paths(labels[:5], 2, 3)
    assert [len(s) for s in uneven] == [2, 2, 1]


def test_local_epoch_sweep_keeps_budget():
    cfg = tiny_config(local_epoch_grid=[1, 2], local_epoch_fold=0)
    points = run_local_epoch_sweep(cfg)
    assert [p.axis for p in points] == ["local_epochs=1", "local_epochs=2"]
    assert all(np.isfinite(p.ex_mean) for p in points)


def test_config_json_roundtrip(tmp_path):
    cfg = tiny_config()
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert ExperimentConfig.load(path) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"kind": "Gas", "nonsense": 1})
    with pytest.raises(ValueError):
        cfg.external_labels(9)
