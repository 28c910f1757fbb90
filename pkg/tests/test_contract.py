import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmlearn.chaincore import ZERO_DIGEST, Account, Func, sign_message
from swarmlearn.contract import (
    AlreadyRegistered,
    BadConfig,
    BadPayload,
    SamplingNotMet,
    Unauthorized,
    dequantize,
    init_contract,
    quantize,
    screen_update,
)


def weighted_mean_oracle(params, counts):
    """Plain float weighted mean, written without the contract's code path."""
    total = float(sum(counts))
    out = [0.0] * len(params[0])
    for p, n in zip(params, counts):
        for j, v in enumerate(p):
            out[j] += v * n / total
    return np.array(out)


def aggregation_case(rng, scale=10**6):
    n_dev = int(rng.integers(1, 9))
    plen = int(rng.integers(1, 33))
    counts = [int(c) for c in rng.integers(1, 500, n_dev)]
    params = [rng.normal(0, 2, plen) for _ in range(n_dev)]
    c = init_contract(plen, scale)
    for i, n in enumerate(counts):
        c.register_device(f"d{i}", n)
    for i, p in enumerate(params):
        c.update_parameter(f"d{i}", quantize(p, scale))
    c.aggregate_parameters("d0")
    # the oracle sees the values actually stored on chain
    stored = [dequantize(quantize(p, scale)) for p in params]
    err = np.max(np.abs(dequantize(c.aggregated) - weighted_mean_oracle(stored, counts)))
    return err, (1 + n_dev) * 0.5 / scale


def test_aggregation_matches_oracle_on_random_cases():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        err, bound = aggregation_case(rng)
        assert err <= bound


def test_two_device_example():
    c = init_contract(2, 10**6)
    c.register_device("a", 1).register_device("b", 3)
    c.update_parameter("a", quantize([1.0, 0.0])).update_parameter("b", quantize([0.0, 1.0]))
    c.aggregate_parameters("a")
    assert c.aggregated.values == (250000, 750000)
    assert c.round == 1
    assert all(r.updated == 0 for r in c.devices.values())


def test_lambda_scales_aggregate():
    c = init_contract(1, 10**6, lam=0.5)
    c.register_device("a", 2)
    c.update_parameter("a", quantize([0.8]))
    c.aggregate_parameters("a")
    assert c.aggregated.values == (400000,)


def test_sampling_gate_and_renormalization():
    c = init_contract(1, 10**6, p=0.5)
    for name, n in [("a", 1), ("b", 1), ("c", 2)]:
        c.register_device(name, n)
    c.update_parameter("a", quantize([1.0]))
    with pytest.raises(SamplingNotMet) as exc:
        c.aggregate_parameters("a")
    assert exc.value.fraction == pytest.approx(1 / 3)
    c.update_parameter("c", quantize([4.0]))
    c.aggregate_parameters("a")
    # weights renormalize over the participating counts 1 and 2
    assert dequantize(c.aggregated)[0] == pytest.approx(3.0)

    strict = init_contract(1, 10**6, p=0.5, strict_paper_weights=True)
    for name, n in [("a", 1), ("b", 1), ("c", 2)]:
        strict.register_device(name, n)
    strict.update_parameter("a", quantize([1.0])).update_parameter("c", quantize([4.0]))
    strict.aggregate_parameters("a")
    assert dequantize(strict.aggregated)[0] == pytest.approx(9.0 / 4.0)


def test_registry_errors():
    with pytest.raises(BadConfig):
        init_contract(3, p=0.0)
    with pytest.raises(BadConfig):
        init_contract(3, scale=12345)
    with pytest.raises(BadConfig):
        init_contract(3, initial_params=[1.0, 2.0])
    c = init_contract(3)
    c.register_device("a", 5)
    with pytest.raises(AlreadyRegistered):
        c.register_device("a", 5)
    with pytest.raises(BadConfig):
        c.register_device("b", 0)
    with pytest.raises(Unauthorized):
        c.update_parameter("zz", quantize([0, 0, 0]))
    with pytest.raises(BadPayload):
        c.update_parameter("a", quantize([0, 0]))
    with pytest.raises(BadPayload):
        c.update_parameter("a", quantize([0, 0, 0], 1000))
    with pytest.raises(Unauthorized):
        c.aggregate_parameters("zz")


def test_apply_records_soft_revert():
    a, b = Account.generate("a"), Account.generate("b")
    c = init_contract(2, 10**6, p=1.0)
    c.register_device("a", 1).register_device("b", 1)
    up = sign_message(a, prev_hash=ZERO_DIGEST, receiver=c.account_id, func=Func.UPLOAD, payload=quantize([1.0, 2.0]), losses=(1.0, 2.0), timestamp=1)
    agg = sign_message(a, prev_hash=ZERO_DIGEST, receiver=c.account_id, func=Func.AGGREGATE, timestamp=1)
    before = c.snapshot_json()
    receipts = c.copy().apply_all([agg])
    assert receipts[0].ok is False and receipts[0].error == "SamplingNotMet" and receipts[0].fraction == 0.0
    r1, r2 = c.apply_all([up, agg])
    assert r1.ok and not r2.ok and c.round == 0
    assert c.devices["a"].losses == (1.0, 2.0)
    with pytest.raises(SamplingNotMet):
        c.apply(agg, strict=True)
    wrong = sign_message(b, prev_hash=ZERO_DIGEST, receiver="elsewhere", func=Func.AGGREGATE, timestamp=1)
    with pytest.raises(Unauthorized):
        c.apply(wrong)
    assert before != c.snapshot_json()


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(5))))
def test_upload_order_does_not_change_aggregate(order):
    rng = np.random.default_rng(3)
    params = [rng.normal(size=6) for _ in range(5)]
    c = init_contract(6)
    for i in range(5):
        c.register_device(f"d{i}", i + 1)
    for i in order:
        c.update_parameter(f"d{i}", quantize(params[i]))
    c.aggregate_parameters("d0")
    ref = init_contract(6)
    for i in range(5):
        ref.register_device(f"d{i}", i + 1)
    for i in range(5):
        ref.update_parameter(f"d{i}", quantize(params[i]))
    ref.aggregate_parameters("d0")
    assert c.aggregated == ref.aggregated


def test_screen_update():
    c = init_contract(3, initial_params=[1.0, 0.0, 0.0])
    assert screen_update(c, quantize([2.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert screen_update(c, quantize([-1.0, 0.0, 0.0])) == pytest.approx(-1.0)
    assert screen_update(c, quantize([0.0, 0.0, 0.0])) == 0.0
