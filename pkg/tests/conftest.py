import numpy as np
import pytest

from swarmlearn.chaincore import Account, Func, sign_message
from swarmlearn.contract import quantize


@pytest.fixture
def accounts():
    return [Account.generate(f"dev-{i}", seed=7) for i in range(4)]


@pytest.fixture
def keys(accounts):
    return {a.id: a.verify_key for a in accounts}


def make_round(accounts, prev, rng, param_len=5, ts=1, receiver="swarm-contract"):
    """Upload plus aggregate messages from every account."""
    msgs = []
    for a in accounts:
        payload = quantize(rng.normal(size=param_len), 10**6)
        msgs.append(sign_message(a, prev_hash=prev, receiver=receiver, func=Func.UPLOAD, payload=payload, losses=(0.5, 0.25), timestamp=ts))
        msgs.append(sign_message(a, prev_hash=prev, receiver=receiver, func=Func.AGGREGATE, timestamp=ts))
    return msgs


ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'} {name}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
