import pytest

from swarmlearn.consensus import Mutation
from swarmlearn.faults import bad_packager, bad_voters, malicious_client, run_fault_matrix


@pytest.mark.parametrize("mutation", [m.value for m in Mutation])
def test_every_packager_mutation_is_transparent(mutation):
    res = bad_packager(rounds=2, mutation=mutation)
    assert res.passed, res.detail


def test_voter_thresholds():
    assert bad_voters(1).passed
    assert bad_voters(2).passed


@pytest.mark.parametrize("attack", ["negate", "noise"])
def test_malicious_uploads_are_flagged(attack):
    res = malicious_client(attack=attack)
    assert res.passed, res.detail


def test_matrix_is_deterministic():
    assert run_fault_matrix() == run_fault_matrix()
