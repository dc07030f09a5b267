import pytest

from nci_lab.acceptance import CRITERIA, DETERMINISM

NAMES = {**{n: name for n, (name, _) in CRITERIA.items()}, DETERMINISM[0]: DETERMINISM[1]}


@pytest.mark.parametrize("number", sorted(NAMES), ids=[f"{n:02d}-{NAMES[n]}" for n in sorted(NAMES)])
def test_criterion(acceptance_results, number):
    r = acceptance_results[number]
    print(r.line())
    assert r.passed, r.detail
