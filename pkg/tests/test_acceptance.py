import pytest

from competing_growth.acceptance import BASE_SEED, SCENARIOS


@pytest.mark.parametrize("scenario", SCENARIOS, ids=[f"{s.number:02d}_{s.name}" for s in SCENARIOS])
def test_acceptance_criterion(scenario, acceptance_lines):
    result = scenario(BASE_SEED)
    acceptance_lines.append((scenario.number, result.line()))
    print(result.line())
    print(result.details)
    assert result.passed, result.line()
