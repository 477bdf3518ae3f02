"""The thirteen acceptance criteria, each at its stated tolerance."""
import pytest

from distdiff import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, acceptance_log):
    (result,) = acceptance.run([number], jobs=4)
    acceptance_log.append(result.line())
    print(result.line())
    assert result.passed, result.line()
