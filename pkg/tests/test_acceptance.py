"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line. Run directly with
``python tests/test_acceptance.py`` to print all ten lines without pytest.
"""
import sys

import pytest

from feedbackpovm import regression

# criterion number -> (check, wall-clock limit in seconds or None)
CRITERIA = {
    1: (regression.check_single_stage_optimum, 5.0),
    2: (regression.check_two_stage_optimum, 60.0),
    3: (regression.check_fixed_magnitude_penalty, None),
    4: (regression.check_monotone_in_stages, None),
    5: (regression.check_single_stage_closed_form, None),
    6: (regression.check_loss_on_superpositions, None),
    7: (regression.check_povm_completeness, None),
    8: (regression.check_tomography_recovers_povm, 120.0),
    9: (regression.check_monte_carlo, None),
    10: (regression.check_delay_curve, None),
}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    check, limit = CRITERIA[number]
    res = check()
    with capsys.disabled():
        print(f"\n{number:2d}. {res.line()}", flush=True)
    assert res.passed, res.detail
    if limit is not None:
        assert res.runtime < limit, f"took {res.runtime:.1f} s, limit {limit} s"


def main() -> int:
    failed = 0
    for number in sorted(CRITERIA):
        check, limit = CRITERIA[number]
        res = check()
        ok = res.passed and (limit is None or res.runtime < limit)
        failed += not ok
        print(f"{number:2d}. {res.line()}", flush=True)
    print(f"{len(CRITERIA) - failed}/{len(CRITERIA)} criteria passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
