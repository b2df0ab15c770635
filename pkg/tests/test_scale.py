import itertools

import pytest

from deepseenet.scale import (
    DrusenClass,
    EyeFeatures,
    all_eye_states,
    eye_risk_factors,
    five_year_risk,
    simplified_score,
)

from oracles import SCORE_TABLE, table_score

S, M, L = DrusenClass.SMALL_NONE, DrusenClass.MEDIUM, DrusenClass.LARGE

@pytest.mark.parametrize("eye,expected", [
    (EyeFeatures(L, True, False), 2),
    (EyeFeatures(S, False, False), 0),
    (EyeFeatures(M, True, False), 1),
    (EyeFeatures(L, False, True), 1),
])
def test_eye_risk_factors(eye, expected):
    assert eye_risk_factors(eye) == expected


def test_score_examples():
    clear = EyeFeatures()
    assert simplified_score(EyeFeatures(late_amd=True), clear) == 5
    assert simplified_score(clear, clear) == 0
    both = EyeFeatures(L, True, False)
    assert simplified_score(both, both) == 4
    med = EyeFeatures(M, False, False)
    assert simplified_score(med, med) == 1


def test_unilateral_medium_scores_zero():
    assert simplified_score(EyeFeatures(M), EyeFeatures(S)) == 0
    # large drusen in one eye suppresses the bilateral-medium point
    assert simplified_score(EyeFeatures(M), EyeFeatures(L)) == 1


def test_exhaustive_against_hand_table():
    states = all_eye_states()
    assert len(states) == 12
    for left, right in itertools.product(states, repeat=2):
        score = simplified_score(left, right)
        key = lambda e: (int(e.drusen), int(e.pigment), int(e.late_amd))  # noqa: E731
        assert score == table_score(key(left), key(right))
        assert score == simplified_score(right, left)


def test_hand_table_is_symmetric_and_capped():
    assert all(SCORE_TABLE[i][j] == SCORE_TABLE[j][i] for i in range(6) for j in range(6))
    assert max(max(row) for row in SCORE_TABLE) == 4


def _upgrades(eye):
    if eye.drusen < L:
        yield EyeFeatures(DrusenClass(eye.drusen + 1), eye.pigment, eye.late_amd)
    if not eye.pigment:
        yield EyeFeatures(eye.drusen, True, eye.late_amd)


def test_monotone_in_every_risk_factor():
    non_late = [e for e in all_eye_states() if not e.late_amd]
    for left, right in itertools.product(non_late, repeat=2):
        base = simplified_score(left, right)
        for up in _upgrades(left):
            assert simplified_score(up, right) >= base
        for up in _upgrades(right):
            assert simplified_score(left, up) >= base


def test_five_year_risk_table():
    assert [five_year_risk(s) for s in range(5)] == [0.4, 3.1, 11.8, 25.9, 47.3]
    values = [five_year_risk(s) for s in range(5)]
    assert all(a < b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("bad", [5, -1, 6, 2.5, True])
def test_five_year_risk_domain(bad):
    with pytest.raises(ValueError):
        five_year_risk(bad)


def test_eye_features_coerce_flags():
    e = EyeFeatures(2, 1, 0)
    assert e.drusen is L and e.pigment is True and e.late_amd is False
