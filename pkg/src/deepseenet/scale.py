"""AREDS Simplified Severity Scale.

Per-eye risk factors (large drusen, pigmentary abnormalities) are summed
over both eyes to a 0-4 patient score; late AMD in either eye scores 5.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

__all__ = [
    "DrusenClass",
    "EyeFeatures",
    "LATE_AMD_SCORE",
    "FIVE_YEAR_RISK",
    "eye_risk_factors",
    "simplified_score",
    "five_year_risk",
    "all_eye_states",
]

LATE_AMD_SCORE = 5

# percent risk of late AMD in at least one eye within 5 years, by score 0-4
FIVE_YEAR_RISK = (0.4, 3.1, 11.8, 25.9, 47.3)


class DrusenClass(enum.IntEnum):
    SMALL_NONE = 0
    MEDIUM = 1
    LARGE = 2


@dataclass(frozen=True)
class EyeFeatures:
    drusen: DrusenClass = DrusenClass.SMALL_NONE
    pigment: bool = False
    late_amd: bool = False

    def __post_init__(self):
        object.__setattr__(self, "drusen", DrusenClass(self.drusen))
        object.__setattr__(self, "pigment", bool(self.pigment))
        object.__setattr__(self, "late_amd", bool(self.late_amd))


def eye_risk_factors(eye: EyeFeatures) -> int:
    """Number of per-eye risk factors (0-2). Late AMD is not counted here."""
    return int(eye.drusen == DrusenClass.LARGE) + int(eye.pigment)


def simplified_score(left: EyeFeatures, right: EyeFeatures) -> int:
    """Patient-level severity score 0-5 from the features of both eyes.

    Bilateral medium drusen with no large drusen in either eye counts as
    one extra factor. The non-late score is capped at 4 before the late-AMD
    override.
    """
    if left.late_amd or right.late_amd:
        return LATE_AMD_SCORE
    score = eye_risk_factors(left) + eye_risk_factors(right)
    if left.drusen == DrusenClass.MEDIUM and right.drusen == DrusenClass.MEDIUM:
        score += 1
    return min(score, 4)


def five_year_risk(score: int) -> float:
    """Percent 5-year risk of progression for a score in 0..4."""
    if isinstance(score, bool) or int(score) != score or not 0 <= score <= 4:
        raise ValueError(
            f"5-year risk is defined for scores 0-4 only, got {score!r}"
        )
    return FIVE_YEAR_RISK[int(score)]


def all_eye_states() -> list[EyeFeatures]:
    """The 12 distinct per-eye feature states."""
    return [
        EyeFeatures(d, p, la)
        for d in DrusenClass
        for p in (False, True)
        for la in (False, True)
    ]
