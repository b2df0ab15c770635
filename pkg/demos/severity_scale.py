"""Print the patient severity score for every pair of non-late eye states,
followed by the five-year risk attached to each score."""

from deepseenet.scale import DrusenClass, EyeFeatures, five_year_risk, simplified_score

STATES = [EyeFeatures(d, p) for d in DrusenClass for p in (False, True)]


def label(e: EyeFeatures) -> str:
    return f"{e.drusen.name.lower()}{'+pig' if e.pigment else ''}"


def main():
    width = max(len(label(e)) for e in STATES) + 2
    print("left \\ right".ljust(width) + "".join(label(e).rjust(width) for e in STATES))
    for left in STATES:
        row = "".join(str(simplified_score(left, right)).rjust(width) for right in STATES)
        print(label(left).ljust(width) + row)
    print("\nlate AMD in either eye scores 5")
    for s in range(5):
        print(f"score {s}: {five_year_risk(s):5.1f}% five-year risk")


if __name__ == "__main__":
    main()
