import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepseenet import imageproc
from deepseenet.data import (
    DRUSEN_RGB,
    DataError,
    blob_signal_set,
    Eye,
    ImageRecord,
    ManifestError,
    MissingImageError,
    StereoSide,
    SynthSpec,
    choose_test_patients,
    format_manifest,
    load_manifest,
    parse_manifest,
    partition,
    render_eye,
    score_distribution,
    select_images,
    select_stereo_image,
    split_holdout,
    synth_generate,
)
from deepseenet.scale import DrusenClass, EyeFeatures, simplified_score

HEADER = b"patient_id,eye,stereo_side,visit,path,drusen,pigment,late_amd\n"


def rec(pid, eye="left", side="left_of_pair", visit=0, feats=EyeFeatures()):
    return ImageRecord(pid, Eye(eye), StereoSide(side), visit, f"{pid}_{eye}_{visit}_{side}.ppm",
                       feats)


# -- manifest ----------------------------------------------------------------

def test_parse_one_row():
    rows = parse_manifest(HEADER + b"A1,left,left_of_pair,0,a.ppm,large,1,0\n")
    assert len(rows) == 1
    r = rows[0]
    assert (r.patient_id, r.eye, r.stereo_side, r.visit, r.path) == (
        "A1", Eye.LEFT, StereoSide.LEFT_OF_PAIR, 0, "a.ppm")
    assert r.gold == EyeFeatures(DrusenClass.LARGE, True, False)


def test_bad_enum_names_row_two():
    with pytest.raises(ManifestError) as err:
        parse_manifest(HEADER + b"A1,left,left_of_pair,0,a.ppm,huge,1,0\n")
    assert err.value.row == 2
    assert "row 2" in str(err.value)


@pytest.mark.parametrize("line,row", [
    (b"A1,left,left_of_pair,zero,a.ppm,large,1,0\n", 2),
    (b"A1,middle,left_of_pair,0,a.ppm,large,1,0\n", 2),
    (b"A1,left,left_of_pair,0,a.ppm,large,2,0\n", 2),
    (b"A1,left,left_of_pair,0,a.ppm,large,1\n", 2),
])
def test_row_errors(line, row):
    with pytest.raises(ManifestError) as err:
        parse_manifest(HEADER + line)
    assert err.value.row == row


def test_error_row_counts_header():
    good = b"A1,left,left_of_pair,0,a.ppm,large,1,0\n"
    with pytest.raises(ManifestError) as err:
        parse_manifest(HEADER + good + good + b"A1,left,left_of_pair,0,a.ppm,large,1,x\n")
    assert err.value.row == 4


def test_empty_file():
    with pytest.raises(ManifestError, match="missing header"):
        parse_manifest(b"")


def test_missing_column():
    with pytest.raises(ManifestError, match="late_amd"):
        parse_manifest(b"patient_id,eye,stereo_side,visit,path,drusen,pigment\n")


def test_manifest_round_trip(tmp_path):
    records = [rec("P1"), rec("P1", "right", "right_of_pair", 3,
                              EyeFeatures(DrusenClass.MEDIUM, True, True))]
    path = tmp_path / "m.csv"
    path.write_bytes(format_manifest(records))
    assert load_manifest(path) == records


# -- stereo selection --------------------------------------------------------

def test_stereo_selection():
    left, right = rec("P", side="left_of_pair"), rec("P", side="right_of_pair")
    assert select_stereo_image((left, right)) is left
    assert select_stereo_image((None, right)) is right
    with pytest.raises(MissingImageError):
        select_stereo_image((None, None))


def test_select_images_one_per_eye_visit():
    rows = [rec("P", "left", "right_of_pair"), rec("P", "left", "left_of_pair"),
            rec("P", "right", "right_of_pair")]
    chosen = select_images(rows)
    assert [(r.eye, r.stereo_side) for r in chosen] == [
        (Eye.LEFT, StereoSide.LEFT_OF_PAIR), (Eye.RIGHT, StereoSide.RIGHT_OF_PAIR)]


# -- partition ---------------------------------------------------------------

def test_partition_discards_later_test_visits():
    rows = [rec("T", e, visit=v) for v in (0, 2) for e in ("left", "right")]
    rows += [rec("U", e, visit=v) for v in (0, 1) for e in ("left", "right")]
    part = partition(rows, ["T"])
    assert [p.patient_id for p in part.test] == ["T"]
    assert all(r.patient_id == "U" for r in part.train)
    assert len(part.train) == 4
    kept = {(r.patient_id, r.visit) for r in part.train} | {("T", 0)}
    assert ("T", 2) not in kept


def test_partition_errors():
    rows = [rec("T", "left")]
    with pytest.raises(DataError, match="T"):
        partition(rows, ["T"])
    with pytest.raises(DataError, match="Z"):
        partition(rows, ["Z"])


def test_partition_scales_to_paper_split():
    # 4,549 patients with a baseline pair each; 450 of them held out
    rows = [rec(f"P{i}", e) for i in range(4549) for e in ("left", "right")]
    test_ids = choose_test_patients(rows, 450, seed=7)
    part = partition(rows, test_ids)
    assert len(part.test) == 450
    assert 2 * len(part.test) == 900
    assert len({r.patient_id for r in part.train}) == 4099


manifests = st.lists(
    st.tuples(st.integers(0, 12), st.sampled_from(["left", "right"]),
              st.sampled_from(["left_of_pair", "right_of_pair"]), st.integers(0, 3)),
    min_size=1, max_size=60, unique=True)


@settings(max_examples=150, deadline=None)
@given(manifests, st.integers(0, 2 ** 32 - 1), st.data())
def test_partition_properties(rows, seed, draw):
    records = [rec(f"P{p}", e, s, v) for p, e, s, v in rows]
    eligible = sorted({r.patient_id for r in records if r.visit == 0 and
                       {x.eye for x in records if x.patient_id == r.patient_id
                        and x.visit == 0} == {Eye.LEFT, Eye.RIGHT}})
    n = draw.draw(st.integers(0, len(eligible)))
    test_ids = choose_test_patients(records, n, seed)
    part = partition(records, test_ids)
    train_ids = {r.patient_id for r in part.train}
    assert train_ids.isdisjoint(test_ids)
    assert all(p.visit == 0 and p.left.visit == 0 and p.right.visit == 0 for p in part.test)
    assert sorted(p.patient_id for p in part.test) == sorted(test_ids)
    # every non-test patient contributes all of its selected images
    assert len(part.train) == sum(1 for r in select_images(records)
                                  if r.patient_id not in set(test_ids))


def test_choose_test_patients_deterministic():
    rows = [rec(f"P{i}", e) for i in range(50) for e in ("left", "right")]
    assert choose_test_patients(rows, 10, 3) == choose_test_patients(rows, 10, 3)
    assert choose_test_patients(rows, 10, 3) != choose_test_patients(rows, 10, 4)
    with pytest.raises(DataError):
        choose_test_patients(rows, 51, 0)


def test_split_holdout_by_patient():
    rows = [rec(f"P{i}", e, visit=v) for i in range(20) for e in ("left", "right")
            for v in range(2)]
    fit, hold = split_holdout(rows, 0.1, 0)
    assert {r.patient_id for r in fit}.isdisjoint({r.patient_id for r in hold})
    assert len({r.patient_id for r in hold}) == 2
    assert len(fit) + len(hold) == len(rows)


# -- synthetic generator -----------------------------------------------------

def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_deterministic(tmp_path):
    spec = SynthSpec(n_patients=4, side=48, visits=2, left_missing_rate=0.3)
    synth_generate(spec, 1, tmp_path / "a")
    synth_generate(spec, 1, tmp_path / "b")
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a == b
    synth_generate(spec, 2, tmp_path / "c")
    assert _tree(tmp_path / "c") != a


def test_synth_ten_patients_twenty_rows(tmp_path):
    res = synth_generate(SynthSpec(n_patients=10, side=32), 0, tmp_path)
    rows = load_manifest(res.manifest_path)
    assert len(rows) == 20
    assert rows == res.records
    for r in rows:
        img = imageproc.read_image(tmp_path / r.path)
        assert img.shape == (32, 40, 3)


def test_synth_all_late(tmp_path):
    spec = SynthSpec.from_class_mix(8, {"late_amd": 1.0}, side=32)
    res = synth_generate(spec, 5, tmp_path)
    part = partition(res.records, sorted(res.intended_scores))
    assert all(p.gold_score == 5 for p in part.test)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_manifest_reproduces_intended_scores(tmp_path, seed):
    spec = SynthSpec(n_patients=30, side=24, visits=2)
    res = synth_generate(spec, seed, tmp_path)
    rows = load_manifest(res.manifest_path)
    base = {(r.patient_id, r.eye): r.gold for r in rows if r.visit == 0}
    pids = sorted({r.patient_id for r in rows})
    scores = [simplified_score(base[p, Eye.LEFT], base[p, Eye.RIGHT]) for p in pids]
    assert score_distribution(scores) == score_distribution(res.intended_scores.values())
    assert dict(zip(pids, scores)) == res.intended_scores


def test_synth_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DataError):
        synth_generate(SynthSpec(n_patients=1, side=32), 0, blocker / "sub")


# rendered content follows the labels

def _yellow_fraction(img):
    return float(np.mean(np.linalg.norm(img - DRUSEN_RGB, axis=-1) < 0.12))


def test_drusen_area_grows_with_class():
    areas = []
    for d in DrusenClass:
        vals = [_yellow_fraction(render_eye(EyeFeatures(d), Eye.LEFT,
                                            np.random.default_rng(i), 224, noise=0.0))
                for i in range(6)]
        areas.append(np.mean(vals))
    assert areas[0] < areas[1] < areas[2]


def test_pigment_and_late_amd_visible():
    rng = np.random.default_rng
    clear = render_eye(EyeFeatures(), Eye.LEFT, rng(0), 224, noise=0.0)
    pig = render_eye(EyeFeatures(pigment=True), Eye.LEFT, rng(0), 224, noise=0.0)
    late = render_eye(EyeFeatures(late_amd=True), Eye.LEFT, rng(0), 224, noise=0.0)
    dark = lambda im: np.mean(im.sum(axis=-1) < 0.7)  # noqa: E731
    assert dark(pig) > dark(clear) + 0.005
    centre = late[112, 140]
    assert centre.min() > 0.75 and clear[112, 140].min() < 0.5


def test_disc_side_follows_eye():
    left = render_eye(EyeFeatures(), Eye.LEFT, np.random.default_rng(0), 224, noise=0.0)
    right = render_eye(EyeFeatures(), Eye.RIGHT, np.random.default_rng(0), 224, noise=0.0)
    w = left.shape[1]
    # the bright disc sits left of centre for a left eye, right for a right eye
    assert np.argmax(left.sum(axis=(0, 2))) < w // 2 < np.argmax(right.sum(axis=(0, 2)))


# saliency probe images

def test_blob_probe_masks_and_balance():
    x, y, masks = blob_signal_set(200, side=32, seed=0)
    assert x.shape == (200, 32, 32, 3) and x.dtype == np.float32
    assert 60 < y.sum() < 140
    for img, label, mask in zip(x, y, masks):
        if label:
            # exactly one quadrant, and the brightest pixel lies inside it
            assert mask.sum() == 16 * 16
            peak = np.unravel_index(np.argmax(img.mean(axis=-1)), mask.shape)
            assert mask[peak]
        else:
            assert not mask.any()


def test_blob_probe_means_do_not_separate_classes():
    x, y, _ = blob_signal_set(400, side=32, seed=1, noise=0.0)
    means = x.mean(axis=(1, 2, 3))
    assert abs(means[y == 1].mean() - means[y == 0].mean()) < 0.005


def test_blob_probe_deterministic():
    a = blob_signal_set(10, side=16, seed=3)
    b = blob_signal_set(10, side=16, seed=3)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
