"""Image manifests, stereo selection, patient-level partitioning and a
synthetic colour-fundus generator."""

from __future__ import annotations

import csv
import enum
import io
import os
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import imageproc
from .errors import DataError
from .scale import DrusenClass, EyeFeatures, simplified_score

MANIFEST_COLUMNS = ("patient_id", "eye", "stereo_side", "visit", "path",
                    "drusen", "pigment", "late_amd")

DRUSEN_LABELS = {"small_none": DrusenClass.SMALL_NONE, "medium": DrusenClass.MEDIUM,
                 "large": DrusenClass.LARGE}
DRUSEN_NAMES = {v: k for k, v in DRUSEN_LABELS.items()}


class ManifestError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class MissingImageError(DataError):
    pass


class Eye(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class StereoSide(str, enum.Enum):
    LEFT_OF_PAIR = "left_of_pair"
    RIGHT_OF_PAIR = "right_of_pair"


@dataclass(frozen=True)
class ImageRecord:
    patient_id: str
    eye: Eye
    stereo_side: StereoSide
    visit: int
    path: str
    gold: EyeFeatures

    def __post_init__(self):
        if self.visit < 0:
            raise ValueError("visit must be >= 0")
        if not self.path:
            raise ValueError("path must be non-empty")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    visit: int
    left: ImageRecord
    right: ImageRecord

    def __post_init__(self):
        if self.left.eye is not Eye.LEFT or self.right.eye is not Eye.RIGHT:
            raise ValueError("left/right records have the wrong eye")
        for r in (self.left, self.right):
            if r.patient_id != self.patient_id or r.visit != self.visit:
                raise ValueError("eye records belong to a different patient or visit")

    @property
    def gold_score(self) -> int:
        return simplified_score(self.left.gold, self.right.gold)


@dataclass
class Partition:
    train: list[ImageRecord]
    test: list[PatientRecord]


# --------------------------------------------------------------------------
# manifest I/O


def _enum(cls, value, column, row):
    try:
        return cls(value.strip().lower())
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ManifestError(f"bad {column} value {value!r} (expected one of {allowed})",
                            row) from None


def _flag(value, column, row):
    v = value.strip()
    if v not in ("0", "1"):
        raise ManifestError(f"bad {column} value {value!r} (expected 0 or 1)", row)
    return v == "1"


def parse_manifest(data: bytes) -> list[ImageRecord]:
    """Parse a manifest CSV. Row numbers in errors count the header as row 1."""
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ManifestError(f"manifest is not valid UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or not any(h.strip() for h in header):
        raise ManifestError("missing header")
    header = [h.strip() for h in header]
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise ManifestError(f"missing column(s): {', '.join(missing)}", 1)
    if tuple(header) != MANIFEST_COLUMNS:
        raise ManifestError(f"columns must be exactly {','.join(MANIFEST_COLUMNS)}", 1)

    records = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(MANIFEST_COLUMNS):
            raise ManifestError(f"expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}",
                                row_no)
        pid, eye, side, visit, path, drusen, pigment, late = (c.strip() for c in row)
        if not pid:
            raise ManifestError("empty patient_id", row_no)
        try:
            visit_no = int(visit)
        except ValueError:
            raise ManifestError(f"visit {visit!r} is not an integer", row_no) from None
        if visit_no < 0:
            raise ManifestError(f"visit {visit_no} is negative", row_no)
        if not path:
            raise ManifestError("empty path", row_no)
        if drusen.lower() not in DRUSEN_LABELS:
            raise ManifestError(
                f"bad drusen value {drusen!r} (expected one of {', '.join(DRUSEN_LABELS)})",
                row_no)
        gold = EyeFeatures(DRUSEN_LABELS[drusen.lower()],
                           _flag(pigment, "pigment", row_no),
                           _flag(late, "late_amd", row_no))
        records.append(ImageRecord(pid, _enum(Eye, eye, "eye", row_no),
                                   _enum(StereoSide, side, "stereo_side", row_no),
                                   visit_no, path, gold))
    return records


def format_manifest(records) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in records:
        w.writerow([r.patient_id, r.eye.value, r.stereo_side.value, r.visit, r.path,
                    DRUSEN_NAMES[r.gold.drusen], int(r.gold.pigment), int(r.gold.late_amd)])
    return buf.getvalue().encode("utf-8")


def load_manifest(path) -> list[ImageRecord]:
    return parse_manifest(Path(path).read_bytes())


# --------------------------------------------------------------------------
# stereo selection and partitioning


def select_stereo_image(pair) -> ImageRecord:
    """Pick the left image of a stereo pair, falling back to the right one."""
    left, right = pair
    if left is not None:
        return left
    if right is not None:
        return right
    raise MissingImageError("both images of the stereo pair are missing")


def select_images(records) -> list[ImageRecord]:
    """Reduce stereo pairs to one image per (patient, eye, visit), keeping input order."""
    pairs: dict[tuple, list] = {}
    for r in records:
        key = (r.patient_id, r.eye, r.visit)
        slot = pairs.setdefault(key, [None, None])
        i = 0 if r.stereo_side is StereoSide.LEFT_OF_PAIR else 1
        if slot[i] is not None:
            raise DataError(f"duplicate {r.stereo_side.value} image for {key}")
        slot[i] = r
    return [select_stereo_image(p) for p in pairs.values()]


def partition(records, test_patient_ids) -> Partition:
    """Split by patient: baseline bilateral pairs of test patients form the
    test set; every image of every other patient is training data. Later
    visits of test patients are discarded.
    """
    selected = select_images(records)
    test_ids = set(test_patient_ids)
    known = {r.patient_id for r in selected}
    unknown = sorted(test_ids - known)
    if unknown:
        raise DataError(f"test patient ids not in manifest: {', '.join(unknown[:10])}")

    train = [r for r in selected if r.patient_id not in test_ids]
    baseline = {(r.patient_id, r.eye): r for r in selected
                if r.patient_id in test_ids and r.visit == 0}
    lacking = sorted(pid for pid in test_ids
                     if (pid, Eye.LEFT) not in baseline or (pid, Eye.RIGHT) not in baseline)
    if lacking:
        raise DataError("test patients without a baseline bilateral pair: "
                        + ", ".join(lacking))
    # preserve manifest order of first appearance
    order = list(dict.fromkeys(r.patient_id for r in selected if r.patient_id in test_ids))
    test = [PatientRecord(pid, 0, baseline[pid, Eye.LEFT], baseline[pid, Eye.RIGHT])
            for pid in order]
    return Partition(train, test)


def choose_test_patients(records, n_test: int, seed: int) -> list[str]:
    """Seeded choice of ``n_test`` patients that have a baseline bilateral pair."""
    eyes = defaultdict(set)
    for r in records:
        if r.visit == 0:
            eyes[r.patient_id].add(r.eye)
    eligible = sorted(pid for pid, e in eyes.items() if len(e) == 2)
    if n_test > len(eligible):
        raise DataError(f"requested {n_test} test patients, only {len(eligible)} eligible")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(eligible), size=n_test, replace=False)
    return [eligible[i] for i in sorted(picked)]


def split_holdout(records, fraction: float, seed: int):
    """Patient-level split of training records into (fit, holdout)."""
    pids = sorted({r.patient_id for r in records})
    n_hold = max(1, int(round(fraction * len(pids)))) if len(pids) > 1 else 0
    rng = np.random.default_rng(seed)
    hold = {pids[i] for i in rng.choice(len(pids), size=n_hold, replace=False)}
    return ([r for r in records if r.patient_id not in hold],
            [r for r in records if r.patient_id in hold])


# --------------------------------------------------------------------------
# synthetic fundus images


@dataclass
class SynthSpec:
    """Parameters of a synthetic cohort.

    Eye features are drawn independently per eye: drusen class from
    ``drusen_mix`` (small/none, medium, large), pigment and late AMD as
    Bernoulli flags. ``left_missing_rate`` is the chance that the
    left-of-pair image is absent so the right-of-pair image is emitted
    instead.
    """

    n_patients: int = 10
    side: int = 224
    width_ratio: float = 1.25
    drusen_mix: tuple = (0.4, 0.3, 0.3)
    pigment_rate: float = 0.35
    late_amd_rate: float = 0.15
    visits: int = 1
    left_missing_rate: float = 0.0
    n_drusen: int = 16
    n_pigment: int = 5
    noise: float = 0.015

    def __post_init__(self):
        self.drusen_mix = tuple(float(p) for p in self.drusen_mix)
        if self.n_patients < 1 or self.side < 16 or self.visits < 1:
            raise ValueError("need n_patients >= 1, side >= 16, visits >= 1")
        if len(self.drusen_mix) != 3 or min(self.drusen_mix) < 0 or sum(self.drusen_mix) <= 0:
            raise ValueError("drusen_mix must be 3 non-negative weights")
        for name in ("pigment_rate", "late_amd_rate", "left_missing_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_class_mix(cls, n_patients, class_mix: dict, **kw):
        """Build from a class-mix mapping with keys ``drusen``, ``pigment``, ``late_amd``."""
        mix = dict(class_mix)
        if "drusen" in mix:
            kw["drusen_mix"] = tuple(mix.pop("drusen"))
        if "pigment" in mix:
            kw["pigment_rate"] = mix.pop("pigment")
        if "late_amd" in mix:
            kw["late_amd_rate"] = mix.pop("late_amd")
        if mix:
            raise ValueError(f"unknown class-mix keys: {sorted(mix)}")
        return cls(n_patients=n_patients, **kw)

    def to_dict(self):
        return asdict(self)


@dataclass
class SynthResult:
    root: Path
    manifest_path: Path
    records: list[ImageRecord]
    intended_scores: dict = field(default_factory=dict)


FUNDUS = np.array([0.74, 0.34, 0.14])
DRUSEN_RGB = np.array([0.96, 0.86, 0.36])
PIGMENT_RGB = np.array([0.22, 0.11, 0.06])
ATROPHY_RGB = np.array([0.93, 0.90, 0.80])
DISC_RGB = np.array([0.97, 0.88, 0.62])

# drusen radii in pixels at 224 px field size
DRUSEN_RADIUS = {DrusenClass.SMALL_NONE: (1.0, 2.0), DrusenClass.MEDIUM: (3.0, 5.0),
                 DrusenClass.LARGE: (7.0, 10.0)}


def _paint_disk(img, yy, xx, cy, cx, ry, rx, color, strength=1.0):
    d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    # one-pixel soft edge
    alpha = np.clip((1.0 - d) * min(ry, rx) + 0.5, 0.0, 1.0)[..., None] * strength
    img *= 1.0 - alpha
    img += alpha * color


def _annulus_point(rng, r_min, r_max):
    r = rng.uniform(r_min, r_max)
    a = rng.uniform(0, 2 * np.pi)
    return r * np.sin(a), r * np.cos(a)


def render_eye(features: EyeFeatures, eye: Eye, rng, side=224, width_ratio=1.25,
               n_drusen=16, n_pigment=5, noise=0.015) -> np.ndarray:
    """Render one synthetic field-2 photograph showing ``features``.

    The macula sits at the centre of the central ``side`` x ``side`` square;
    drusen are yellow disks sized by class, pigment abnormalities dark
    patches and late AMD a large pale central lesion.
    """
    h, w = side, max(side, int(round(side * width_ratio)))
    s = side / 224.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    cy, cx = h / 2.0, w / 2.0
    r2 = ((yy - cy) ** 2 + (xx - cx) ** 2) / (0.5 * side) ** 2
    shade = 1.0 - 0.22 * r2 - 0.12 * np.exp(-r2 / 0.03)
    img = shade[..., None] * FUNDUS * rng.uniform(0.93, 1.07)

    disc_x = cx + (0.42 if eye is Eye.RIGHT else -0.42) * side
    _paint_disk(img, yy, xx, cy + rng.normal(0, 0.02) * side, disc_x,
                0.075 * side, 0.065 * side, DISC_RGB)

    if features.late_amd:
        r = rng.uniform(0.14, 0.18) * side
        _paint_disk(img, yy, xx, cy, cx, r, r * rng.uniform(0.85, 1.15), ATROPHY_RGB)

    lo, hi = DRUSEN_RADIUS[features.drusen]
    count = n_drusen
    if features.drusen == DrusenClass.SMALL_NONE and rng.random() < 0.5:
        count = 0
    for _ in range(count):
        dy, dx = _annulus_point(rng, 0.19 * side, 0.31 * side)
        r = rng.uniform(lo, hi) * s
        _paint_disk(img, yy, xx, cy + dy, cx + dx, r, r, DRUSEN_RGB, 0.9)

    if features.pigment:
        for _ in range(n_pigment):
            dy, dx = _annulus_point(rng, 0.12 * side, 0.3 * side)
            ry, rx = rng.uniform(6, 10, size=2) * s
            _paint_disk(img, yy, xx, cy + dy, cx + dx, ry, rx, PIGMENT_RGB, 0.85)

    img += rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def render_pretext(rng, side=224, width_ratio=1.25, max_shapes=5):
    """A lesion-free fundus with 0..``max_shapes`` random shapes; returns ``(image, count)``.

    Shapes are yellow disks, dark patches or pale regions of assorted
    sizes. Counting them is the pretraining task that stands in for
    natural-image pretraining.
    """
    count = int(rng.integers(0, max_shapes + 1))
    eye = Eye.LEFT if rng.random() < 0.5 else Eye.RIGHT
    img = render_eye(EyeFeatures(), eye, rng, side, width_ratio, n_drusen=0, noise=0.0)
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    s = side / 224.0
    for _ in range(count):
        dy, dx = _annulus_point(rng, 0.0, 0.33 * side)
        kind = int(rng.integers(3))
        if kind == 0:
            r = rng.uniform(2, 11) * s
            _paint_disk(img, yy, xx, h / 2 + dy, w / 2 + dx, r, r, DRUSEN_RGB, 0.9)
        elif kind == 1:
            ry, rx = rng.uniform(4, 10, size=2) * s
            _paint_disk(img, yy, xx, h / 2 + dy, w / 2 + dx, ry, rx, PIGMENT_RGB, 0.85)
        else:
            r = rng.uniform(12, 30) * s
            _paint_disk(img, yy, xx, h / 2 + dy, w / 2 + dx, r, r, ATROPHY_RGB)
    img += rng.normal(0.0, 0.015, img.shape)
    return np.clip(img, 0.0, 1.0), count


def pretext_dataset(n_images: int, model_side: int, seed: int, render_side: int = 128,
                    max_shapes: int = 5):
    """Preprocessed shape-count images and labels, generated in memory."""
    x = np.empty((n_images, model_side, model_side, 3), dtype=np.float32)
    y = np.empty(n_images, dtype=np.int64)
    for i in range(n_images):
        img, y[i] = render_pretext(np.random.default_rng([seed, 2, i]), render_side,
                                   max_shapes=max_shapes)
        x[i] = imageproc.preprocess(img, model_side)
    return x, y


def blob_signal_set(n_images: int, side: int = 64, seed: int = 0, radius: float = 0.06,
                    noise: float = 0.08):
    """Saliency probe: noisy grey images that differ only in how concentrated a bright
    patch is.

    Positives carry a compact blob wholly inside a random quadrant. Negatives
    carry the same added brightness spread as a faint blob three times wider,
    so image means do not separate the classes. Returns ``(images, labels,
    masks)`` where ``masks[i]`` marks the quadrant holding the compact blob
    (all False for negatives).
    """
    x = np.empty((n_images, side, side, 3), dtype=np.float32)
    y = np.empty(n_images, dtype=np.int64)
    masks = np.zeros((n_images, side, side), dtype=bool)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5
    half, r = side / 2.0, radius * side
    for i in range(n_images):
        rng = np.random.default_rng([seed, 3, i])
        img = 0.5 + rng.normal(0.0, noise, (side, side, 3))
        y[i] = int(rng.random() < 0.5)
        qy, qx = rng.integers(0, 2, size=2)
        # keep the centre away from the quadrant edges
        cy = qy * half + rng.uniform(0.3 * half, 0.7 * half)
        cx = qx * half + rng.uniform(0.3 * half, 0.7 * half)
        # equal integrated brightness: amplitude scales with 1 / width^2
        width, amp = (r, 0.4) if y[i] else (3.0 * r, 0.4 / 9.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))[..., None]
        if y[i]:
            masks[i, qy * side // 2:(qy + 1) * side // 2,
                  qx * side // 2:(qx + 1) * side // 2] = True
        x[i] = np.clip(img, 0.0, 1.0)
    return x, y, masks


def draw_features(rng, spec: SynthSpec) -> EyeFeatures:
    mix = np.asarray(spec.drusen_mix) / sum(spec.drusen_mix)
    drusen = DrusenClass(int(rng.choice(3, p=mix)))
    return EyeFeatures(drusen, bool(rng.random() < spec.pigment_rate),
                       bool(rng.random() < spec.late_amd_rate))


def synth_generate(spec: SynthSpec, seed: int, out_dir, id_prefix: str = "P") -> SynthResult:
    """Write a synthetic cohort (PPM images + ``manifest.csv``) under ``out_dir``.

    Output is a pure function of ``(spec, seed)``: every image draws from
    its own RNG stream keyed by (seed, patient, eye, visit).
    """
    root = Path(out_dir)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {root}: {exc}") from None
    if not os.access(root / "images", os.W_OK):
        raise DataError(f"output directory {root} is not writable")

    feature_rng = np.random.default_rng([seed, 0])
    records, intended = [], {}
    for p in range(spec.n_patients):
        pid = f"{id_prefix}{p:05d}"
        feats = {Eye.LEFT: draw_features(feature_rng, spec),
                 Eye.RIGHT: draw_features(feature_rng, spec)}
        intended[pid] = simplified_score(feats[Eye.LEFT], feats[Eye.RIGHT])
        for visit in range(spec.visits):
            for e_idx, eye in enumerate((Eye.LEFT, Eye.RIGHT)):
                rng = np.random.default_rng([seed, 1, p, e_idx, visit])
                side = StereoSide.LEFT_OF_PAIR
                if rng.random() < spec.left_missing_rate:
                    side = StereoSide.RIGHT_OF_PAIR
                img = render_eye(feats[eye], eye, rng, spec.side, spec.width_ratio,
                                 spec.n_drusen, spec.n_pigment, spec.noise)
                rel = f"images/{pid}_v{visit}_{eye.value}_{side.value}.ppm"
                _atomic_write(root / rel, imageproc.encode_ppm(img))
                records.append(ImageRecord(pid, eye, side, visit, rel, feats[eye]))
    manifest_path = root / "manifest.csv"
    _atomic_write(manifest_path, format_manifest(records))
    return SynthResult(root, manifest_path, records, intended)


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def score_distribution(scores) -> dict[int, int]:
    c = Counter(scores)
    return {s: c.get(s, 0) for s in range(6)}


def load_images(records, root, side: int) -> np.ndarray:
    """Decode and preprocess the images of ``records`` into an (N, side, side, 3) float32 stack."""
    root = Path(root)
    out = np.empty((len(records), side, side, 3), dtype=np.float32)
    for i, r in enumerate(records):
        path = Path(r.path)
        if not path.is_absolute():
            path = root / path
        if not path.exists():
            raise MissingImageError(f"image not found: {path}")
        out[i] = imageproc.preprocess(imageproc.read_image(path), side)
    return out
