"""End-to-end runs: synthesis, training, prediction, evaluation, interpretation, reports.

Every function takes a validated config dict (see :mod:`deepseenet.config`)
and writes its outputs atomically under the configured directories.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data, evaluation, imageproc, plots
from .config import SCHEMA_VERSION, STRATEGIES, resolved_paths
from .data import Eye
from .errors import DataError, InvariantError
from .interpret.saliency import saliency
from .interpret.tsne import TsneConfig, nearest_centroid_purity, tsne
from .models import HEAD_CLASSES, HEADS, DeepSeeNet, EyePrediction, embed, predict_eyes
from .nnet.network import fit_input_standardization
from .nnet.strategies import build_strategy, pretrain
from .nnet.training import TrainConfig, train
from .scale import DrusenClass, EyeFeatures, five_year_risk, simplified_score

PREDICTION_COLUMNS = ("patient_id", "eye", "drusen_p0", "drusen_p1", "drusen_p2",
                      "pigment_p", "late_amd_p")
CLASS_NAMES = {
    "drusen": ("small/none", "medium", "large"),
    "pigment": ("no", "yes"),
    "late_amd": ("no", "yes"),
    "score": tuple(str(s) for s in range(6)),
}
STRATEGY_TITLES = {"frozen_extractor": "MLP (frozen extractor)",
                   "fine_tune": "Fine-tuned", "full_train": "Fully-trained"}
METRICS = ("accuracy", "sensitivity", "specificity", "kappa")


def _silent(*_args, **_kw):
    pass


# --------------------------------------------------------------------------
# atomic output helpers

def write_bytes(path, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
    return path


def write_text(path, text: str) -> Path:
    return write_bytes(path, text.encode("utf-8"))


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path, obj: dict) -> Path:
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    return write_text(path, json.dumps(_clean(obj), indent=2, sort_keys=True,
                                       allow_nan=False) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


# --------------------------------------------------------------------------
# dataset

def synth_spec(cfg: dict) -> data.SynthSpec:
    s = cfg["synth"]
    return data.SynthSpec(
        n_patients=s["n_patients"], side=s["side"], width_ratio=s["width_ratio"],
        drusen_mix=tuple(s["drusen_mix"]), pigment_rate=s["pigment_rate"],
        late_amd_rate=s["late_amd_rate"], visits=s["visits"],
        left_missing_rate=s["left_missing_rate"], n_drusen=s["n_drusen"],
        n_pigment=s["n_pigment"], noise=s["noise"])


def run_synth(cfg: dict, log=_silent) -> dict:
    """Generate the synthetic cohort and a seeded list of test patients."""
    paths = resolved_paths(cfg)
    spec = synth_spec(cfg)
    root = paths["manifest"].parent
    log(f"generating {spec.n_patients} patients x {spec.visits} visits into {root}")
    result = data.synth_generate(spec, cfg["seed"], root)
    if result.manifest_path != paths["manifest"]:
        os.replace(result.manifest_path, paths["manifest"])
    test_ids = data.choose_test_patients(result.records, cfg["synth"]["n_test"], cfg["seed"])
    write_text(paths["test_ids"], "".join(pid + "\n" for pid in test_ids))
    test_set = set(test_ids)
    summary = {
        "seed": cfg["seed"],
        "spec": spec.to_dict(),
        "n_images": len(result.records),
        "n_patients": spec.n_patients,
        "n_test": len(test_ids),
        "intended_scores": data.score_distribution(result.intended_scores.values()),
        "train_scores": data.score_distribution(
            s for pid, s in result.intended_scores.items() if pid not in test_set),
        "test_scores": data.score_distribution(
            s for pid, s in result.intended_scores.items() if pid in test_set),
    }
    write_json(root / "synth.json", summary)
    return summary


def read_test_ids(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"test patient list not found: {path}")
    ids = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    ids = [pid for pid in ids if pid]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate test patient ids")
    return ids


@dataclass
class Dataset:
    records: list
    partition: data.Partition
    image_root: Path


def load_dataset(cfg: dict) -> Dataset:
    paths = resolved_paths(cfg)
    if not paths["manifest"].exists():
        raise DataError(f"manifest not found: {paths['manifest']}")
    records = data.load_manifest(paths["manifest"])
    ids = read_test_ids(paths["test_ids"])
    return Dataset(records, data.partition(records, ids), paths["image_root"])


def head_labels(records, head: str) -> np.ndarray:
    if head == "drusen":
        return np.array([int(r.gold.drusen) for r in records], dtype=np.int64)
    if head == "pigment":
        return np.array([int(r.gold.pigment) for r in records], dtype=np.int64)
    return np.array([int(r.gold.late_amd) for r in records], dtype=np.int64)


# --------------------------------------------------------------------------
# training

@dataclass
class TrainingData:
    x_fit: np.ndarray
    y_fit: dict
    x_hold: np.ndarray
    y_hold: dict


def training_data(cfg: dict, dataset: Dataset) -> TrainingData:
    """Training images split by patient into fitting and early-stopping holdout sets."""
    fit, hold = data.split_holdout(dataset.partition.train, cfg["train"]["holdout_fraction"],
                                   cfg["seed"])
    if not fit or not hold:
        raise DataError("too few training patients for a holdout split")
    side = cfg["model"]["side"]
    return TrainingData(
        data.load_images(fit, dataset.image_root, side),
        {h: head_labels(fit, h) for h in HEADS},
        data.load_images(hold, dataset.image_root, side),
        {h: head_labels(hold, h) for h in HEADS},
    )


def train_config(section: dict, seed: int) -> TrainConfig:
    return TrainConfig(batch_size=section["batch_size"], max_epochs=section["max_epochs"],
                       lr=section["lr"], seed=seed,
                       patience=section.get("patience", section["max_epochs"]))


def pretrain_backbone(cfg: dict, log=_silent):
    """Pretrain on the synthetic shape-count task; returns ``(net, history)``."""
    p = cfg["pretrain"]
    side = cfg["model"]["side"]
    log(f"pretraining on {p['n_images']} shape-count images")
    x, y = data.pretext_dataset(p["n_images"], side, cfg["seed"],
                                render_side=cfg["synth"]["side"], max_shapes=p["max_shapes"])
    # no early stopping on the source task
    tc = TrainConfig(batch_size=p["batch_size"], max_epochs=p["max_epochs"], lr=p["lr"],
                     seed=cfg["seed"], patience=p["max_epochs"])
    return pretrain(x, y, p["max_shapes"] + 1, side, tc)


def train_heads(cfg: dict, tdata: TrainingData, strategy: str, pretrained=None,
                log=_silent):
    """Train D-Net, P-Net and LA-Net independently; returns ``(model, histories)``."""
    side = cfg["model"]["side"]
    nets, histories = {}, {}
    for i, head in enumerate(HEADS):
        seed = cfg["seed"] + i
        net = build_strategy(strategy, HEAD_CLASSES[head], pretrained, side=side, seed=seed)
        if strategy == "full_train":
            fit_input_standardization(net, tdata.x_fit)
        net, history = train(net, (tdata.x_fit, tdata.y_fit[head]),
                             (tdata.x_hold, tdata.y_hold[head]), train_config(cfg["train"], seed))
        for h in history:
            log(f"  {strategy} {head} epoch {h['epoch']}: loss {h['loss']:.4f} "
                f"holdout acc {h['holdout_accuracy']:.4f}")
        nets[head], histories[head] = net, history
    return DeepSeeNet(nets["drusen"], nets["pigment"], nets["late_amd"]), histories


def strategy_dir(cfg: dict, strategy: str) -> Path:
    return resolved_paths(cfg)["checkpoints"] / "strategies" / strategy


def run_train(cfg: dict, log=_silent) -> dict:
    """Train the configured strategy (or all three) and save checkpoints plus history."""
    paths = resolved_paths(cfg)
    dataset = load_dataset(cfg)
    log(f"loading {len(dataset.partition.train)} training images")
    tdata = training_data(cfg, dataset)
    chosen = cfg["model"]["strategy"]
    compare = cfg["train"]["compare_strategies"]
    strategies = list(STRATEGIES) if compare else [chosen]

    pretrained, pre_history = None, None
    if any(s != "full_train" for s in strategies):
        pretrained, pre_history = pretrain_backbone(cfg, log)

    trained, histories = {}, {}
    for s in strategies:
        log(f"training strategy {s}")
        model, hist = train_heads(cfg, tdata, s, pretrained, log)
        trained[s], histories[s] = model, hist
        model.save(paths["checkpoints"] if s == chosen else strategy_dir(cfg, s))

    summary = {
        "strategy": chosen,
        "train": {k: cfg["train"][k] for k in ("batch_size", "max_epochs", "lr", "patience",
                                               "holdout_fraction")},
        "n_fit_images": int(len(tdata.x_fit)),
        "n_holdout_images": int(len(tdata.x_hold)),
        "heads": histories[chosen],
        "pretrain": pre_history,
    }
    if compare:
        summary["strategies"] = histories
    write_json(paths["checkpoints"] / "history.json", summary)
    if compare:
        comparison = compare_strategies(cfg, dataset, trained, log)
        summary["comparison"] = comparison
    return summary


def load_model(path) -> DeepSeeNet:
    try:
        return DeepSeeNet.load(path)
    except FileNotFoundError as exc:
        raise DataError(f"model checkpoint not found: {exc.filename}") from None
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"invalid model descriptor under {path}: {exc}") from None


# --------------------------------------------------------------------------
# prediction files

def predict_test_set(model: DeepSeeNet, dataset: Dataset) -> dict:
    """Per-eye predictions for every test patient, keyed by ``(patient_id, eye)``."""
    side = model.input_shape[0]
    test = dataset.partition.test
    records = [r for p in test for r in (p.left, p.right)]
    preds = predict_eyes(model, data.load_images(records, dataset.image_root, side))
    return {(r.patient_id, r.eye.value): p for r, p in zip(records, preds)}


def format_predictions(preds: dict) -> str:
    lines = [",".join(PREDICTION_COLUMNS)]
    for (pid, eye), p in preds.items():
        vals = [*p.drusen_probs, p.pigment_prob, p.late_amd_prob]
        lines.append(",".join([pid, eye] + [repr(float(v)) for v in vals]))
    return "\n".join(lines) + "\n"


def parse_predictions(text: str) -> dict:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("predictions file is empty (missing header)")
    header = tuple(c.strip() for c in lines[0].split(","))
    if header != PREDICTION_COLUMNS:
        raise DataError(f"predictions header must be {','.join(PREDICTION_COLUMNS)}")
    out = {}
    for row, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(PREDICTION_COLUMNS):
            raise DataError(f"predictions row {row}: expected {len(PREDICTION_COLUMNS)} fields")
        pid, eye = cells[0], cells[1]
        if eye not in ("left", "right"):
            raise DataError(f"predictions row {row}: bad eye {eye!r}")
        try:
            vals = [float(c) for c in cells[2:]]
        except ValueError:
            raise DataError(f"predictions row {row}: non-numeric probability") from None
        if not all(0.0 <= v <= 1.0 for v in vals):
            raise DataError(f"predictions row {row}: probability outside [0, 1]")
        if (pid, eye) in out:
            raise DataError(f"predictions row {row}: duplicate entry for {pid} {eye}")
        out[pid, eye] = EyePrediction(tuple(vals[:3]), vals[3], vals[4])
    return out


def read_predictions(path) -> dict:
    try:
        return parse_predictions(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"predictions file not found: {path}") from None


def gold_predictions(dataset: Dataset) -> dict:
    """One-hot predictions equal to the gold labels of the test set."""
    out = {}
    for p in dataset.partition.test:
        for r in (p.left, p.right):
            d = [0.0, 0.0, 0.0]
            d[int(r.gold.drusen)] = 1.0
            out[r.patient_id, r.eye.value] = EyePrediction(
                tuple(d), float(r.gold.pigment), float(r.gold.late_amd))
    return out


# --------------------------------------------------------------------------
# evaluation

def check_score(score: int, left: EyeFeatures, right: EyeFeatures) -> int:
    """Guard the end-to-end invariant: a 0..5 score that is 5 exactly when either eye is late."""
    late = left.late_amd or right.late_amd
    if not 0 <= score <= 5 or (score == 5) != late:
        raise InvariantError(f"score {score} inconsistent with per-eye features "
                             f"{left} / {right}")
    return int(score)


@dataclass
class EvalArrays:
    """Aligned per-patient gold and predicted labels for bootstrap resampling."""

    patient_ids: list
    gold_score: np.ndarray      # (n,)
    pred_score: np.ndarray      # (n,)
    gold: dict                  # head -> (n, 2) labels, columns left/right
    pred: dict                  # head -> (n, 2) labels
    prob: dict                  # ROC target -> (n, 2) scores


def align(preds: dict, dataset: Dataset) -> EvalArrays:
    test = dataset.partition.test
    if not test:
        raise DataError("the test set is empty")
    missing = [f"{p.patient_id}:{e}" for p in test for e in ("left", "right")
               if (p.patient_id, e) not in preds]
    if missing:
        raise DataError("predictions missing for " + ", ".join(missing[:10]))
    gold_f = [[p.left.gold, p.right.gold] for p in test]
    pred_p = [[preds[p.patient_id, "left"], preds[p.patient_id, "right"]] for p in test]
    pred_f = [[a.features, b.features] for a, b in pred_p]
    scores = np.array([check_score(simplified_score(a, b), a, b) for a, b in pred_f])

    def labels(feats, head):
        return np.array([[int(getattr(f, head)) for f in pair] for pair in feats])

    return EvalArrays(
        patient_ids=[p.patient_id for p in test],
        gold_score=np.array([p.gold_score for p in test]),
        pred_score=scores,
        gold={h: labels(gold_f, h) for h in HEADS},
        pred={h: labels(pred_f, h) for h in HEADS},
        prob={
            "large_drusen": np.array([[a.drusen_probs[2], b.drusen_probs[2]] for a, b in pred_p]),
            "pigment": np.array([[a.pigment_prob, b.pigment_prob] for a, b in pred_p]),
            "late_amd": np.array([[a.late_amd_prob, b.late_amd_prob] for a, b in pred_p]),
        },
    )


ROC_TARGETS = {"large_drusen": ("drusen", int(DrusenClass.LARGE)),
               "pigment": ("pigment", 1), "late_amd": ("late_amd", 1)}


def _metric_fn(gold, pred, k, metric, weights=None):
    def fn(idx):
        cm = evaluation.confusion(gold[idx], pred[idx], k)
        if metric == "kappa":
            return evaluation.cohen_kappa(cm, weights)
        return getattr(evaluation.summary_metrics(cm), metric)
    return fn


def metric_report(gold, pred, k, cfg: dict) -> tuple[dict, evaluation.ConfusionMatrix]:
    """Point estimates with patient-level bootstrap CIs for accuracy, sensitivity,
    specificity and kappa. ``gold``/``pred`` have one row per patient."""
    e = cfg["eval"]
    idx = np.arange(len(gold))
    cm = evaluation.confusion(gold, pred, k)
    out = {"n": cm.total, "n_patients": int(len(gold))}
    redraws = 0
    for metric in METRICS:
        res = evaluation.bootstrap(idx, _metric_fn(gold, pred, k, metric, e["weights"]),
                                   e["bootstrap"], cfg["seed"], e["alpha"])
        out[metric] = {"value": res.point, "ci95": [res.lo, res.hi]}
        redraws += res.redraws
    out["agreement"] = evaluation.agreement_band(out["kappa"]["value"])
    out["bootstrap_redraws"] = redraws
    return out, cm


def _auc_fn(scores, labels):
    def fn(idx):
        return evaluation.roc_auc(scores[idx].ravel(), labels[idx].ravel()).auc
    return fn


def evaluate_predictions(preds: dict, dataset: Dataset, cfg: dict) -> dict:
    """Metrics, confusion matrices and ROC curves for a predictions table."""
    arr = align(preds, dataset)
    patient, patient_cm = metric_report(arr.gold_score, arr.pred_score, 6, cfg)
    heads, head_cms = {}, {}
    for h in HEADS:
        heads[h], head_cms[h] = metric_report(arr.gold[h], arr.pred[h], HEAD_CLASSES[h], cfg)
    rocs, aucs = {}, {}
    idx = np.arange(len(arr.patient_ids))
    for name, (head, positive) in ROC_TARGETS.items():
        labels = (arr.gold[head] == positive).astype(np.int64)
        scores = arr.prob[name]
        try:
            rocs[name] = evaluation.roc_auc(scores.ravel(), labels.ravel())
        except ValueError:
            aucs[name] = {"value": None, "ci95": None, "note": "single-class gold labels"}
            continue
        res = evaluation.bootstrap(idx, _auc_fn(scores, labels), cfg["eval"]["bootstrap"],
                                   cfg["seed"], cfg["eval"]["alpha"])
        aucs[name] = {"value": res.point, "ci95": [res.lo, res.hi],
                      "bootstrap_redraws": res.redraws}
    return {
        "metrics": {
            "n_patients": len(arr.patient_ids),
            "bootstrap": {"n_resamples": cfg["eval"]["bootstrap"], "seed": cfg["seed"],
                          "alpha": cfg["eval"]["alpha"], "percentiles": "nearest-rank",
                          "unit": "patient"},
            "kappa_weights": cfg["eval"]["weights"] or "none",
            "averaging": "macro one-vs-rest",
            "patient": patient,
            "heads": heads,
            "auc": aucs,
        },
        "confusion": {"score": patient_cm, **head_cms},
        "roc": rocs,
    }


def eval_dir(cfg: dict) -> Path:
    return resolved_paths(cfg)["out"] / "eval"


def run_eval(cfg: dict, predictions_path=None, log=_silent) -> dict:
    """Evaluate a predictions file, or predict the test set with the trained model first."""
    paths = resolved_paths(cfg)
    dataset = load_dataset(cfg)
    out = eval_dir(cfg)
    if predictions_path is not None:
        preds = read_predictions(predictions_path)
        source = str(predictions_path)
    else:
        model = load_model(paths["checkpoints"])
        log(f"predicting {2 * len(dataset.partition.test)} test images")
        preds = predict_test_set(model, dataset)
        write_text(paths["predictions"], format_predictions(preds))
        source = str(paths["predictions"])
    result = evaluate_predictions(preds, dataset, cfg)
    metrics = {**result["metrics"], "predictions": source}
    write_json(out / "metrics.json", metrics)
    for name, cm in result["confusion"].items():
        write_text(out / f"confusion_{name}.csv", cm.to_csv(CLASS_NAMES[name]))
    titles = {"large_drusen": "Large drusen", "pigment": "Pigmentary abnormalities",
              "late_amd": "Late AMD"}
    for name, curve in result["roc"].items():
        write_text(out / f"roc_{name}.csv", curve.to_csv())
    if result["roc"]:
        write_text(out / "roc.svg", plots.roc_svg({titles[k]: v for k, v in result["roc"].items()}))
    return metrics


def compare_strategies(cfg: dict, dataset: Dataset, trained: dict, log=_silent) -> dict:
    """Patient-level score metrics with bootstrap CIs for each trained strategy."""
    table = {}
    for s, model in trained.items():
        log(f"evaluating strategy {s}")
        arr = align(predict_test_set(model, dataset), dataset)
        table[s], _ = metric_report(arr.gold_score, arr.pred_score, 6, cfg)
    doc = {"strategies": table, "order": list(trained),
           "bootstrap": {"n_resamples": cfg["eval"]["bootstrap"], "seed": cfg["seed"]}}
    root = resolved_paths(cfg)["out"]
    write_json(root / "strategies.json", doc)
    write_text(root / "strategies.md", strategies_table(table))
    return doc


def _cell(entry) -> str:
    v = entry["value"]
    if v is None:
        return "n/a"
    ci = entry.get("ci95")
    if not ci or ci[0] is None:
        return f"{v:.3f}"
    return f"{v:.3f} ({ci[0]:.3f}-{ci[1]:.3f})"


_ROW_TITLES = {"accuracy": "Overall accuracy", "sensitivity": "Sensitivity",
               "specificity": "Specificity", "kappa": "Kappa"}


def strategies_table(table: dict) -> str:
    """Three-way comparison of training strategies on patient-level scores."""
    cols = [s for s in ("frozen_extractor", "fine_tune", "full_train") if s in table]
    lines = ["| | " + " | ".join(STRATEGY_TITLES[s] for s in cols) + " |",
             "|---|" + "---|" * len(cols),
             "| | " + " | ".join("(95% CI)" for _ in cols) + " |"]
    for m in METRICS:
        lines.append(f"| {_ROW_TITLES[m]} | " + " | ".join(_cell(table[s][m]) for s in cols) + " |")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# grading

def grade_pair(model: DeepSeeNet, left_path, right_path) -> dict:
    side = model.input_shape[0]
    imgs = []
    for path in (left_path, right_path):
        if not Path(path).exists():
            raise DataError(f"image not found: {path}")
        imgs.append(imageproc.preprocess(imageproc.read_image(path), side).astype(np.float32))
    left, right = predict_eyes(model, np.stack(imgs))
    score = check_score(simplified_score(left.features, right.features),
                        left.features, right.features)
    out = {"score": score, "left": left.to_dict(), "right": right.to_dict()}
    if score <= 4:
        out["five_year_risk"] = five_year_risk(score)
    return out


# --------------------------------------------------------------------------
# interpretation

def _select_test_records(dataset: Dataset):
    return [r for p in dataset.partition.test for r in (p.left, p.right)]


def saliency_targets(cfg: dict, dataset: Dataset, requested=None):
    """``(name, record or path)`` pairs; default is the first test eyes positive for any head."""
    requested = list(requested if requested is not None else cfg["interpret"]["images"])
    test = _select_test_records(dataset)
    if requested:
        by_key = {f"{r.patient_id}:{r.eye.value}": r for r in test}
        out = []
        for item in requested:
            if item in by_key:
                out.append((item.replace(":", "_"), by_key[item]))
            elif Path(item).exists():
                out.append((Path(item).stem, Path(item)))
            else:
                raise DataError(f"saliency image {item!r} is neither PATIENT:eye in the "
                                "test set nor an existing file")
        return out
    n = cfg["interpret"]["n_saliency"]
    positive = [r for r in test if r.gold.drusen == DrusenClass.LARGE or r.gold.pigment
                or r.gold.late_amd]
    return [(f"{r.patient_id}_{r.eye.value}", r) for r in (positive or test)[:n]]


def run_interpret(cfg: dict, requested=None, log=_silent) -> dict:
    paths = resolved_paths(cfg)
    dataset = load_dataset(cfg)
    model = load_model(paths["checkpoints"])
    side = model.input_shape[0]
    out = paths["out"] / "interpret"
    heads = cfg["interpret"]["heads"]
    summary = {"saliency": [], "tsne": {}}

    for name, target in saliency_targets(cfg, dataset, requested):
        if isinstance(target, Path):
            raw = imageproc.read_image(target)
        else:
            raw = imageproc.read_image(dataset.image_root / target.path
                                       if not Path(target.path).is_absolute() else target.path)
        img = imageproc.preprocess(raw, side).astype(np.float32)
        for head in heads:
            net = model.head(head)
            cls = int(np.argmax(net.predict_proba(img[None])[0]))
            smap = saliency(net, img, cls)
            stem = f"saliency_{name}_{head}"
            write_bytes(out / f"{stem}.pgm", imageproc.encode_pgm(smap))
            write_text(out / f"{stem}.svg", plots.saliency_svg(
                img, smap, f"{name} {head}: class {CLASS_NAMES[head][cls]}"))
            summary["saliency"].append({"image": name, "head": head, "class": cls,
                                        "pgm": f"{stem}.pgm", "svg": f"{stem}.svg"})

    records = _select_test_records(dataset)
    if cfg["interpret"]["tsne_split"] == "all":
        records = records + list(dataset.partition.train)
    cap = cfg["interpret"]["tsne_max_points"]
    if len(records) > cap:
        rng = np.random.default_rng([cfg["seed"], 3])
        keep = np.sort(rng.choice(len(records), size=cap, replace=False))
        records = [records[i] for i in keep]
    if len(records) >= 4:
        images = data.load_images(records, dataset.image_root, side)
        ids = [f"{r.patient_id}:{r.eye.value}:{r.visit}" for r in records]
        tcfg = TsneConfig(perplexity=cfg["interpret"]["perplexity"],
                          iterations=cfg["interpret"]["iterations"], seed=cfg["seed"])
        for head in heads:
            log(f"t-SNE of {len(records)} {head} embeddings")
            vectors = embed(model, images, head)
            classes = head_labels(records, head)
            res = tsne(vectors, tcfg)
            rows = ["id,x,y,class"] + [f"{i},{x!r},{y!r},{c}" for i, (x, y), c in
                                        zip(ids, res.embedding.tolist(), classes)]
            write_text(out / f"tsne_{head}.csv", "\n".join(rows) + "\n")
            write_text(out / f"tsne_{head}.svg", plots.scatter_svg(
                res.embedding, classes, CLASS_NAMES[head], f"t-SNE of {head} embeddings"))
            summary["tsne"][head] = {
                "n_points": len(records), "split": cfg["interpret"]["tsne_split"],
                "perplexity": res.perplexity, "initial_kl": res.initial_kl,
                "final_kl": res.final_kl,
                "centroid_purity": (nearest_centroid_purity(res.embedding, classes)
                                    if len(set(classes.tolist())) > 1 else None),
            }
    write_json(out / "interpret.json", summary)
    return summary


# --------------------------------------------------------------------------
# report

def _pct_table(title: str, rows: list, train_counts: dict, test_counts: dict) -> list[str]:
    nt, ns = sum(train_counts.values()), sum(test_counts.values())

    def cell(c, n):
        return f"{c} ({100.0 * c / n:.1f})" if n else str(c)

    lines = [f"| {title} | Training | Testing |", "|---|---:|---:|"]
    for key, label in rows:
        lines.append(f"| {label} | {cell(train_counts.get(key, 0), nt)} | "
                     f"{cell(test_counts.get(key, 0), ns)} |")
    lines.append(f"| Total | {cell(nt, nt)} | {cell(ns, ns)} |")
    return lines


def dataset_tables(dataset: Dataset) -> list[str]:
    train_ids = sorted({r.patient_id for r in dataset.partition.train})
    baseline = {}
    for r in data.select_images(dataset.records):
        if r.visit == 0:
            baseline[r.patient_id, r.eye] = r.gold
    train_scores = {}
    for pid in train_ids:
        if (pid, Eye.LEFT) in baseline and (pid, Eye.RIGHT) in baseline:
            s = simplified_score(baseline[pid, Eye.LEFT], baseline[pid, Eye.RIGHT])
            train_scores[s] = train_scores.get(s, 0) + 1
    test_scores = data.score_distribution(p.gold_score for p in dataset.partition.test)
    lines = ["### Participants by severity score at baseline", ""]
    lines += _pct_table("Score", [(s, str(s)) for s in range(6)], train_scores, test_scores)

    test_imgs = _select_test_records(dataset)
    lines += ["", "### Images by risk factor (training: all visits; testing: baseline)", ""]
    for head, names in (("drusen", CLASS_NAMES["drusen"]), ("pigment", ("no", "yes")),
                        ("late_amd", ("no", "yes"))):
        tr = np.bincount(head_labels(dataset.partition.train, head), minlength=len(names))
        te = np.bincount(head_labels(test_imgs, head), minlength=len(names))
        lines += _pct_table(head, list(enumerate(names)), dict(enumerate(tr.tolist())),
                            dict(enumerate(te.tolist())))
        lines.append("")
    return lines


def run_report(cfg: dict) -> Path:
    """Markdown summary mirroring the dataset, performance and strategy tables."""
    paths = resolved_paths(cfg)
    dataset = load_dataset(cfg)
    lines = ["# Run report", "", f"Seed {cfg['seed']}, strategy {cfg['model']['strategy']}, "
             f"model input {cfg['model']['side']}x{cfg['model']['side']}.", "",
             "## Dataset", ""]
    lines += dataset_tables(dataset)
    metrics_path = eval_dir(cfg) / "metrics.json"
    if metrics_path.exists():
        m = read_json(metrics_path)
        lines += ["## Patient-level severity score", "",
                  "| | DeepSeeNet (95% CI) |", "|---|---|"]
        for k in METRICS:
            lines.append(f"| {_ROW_TITLES[k]} | {_cell(m['patient'][k])} |")
        lines += ["", f"Agreement: {m['patient']['agreement']}.", "",
                  "## Risk factors", "",
                  "| | D-Net | P-Net | LA-Net |", "|---|---|---|---|"]
        for k in METRICS:
            lines.append(f"| {_ROW_TITLES[k]} | "
                         + " | ".join(_cell(m["heads"][h][k]) for h in HEADS) + " |")
        lines += ["", "| AUC | Large drusen | Pigment | Late AMD |", "|---|---|---|---|",
                  "| | " + " | ".join(_cell(m["auc"][t]) for t in ROC_TARGETS) + " |", ""]
        lines += ["Confusion matrices: `eval/confusion_*.csv`; ROC curves: `eval/roc.svg`.", ""]
    strat = paths["out"] / "strategies.json"
    if strat.exists():
        lines += ["## Training strategies", "", strategies_table(read_json(strat)["strategies"])]
    interp = paths["out"] / "interpret" / "interpret.json"
    if interp.exists():
        doc = read_json(interp)
        lines += ["## Interpretation", ""]
        for head, t in doc["tsne"].items():
            purity = "n/a" if t["centroid_purity"] is None else f"{t['centroid_purity']:.3f}"
            lines.append(f"- t-SNE {head}: {t['n_points']} points, KL {t['initial_kl']:.3f} -> "
                         f"{t['final_kl']:.3f}, centroid purity {purity}")
        lines.append(f"- {len(doc['saliency'])} saliency maps in `interpret/`")
        lines.append("")
    return write_text(paths["out"] / "report.md", "\n".join(lines))
