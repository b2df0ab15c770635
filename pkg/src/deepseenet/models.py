"""DeepSeeNet: three per-eye risk-factor classifiers fused into a patient score."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nnet import checkpoint
from .nnet.layers import Dense, ReLU
from .nnet.network import Network
from .scale import DrusenClass, EyeFeatures, simplified_score

HEADS = ("drusen", "pigment", "late_amd")
HEAD_CLASSES = {"drusen": 3, "pigment": 2, "late_amd": 2}
HEAD_ALIASES = {"d": "drusen", "p": "pigment", "la": "late_amd", "drusen": "drusen",
                "pigment": "pigment", "late_amd": "late_amd"}
DESCRIPTOR = "deepseenet.json"
EMBEDDING_WIDTH = 128


@dataclass(frozen=True)
class EyePrediction:
    drusen_probs: tuple
    pigment_prob: float
    late_amd_prob: float

    @property
    def features(self) -> EyeFeatures:
        return decode_features(self.drusen_probs, self.pigment_prob, self.late_amd_prob)

    def to_dict(self):
        f = self.features
        return {
            "drusen_probs": list(self.drusen_probs),
            "pigment_prob": self.pigment_prob,
            "late_amd_prob": self.late_amd_prob,
            "features": {"drusen": f.drusen.name.lower(), "pigment": f.pigment,
                         "late_amd": f.late_amd},
        }


def decode_features(drusen_probs, pigment_prob, late_amd_prob, threshold=0.5) -> EyeFeatures:
    """Argmax for drusen (ties go to the lower class), ``>= threshold`` for the flags."""
    # np.argmax returns the first maximal index
    drusen = DrusenClass(int(np.argmax(np.asarray(drusen_probs))))
    return EyeFeatures(drusen, pigment_prob >= threshold, late_amd_prob >= threshold)


class DeepSeeNet:
    """D-Net (3 drusen classes), P-Net and LA-Net (presence/absence)."""

    def __init__(self, d_net: Network, p_net: Network, la_net: Network):
        nets = {"drusen": d_net, "pigment": p_net, "late_amd": la_net}
        shapes = {net.input_shape for net in nets.values()}
        if len(shapes) != 1:
            raise ValueError(f"heads disagree on input resolution: {sorted(shapes)}")
        for name, net in nets.items():
            if net.num_classes != HEAD_CLASSES[name]:
                raise ValueError(f"{name} head has {net.num_classes} outputs, "
                                 f"expected {HEAD_CLASSES[name]}")
        self.heads = nets

    @property
    def d_net(self):
        return self.heads["drusen"]

    @property
    def p_net(self):
        return self.heads["pigment"]

    @property
    def la_net(self):
        return self.heads["late_amd"]

    @property
    def input_shape(self):
        return self.d_net.input_shape

    def head(self, name) -> Network:
        try:
            return self.heads[HEAD_ALIASES[name.lower()]]
        except KeyError:
            raise ValueError(f"unknown head {name!r}") from None

    # persistence -------------------------------------------------------------

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {}
        for name, net in self.heads.items():
            files[name] = f"{name}_net.dsn"
            checkpoint.save(net, directory / files[name])
        desc = {"schema_version": 1, "input_shape": list(self.input_shape), "heads": files}
        path = directory / DESCRIPTOR
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path, dtype=np.float32) -> "DeepSeeNet":
        """Load from a descriptor file or the directory holding it."""
        path = Path(path)
        if path.is_dir():
            path = path / DESCRIPTOR
        desc = json.loads(path.read_text())
        nets = {name: checkpoint.load(path.parent / desc["heads"][name], dtype=dtype)
                for name in HEADS}
        return cls(nets["drusen"], nets["pigment"], nets["late_amd"])


def _check_images(model: DeepSeeNet, images: np.ndarray):
    if images.shape[1:] != model.input_shape:
        raise ValueError(f"image shape {images.shape[1:]} does not match model input "
                         f"{model.input_shape}; preprocess to the model resolution first")


def head_probabilities(model: DeepSeeNet, images: np.ndarray, batch_size: int = 64) -> dict:
    images = np.asarray(images)
    _check_images(model, images)
    return {name: net.predict_proba(images, batch_size) for name, net in model.heads.items()}


def predict_eyes(model: DeepSeeNet, images: np.ndarray, batch_size: int = 64) -> list[EyePrediction]:
    probs = head_probabilities(model, images, batch_size)
    return [
        EyePrediction(tuple(float(v) for v in probs["drusen"][i]),
                      float(probs["pigment"][i, 1]), float(probs["late_amd"][i, 1]))
        for i in range(len(images))
    ]


def predict_eye(model: DeepSeeNet, image: np.ndarray) -> EyePrediction:
    return predict_eyes(model, np.asarray(image)[None])[0]


def predict_patient(model: DeepSeeNet, left_img: np.ndarray, right_img: np.ndarray):
    """Score a patient from both eyes; returns ``(score, left, right)``."""
    if left_img is None or right_img is None:
        raise ValueError("both eye images are required")
    left, right = predict_eyes(model, np.stack([left_img, right_img]))
    return simplified_score(left.features, right.features), left, right


def penultimate_index(net: Network) -> int:
    """Index of the layer whose output is the post-ReLU penultimate dense activation."""
    dense = [i for i, layer in enumerate(net.layers) if isinstance(layer, Dense)]
    if len(dense) < 2:
        raise ValueError("network has no penultimate dense layer")
    i = dense[-2]
    if i + 1 < len(net.layers) and isinstance(net.layers[i + 1], ReLU):
        i += 1
    return i


def embed(model: DeepSeeNet, images: np.ndarray, head: str = "drusen",
          batch_size: int = 64) -> np.ndarray:
    """Penultimate dense activations (post-ReLU) of one head; (N, 128) for a batch,
    (128,) for a single image."""
    net = model.head(head)
    images = np.asarray(images)
    single = images.ndim == 3
    if single:
        images = images[None]
    _check_images(model, images)
    cut = penultimate_index(net)
    width = net.layer_shapes()[cut + 1][0]
    if width != EMBEDDING_WIDTH:
        raise ValueError(f"penultimate width is {width}, expected {EMBEDDING_WIDTH}")
    out = np.concatenate([net.forward(images[i:i + batch_size], upto=cut + 1)[0]
                          for i in range(0, len(images), batch_size)])
    return out[0] if single else out


def patient_scores(preds_left, preds_right) -> np.ndarray:
    return np.array([simplified_score(a.features, b.features)
                     for a, b in zip(preds_left, preds_right, strict=True)])

