"""Weight-provenance strategies: fine-tuning, frozen feature extractor, full training."""

from __future__ import annotations

import enum

import numpy as np

from .layers import Dense, ReLU
from .network import Network, backbone_length, default_network, fit_input_standardization
from .training import TrainConfig, train


class Strategy(str, enum.Enum):
    FINE_TUNE = "fine_tune"
    FROZEN_EXTRACTOR = "frozen_extractor"
    FULL_TRAIN = "full_train"


class MissingPretrainedError(ValueError):
    pass


def _init_from(net: Network, start: int, seed: int) -> Network:
    """Initialise layers ``[start:]`` from ``seed``, leaving earlier layers as they are."""
    rng = np.random.default_rng(seed)
    shapes = net.layer_shapes()
    for i in range(start, len(net.layers)):
        net.layers[i].init_params(shapes[i], rng)
    return net.astype(net.dtype)


def build_strategy(strategy, num_classes: int, pretrained: Network | None = None,
                   side: int = 224, seed: int = 0, dtype=np.float32,
                   head_units=(256, 128)) -> Network:
    """Build a classifier under one of the three training strategies.

    - ``fine_tune``: copy of ``pretrained`` with every layer trainable; the
      output layer is re-initialised only if its width differs from
      ``num_classes``.
    - ``frozen_extractor``: the pretrained convolutional backbone, frozen,
      under a new trainable head Dense(256)-ReLU-Dense(128)-ReLU-Dense(classes).
    - ``full_train``: the default architecture from random initialisation.
    """
    strategy = Strategy(strategy)
    if strategy is Strategy.FULL_TRAIN:
        # input statistics still need fitting to the training images
        return default_network(num_classes, side, dtype=dtype).initialize(seed)
    if pretrained is None:
        raise MissingPretrainedError(f"strategy {strategy.value!r} needs pretrained weights")

    src = pretrained.copy()
    if strategy is Strategy.FINE_TUNE:
        layers = src.layers
        replace = layers[-1].units != num_classes
        if replace:
            layers[-1] = Dense(num_classes)
        net = Network(layers, src.input_shape, num_classes, dtype=dtype)
        net.set_trainable([True] * len(layers))
        net.astype(dtype)
        return _init_from(net, len(layers) - 1, seed) if replace else net

    cut = backbone_length(src)
    head = []
    for units in head_units:
        head += [Dense(units), ReLU()]
    head.append(Dense(num_classes))
    net = Network(src.layers[:cut] + head, src.input_shape, num_classes, dtype=dtype)
    net.set_trainable([False] * cut + [True] * len(head))
    return _init_from(net, cut, seed)


def pretrain(images, labels, num_classes: int, side: int, config: TrainConfig | None = None,
             holdout_fraction: float = 0.1, dtype=np.float32):
    """Fully train the default architecture on a source task; returns ``(net, history)``."""
    config = config or TrainConfig(lr=1e-3, max_epochs=5, patience=5)
    n_hold = max(1, int(round(holdout_fraction * len(labels))))
    net = default_network(num_classes, side, dtype=dtype).initialize(config.seed)
    fit_input_standardization(net, images[n_hold:])
    return train(net, (images[n_hold:], labels[n_hold:]), (images[:n_hold], labels[:n_hold]),
                 config)
