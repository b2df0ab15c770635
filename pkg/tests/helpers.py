"""Hand-wired models whose outputs are known in closed form."""

import numpy as np

from deepseenet.models import DeepSeeNet
from deepseenet.nnet.layers import Dense, GlobalAvgPool, ReLU
from deepseenet.nnet.network import Network


def _rule_net(side, channel, classes, gain=40.0):
    # GAP gives the three channel means; units 0..2 of the 128-wide layer copy them
    net = Network([GlobalAvgPool(), Dense(128), ReLU(), Dense(classes)], (side, side, 3),
                  classes, dtype=np.float64).initialize(0)
    w1 = np.zeros((3, 128))
    w1[np.arange(3), np.arange(3)] = 1.0
    net.layers[1].params["W"] = w1
    net.layers[1].params["b"] = np.zeros(128)
    w2 = np.zeros((128, classes))
    b2 = np.zeros(classes)
    w2[channel, -1] = gain
    b2[-1] = -0.5 * gain
    net.layers[3].params["W"] = w2
    net.layers[3].params["b"] = b2
    return net


def rule_model(side=8) -> DeepSeeNet:
    """Late AMD iff mean red >= 0.5, pigment iff mean green >= 0.5, large drusen iff mean
    blue >= 0.5 (otherwise the two lower drusen logits tie at zero)."""
    return DeepSeeNet(_rule_net(side, 2, 3), _rule_net(side, 1, 2), _rule_net(side, 0, 2))


def flat_image(side=8, rgb=(0.0, 0.0, 0.0)):
    return np.broadcast_to(np.asarray(rgb, dtype=np.float64), (side, side, 3)).copy()


def small_config(out, **sections):
    """A cohort small enough to run synth, train, eval and interpret in a few seconds."""
    cfg = {
        "out": str(out),
        "synth": {"n_patients": 40, "n_test": 10, "side": 64, "visits": 2},
        "model": {"side": 32},
        "pretrain": {"n_images": 200, "max_epochs": 1},
        "eval": {"bootstrap": 100},
        "interpret": {"iterations": 100, "n_saliency": 2},
    }
    for name, values in sections.items():
        cfg.setdefault(name, {}).update(values) if isinstance(values, dict) else cfg.update(
            {name: values})
    return cfg
