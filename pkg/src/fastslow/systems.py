"""Built-in coefficient sets.

``ou-sin`` is the benchmark: an Ornstein-Uhlenbeck fast block whose frozen
law is ``N(x, 1)`` and a bounded slow drift ``sin(y)``, so the averaged drift
is ``exp(-1/2) sin(x)`` in closed form.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .sde import HypothesisSet

__all__ = ["SYSTEMS", "get_system", "closed_form_drift", "register_system", "ou_sin"]

SQRT2 = math.sqrt(2.0)
EXP_MHALF = math.exp(-0.5)


def _ones_like_mat(x, rows, cols, value):
    out = np.empty(np.shape(x)[:-1] + (rows, cols))
    out[...] = value
    return out


def ou_sin() -> HypothesisSet:
    def b1(t, x, y):
        return np.sin(y)

    def sigma1(t, x):
        return (0.5 * (1.0 + 0.1 * np.cos(x)))[..., None]

    def b2(x, y):
        return -(y - x)

    def sigma2(x, y):
        return _ones_like_mat(y, 1, 1, SQRT2)

    return HypothesisSet(
        b1=b1,
        sigma1=sigma1,
        b2=b2,
        sigma2=sigma2,
        dims=(1, 1, 1, 1),
        beta_holder=1.0,
        gamma_holder=1.0,
        beta1=2.0,
        beta2=1.0,
        b1_sup_bound=1.0,
        lipschitz_constants={"L1": 0.05, "L2": 0.05, "L3": 0.0, "L4": 0.55, "L5": 1.0, "L6": 1.0, "L7": 1.0 + SQRT2},
        name="ou-sin",
    )


def ou_sin_ysigma() -> HypothesisSet:
    """Negative control: the fBm coefficient also reads the fast variable."""
    base = ou_sin()

    def sigma1_y(t, x, y):
        return (0.5 * (1.0 + 0.5 * np.sin(y)))[..., None]

    def sigma1_avg(t, x):
        return (0.5 * (1.0 + 0.5 * EXP_MHALF * np.sin(x)))[..., None]

    from dataclasses import replace

    return replace(base, sigma1=sigma1_avg, sigma1_y=sigma1_y, name="ou-sin-ysigma")


def y_free() -> HypothesisSet:
    """Slow drift ignores the fast variable; averaging is the identity."""
    base = ou_sin()

    def b1(t, x, y):
        return -0.5 * np.sin(x) + 0.0 * y[..., :1]

    from dataclasses import replace

    return replace(base, b1=b1, name="y-free")


def trivial() -> HypothesisSet:
    def zero_vec(*args):
        return np.zeros_like(args[-1])

    def zero_mat(*args):
        return np.zeros(np.shape(args[-1]) + (1,))

    return HypothesisSet(
        b1=lambda t, x, y: np.zeros_like(x),
        sigma1=lambda t, x: zero_mat(x),
        b2=lambda x, y: np.zeros_like(y),
        sigma2=lambda x, y: zero_mat(y),
        dims=(1, 1, 1, 1),
        beta1=1.0,
        beta2=1.0,
        b1_sup_bound=1.0,
        name="trivial",
    )


def _ou_sin_bar(t, x):
    return EXP_MHALF * np.sin(x)


def _y_free_bar(t, x):
    return -0.5 * np.sin(x)


SYSTEMS: dict[str, Callable[[], HypothesisSet]] = {
    "ou-sin": ou_sin,
    "ou-sin-ysigma": ou_sin_ysigma,
    "y-free": y_free,
    "trivial": trivial,
}

_CLOSED_FORMS: dict[str, Callable] = {
    "ou-sin": _ou_sin_bar,
    "ou-sin-ysigma": _ou_sin_bar,
    "y-free": _y_free_bar,
    "trivial": lambda t, x: np.zeros_like(x),
}


def register_system(name: str, factory: Callable[[], HypothesisSet], bbar1: Callable | None = None) -> None:
    """Plugin hook: make a custom coefficient set available by name."""
    SYSTEMS[name] = factory
    if bbar1 is not None:
        _CLOSED_FORMS[name] = bbar1


def get_system(name: str) -> HypothesisSet:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {sorted(SYSTEMS)}") from None


def closed_form_drift(name: str) -> Callable | None:
    return _CLOSED_FORMS.get(name)
