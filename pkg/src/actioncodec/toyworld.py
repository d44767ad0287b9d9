"""Exhaustively enumerable joint distributions over (V, L, A, C) for exact checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ToyWorld", "build_toy_world"]

_CARD_MIN, _CARD_MAX = 2, 16
_MAX_TABLE = 10**6


@dataclass
class ToyWorld:
    """Joint probability table over visual context V, instruction L, action A,
    and a token tuple C = (c_1, ..., c_m).

    Axis order of ``joint`` is (V, L, A, c_1, ..., c_m).
    """

    joint: np.ndarray
    n_visual: int
    n_language: int
    n_action: int
    token_cards: tuple[int, ...]

    def __post_init__(self) -> None:
        expected = (self.n_visual, self.n_language, self.n_action, *self.token_cards)
        if self.joint.shape != expected:
            raise ValueError(f"joint shape {self.joint.shape} != {expected}")
        if np.any(self.joint < 0):
            raise ValueError("joint table has negative entries")
        if abs(float(self.joint.sum()) - 1.0) > 1e-12:
            raise ValueError("joint table must sum to 1 within 1e-12")

    @property
    def n_tokens(self) -> int:
        return len(self.token_cards)

    @property
    def token_axes(self) -> tuple[int, ...]:
        return tuple(range(3, 3 + self.n_tokens))

    def marginal(self, axes: tuple[int, ...]) -> np.ndarray:
        """Marginal over the given axes, obtained by summing out the rest."""
        keep = tuple(sorted(axes))
        drop = tuple(i for i in range(self.joint.ndim) if i not in keep)
        return self.joint.sum(axis=drop) if drop else self.joint.copy()

    def random_model_table(self, seed: int, concentration: float = 1.0) -> np.ndarray:
        """A random conditional table P(C | V, L), Dirichlet per (v, l) cell."""
        rng = np.random.default_rng(seed)
        c_size = int(np.prod(self.token_cards))
        flat = rng.gamma(concentration, size=(self.n_visual, self.n_language, c_size))
        flat /= flat.sum(axis=-1, keepdims=True)
        return flat.reshape((self.n_visual, self.n_language, *self.token_cards))


def _validate_cards(cards: dict) -> tuple[int, int, int, tuple[int, ...]]:
    nv, nl, na = int(cards["V"]), int(cards["L"]), int(cards["A"])
    token_cards = cards["C"]
    if isinstance(token_cards, int):
        token_cards = (token_cards,)
    token_cards = tuple(int(c) for c in token_cards)
    for value in (nv, nl, na, *token_cards):
        if not (_CARD_MIN <= value <= _CARD_MAX):
            raise ValueError(f"cardinality {value} outside [{_CARD_MIN}, {_CARD_MAX}]")
    total = nv * nl * na * int(np.prod(token_cards))
    if total > _MAX_TABLE:
        raise ValueError(f"joint table would have {total} > {_MAX_TABLE} cells")
    return nv, nl, na, token_cards


def build_toy_world(
    cardinalities: dict,
    seed: int | None = None,
    preset: str | None = None,
) -> ToyWorld:
    """Build a world from cardinalities {"V": .., "L": .., "A": .., "C": .. or (..,)}.

    preset "deterministic": A = g(V, L) and C = f(A), both deterministic maps.
    preset "independent": C independent of (V, L, A).
    Otherwise a random Dirichlet(1) joint table drawn from ``seed``.
    """
    nv, nl, na, token_cards = _validate_cards(cardinalities)
    shape = (nv, nl, na, *token_cards)

    if preset == "deterministic":
        joint = np.zeros(shape)
        p_vl = 1.0 / (nv * nl)
        for v in range(nv):
            for l in range(nl):
                a = (v * nl + l) % na
                tokens = tuple((a + k) % card for k, card in enumerate(token_cards))
                joint[(v, l, a, *tokens)] = p_vl
        return ToyWorld(joint, nv, nl, na, token_cards)

    if preset == "independent":
        rng = np.random.default_rng(0 if seed is None else seed)
        p_vla = rng.dirichlet(np.ones(nv * nl * na)).reshape(nv, nl, na)
        p_c = rng.dirichlet(np.ones(int(np.prod(token_cards)))).reshape(token_cards)
        joint = p_vla.reshape(nv, nl, na, *([1] * len(token_cards))) * p_c[None, None, None]
        return ToyWorld(joint, nv, nl, na, token_cards)

    if preset is not None:
        raise ValueError(f"unknown preset {preset!r}")
    if seed is None:
        raise ValueError("need a seed when no preset is given")
    rng = np.random.default_rng(seed)
    flat = rng.dirichlet(np.ones(int(np.prod(shape))))
    return ToyWorld(flat.reshape(shape), nv, nl, na, token_cards)
