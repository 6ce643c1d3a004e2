"""Per-option attention masks over observation features, plus the mask losses.

Each option owns a mask vector with one weight per walkable state. Learnable
banks store logits squashed through a logistic, so mask values live in (0, 1);
fixed banks (identity, hardcoded room masks) hold the mask directly and have
no gradient path. Masking an observation is an elementwise product.

Two penalties shape learnable masks: a pairwise cosine-similarity term that
pushes different options to attend to different features, and a smoothness
term that charges mask changes between successive states of a trajectory.
Both return their gradient with respect to the mask values; ``logit_grads``
chains such gradients through the logistic.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, UsageError
from .fourrooms import GridLayout
from .network import sigmoid


class AttentionBank:
    """Mask vectors for every option, either learnable (logits) or fixed."""

    def __init__(self, *, logits: np.ndarray | None = None, fixed: np.ndarray | None = None):
        if (logits is None) == (fixed is None):
            raise UsageError("provide exactly one of logits or fixed")
        if logits is not None:
            logits = np.asarray(logits, dtype=float)
            if logits.ndim != 2:
                raise ConfigurationError(f"logits must be 2-d, got shape {logits.shape}")
            self.logits = logits
            self.fixed = None
        else:
            fixed = np.asarray(fixed, dtype=float)
            if fixed.ndim != 2:
                raise ConfigurationError(f"fixed mask must be 2-d, got shape {fixed.shape}")
            if fixed.min() < 0.0 or fixed.max() > 1.0:
                raise ConfigurationError("fixed mask values must lie in [0, 1]")
            if not (fixed != 0).any(axis=1).all():
                raise ConfigurationError("fixed mask has an all-zero option row")
            self.logits = None
            self.fixed = fixed

    @property
    def learnable(self) -> bool:
        return self.logits is not None

    @property
    def shape(self) -> tuple[int, int]:
        arr = self.logits if self.learnable else self.fixed
        return arr.shape

    @property
    def num_options(self) -> int:
        return self.shape[0]

    def h(self) -> np.ndarray:
        """Current mask matrix, shape (options, states)."""
        if self.learnable:
            return sigmoid(self.logits)
        return self.fixed

    def copy(self) -> "AttentionBank":
        if self.learnable:
            return AttentionBank(logits=self.logits.copy())
        return AttentionBank(fixed=self.fixed.copy())


def learnable_bank(
    rng: np.random.Generator, num_options: int, num_states: int, scale: float = 0.1
) -> AttentionBank:
    """Random logits near zero, so masks start near one half everywhere."""
    return AttentionBank(logits=rng.uniform(-scale, scale, size=(num_options, num_states)))


def identity_bank(num_options: int, num_states: int) -> AttentionBank:
    """Fixed all-ones masks: masked observations equal the raw observations."""
    return AttentionBank(fixed=np.ones((num_options, num_states)))


def _hallway_rooms(layout: GridLayout, hall) -> set:
    r, c = hall
    out = set()
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nbr = (r + dr, c + dc)
        if layout.is_walkable(nbr):
            room_id = layout.room_of(nbr)
            if room_id is not None:
                out.add(room_id)
    return out


def room_bank(
    layout: GridLayout, num_options: int | None = None, assignment: list | None = None
) -> AttentionBank:
    """Fixed masks confining each option to assigned rooms.

    ``assignment`` gives each option an iterable of room ids; the default is
    one room per option (requiring as many options as rooms). An option's
    mask is 1 on its rooms' cells and on every hallway adjacent to them, 0
    elsewhere, so a hallway between two rooms belongs to both options.
    """
    n_rooms = len(layout.rooms)
    if assignment is None:
        n = n_rooms if num_options is None else num_options
        if n != n_rooms:
            raise ConfigurationError(
                f"default room masks need one option per room: {n_rooms} rooms, "
                f"{n} options; pass an explicit assignment otherwise"
            )
        assignment = [[i] for i in range(n)]
    if num_options is not None and len(assignment) != num_options:
        raise ConfigurationError(
            f"assignment covers {len(assignment)} options, expected {num_options}"
        )

    hall_rooms = {hall: _hallway_rooms(layout, hall) for hall in layout.hallways}
    mask = np.zeros((len(assignment), layout.n_states))
    for i, rooms in enumerate(assignment):
        rooms = list(rooms)
        if not rooms:
            raise ConfigurationError(f"option {i} has no assigned rooms")
        for room_id in rooms:
            if not 0 <= room_id < n_rooms:
                raise ConfigurationError(
                    f"option {i} assigned unknown room {room_id}; layout has {n_rooms}"
                )
            for cell in layout.rooms[room_id]:
                mask[i, layout.cell_index(cell)] = 1.0
            for hall, adjacent in hall_rooms.items():
                if room_id in adjacent:
                    mask[i, layout.cell_index(hall)] = 1.0
    return AttentionBank(fixed=mask)


def masked(h: np.ndarray, obs: np.ndarray, option: int) -> np.ndarray:
    """Observation as seen through one option's mask."""
    obs = np.asarray(obs)
    if obs.shape != h[option].shape:
        raise UsageError(
            f"observation shape {obs.shape} does not match mask shape {h[option].shape}"
        )
    return h[option] * obs


def cosine_overlap(h: np.ndarray, eps: float = 1e-8) -> tuple[float, np.ndarray]:
    """Sum of pairwise cosine similarities between mask rows, with gradient.

    Returns ``(value, dvalue/dh)``. The epsilon guards the denominator; rows
    from a logistic are strictly positive so norms never vanish in practice.
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    if n < 2:
        return 0.0, np.zeros_like(h)
    norms = np.linalg.norm(h, axis=1)
    dots = h @ h.T
    denom = np.outer(norms, norms) + eps
    cos = dots / denom
    off = ~np.eye(n, dtype=bool)
    value = float(cos[off].sum() / 2.0)

    inv = np.where(off, 1.0 / denom, 0.0)
    safe_norms = np.maximum(norms, 1e-300)
    # d cos_ij / dh_i = h_j / denom_ij - dot_ij * norm_j * h_i / (norm_i * denom_ij^2)
    coef = np.where(off, dots * norms[None, :] / (safe_norms[:, None] * denom**2), 0.0)
    dh = inv @ h - coef.sum(axis=1)[:, None] * h
    return value, dh


def smoothness(h: np.ndarray, segments: list) -> tuple[float, np.ndarray]:
    """Total absolute mask change along trajectories, with gradient.

    ``segments`` is a list of integer arrays of visited state indices; each
    consecutive pair contributes ``|h[:, s_next] - h[:, s]|`` summed over
    options. The gradient uses the sign convention ``sign(0) = 0``.
    """
    h = np.asarray(h, dtype=float)
    value = 0.0
    dh_t = np.zeros((h.shape[1], h.shape[0]))
    for seg in segments:
        seg = np.asarray(seg, dtype=int)
        if seg.size < 2:
            continue
        diff = h[:, seg[1:]] - h[:, seg[:-1]]
        value += float(np.abs(diff).sum())
        sign = np.sign(diff).T
        np.add.at(dh_t, seg[1:], sign)
        np.subtract.at(dh_t, seg[:-1], sign)
    return value, dh_t.T


def logit_grads(bank: AttentionBank, dh: np.ndarray) -> np.ndarray:
    """Chain a mask-space gradient through the logistic to logit space."""
    if not bank.learnable:
        raise UsageError("fixed attention banks have no logits to differentiate")
    h = bank.h()
    return dh * h * (1.0 - h)
