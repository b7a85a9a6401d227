"""Softmax scheduling policy over per-tower priorities.

Each expandable tower gets a scalar priority. Non-empty towers score
alpha * confidence + MLP([height embedding, index embedding, confidence]);
empty towers fall back to a per-index initial priority. The policy is the
softmax over priorities of expandable towers. Gradients of log-probabilities
are computed analytically so the policy can be trained without autodiff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .traces import Skyline

HIDDEN_DIM = 32
INIT_SCALE = 0.1


@dataclass
class PolicyParams:
    """All learnable scalars of the scheduling policy.

    Shapes: w1 (2d+1, 32), b1 (32,), w2 (32,), b2 scalar,
    height_emb (n_layers+1, d) with one row per height 0..n_layers,
    index_emb (n_max, d), init_priority (n_max,).
    """

    d: int
    n_layers: int
    n_max: int
    alpha: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    height_emb: np.ndarray
    index_emb: np.ndarray
    init_priority: np.ndarray
    init_priority_learnable: bool = True

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.height_emb = np.asarray(self.height_emb, dtype=float)
        self.index_emb = np.asarray(self.index_emb, dtype=float)
        self.init_priority = np.asarray(self.init_priority, dtype=float)
        self.validate()

    def validate(self) -> None:
        d, hidden = self.d, HIDDEN_DIM
        if d < 1 or self.n_layers < 1 or self.n_max < 1:
            raise ValueError("d, n_layers and n_max must be >= 1")
        expected = {
            "w1": (2 * d + 1, hidden),
            "b1": (hidden,),
            "w2": (hidden,),
            "height_emb": (self.n_layers + 1, d),
            "index_emb": (self.n_max, d),
            "init_priority": (self.n_max,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if not np.isfinite(self.alpha) or not np.isfinite(self.b2):
            raise ValueError("alpha and b2 must be finite")

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            d=self.d, n_layers=self.n_layers, n_max=self.n_max,
            alpha=float(self.alpha), w1=self.w1.copy(), b1=self.b1.copy(),
            w2=self.w2.copy(), b2=float(self.b2),
            height_emb=self.height_emb.copy(), index_emb=self.index_emb.copy(),
            init_priority=self.init_priority.copy(),
            init_priority_learnable=self.init_priority_learnable)

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "n_layers": self.n_layers,
            "n_max": self.n_max,
            "hidden_dim": HIDDEN_DIM,
            "alpha": self.alpha,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "height_emb": self.height_emb.tolist(),
            "index_emb": self.index_emb.tolist(),
            "init_priority": self.init_priority.tolist(),
            "init_priority_learnable": self.init_priority_learnable,
        })

    @classmethod
    def from_json(cls, text: str) -> "PolicyParams":
        obj = json.loads(text)
        if obj.get("hidden_dim") != HIDDEN_DIM:
            raise ValueError(f"unsupported hidden_dim {obj.get('hidden_dim')}")
        return cls(
            d=obj["d"], n_layers=obj["n_layers"], n_max=obj["n_max"],
            alpha=obj["alpha"], w1=obj["w1"], b1=obj["b1"], w2=obj["w2"],
            b2=obj["b2"], height_emb=obj["height_emb"],
            index_emb=obj["index_emb"], init_priority=obj["init_priority"],
            init_priority_learnable=obj["init_priority_learnable"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyParams":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def init_policy_params(d: int = 8, n_layers: int = 24, n_max: int = 30,
                       seed: int = 0, init_priority_mode: str = "learnable",
                       init_priority_value: float = 0.0) -> PolicyParams:
    """Fresh parameters: embeddings and MLP weights uniform in [-0.1, 0.1],
    biases zero, alpha 1.0 so the untrained policy tracks raw confidences."""
    if init_priority_mode not in ("learnable", "fixed"):
        raise ValueError("init_priority_mode must be 'learnable' or 'fixed'")
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
    return PolicyParams(
        d=d, n_layers=n_layers, n_max=n_max,
        alpha=1.0,
        w1=u(2 * d + 1, HIDDEN_DIM),
        b1=np.zeros(HIDDEN_DIM),
        w2=u(HIDDEN_DIM),
        b2=0.0,
        height_emb=u(n_layers + 1, d),
        index_emb=u(n_max, d),
        init_priority=np.full(n_max, float(init_priority_value)),
        init_priority_learnable=(init_priority_mode == "learnable"))


def greedy_equivalent_params(n_layers: int, n_max: int, d: int = 8,
                             empty_priority: float = 0.5) -> PolicyParams:
    """Parameters that make the policy reproduce pure confidence-priority
    scheduling: alpha 1, zero MLP, constant priority for empty towers."""
    return PolicyParams(
        d=d, n_layers=n_layers, n_max=n_max,
        alpha=1.0,
        w1=np.zeros((2 * d + 1, HIDDEN_DIM)),
        b1=np.zeros(HIDDEN_DIM),
        w2=np.zeros(HIDDEN_DIM),
        b2=0.0,
        height_emb=np.zeros((n_layers + 1, d)),
        index_emb=np.zeros((n_max, d)),
        init_priority=np.full(n_max, float(empty_priority)),
        init_priority_learnable=False)


@dataclass(frozen=True)
class TowerFeatures:
    """Feature triple of one non-empty tower."""

    height_vec: np.ndarray
    index_vec: np.ndarray
    has_answer_prob: float

    def concat(self) -> np.ndarray:
        return np.concatenate([self.height_vec, self.index_vec,
                               [self.has_answer_prob]])


def features(skyline: Skyline, i: int, params: PolicyParams) -> TowerFeatures:
    """Feature lookup for tower i; only defined for non-empty towers."""
    if skyline.heights[i] <= 0:
        raise ValueError(
            f"tower {i} is empty; empty towers use the initial priority path")
    return TowerFeatures(
        height_vec=params.height_emb[skyline.heights[i]].copy(),
        index_vec=params.index_emb[i].copy(),
        has_answer_prob=float(skyline.summaries[i]))


def _mlp_forward(params: PolicyParams, feats: np.ndarray):
    """feats: (k, 2d+1). Returns (outputs (k,), hidden activations (k, 32))."""
    hidden = np.tanh(feats @ params.w1 + params.b1)
    return hidden @ params.w2 + params.b2, hidden


def _feature_matrix(skyline: Skyline, idx: np.ndarray,
                    params: PolicyParams) -> np.ndarray:
    heights = np.asarray([skyline.heights[i] for i in idx])
    probs = np.asarray([skyline.summaries[i] for i in idx], dtype=float)
    return np.concatenate([params.height_emb[heights],
                           params.index_emb[idx],
                           probs[:, None]], axis=1)


def priority(skyline: Skyline, i: int, params: PolicyParams) -> float:
    """Scalar priority of tower i in the given state."""
    if skyline.heights[i] == 0:
        return float(params.init_priority[i])
    feats = features(skyline, i, params).concat()
    out, _ = _mlp_forward(params, feats[None, :])
    return params.alpha * float(skyline.summaries[i]) + float(out[0])


def _priorities(skyline: Skyline, params: PolicyParams,
                idx: np.ndarray) -> np.ndarray:
    values = np.empty(len(idx))
    heights = np.asarray([skyline.heights[i] for i in idx])
    empty = heights == 0
    values[empty] = params.init_priority[idx[empty]]
    busy = idx[~empty]
    if busy.size:
        feats = _feature_matrix(skyline, busy, params)
        out, _ = _mlp_forward(params, feats)
        probs = np.asarray([skyline.summaries[i] for i in busy], dtype=float)
        values[~empty] = params.alpha * probs + out
    return values


def default_mask(skyline: Skyline, params: PolicyParams) -> list[int]:
    """Indices of towers that can still be expanded."""
    return [i for i, h in enumerate(skyline.heights) if h < params.n_layers]


def _resolve_mask(skyline: Skyline, params: PolicyParams,
                  mask: Iterable[int] | None) -> np.ndarray:
    idx = sorted(mask) if mask is not None else default_mask(skyline, params)
    idx = np.asarray(idx, dtype=int)
    if idx.size == 0:
        raise ValueError("mask of expandable towers is empty")
    return idx


def policy_distribution(skyline: Skyline, params: PolicyParams,
                        mask: Iterable[int] | None = None) -> np.ndarray:
    """Softmax over priorities of expandable towers; zeros elsewhere.

    mask defaults to all towers below full height.
    """
    idx = _resolve_mask(skyline, params, mask)
    values = _priorities(skyline, params, idx)
    shifted = np.exp(values - values.max())
    dist = np.zeros(skyline.n_towers)
    dist[idx] = shifted / shifted.sum()
    return dist


def select_action(dist: np.ndarray, mode: str = "greedy",
                  rng: np.random.Generator | None = None) -> int:
    """Pick a tower from the distribution: argmax (ties to the lowest index)
    or a draw from the provided random stream."""
    if mode == "greedy":
        return int(np.argmax(dist))
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode requires an rng")
        return int(rng.choice(len(dist), p=dist))
    raise ValueError(f"unknown action mode {mode!r}")


def log_policy_prob(skyline: Skyline, action: int, params: PolicyParams,
                    mask: Iterable[int] | None = None) -> float:
    """log pi(action | skyline); action must be expandable."""
    idx = _resolve_mask(skyline, params, mask)
    pos = np.flatnonzero(idx == action)
    if pos.size == 0:
        raise ValueError(f"action {action} is not in the expandable mask")
    values = _priorities(skyline, params, idx)
    shifted = values - values.max()
    return float(shifted[pos[0]] - np.log(np.exp(shifted).sum()))


@dataclass
class PolicyGradient:
    """Gradient record mirroring every PolicyParams field."""

    alpha: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    height_emb: np.ndarray
    index_emb: np.ndarray
    init_priority: np.ndarray

    @classmethod
    def zeros(cls, params: PolicyParams) -> "PolicyGradient":
        return cls(alpha=0.0,
                   w1=np.zeros_like(params.w1),
                   b1=np.zeros_like(params.b1),
                   w2=np.zeros_like(params.w2),
                   b2=0.0,
                   height_emb=np.zeros_like(params.height_emb),
                   index_emb=np.zeros_like(params.index_emb),
                   init_priority=np.zeros_like(params.init_priority))

    def add_scaled(self, other: "PolicyGradient", scale: float) -> None:
        self.alpha += scale * other.alpha
        self.w1 += scale * other.w1
        self.b1 += scale * other.b1
        self.w2 += scale * other.w2
        self.b2 += scale * other.b2
        self.height_emb += scale * other.height_emb
        self.index_emb += scale * other.index_emb
        self.init_priority += scale * other.init_priority

    def scale(self, factor: float) -> None:
        self.alpha *= factor
        self.w1 *= factor
        self.b1 *= factor
        self.w2 *= factor
        self.b2 *= factor
        self.height_emb *= factor
        self.index_emb *= factor
        self.init_priority *= factor

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.alpha) and np.isfinite(self.b2)
                    and np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.b1))
                    and np.all(np.isfinite(self.w2))
                    and np.all(np.isfinite(self.height_emb))
                    and np.all(np.isfinite(self.index_emb))
                    and np.all(np.isfinite(self.init_priority)))


def log_prob_gradient(skyline: Skyline, action: int, params: PolicyParams,
                      mask: Iterable[int] | None = None) -> PolicyGradient:
    """Exact gradient of log pi(action | skyline) w.r.t. every parameter.

    d log pi / d priority_j = [j == action] - pi_j over the mask; that
    coefficient is then backpropagated through each tower's priority:
    through the MLP and embedding rows for non-empty towers, straight into
    init_priority for empty ones. Rows untouched by any masked tower get
    zero gradient.
    """
    idx = _resolve_mask(skyline, params, mask)
    pos = np.flatnonzero(idx == action)
    if pos.size == 0:
        raise ValueError(f"action {action} is not in the expandable mask")
    values = _priorities(skyline, params, idx)
    shifted = np.exp(values - values.max())
    pi = shifted / shifted.sum()
    coef = -pi
    coef[pos[0]] += 1.0

    grad = PolicyGradient.zeros(params)
    heights = np.asarray([skyline.heights[i] for i in idx])
    empty = heights == 0
    np.add.at(grad.init_priority, idx[empty], coef[empty])

    busy = idx[~empty]
    if busy.size:
        c = coef[~empty]
        feats = _feature_matrix(skyline, busy, params)
        _, hidden = _mlp_forward(params, feats)
        probs = feats[:, -1]
        grad.alpha = float(c @ probs)
        grad.w2 = hidden.T @ c
        grad.b2 = float(c.sum())
        d_hidden = c[:, None] * params.w2[None, :]
        d_pre = d_hidden * (1.0 - hidden * hidden)
        grad.w1 = feats.T @ d_pre
        grad.b1 = d_pre.sum(axis=0)
        d_feats = d_pre @ params.w1.T
        d = params.d
        busy_heights = heights[~empty]
        np.add.at(grad.height_emb, busy_heights, d_feats[:, :d])
        np.add.at(grad.index_emb, busy, d_feats[:, d:2 * d])
    return grad


def count_parameters(params: PolicyParams) -> int:
    """Total scalar parameter count: alpha, the MLP with biases, both
    embedding tables, and the per-index initial priorities."""
    d, hidden = params.d, HIDDEN_DIM
    mlp = (2 * d + 1) * hidden + hidden + hidden + 1
    return 1 + mlp + (params.n_layers + 1) * d + params.n_max * d + params.n_max
