"""
Retina Locator - Object relation module
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Each object's appearance feature is refined by an attention-weighted sum of
the other objects' transformed features. The attention weight multiplies a
scaled dot-product appearance term with a rectified gate computed from the
relative box geometry (the construction of the original relation networks for
object detection; only its role is fixed here).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.nn import Module, xavier_uniform
from ..autodiff.tensor import Tensor
from ..exceptions import ConfigurationError, DimensionError
from ..geometry import pairwise_relative_geometry
from ..settings import RelationConfig

logger = logging.getLogger(__name__)

WAVE_LENGTH = 1000.0
POSITION_SCALE = 100.0


@dataclass
class ObjectSet:
    """N appearance features (N, d_f) and their N boxes (N, 4)."""

    features: Tensor
    boxes: np.ndarray

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DimensionError(f"ObjectSet needs (N >= 1, d_f) features, got {self.features.shape}")
        if self.boxes.shape[0] != self.features.shape[0]:
            raise DimensionError(
                f"ObjectSet has {self.features.shape[0]} features but {self.boxes.shape[0]} boxes"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def sinusoidal_embedding(values: np.ndarray, dim: int, wave_length: float = WAVE_LENGTH,
                         scale: float = POSITION_SCALE) -> np.ndarray:
    """Embed scalars into ``dim`` sin/cos features along a new last axis.

    Wavelengths grow geometrically from 1 to ``wave_length``; the output is
    [sin(k=0..F-1), cos(k=0..F-1)] with F = dim / 2.
    """
    if dim < 2 or dim % 2:
        raise ConfigurationError(f"Sinusoidal embedding size must be even, got {dim}")
    freqs = dim // 2
    wavelengths = wave_length ** (np.arange(freqs) / max(freqs - 1, 1))
    angles = scale * np.asarray(values, dtype=np.float64)[..., None] / wavelengths
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def geometric_embedding(geometry: np.ndarray, geo_dim: int) -> np.ndarray:
    """Embed (..., 4) relative geometry into (..., geo_dim), component-major."""
    if geo_dim % 8:
        raise ConfigurationError(f"geo_dim must be a multiple of 8, got {geo_dim}")
    geometry = np.asarray(geometry, dtype=np.float64)
    emb = sinusoidal_embedding(geometry, geo_dim // 4)
    return emb.reshape(geometry.shape[:-1] + (geo_dim,))


class RelationHead(Module):
    """One attention head: W_Q, W_K (d_f -> d_k), W_V (d_f -> value_dim), W_G (d_g -> 1)."""

    def __init__(self, feature_dim: int, key_dim: int, geo_dim: int, value_dim: int,
                 rng: np.random.Generator, geometry_eps: float = 1e-3):
        super().__init__()
        if geo_dim % 8:
            raise ConfigurationError(f"geo_dim must be a multiple of 8, got {geo_dim}")
        self.feature_dim = feature_dim
        self.key_dim = key_dim
        self.geo_dim = geo_dim
        self.value_dim = value_dim
        self.geometry_eps = geometry_eps
        self.WQ = self.add_param('WQ', xavier_uniform(rng, (feature_dim, key_dim), feature_dim, key_dim))
        self.WK = self.add_param('WK', xavier_uniform(rng, (feature_dim, key_dim), feature_dim, key_dim))
        self.WV = self.add_param('WV', xavier_uniform(rng, (feature_dim, value_dim), feature_dim, value_dim))
        self.WG = self.add_param('WG', xavier_uniform(rng, (geo_dim, 1), geo_dim, 1))

    def forward(self, objset: ObjectSet) -> Tensor:
        return relation_feature(objset, self)


def geometric_weight(boxes: np.ndarray, head: RelationHead) -> Tensor:
    """Rectified geometric gate; entry [m, n] is the gate of object m on target n."""
    geometry = pairwise_relative_geometry(np.asarray(boxes, dtype=np.float64).reshape(-1, 4), head.geometry_eps)
    n = geometry.shape[0]
    emb = Tensor(geometric_embedding(geometry, head.geo_dim).reshape(n * n, head.geo_dim), dtype=head.WG.dtype)
    return T.reshape(T.relu(T.matmul(emb, head.WG)), (n, n))


def relation_weight(features: Tensor, boxes: np.ndarray, head: RelationHead) -> Tensor:
    """Relation weights, normalized over the sources m of each target column n.

    omega_A[m, n] = <W_K f_m, W_Q f_n> / sqrt(d_k) and
    omega[m, n] = omega_G[m, n] exp(omega_A[m, n]) / sum_k omega_G[k, n] exp(omega_A[k, n]).
    A column whose gates are all closed is all zeros.
    """
    queries = T.matmul(features, head.WQ)
    keys = T.matmul(features, head.WK)
    appearance = T.matmul(keys, T.transpose(queries)) * (1.0 / np.sqrt(head.key_dim))
    gate = geometric_weight(boxes, head)

    shift = appearance.data.max(axis=0, keepdims=True)
    numerator = gate * T.exp(appearance - Tensor(shift, dtype=appearance.dtype))
    denominator = T.tensor_sum(numerator, axis=0, keepdims=True)
    closed = (denominator.data == 0).astype(denominator.dtype)
    return numerator / (denominator + Tensor(closed, dtype=denominator.dtype))


def relation_feature(objset: ObjectSet, head: RelationHead) -> Tensor:
    """f_R(n) = sum_m omega[m, n] (W_V f_m), one (value_dim,) row per object."""
    if objset.feature_dim != head.feature_dim:
        raise DimensionError(f"Head expects d_f={head.feature_dim}, objects have {objset.feature_dim}")
    omega = relation_weight(objset.features, objset.boxes, head)
    values = T.matmul(objset.features, head.WV)
    return T.matmul(T.transpose(omega), values)


def relation_augment(objset: ObjectSet, heads: Sequence[RelationHead]) -> ObjectSet:
    """f_n <- f_n + concat_r f_R^r(n); feature size and boxes are unchanged.

    Raises:
        ConfigurationError: if d_f is not divisible by the head count
    """
    heads = list(heads)
    d_f = objset.feature_dim
    if not heads or d_f % len(heads):
        raise ConfigurationError(f"Feature dim {d_f} is not divisible by {len(heads)} relation heads")
    if any(h.value_dim * len(heads) != d_f for h in heads):
        raise ConfigurationError(f"Relation heads must each produce {d_f // len(heads)} values")
    relation = T.concat([relation_feature(objset, h) for h in heads], axis=1)
    return ObjectSet(features=objset.features + relation, boxes=objset.boxes)


class RelationModule(Module):
    """``num_modules`` stacked relation_augment blocks of ``num_heads`` heads each.

    Heads are numbered consecutively across blocks (head0, head1, ...).
    """

    def __init__(self, config: RelationConfig, rng: np.random.Generator, geometry_eps: float = 1e-3,
                 feature_dim: Optional[int] = None):
        super().__init__()
        feature_dim = feature_dim or config.feature_dim
        if feature_dim % config.num_heads:
            raise ConfigurationError(
                f"relation feature_dim {feature_dim} is not divisible by num_heads {config.num_heads}"
            )
        self.num_heads = config.num_heads
        self.num_modules = config.num_modules
        self.heads: List[RelationHead] = []
        for i in range(config.num_heads * config.num_modules):
            head = RelationHead(feature_dim, config.key_dim, config.geo_dim,
                                feature_dim // config.num_heads, rng, geometry_eps)
            self.heads.append(self.add_child(f'head{i}', head))

    def forward(self, objset: ObjectSet) -> ObjectSet:
        for block in range(self.num_modules):
            objset = relation_augment(objset, self.heads[block * self.num_heads:(block + 1) * self.num_heads])
        return objset
