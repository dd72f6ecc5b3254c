"""Search spaces, configurations and evaluation histories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CONTINUOUS = "continuous"
INTEGER = "integer"
LINEAR = "linear"
LOG = "log"


@dataclass(frozen=True)
class Dimension:
    """One axis of a hyperparameter space.

    Parameters
    ----------
    name : str
        Hyperparameter name (for estimator-backed problems, the ``set_params`` key).
    low, high : float
        Inclusive bounds in native units.
    kind : {"continuous", "integer"}
    scale : {"linear", "log"}
        Log-scale axes are log-transformed before mapping to the unit interval.
    """

    name: str
    low: float
    high: float
    kind: str = CONTINUOUS
    scale: str = LINEAR

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, INTEGER):
            raise ValueError(f"unknown kind {self.kind!r} for dimension {self.name!r}")
        if self.scale not in (LINEAR, LOG):
            raise ValueError(f"unknown scale {self.scale!r} for dimension {self.name!r}")
        if not self.low < self.high:
            raise ValueError(f"dimension {self.name!r}: need low < high, got {self.low}, {self.high}")
        if self.scale == LOG and self.low <= 0:
            raise ValueError(f"log-scale dimension {self.name!r} needs low > 0")

    def _warp(self, x):
        return np.log(x) if self.scale == LOG else np.asarray(x, dtype=float)

    def to_unit(self, x):
        lo, hi = self._warp(self.low), self._warp(self.high)
        return (self._warp(x) - lo) / (hi - lo)

    def from_unit(self, u):
        u = np.clip(u, 0.0, 1.0)
        lo, hi = self._warp(self.low), self._warp(self.high)
        x = lo + u * (hi - lo)
        if self.scale == LOG:
            x = np.exp(x)
        x = np.clip(x, self.low, self.high)
        if self.kind == INTEGER:
            # round half down
            x = np.clip(np.ceil(x - 0.5), math.ceil(self.low), math.floor(self.high))
        return x


@dataclass(frozen=True)
class HyperParamConfig:
    """A point of a search space, in native units. Hashable, so usable as a cache key."""

    values: tuple

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class HyperParamSpace:
    """Box-shaped search domain with per-dimension scale and type metadata.

    Every optimizer in this package works on the unit cube; :meth:`to_unit`
    and :meth:`from_unit` are the only bridge to native units.
    """

    def __init__(self, dims: Sequence[Dimension]):
        dims = list(dims)
        if not dims:
            raise ValueError("a search space needs at least one dimension")
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")
        self.dims = dims

    def __repr__(self):
        return f"HyperParamSpace({self.dims!r})"

    def __eq__(self, other):
        return isinstance(other, HyperParamSpace) and self.dims == other.dims

    def __hash__(self):
        return hash(tuple(self.dims))

    @property
    def n_dims(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def config(self, values: Iterable) -> HyperParamConfig:
        """Build a validated config from native values."""
        values = list(values)
        if len(values) != self.n_dims:
            raise ValueError(f"expected {self.n_dims} values, got {len(values)}")
        out = []
        for d, v in zip(self.dims, values):
            v = float(v)
            if not (d.low <= v <= d.high):
                raise ValueError(f"{d.name}={v} outside [{d.low}, {d.high}]")
            if d.kind == INTEGER:
                if v != round(v):
                    raise ValueError(f"{d.name}={v} must be an integer")
                v = int(round(v))
            out.append(v)
        return HyperParamConfig(tuple(out))

    def contains(self, config: HyperParamConfig) -> bool:
        try:
            self.config(config.values)
        except ValueError:
            return False
        return True

    def to_unit(self, config) -> np.ndarray:
        values = config.values if isinstance(config, HyperParamConfig) else config
        if len(values) != self.n_dims:
            raise ValueError(f"expected {self.n_dims} values, got {len(values)}")
        return np.array([float(d.to_unit(v)) for d, v in zip(self.dims, values)])

    def from_unit(self, u) -> HyperParamConfig:
        """Map a unit-cube point to a config; integer axes are rounded (half down)."""
        u = np.asarray(u, dtype=float).ravel()
        if u.shape[0] != self.n_dims:
            raise ValueError(f"expected {self.n_dims} coordinates, got {u.shape[0]}")
        vals = []
        for d, ui in zip(self.dims, u):
            x = float(d.from_unit(ui))
            vals.append(int(x) if d.kind == INTEGER else x)
        return HyperParamConfig(tuple(vals))

    def project(self, u) -> np.ndarray:
        """Snap a unit-cube point onto the representable grid (clip, round integers)."""
        return self.to_unit(self.from_unit(u))

    def sample(self, rng: np.random.Generator) -> HyperParamConfig:
        """Uniform draw per axis scale (log-uniform on log axes)."""
        return self.from_unit(rng.random(self.n_dims))

    def as_dict(self, config: HyperParamConfig) -> dict:
        return dict(zip(self.names, config.values))

    def to_json(self) -> list[dict]:
        return [
            {"name": d.name, "low": d.low, "high": d.high, "kind": d.kind, "scale": d.scale}
            for d in self.dims
        ]

    @classmethod
    def from_json(cls, items) -> "HyperParamSpace":
        return cls([Dimension(**item) for item in items])


@dataclass
class History:
    """Ordered record of evaluated ``(config, risk)`` pairs.

    Failed trainings are stored with risk ``+inf`` so that budget accounting
    stays exact; :meth:`observations` drops them before any model is fitted.
    """

    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def add(self, config: HyperParamConfig, risk: float) -> None:
        risk = float(risk)
        if math.isnan(risk) or risk == -math.inf:
            raise ValueError(f"invalid risk {risk}")
        self.records.append((config, risk))

    @property
    def configs(self) -> list[HyperParamConfig]:
        return [c for c, _ in self.records]

    @property
    def risks(self) -> np.ndarray:
        return np.array([r for _, r in self.records], dtype=float)

    def observations(self, space: HyperParamSpace):
        """Unit-cube inputs and risks of the finite records, as arrays."""
        keep = [(c, r) for c, r in self.records if math.isfinite(r)]
        X = np.array([space.to_unit(c) for c, _ in keep]).reshape(len(keep), space.n_dims)
        y = np.array([r for _, r in keep], dtype=float)
        return X, y

    def best_index(self) -> int | None:
        """Index of the minimum-risk record; the earliest wins ties. None if nothing finite."""
        risks = self.risks
        if risks.size == 0 or not np.isfinite(risks).any():
            return None
        return int(np.argmin(risks))

    def best(self):
        i = self.best_index()
        return None if i is None else self.records[i]

    def copy(self) -> "History":
        return History(list(self.records))
