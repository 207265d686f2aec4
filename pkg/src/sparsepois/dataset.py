"""Datasets, CSV I/O and the synthetic AR(1) count-data generator."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DatasetParseError

log = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "GenerationConfig",
    "GenerationMeta",
    "generate_synthetic",
    "load_csv",
    "meta_path_for",
    "sample_ar1_row",
    "save_csv",
]

_MAX_REGEN = 64


@dataclass(frozen=True)
class GenerationConfig:
    m: int
    n: int
    k_true: int
    rho: float
    sigma2: float
    y_max: int
    seed: int

    def __post_init__(self):
        for name in ("m", "n", "k_true", "y_max"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.k_true > self.m:
            raise ValueError(f"k_true={self.k_true} exceeds m={self.m}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho!r}")
        if not self.sigma2 >= 0.0:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True)
class GenerationMeta:
    m: int
    n: int
    k_true: int
    rho: float
    sigma2: float
    y_max: int
    seed: int
    true_support: tuple[int, ...]
    noise_redraws: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["true_support"] = list(self.true_support)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationMeta":
        d = dict(d)
        d["true_support"] = tuple(int(j) for j in d["true_support"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``x`` (n x m, row i is observation i) and counts ``y``."""

    x: np.ndarray
    y: np.ndarray
    meta: GenerationMeta | None = field(default=None)

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.asarray(self.y)
        if x.ndim != 2:
            raise ValueError("x must be a 2-D array")
        n, m = x.shape
        if n < 1 or m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if y.shape != (n,):
            raise ValueError(f"y has shape {y.shape}, expected ({n},)")
        if y.dtype.kind == "f":
            if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
                raise ValueError("counts must be integers")
        elif y.dtype.kind not in "iu":
            raise ValueError("counts must be integers")
        y = y.astype(np.int64)
        if np.any(y < 0):
            raise ValueError("counts must be non-negative")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if self.meta is not None:
            if len(self.meta.true_support) != self.meta.k_true:
                raise ValueError("meta.true_support size differs from k_true")
            if y.max() > self.meta.y_max:
                raise ValueError("count above meta.y_max")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @cached_property
    def yf(self) -> np.ndarray:
        yf = self.y.astype(np.float64)
        yf.flags.writeable = False
        return yf

    @cached_property
    def y_sum(self) -> float:
        return float(self.yf.sum())

    @cached_property
    def log_fact_mean(self) -> float:
        """(1/n) * sum(log y_i!)."""
        from .loss import log_factorial

        vals, counts = np.unique(self.y, return_counts=True)
        return float(sum(c * log_factorial(int(v)) for v, c in zip(vals, counts)) / self.n)

    def columns(self, idx) -> np.ndarray:
        return np.ascontiguousarray(self.x[:, idx])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and self.meta == other.meta
        )

    __hash__ = None


def sample_ar1_row(rho: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(0, S) with S_ij = rho**|i-j|."""
    eps = rng.standard_normal((1, m))
    return _kernels.ar1_fill(eps, float(rho))[0]


def _quad_form_ar1(support, rho: float) -> float:
    s = np.asarray(support, dtype=float)
    return float(np.sum(rho ** np.abs(s[:, None] - s[None, :])))


def _round_half_up(v: np.ndarray) -> np.ndarray:
    # v >= 0 here, so floor(v + 0.5) is round-half-away-from-zero
    return np.floor(v + 0.5)


def generate_synthetic(cfg: GenerationConfig) -> Dataset:
    """Draw a dataset with AR(1)-correlated Gaussian features and rounded log-normal counts.

    Three independent child streams of ``SeedSequence(cfg.seed)`` are used for the
    true support, the features and the noise, in that order.
    """
    ss = np.random.SeedSequence(cfg.seed)
    ss_support, ss_feat, ss_noise = ss.spawn(3)

    support = np.sort(
        np.random.Generator(np.random.PCG64(ss_support)).choice(cfg.m, cfg.k_true, replace=False)
    )
    eps = np.random.Generator(np.random.PCG64(ss_feat)).standard_normal((cfg.n, cfg.m))
    x = _kernels.ar1_fill(eps, float(cfg.rho))
    del eps

    scale = math.sqrt(_quad_form_ar1(support, cfg.rho))
    signal = x[:, support].sum(axis=1) / scale

    sigma = math.sqrt(cfg.sigma2)
    noise_ss = ss_noise
    redraws = 0
    while True:
        noise = sigma * np.random.Generator(np.random.PCG64(noise_ss)).standard_normal(cfg.n)
        y = np.minimum(_round_half_up(np.exp(signal + noise)), cfg.y_max).astype(np.int64)
        if y.any() or redraws >= _MAX_REGEN:
            break
        redraws += 1
        log.warning("all generated counts are zero; redrawing noise (attempt %d)", redraws)
        (noise_ss,) = noise_ss.spawn(1)

    meta = GenerationMeta(
        m=cfg.m,
        n=cfg.n,
        k_true=cfg.k_true,
        rho=cfg.rho,
        sigma2=cfg.sigma2,
        y_max=cfg.y_max,
        seed=cfg.seed,
        true_support=tuple(int(j) for j in support),
        noise_redraws=redraws,
    )
    return Dataset(x, y, meta)


def meta_path_for(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def save_csv(dataset: Dataset, path, write_meta: bool = True) -> None:
    """Write ``y,x1,...,xm`` rows; floats use the shortest round-trip repr."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["y"] + [f"x{j + 1}" for j in range(dataset.m)]) + "\n")
        for yi, row in zip(dataset.y.tolist(), dataset.x.tolist()):
            fh.write(str(yi) + "," + ",".join(map(repr, row)) + "\n")
    if write_meta and dataset.meta is not None:
        meta_path_for(path).write_text(json.dumps(dataset.meta.to_dict(), indent=2), encoding="utf-8")


def load_csv(path, read_meta: bool = True) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        m = len(header) - 1
        if m < 1 or header[0] != "y" or header[1:] != [f"x{j + 1}" for j in range(m)]:
            raise DatasetParseError("malformed header, expected 'y,x1,...,xm'", 1)
        ys, rows = [], []
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != m + 1:
                raise DatasetParseError(f"ragged row: {len(row)} fields, expected {m + 1}", lineno)
            try:
                yi = int(row[0])
            except ValueError:
                raise DatasetParseError(f"non-integer count {row[0]!r}", lineno) from None
            if yi < 0:
                raise DatasetParseError("negative count", lineno)
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DatasetParseError(f"bad feature value: {exc}", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise DatasetParseError("non-finite feature value", lineno)
            ys.append(yi)
            rows.append(vals)
    if not ys:
        raise DatasetParseError("no observations", 2)
    meta = None
    mp = meta_path_for(path)
    if read_meta and mp.exists():
        meta = GenerationMeta.from_dict(json.loads(mp.read_text(encoding="utf-8")))
    return Dataset(np.array(rows, dtype=np.float64), np.array(ys, dtype=np.int64), meta)
