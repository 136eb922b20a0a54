"""Tabular ingestion, standardization, splits and the candidate stream.

Data is held column-wise in a :class:`RecordSet`.  Each row carries the
dataset's full proxy label in ``label`` (known to the simulator, never shown
to a learner) and the *revealed* label in ``y_tilde``, which is only present
where a positive decision was taken.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, ParseError

log = logging.getLogger(__name__)

FEATURE_KINDS = ("real", "count", "binary", "categorical")
PROPENSITY_CLAMP = 1e-4


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.categories) < 2:
            raise ConfigurationError(f"categorical feature {self.name!r} needs >= 2 categories")
        if self.kind == "binary" and self.categories and len(self.categories) != 2:
            raise ConfigurationError(f"binary feature {self.name!r} needs exactly 2 categories")

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind == "categorical" else 1


@dataclass(frozen=True)
class FeatureSchema:
    """Feature typing plus the sensitive and proxy-label columns.

    ``sensitive_values`` is ``(unprivileged, privileged)``; the privileged value
    maps to S=+1.  ``proxy_positive`` is the raw value meaning a proxy label of 1.
    """

    features: tuple
    sensitive: str
    sensitive_values: tuple
    proxy: str
    proxy_positive: str = "1"
    proxy_negative: str = "0"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate feature names in schema")
        if self.sensitive in names or self.proxy in names or self.sensitive == self.proxy:
            raise ConfigurationError("sensitive and proxy columns must be distinct from the features")
        if len(self.sensitive_values) != 2:
            raise ConfigurationError("sensitive column needs exactly two values")

    @property
    def heads(self):
        """``(kind, start, width)`` for every feature in encoded order."""
        out, start = [], 0
        for f in self.features:
            out.append((f.kind, start, f.width))
            start += f.width
        return out

    @property
    def encoded_width(self) -> int:
        return sum(f.width for f in self.features)

    @property
    def names(self):
        return [f.name for f in self.features]

    def standardized_columns(self) -> np.ndarray:
        mask = []
        for f in self.features:
            mask += [f.kind in ("real", "count")] * f.width
        return np.asarray(mask, dtype=bool)

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        feats = tuple(
            FeatureSpec(c["name"], c["kind"], tuple(str(v) for v in c.get("categories", ())))
            for c in data["columns"]
        )
        sens = data["sensitive"]
        proxy = data["proxy"]
        return cls(
            features=feats,
            sensitive=sens["name"],
            sensitive_values=(str(sens["unprivileged"]), str(sens["privileged"])),
            proxy=proxy["name"],
            proxy_positive=str(proxy.get("positive", "1")),
            proxy_negative=str(proxy.get("negative", "0")),
        )

    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": f.name, "kind": f.kind, **({"categories": list(f.categories)} if f.categories else {})}
                for f in self.features
            ],
            "sensitive": {
                "name": self.sensitive,
                "unprivileged": self.sensitive_values[0],
                "privileged": self.sensitive_values[1],
            },
            "proxy": {"name": self.proxy, "positive": self.proxy_positive, "negative": self.proxy_negative},
        }


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class Record:
    """One candidate as seen by the decision process."""

    x: np.ndarray
    s: int
    y_tilde: Optional[int] = None
    d: Optional[int] = None
    propensity: Optional[float] = None

    def __post_init__(self):
        if self.s not in (-1, 1):
            raise ContractError(f"sensitive value must be -1 or +1, got {self.s}")
        if self.y_tilde is not None and self.d != 1:
            raise ContractError("a proxy label can only be revealed for an accepted candidate (d=1)")
        if self.d == 1 and self.y_tilde is None:
            raise ContractError("accepted candidates must carry their revealed label")
        if self.d is not None:
            if self.propensity is None:
                raise ContractError("a decided record needs its propensity")
            if not PROPENSITY_CLAMP <= self.propensity <= 1 - PROPENSITY_CLAMP:
                raise ContractError(f"propensity {self.propensity} outside the clamp interval")

    def u_tilde(self, c: float) -> Optional[float]:
        if self.d is None:
            return None
        return 0.0 if self.d == 0 else float(self.y_tilde) - c


def _nan(n):
    return np.full(n, np.nan)


@dataclass
class RecordSet:
    """Column-wise store of records.

    ``label`` is the full proxy label (simulation oracle), ``m`` the ground-truth
    label when known (synthetic data), ``row`` the index into the source pool.
    Decision columns use NaN for "absent".
    """

    x: np.ndarray
    s: np.ndarray
    label: np.ndarray
    m: Optional[np.ndarray] = None
    row: Optional[np.ndarray] = None
    d: np.ndarray = field(default=None)
    propensity: np.ndarray = field(default=None)
    y_tilde: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.s)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            self.x = self.x.reshape(n, -1)
        self.s = np.asarray(self.s, dtype=float)
        self.label = np.asarray(self.label, dtype=float)
        if self.row is None:
            self.row = np.arange(n)
        if self.d is None:
            self.d = _nan(n)
        if self.propensity is None:
            self.propensity = _nan(n)
        if self.y_tilde is None:
            self.y_tilde = _nan(n)
        self.validate()

    def validate(self):
        if not np.all(np.isin(self.s, (-1.0, 1.0))):
            raise ContractError("sensitive values must be -1 or +1")
        revealed = ~np.isnan(self.y_tilde)
        if np.any(revealed != (self.d == 1)):
            raise ContractError("selective-label invariant violated: y_tilde present iff d == 1")
        decided = ~np.isnan(self.d)
        if np.any(np.isnan(self.propensity[decided])):
            raise ContractError("decided records need a propensity")
        p = self.propensity[decided]
        if np.any((p < PROPENSITY_CLAMP) | (p > 1 - PROPENSITY_CLAMP)):
            raise ContractError("propensities must lie in the clamp interval")

    def __len__(self):
        return len(self.s)

    def __iter__(self) -> Iterator[Record]:
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> Record:
        def opt(a, cast):
            return None if np.isnan(a[i]) else cast(a[i])

        return Record(
            x=self.x[i].copy(),
            s=int(self.s[i]),
            y_tilde=opt(self.y_tilde, int),
            d=opt(self.d, int),
            propensity=opt(self.propensity, float),
        )

    def subset(self, idx) -> "RecordSet":
        idx = np.asarray(idx)
        return RecordSet(
            x=self.x[idx], s=self.s[idx], label=self.label[idx],
            m=None if self.m is None else self.m[idx], row=self.row[idx],
            d=self.d[idx], propensity=self.propensity[idx], y_tilde=self.y_tilde[idx],
        )

    def with_decisions(self, d, propensity) -> "RecordSet":
        d = np.asarray(d, dtype=float)
        prop = np.asarray(propensity, dtype=float)
        return replace(self, d=d, propensity=prop, y_tilde=np.where(d == 1, self.label, np.nan))

    def undecided(self) -> "RecordSet":
        n = len(self)
        return replace(self, d=_nan(n), propensity=_nan(n), y_tilde=_nan(n))

    @property
    def labeled(self) -> np.ndarray:
        return self.d == 1

    def u_tilde(self, c: float) -> np.ndarray:
        """Observed utility D(Y~ - c); NaN where undecided."""
        return np.where(np.isnan(self.d), np.nan, np.where(self.d == 1, self.y_tilde - c, 0.0))

    @staticmethod
    def concat(parts: Sequence["RecordSet"]) -> "RecordSet":
        def cat(name):
            vals = [getattr(p, name) for p in parts]
            return None if any(v is None for v in vals) else np.concatenate(vals)

        return RecordSet(
            x=np.concatenate([p.x for p in parts]), s=cat("s"), label=cat("label"), m=cat("m"),
            row=cat("row"), d=cat("d"), propensity=cat("propensity"), y_tilde=cat("y_tilde"),
        )


@dataclass
class CandidateBatch:
    t: int
    records: RecordSet
    provenance: str = ""

    def __post_init__(self):
        if self.t < 0:
            raise ContractError("time index must be >= 0")


# -- loading -------------------------------------------------------------------

def _encode_value(spec: FeatureSpec, raw: str, row: int) -> List[float]:
    raw = raw.strip()
    if spec.kind in ("real", "count"):
        try:
            v = float(raw)
        except ValueError:
            raise ParseError(f"column {spec.name!r}: non-numeric value {raw!r}", row) from None
        if not math.isfinite(v):
            raise ParseError(f"column {spec.name!r}: non-finite value {raw!r}", row)
        if spec.kind == "count" and (v < 0 or v != int(v)):
            raise ParseError(f"column {spec.name!r}: count must be a non-negative integer, got {raw!r}", row)
        return [v]
    if spec.kind == "binary":
        cats = spec.categories or ("0", "1")
        if raw not in cats:
            raise ParseError(f"column {spec.name!r}: value {raw!r} not in {list(cats)}", row)
        return [float(cats.index(raw))]
    if raw not in spec.categories:
        raise ParseError(f"column {spec.name!r}: unknown category {raw!r}", row)
    onehot = [0.0] * spec.width
    onehot[spec.categories.index(raw)] = 1.0
    return onehot


def load_dataset(path, schema: FeatureSchema) -> RecordSet:
    """Parse a comma-delimited UTF-8 file with a header row.

    Row numbers in errors count the header as row 1.
    """
    xs, ss, ys = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = schema.names + [schema.sensitive, schema.proxy]
        missing = [c for c in needed if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {missing}", 1)
        for i, row in enumerate(reader, start=2):
            x = []
            for spec in schema.features:
                x += _encode_value(spec, row[spec.name], i)
            sv = row[schema.sensitive].strip()
            if sv not in schema.sensitive_values:
                raise ParseError(
                    f"sensitive column {schema.sensitive!r}: value {sv!r} not in {list(schema.sensitive_values)}", i
                )
            yv = row[schema.proxy].strip()
            if yv == schema.proxy_positive:
                y = 1.0
            elif yv == schema.proxy_negative:
                y = 0.0
            else:
                raise ParseError(f"proxy column {schema.proxy!r}: unexpected value {yv!r}", i)
            xs.append(x)
            ss.append(1.0 if sv == schema.sensitive_values[1] else -1.0)
            ys.append(y)
    if not xs:
        raise ParseError("file contains no data rows")
    return RecordSet(x=np.asarray(xs), s=np.asarray(ss), label=np.asarray(ys))


def write_dataset(path, schema: FeatureSchema, columns: dict) -> None:
    """Write raw columns (name -> sequence of values) in the loader's format."""
    names = schema.names + [schema.sensitive, schema.proxy]
    n = len(columns[names[0]])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[c][i]) for c in names])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# -- standardization -----------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    columns: np.ndarray

    def apply(self, records: RecordSet) -> RecordSet:
        x = records.x.copy()
        x[:, self.columns] = (x[:, self.columns] - self.mean) / self.std
        return replace(records, x=x)

    def apply_x(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        x[..., self.columns] = (x[..., self.columns] - self.mean) / self.std
        return x


def standardize_fit_apply(train: RecordSet, *others: RecordSet, schema: FeatureSchema | None = None,
                          columns=None):
    """Fit real/count column statistics on ``train`` and apply them everywhere.

    Uses the population standard deviation.  Zero-variance columns are left
    unscaled (divisor 1) with a warning.
    """
    if len(train) == 0:
        raise ContractError("cannot standardize on an empty training split")
    if columns is None:
        columns = schema.standardized_columns() if schema is not None else np.ones(train.x.shape[1], bool)
    columns = np.asarray(columns, dtype=bool)
    mean = train.x[:, columns].mean(axis=0)
    std = train.x[:, columns].std(axis=0)
    flat = std == 0
    if np.any(flat):
        log.warning("zero-variance feature column(s) %s left unscaled", np.flatnonzero(columns)[flat].tolist())
        std = np.where(flat, 1.0, std)
    stats = Standardizer(mean, std, columns)
    return stats, [stats.apply(r) for r in (train, *others)]


# -- splits and stream ---------------------------------------------------------

def split_indices(n: int, fractions: Sequence[float], seed) -> List[np.ndarray]:
    """Disjoint, covering index splits; the last split takes the remainder."""
    if n < len(fractions):
        raise ConfigurationError("not enough rows for the requested splits")
    perm = np.random.default_rng(seed).permutation(n)
    total = float(sum(fractions))
    out, start = [], 0
    for k, f in enumerate(fractions):
        stop = n if k == len(fractions) - 1 else start + int(round(n * f / total))
        out.append(np.sort(perm[start:stop]))
        start = stop
    return out


class StreamSampler:
    """Seeded draws from a pool without replacement, reshuffling when exhausted."""

    def __init__(self, pool: RecordSet, seed, name: str = "pool"):
        if len(pool) == 0:
            raise ConfigurationError("cannot stream from an empty pool")
        self.pool = pool.undecided()
        self.rng = np.random.default_rng(seed)
        self.name = name
        self._perm = self.rng.permutation(len(pool))
        self._pos = 0
        self.passes = 0

    def take(self, n: int) -> RecordSet:
        idx = []
        while len(idx) < n:
            if self._pos == len(self._perm):
                self._perm = self.rng.permutation(len(self.pool))
                self._pos = 0
                self.passes += 1
            k = min(n - len(idx), len(self._perm) - self._pos)
            idx.extend(self._perm[self._pos:self._pos + k])
            self._pos += k
        return self.pool.subset(np.asarray(idx))


def make_stream(pool: RecordSet, steps: int = 200, batch_size: int = 64, seed=0) -> List[CandidateBatch]:
    if steps < 1 or batch_size < 1:
        raise ConfigurationError("steps and batch_size must be >= 1")
    sampler = StreamSampler(pool, seed)
    return [CandidateBatch(t, sampler.take(batch_size), f"{sampler.name}/seed={seed}") for t in range(steps)]
