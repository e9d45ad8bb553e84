"""Data ingestion, regressor construction and normalization.

The inverse-dynamics regressor pairs a window of (future and past) outputs
with past inputs,

    phi(k) = [y(k+n_k+1), ..., y(k+n_k-n_a+1), u(k-1), ..., u(k-n_b+1)],

and the target is u(k).  All vectors are plain 1-D numpy arrays; a DataSet
stacks the regressors row-wise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegressorSpec",
    "DataSet",
    "DiffOperators",
    "NormalizationRecord",
    "build_regressors",
    "apply_delta",
    "apply_avg",
    "split_train_val",
    "normalize_inputs",
    "read_log_csv",
    "write_log_csv",
]


@dataclass(frozen=True)
class RegressorSpec:
    """Orders of the (forward) dynamics: n_a output lags, n_b input terms,
    n_k pure input delays.

    The inverse regressor built from this spec holds n_a+1 output samples
    and n_b-1 past inputs, so its length is n_a + n_b.
    """

    n_a: int
    n_b: int
    n_k: int = 0

    def __post_init__(self):
        if self.n_a < 0 or self.n_k < 0:
            raise ValueError("n_a and n_k must be non-negative")
        if self.n_b < 1:
            raise ValueError("n_b must be >= 1")

    @property
    def n_y(self) -> int:
        """Number of output entries in the regressor."""
        return self.n_a + 1

    @property
    def n_u(self) -> int:
        """Number of past-input entries in the regressor."""
        return self.n_b - 1

    @property
    def length(self) -> int:
        return self.n_a + self.n_b

    def y_shifts(self) -> np.ndarray:
        """Time shifts (relative to k) of the output entries, descending."""
        return np.arange(self.n_k + 1, self.n_k - self.n_a, -1)

    def u_shifts(self) -> np.ndarray:
        """Time shifts of the past-input entries: -1, ..., -(n_b-1)."""
        return np.arange(-1, -self.n_b, -1)

    def to_dict(self) -> dict:
        return {"n_a": self.n_a, "n_b": self.n_b, "n_k": self.n_k}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressorSpec":
        return cls(int(d["n_a"]), int(d["n_b"]), int(d["n_k"]))


@dataclass(frozen=True)
class DataSet:
    """Regressor matrix ``phi`` (N x spec.length), targets ``u`` (N,),
    sampling time ``T_s``.  Immutable after construction."""

    phi: np.ndarray
    u: np.ndarray
    spec: RegressorSpec
    T_s: float

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        u = np.asarray(self.u, dtype=float).ravel()
        if phi.shape[0] != u.shape[0]:
            raise ValueError("phi and u sample counts differ")
        if phi.shape[0] < 1:
            raise ValueError("data set must contain at least one sample")
        if phi.shape[1] != self.spec.length:
            raise ValueError(
                f"regressor length {phi.shape[1]} does not match spec "
                f"length {self.spec.length}"
            )
        phi.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "u", u)

    @property
    def N(self) -> int:
        return self.phi.shape[0]

    def y_part(self) -> np.ndarray:
        return self.phi[:, : self.spec.n_y]

    def u_part(self) -> np.ndarray:
        return self.phi[:, self.spec.n_y :]

    def subset(self, idx) -> "DataSet":
        return DataSet(self.phi[idx], self.u[idx], self.spec, self.T_s)

    def to_csv(self, path) -> None:
        """Emit one row per sample: regressor coordinates then target."""
        header = (
            [f"y_lead{s}" for s in self.spec.y_shifts()]
            + [f"u_lag{-s}" for s in self.spec.u_shifts()]
            + ["u_target"]
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.N):
                w.writerow(
                    [repr(v) for v in self.phi[i]] + [repr(self.u[i])]
                )


@dataclass(frozen=True)
class DiffOperators:
    """Central-difference operator delta = (q - q^-1)/(2 T_s) and the
    half-sample average Delta = (q + 1)/2."""

    T_s: float

    def delta(self, signal: np.ndarray, order: int = 1) -> np.ndarray:
        return apply_delta(signal, self, order)

    def avg(self, signal: np.ndarray) -> np.ndarray:
        return apply_avg(signal)


def apply_delta(signal, ops: DiffOperators, order: int = 1) -> np.ndarray:
    """Apply the central-difference operator ``order`` times.

    Output is shorter by 2*order samples (edges truncated, never padded).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x = np.asarray(signal, dtype=float)
    if x.size < 2 * order + 1:
        raise ValueError(
            f"signal of length {x.size} too short for delta^{order} "
            f"(needs at least {2 * order + 1})"
        )
    for _ in range(order):
        x = (x[2:] - x[:-2]) / (2.0 * ops.T_s)
    return x


def apply_avg(signal) -> np.ndarray:
    """Half-sample average Delta x(k) = (x(k+1) + x(k))/2; one sample shorter."""
    x = np.asarray(signal, dtype=float)
    if x.size < 2:
        raise ValueError("signal too short for Delta")
    return 0.5 * (x[1:] + x[:-1])


def build_regressors(t, u, y, spec: RegressorSpec, T_s: float | None = None) -> DataSet:
    """Build the inverse-dynamics data set from a uniformly sampled log.

    Boundary samples without full lead/lag context are dropped.
    """
    t = np.asarray(t, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if u.size != n or t.size != n:
        raise ValueError("t, u, y must have equal length")
    if T_s is None:
        if n < 2:
            raise ValueError("cannot infer T_s from a log of one sample")
        T_s = float(t[1] - t[0])

    # valid k: all shifts in range
    k_lo = max(spec.n_a - spec.n_k - 1, spec.n_b - 1, 0)
    k_hi = n - 1 - (spec.n_k + 1)  # inclusive
    if k_hi < k_lo:
        raise ValueError(
            f"log of {n} samples too short for spec "
            f"(n_a={spec.n_a}, n_b={spec.n_b}, n_k={spec.n_k})"
        )
    k = np.arange(k_lo, k_hi + 1)
    cols = [y[k + s] for s in spec.y_shifts()]
    cols += [u[k + s] for s in spec.u_shifts()]
    phi = np.column_stack(cols) if cols else np.empty((k.size, 0))
    return DataSet(phi, u[k], spec, T_s)


def split_train_val(ds: DataSet, fraction: float = 0.7, seed: int = 0):
    """Random disjoint split into (train, val); reproducible from seed."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n_train = int(round(ds.N * fraction))
    if n_train == 0 or n_train == ds.N:
        raise ValueError("split would produce an empty partition")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.N)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-coordinate affine maps x -> (x - shift)/scale.

    Population (1/N) variance convention.  Zero-variance coordinates keep
    scale 1 so the map stays invertible.
    """

    shift: np.ndarray
    scale: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.scale + self.shift

    @classmethod
    def identity(cls, width: int) -> "NormalizationRecord":
        return cls(np.zeros(width), np.ones(width))

    @classmethod
    def fit(cls, x: np.ndarray) -> "NormalizationRecord":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] < 2:
            raise ValueError("need at least two samples to normalize")
        shift = x.mean(axis=0)
        scale = x.std(axis=0)  # population convention
        scale = np.where(scale > 0.0, scale, 1.0)
        return cls(shift, scale)

    def to_dict(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationRecord":
        return cls(np.asarray(d["shift"], float), np.asarray(d["scale"], float))


def normalize_inputs(ds: DataSet):
    """Affinely map each regressor coordinate to zero mean, unit variance.

    Returns the normalized data set and the record needed to invert the
    map at inference time.
    """
    rec = NormalizationRecord.fit(ds.phi)
    return DataSet(rec.apply(ds.phi), ds.u, ds.spec, ds.T_s), rec


def read_log_csv(path):
    """Read a ``t,u,y`` log; returns (t, u, y) arrays."""
    rows = np.genfromtxt(path, delimiter=",", names=True)
    for name in ("t", "u", "y"):
        if name not in (rows.dtype.names or ()):
            raise ValueError(f"log {path} missing column '{name}'")
    return (
        np.atleast_1d(rows["t"]),
        np.atleast_1d(rows["u"]),
        np.atleast_1d(rows["y"]),
    )


def write_log_csv(path, t, u, y) -> None:
    """Write a ``t,u,y`` log with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "y"])
        for row in zip(t, u, y):
            w.writerow([repr(float(v)) for v in row])


def dataset_to_json(ds: DataSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "spec": ds.spec.to_dict(),
                "T_s": ds.T_s,
                "phi": ds.phi.tolist(),
                "u": ds.u.tolist(),
            },
            fh,
        )
