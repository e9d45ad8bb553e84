"""Extrapolation regularization set built by greedy farthest-point selection.

The operating region is an axis-aligned box over named physical features
(e.g. position and velocity).  Candidate points are enumerated on a uniform
grid; each greedy step picks the grid point maximizing the minimum squared
Euclidean distance to the training features and the points selected so far.
Distances are taken in normalized coordinates (each axis divided by its
interval width) so that incommensurable units compare meaningfully.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import RegressorSpec

__all__ = [
    "OperatingRegion",
    "ExtrapolationSet",
    "objective_c",
    "generate_ze",
    "lift_to_regressors",
    "project_to_region",
]


@dataclass(frozen=True)
class OperatingRegion:
    """Axis-aligned box: named feature axes with closed intervals and a
    per-axis grid resolution for candidate enumeration."""

    axes: tuple
    lo: np.ndarray
    hi: np.ndarray
    resolution: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, float).ravel()
        hi = np.asarray(self.hi, float).ravel()
        axes = tuple(self.axes)
        res = tuple(int(r) for r in self.resolution)
        if not (len(axes) == lo.size == hi.size == len(res)):
            raise ValueError("axes, bounds and resolution lengths differ")
        if lo.size == 0:
            raise ValueError("region must have at least one axis")
        if np.any(hi <= lo):
            raise ValueError("each interval must have positive width")
        if any(r < 2 for r in res):
            raise ValueError("resolution must be >= 2 per axis")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def grid(self) -> np.ndarray:
        """All candidate points, C-ordered (first axis slowest), so row
        index equals the lexicographic grid index."""
        axes_pts = [np.linspace(l, h, r) for l, h, r in
                    zip(self.lo, self.hi, self.resolution)]
        mesh = np.meshgrid(*axes_pts, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def contains(self, pts: np.ndarray, atol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo - atol) & (pts <= self.hi + atol), axis=1)

    def normalize(self, pts: np.ndarray) -> np.ndarray:
        return np.atleast_2d(pts) / self.width

    def to_dict(self) -> dict:
        return {
            "axes": list(self.axes),
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "resolution": list(self.resolution),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OperatingRegion":
        return cls(tuple(d["axes"]), d["lo"], d["hi"], tuple(d["resolution"]))


@dataclass
class ExtrapolationSet:
    """Selected points (E x dim, region coordinates) with the selection-time
    objective value of each point (normalized coordinates)."""

    points: np.ndarray
    objectives: np.ndarray
    region: OperatingRegion

    @property
    def E(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.region.axes) + ["objective"])
            for p, c in zip(self.points, self.objectives):
                w.writerow([repr(float(v)) for v in p] + [repr(float(c))])


def objective_c(zeta, z_n: np.ndarray, z_e: np.ndarray | None = None) -> float:
    """Minimum squared Euclidean distance from ``zeta`` to the pooled
    points Z^N union Z^E (coordinates as given; no normalization here)."""
    zeta = np.asarray(zeta, float).ravel()
    pools = [np.atleast_2d(p) for p in (z_n, z_e) if p is not None and np.size(p)]
    if not pools:
        raise ValueError("objective undefined over an empty pool")
    best = np.inf
    for pool in pools:
        d = pool - zeta
        best = min(best, float(np.min(np.einsum("ij,ij->i", d, d))))
    return best


def generate_ze(region: OperatingRegion, z_n: np.ndarray, e_max: int,
                eps: float = 0.0, chunk: int = 4096) -> ExtrapolationSet:
    """Greedy farthest-point selection over the region grid.

    Points are appended while fewer than ``e_max`` were chosen and the best
    objective still exceeds ``eps``.  Ties in the argmax break toward the
    lowest lexicographic grid index.  An empty result is valid when Z^N
    already eps-covers the region.
    """
    if e_max < 0:
        raise ValueError("e_max must be non-negative")
    grid = region.grid()
    gn = region.normalize(grid)
    z_n = np.atleast_2d(np.asarray(z_n, float))
    if z_n.shape[1] != region.dim:
        raise ValueError("Z^N feature dimension does not match the region")
    zn_n = region.normalize(z_n)

    # running min squared distance from each grid point to the pool
    mind = np.full(grid.shape[0], np.inf)
    for i in range(0, zn_n.shape[0], chunk):  # chunked: Z^N can be large
        blk = zn_n[i : i + chunk]
        d2 = ((gn[:, None, :] - blk[None, :, :]) ** 2).sum(axis=2)
        np.minimum(mind, d2.min(axis=1), out=mind)

    sel_idx, sel_obj = [], []
    while len(sel_idx) < e_max:
        j = int(np.argmax(mind))  # first max = lowest lex grid index
        c = float(mind[j])
        if c <= eps:
            break
        sel_idx.append(j)
        sel_obj.append(c)
        d2 = ((gn - gn[j]) ** 2).sum(axis=1)
        np.minimum(mind, d2, out=mind)

    return ExtrapolationSet(
        points=grid[sel_idx].reshape(len(sel_idx), region.dim),
        objectives=np.asarray(sel_obj),
        region=region,
    )


# ---------------------------------------------------------------------------
# Mapping between region features and full regressors

# supported axis names and their role in the local output trajectory
_KINEMATIC_AXES = ("y", "dy", "d2y")


def project_to_region(phi_y: np.ndarray, region: OperatingRegion,
                      T_s: float, shifts=None) -> np.ndarray:
    """Project output windows (N x n_y, descending time shifts ending at
    shift s_min) onto the region's kinematic axes.

    Position is the interior sample closest to shift 0 when the shift
    layout is given (the window middle otherwise); velocity and
    acceleration are central differences around it.
    """
    phi_y = np.atleast_2d(phi_y)
    n_y = phi_y.shape[1]
    cols = {}
    # windows are ordered [y(k+s_max), ..., y(k+s_min)]
    if shifts is not None:
        shifts = np.asarray(shifts).ravel()
        if shifts.size != n_y:
            raise ValueError("shift layout does not match the window width")
        mid = int(np.clip(np.argmin(np.abs(shifts)), 1, max(n_y - 2, 0)))
    else:
        mid = n_y // 2
    if mid == 0 or mid == n_y - 1:
        if any(a in region.axes for a in ("dy", "d2y")):
            raise ValueError("output window too short for derivative axes")
        mid = 0
    cols["y"] = phi_y[:, mid]
    if n_y >= 3 and 0 < mid < n_y - 1:
        cols["dy"] = (phi_y[:, mid - 1] - phi_y[:, mid + 1]) / (2.0 * T_s)
        cols["d2y"] = (
            phi_y[:, mid - 1] - 2.0 * phi_y[:, mid] + phi_y[:, mid + 1]
        ) / T_s**2
    try:
        return np.column_stack([cols[a] for a in region.axes])
    except KeyError as exc:
        raise ValueError(f"unsupported region axis {exc}") from exc


def lift_to_regressors(ze: ExtrapolationSet, spec: RegressorSpec,
                       T_s: float) -> np.ndarray:
    """Lift region points to full regressors (E x spec.length).

    Each point defines a local polynomial output trajectory from its
    kinematic axes; unmodeled coordinates (e.g. acceleration when absent
    from the region, and all past inputs) are set to zero.
    """
    for a in ze.region.axes:
        if a not in _KINEMATIC_AXES:
            raise ValueError(f"unsupported region axis '{a}'")
    vals = {a: np.zeros(ze.E) for a in _KINEMATIC_AXES}
    for i, a in enumerate(ze.region.axes):
        vals[a] = ze.points[:, i]
    shifts = spec.y_shifts()[None, :] * T_s  # (1 x n_y) physical offsets
    yw = (
        vals["y"][:, None]
        + vals["dy"][:, None] * shifts
        + 0.5 * vals["d2y"][:, None] * shifts**2
    )
    out = np.zeros((ze.E, spec.length))
    out[:, : spec.n_y] = yw
    return out
