"""Qubit array geometry and synthetic ground-truth fields.

Coordinates are measured in units of the inter-qubit spacing scaled by
``spacing``; site labels are 0-based row-major indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

FIELD_KINDS = ("square2d", "step1d", "gaussian2d", "external")


@dataclass(frozen=True)
class QubitArray:
    """Ordered site coordinates of a regular qubit grid."""

    sites: np.ndarray
    spacing: float = 1.0
    rows: int = 1
    cols: int = 1
    _dist: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        sites = np.asarray(self.sites, dtype=float)
        if sites.ndim != 2 or sites.shape[1] != 2 or len(sites) < 1:
            raise ValueError("sites must be a non-empty (d, 2) array")
        sites.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        diff = sites[:, None, :] - sites[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        dist.setflags(write=False)
        object.__setattr__(self, "_dist", dist)

    @property
    def d(self) -> int:
        return len(self.sites)

    @property
    def distances(self) -> np.ndarray:
        """Read-only (d, d) matrix of Euclidean site separations."""
        return self._dist

    @property
    def diameter(self) -> float:
        return float(self._dist.max())

    def check_site(self, i: int) -> int:
        if not (0 <= int(i) < self.d) or int(i) != i:
            raise ValueError(f"site label {i} out of range for d={self.d}")
        return int(i)


def build_grid(rows: int, cols: int, spacing: float = 1.0) -> QubitArray:
    """Row-major ``rows x cols`` grid; site k sits at (col, row) * spacing."""
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise ValueError(f"grid dimensions must be positive ints, got {rows}x{cols}")
    if not spacing > 0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    sites = np.column_stack([cc.ravel(), rr.ravel()]).astype(float) * spacing
    return QubitArray(sites=sites, spacing=float(spacing), rows=int(rows), cols=int(cols))


def distance(array: QubitArray, i: int, j: int) -> float:
    return float(array.distances[array.check_site(i), array.check_site(j)])


@dataclass(frozen=True)
class TrueField:
    values: np.ndarray
    kind: str = "external"

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("field values must be a non-empty vector")
        if np.any(~np.isfinite(values)) or values.min() < 0.0 or values.max() > np.pi:
            raise ValueError("field values must lie in [0, pi]")
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def make_field(
    array: QubitArray,
    kind: str,
    low: float = 0.25 * np.pi,
    high: float = 0.75 * np.pi,
    params: Mapping[str, Any] | None = None,
) -> TrueField:
    """Build a ground-truth phase map over ``array``.

    ``params`` per kind:

    * square2d: ``row_range`` and ``col_range`` as inclusive ``[start, stop]``
      index pairs of the high-valued block. Defaults to the central block.
    * step1d: ``split`` index; sites before it are ``low``. Defaults to d // 2.
    * gaussian2d: ``center`` (x, y) in coordinate units and ``sigma``.
    * external: ``values`` sequence, or ``path`` of a one-value-per-line CSV.
    """
    params = dict(params or {})
    if not (0.0 <= low <= high <= np.pi):
        raise ValueError(f"need 0 <= low <= high <= pi, got low={low}, high={high}")
    d = array.d
    if kind == "square2d":
        rows, cols = array.rows, array.cols
        r0, r1 = params.get("row_range", _central_range(rows))
        c0, c1 = params.get("col_range", _central_range(cols))
        rr, cc = np.divmod(np.arange(d), cols)
        inside = (rr >= r0) & (rr <= r1) & (cc >= c0) & (cc <= c1)
        values = np.where(inside, high, low)
    elif kind == "step1d":
        split = int(params.get("split", d // 2))
        if not 0 <= split <= d:
            raise ValueError(f"split {split} outside [0, {d}]")
        values = np.where(np.arange(d) < split, low, high)
    elif kind == "gaussian2d":
        center = np.asarray(params.get("center", array.sites.mean(axis=0)), dtype=float)
        sigma = float(params.get("sigma", array.spacing))
        if not sigma > 0:
            raise ValueError("gaussian2d sigma must be > 0")
        r2 = np.sum((array.sites - center) ** 2, axis=1)
        values = low + (high - low) * np.exp(-r2 / (2.0 * sigma**2))
        values = np.clip(values, low, high)
    elif kind == "external":
        if "path" in params:
            values = load_field_csv(params["path"])
        else:
            values = np.asarray(params.get("values", ()), dtype=float)
        if len(values) != d:
            raise ValueError(f"external field has {len(values)} values, array has {d} sites")
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    return TrueField(values=np.asarray(values, dtype=float), kind=kind)


def _central_range(n: int) -> Sequence[int]:
    # middle two indices for even n, middle one widened by one for odd n >= 3
    if n == 1:
        return (0, 0)
    lo = (n - 1) // 2
    return (lo, lo + 1)


def load_field_csv(path: str | Path) -> np.ndarray:
    text = Path(path).read_text().split()
    try:
        values = np.array([float(tok.strip(",")) for tok in text if tok.strip(",")])
    except ValueError as exc:
        raise ValueError(f"{path}: field CSV must hold one real value per line") from exc
    if values.size == 0:
        raise ValueError(f"{path}: empty field file")
    return values
