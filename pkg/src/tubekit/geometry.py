"""Axis-aligned box arithmetic and spatiotemporal tube overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Box", "TubeGeometry", "iou2d", "st_iou"]


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in continuous pixel coordinates, (x1, y1) <= (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (float(self.x1), float(self.y1), float(self.x2), float(self.y2))
        for v in coords:
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {coords}")
        object.__setattr__(self, "x1", coords[0])
        object.__setattr__(self, "y1", coords[1])
        object.__setattr__(self, "x2", coords[2])
        object.__setattr__(self, "y2", coords[3])
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


def iou2d(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Degenerate cases where the union has zero area return 0.0.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


class TubeGeometry:
    """A temporally contiguous run of boxes, one per frame from ``start_frame`` on.

    Boxes are stored as a read-only (n, 4) float64 array in (x1, y1, x2, y2)
    order; row i is the box at frame ``start_frame + i``.
    """

    __slots__ = ("start_frame", "boxes")

    def __init__(self, start_frame: int, boxes) -> None:
        self.start_frame = int(start_frame)
        if isinstance(boxes, np.ndarray):
            arr = np.array(boxes, dtype=np.float64)
        else:
            rows = []
            for b in boxes:
                if isinstance(b, Box):
                    rows.append((b.x1, b.y1, b.x2, b.y2))
                else:
                    rows.append(tuple(float(v) for v in b))
            arr = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] != 4:
            raise ValueError("tube geometry needs a non-empty (n, 4) box array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tube boxes must be finite")
        if np.any(arr[:, 2] < arr[:, 0]) or np.any(arr[:, 3] < arr[:, 1]):
            raise ValueError("tube box corners out of order")
        arr.setflags(write=False)
        self.boxes = arr

    def __len__(self) -> int:
        return self.boxes.shape[0]

    @property
    def end_frame(self) -> int:
        """Last covered frame, inclusive."""
        return self.start_frame + len(self) - 1

    def box_at(self, frame: int) -> Box:
        i = frame - self.start_frame
        if i < 0 or i >= len(self):
            raise IndexError(f"frame {frame} outside [{self.start_frame}, {self.end_frame}]")
        x1, y1, x2, y2 = self.boxes[i]
        return Box(x1, y1, x2, y2)

    def slice(self, start: int, end: int) -> "TubeGeometry":
        """Sub-tube covering local indices [start, end], inclusive."""
        if start < 0 or end >= len(self) or end < start:
            raise ValueError(f"bad slice [{start}, {end}] for tube of length {len(self)}")
        return TubeGeometry(self.start_frame + start, self.boxes[start : end + 1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TubeGeometry):
            return NotImplemented
        return self.start_frame == other.start_frame and np.array_equal(self.boxes, other.boxes)

    def __repr__(self) -> str:
        return f"TubeGeometry(start={self.start_frame}, length={len(self)})"


def st_iou(a: TubeGeometry, b: TubeGeometry) -> float:
    """Spatiotemporal overlap of two tubes.

    Temporal IoU of the two frame spans, multiplied by the mean per-frame
    box IoU over the frames both tubes cover. Disjoint spans give 0.0.
    """
    lo = max(a.start_frame, b.start_frame)
    hi = min(a.end_frame, b.end_frame)
    if hi < lo:
        return 0.0
    n_inter = hi - lo + 1
    n_union = len(a) + len(b) - n_inter
    total = 0.0
    for f in range(lo, hi + 1):
        total += iou2d(a.box_at(f), b.box_at(f))
    return (n_inter / n_union) * (total / n_inter)
