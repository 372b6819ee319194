"""Track-consistency filtering of frame detections.

Detectors occasionally emit confident but temporally inconsistent boxes.
Keeping only detections that overlap a track box on their frame lets the
score threshold stay liberal (0.05 by default) without flooding the
evaluation with spurious positives.
"""

from __future__ import annotations

from .datamodel import FrameDetections
from .geometry import iou2d

__all__ = ["filter_by_tracks"]


def filter_by_tracks(detections, tracks, match_iou: float = 0.5,
                     score_thresh: float = 0.05) -> list:
    """Keep detections that clear the score threshold and lie on a track.

    A detection survives iff score >= score_thresh and some track of the
    same video has a box at the same frame with IoU >= match_iou. Track
    class labels play no role. Per-frame ordering of survivors is preserved.
    """
    if not 0.0 <= match_iou <= 1.0:
        raise ValueError(f"match_iou {match_iou} outside [0, 1]")
    if not 0.0 <= score_thresh <= 1.0:
        raise ValueError(f"score_thresh {score_thresh} outside [0, 1]")

    track_boxes = {}
    for tr in tracks:
        geo = tr.geometry
        for i in range(len(geo)):
            frame = geo.start_frame + i
            track_boxes.setdefault((tr.video_id, frame), []).append(geo.box_at(frame))

    out = []
    for fd in detections:
        boxes = track_boxes.get((fd.video_id, fd.frame), ())
        kept = [
            d for d in fd.entries
            if d.score >= score_thresh and any(iou2d(d.box, b) >= match_iou for b in boxes)
        ]
        out.append(FrameDetections(fd.video_id, fd.frame, kept))
    return out
