"""Tube construction: greedy per-class linking, then temporal trimming.

Linking associates per-frame detections into paths by IoU gating, bridging
short gaps by replicating the last matched box. Trimming picks the
action-labeled sub-segments of a path by maximizing per-frame score
consistency minus a penalty per label change, solved exactly by dynamic
programming over the two-state chain.
"""

from __future__ import annotations

from dataclasses import dataclass

from .datamodel import ActionTube
from .geometry import TubeGeometry, iou2d
from .parallel import parallel_map

__all__ = [
    "LinkParams",
    "TrimParams",
    "LinkedPath",
    "greedy_link",
    "trim_path",
    "build_tubes",
    "tracks_to_tubes",
]


@dataclass(frozen=True)
class LinkParams:
    iou_gate: float = 0.1
    max_misses: int = 5
    min_len: int = 8

    def __post_init__(self):
        if not 0.0 <= self.iou_gate <= 1.0:
            raise ValueError(f"iou_gate {self.iou_gate} outside [0, 1]")
        if self.max_misses < 0:
            raise ValueError("max_misses must be >= 0")
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")


@dataclass(frozen=True)
class TrimParams:
    alpha: float = 3.0
    min_segment_length: int = 4

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if self.min_segment_length < 1:
            raise ValueError("min_segment_length must be >= 1")


@dataclass
class LinkedPath:
    """A finalized path: contiguous boxes with per-frame claimed scores.

    Frames bridged over a miss carry the last matched box and score 0.
    """

    class_id: int
    start_frame: int
    boxes: list
    scores: list

    def __len__(self) -> int:
        return len(self.boxes)


class _ActivePath:
    __slots__ = ("class_id", "start", "boxes", "scores", "score_sum",
                 "miss_count", "created")

    def __init__(self, class_id, frame, box, score, created):
        self.class_id = class_id
        self.start = frame
        self.boxes = [box]
        self.scores = [score]
        self.score_sum = score
        self.miss_count = 0
        self.created = created

    @property
    def mean_score(self) -> float:
        return self.score_sum / len(self.scores)

    def claim(self, box, score):
        self.boxes.append(box)
        self.scores.append(score)
        self.score_sum += score
        self.miss_count = 0

    def miss(self):
        self.boxes.append(self.boxes[-1])
        self.scores.append(0.0)
        self.miss_count += 1

    def finalized(self) -> LinkedPath | None:
        keep = len(self.boxes) - self.miss_count
        if keep <= 0:
            return None
        return LinkedPath(self.class_id, self.start, self.boxes[:keep], self.scores[:keep])


def greedy_link(frame_dets, class_id: int, params: LinkParams | None = None) -> list:
    """Link one video's detections of one class into paths.

    Frames are visited in order over the video's full frame span. Active
    paths, strongest mean score first, each claim the highest-scoring
    unclaimed detection overlapping their last box by at least the gate;
    paths that fail to claim append a placeholder and terminate once their
    miss run exceeds ``max_misses`` (the placeholder tail is dropped).
    Leftover detections seed new paths. Paths shorter than ``min_len`` are
    discarded.
    """
    params = params or LinkParams()
    by_frame = {}
    for fd in frame_dets:
        cands = [(d.box, d.score) for d in fd.entries if d.class_id == class_id]
        by_frame[fd.frame] = sorted(
            [(box, score, i) for i, (box, score) in enumerate(cands)],
            key=lambda c: (-c[1], c[2]),
        )
    if not by_frame:
        return []

    active: list = []
    finished: list = []
    created = 0

    def finish(path):
        done = path.finalized()
        if done is not None and len(done) >= params.min_len:
            finished.append((path.created, done))

    for t in range(min(by_frame), max(by_frame) + 1):
        cands = by_frame.get(t, [])
        claimed = [False] * len(cands)
        for p in sorted(active, key=lambda p: (-p.mean_score, p.created)):
            picked = None
            last = p.boxes[-1]
            for j, (box, score, _) in enumerate(cands):
                if claimed[j]:
                    continue
                if iou2d(last, box) >= params.iou_gate:
                    picked = j
                    break
            if picked is None:
                p.miss()
            else:
                claimed[picked] = True
                p.claim(cands[picked][0], cands[picked][1])
        survivors = []
        for p in active:
            if p.miss_count > params.max_misses:
                finish(p)
            else:
                survivors.append(p)
        active = survivors
        for j, (box, score, _) in enumerate(cands):
            if not claimed[j]:
                active.append(_ActivePath(class_id, t, box, score, created))
                created += 1
    for p in active:
        finish(p)
    finished.sort(key=lambda item: item[0])
    return [path for _, path in finished]


def trim_path(frame_scores, params: TrimParams | None = None) -> list:
    """Optimal binary labeling of a score sequence, returned as kept segments.

    Maximizes sum_t s_{L_t}(t) - alpha * (number of interior label changes),
    with s_1(t) the frame score and s_0(t) its complement. Ties prefer label
    0. Returns inclusive (start, end) index pairs for runs of label 1 at
    least ``min_segment_length`` long.
    """
    params = params or TrimParams()
    scores = [float(s) for s in frame_scores]
    if not scores:
        raise ValueError("frame_scores must be non-empty")
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"frame score {s} outside [0, 1]")
    a = params.alpha
    n = len(scores)

    prev0 = 1.0 - scores[0]
    prev1 = scores[0]
    back = []
    for t in range(1, n):
        switch_to0 = prev1 - a
        pred0 = 0 if prev0 >= switch_to0 else 1
        val0 = (1.0 - scores[t]) + (prev0 if pred0 == 0 else switch_to0)
        switch_to1 = prev0 - a
        pred1 = 0 if switch_to1 >= prev1 else 1
        val1 = scores[t] + (switch_to1 if pred1 == 0 else prev1)
        back.append((pred0, pred1))
        prev0, prev1 = val0, val1

    labels = [0] * n
    labels[-1] = 0 if prev0 >= prev1 else 1
    for t in range(n - 1, 0, -1):
        labels[t - 1] = back[t - 1][labels[t]]

    segments = []
    start = None
    for t, lab in enumerate(labels):
        if lab == 1 and start is None:
            start = t
        elif lab == 0 and start is not None:
            if t - start >= params.min_segment_length:
                segments.append((start, t - 1))
            start = None
    if start is not None and n - start >= params.min_segment_length:
        segments.append((start, n - 1))
    return segments


def build_tubes(detections, link_params: LinkParams | None = None,
                trim_params: TrimParams | None = None, jobs: int = 1) -> list:
    """Link then trim one or more videos' detections into action tubes."""
    link_params = link_params or LinkParams()
    trim_params = trim_params or TrimParams()
    by_video = {}
    for fd in detections:
        by_video.setdefault(fd.video_id, []).append(fd)

    def run_video(video_id):
        frames = by_video[video_id]
        classes = sorted({d.class_id for fd in frames for d in fd.entries})
        tubes = []
        for c in classes:
            for path in greedy_link(frames, c, link_params):
                for s, e in trim_path(path.scores, trim_params):
                    geom = TubeGeometry(path.start_frame + s, path.boxes[s : e + 1])
                    tubes.append(ActionTube(video_id, c, geom, path.scores[s : e + 1]))
        return tubes

    videos = sorted(by_video)
    out = []
    for tubes in parallel_map(run_video, videos, jobs):
        out.extend(tubes)
    out.sort(key=lambda t: (t.video_id, t.class_id, t.geometry.start_frame))
    return out


def tracks_to_tubes(tracks, track_scores, trim_params: TrimParams | None = None,
                    jobs: int = 1) -> list:
    """Trim already-linked tracks into per-class action tubes.

    ``track_scores`` maps (video, track) to a TrackScores whose matrix rows
    align 1:1 with the track's frames; every track must be covered.
    """
    trim_params = trim_params or TrimParams()
    if not isinstance(track_scores, dict):
        track_scores = {ts.key: ts for ts in track_scores}

    def run_track(tr):
        ts = track_scores.get(tr.key)
        if ts is None:
            raise ValueError(f"missing score vectors for track {tr.key}")
        if ts.start_frame != tr.geometry.start_frame or len(ts.scores) != len(tr.geometry):
            raise ValueError(
                f"score vectors for track {tr.key} cover frames "
                f"[{ts.start_frame}, {ts.start_frame + len(ts.scores) - 1}], track covers "
                f"[{tr.geometry.start_frame}, {tr.geometry.end_frame}]"
            )
        tubes = []
        for c in range(ts.scores.shape[1]):
            column = [float(v) for v in ts.scores[:, c]]
            for s, e in trim_path(column, trim_params):
                tubes.append(ActionTube(
                    tr.video_id, c, tr.geometry.slice(s, e), column[s : e + 1]
                ))
        return tubes

    out = []
    for tubes in parallel_map(run_track, list(tracks), jobs):
        out.extend(tubes)
    out.sort(key=lambda t: (t.video_id, t.class_id, t.geometry.start_frame))
    return out
