"""Canonical tube/detection/track types and their NDJSON file formats.

Files are newline-delimited JSON, UTF-8, with a one-record header carrying a
``schema`` tag. Coordinates and scores are serialized with six fractional
digits, which makes save -> load -> save byte-identical for canonical files.
Frame indices are 0-based everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, TubeGeometry
from .jsonfmt import dumps

__all__ = [
    "GT_SCHEMA",
    "DET_SCHEMA",
    "TRACK_SCHEMA",
    "TUBE_SCHEMA",
    "TRACK_SCORES_SCHEMA",
    "FileFormatError",
    "DatasetConfig",
    "Detection",
    "FrameDetections",
    "GroundTruthTube",
    "Track",
    "ActionTube",
    "TrackScores",
    "builtin_config",
    "load_config",
    "load_ground_truth",
    "save_ground_truth",
    "load_detections",
    "save_detections",
    "load_tracks",
    "save_tracks",
    "load_action_tubes",
    "save_action_tubes",
    "load_track_scores",
    "save_track_scores",
]

GT_SCHEMA = "tubekit.gt.v1"
DET_SCHEMA = "tubekit.det.v1"
TRACK_SCHEMA = "tubekit.track.v1"
TUBE_SCHEMA = "tubekit.tube.v1"
TRACK_SCORES_SCHEMA = "tubekit.trackscores.v1"


class FileFormatError(ValueError):
    """A file failed to parse or validate; message carries path and line."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


# ---------------------------------------------------------------------------
# dataset configuration


@dataclass(frozen=True)
class DatasetConfig:
    """Per-dataset constants: frame rate, class labels, motion bins and offsets."""

    name: str
    fps: int
    class_names: tuple
    motion_bins: tuple
    motion_offsets: tuple

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "motion_bins", tuple(float(b) for b in self.motion_bins))
        object.__setattr__(self, "motion_offsets", tuple(int(d) for d in self.motion_offsets))
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.motion_bins) != 2:
            raise ValueError("motion_bins must hold two thresholds")
        b1, b2 = self.motion_bins
        if not (0.0 < b1 < b2 < 1.0):
            raise ValueError(f"motion bins must satisfy 0 < b1 < b2 < 1, got ({b1}, {b2})")
        if not self.motion_offsets or any(d <= 0 for d in self.motion_offsets):
            raise ValueError("motion offsets must be positive integers")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


_UCF24_CLASSES = (
    "Basketball", "BasketballDunk", "Biking", "CliffDiving", "CricketBowling",
    "Diving", "Fencing", "FloorGymnastics", "GolfSwing", "HorseRiding",
    "IceDancing", "LongJump", "PoleVault", "RopeClimbing", "SalsaSpin",
    "SkateBoarding", "Skiing", "Skijet", "SoccerJuggling", "Surfing",
    "TennisSwing", "TrampolineJumping", "VolleyballSpiking", "WalkingWithDog",
)

_MOTION_OFFSETS = (4, 8, 16, 24, 36)


def builtin_config(name: str) -> DatasetConfig:
    """Return the built-in configuration for ``multisports`` or ``ucf24``."""
    if name == "multisports":
        # 60 evaluated classes; the official label vocabulary is not embedded.
        return DatasetConfig(
            name="multisports",
            fps=25,
            class_names=tuple(f"action_{i:02d}" for i in range(60)),
            motion_bins=(0.21, 0.51),
            motion_offsets=_MOTION_OFFSETS,
        )
    if name == "ucf24":
        return DatasetConfig(
            name="ucf24",
            fps=25,
            class_names=_UCF24_CLASSES,
            motion_bins=(0.49, 0.66),
            motion_offsets=_MOTION_OFFSETS,
        )
    raise ValueError(f"unknown dataset '{name}' (expected 'multisports' or 'ucf24')")


def load_config(path) -> DatasetConfig:
    """Read a DatasetConfig from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise FileFormatError(path, 1, "config must be a JSON object")
    required = {"name", "fps", "class_names", "motion_bins", "motion_offsets"}
    missing = required - set(obj)
    if missing:
        raise FileFormatError(path, 1, f"config missing fields: {sorted(missing)}")
    try:
        return DatasetConfig(
            name=obj["name"],
            fps=int(obj["fps"]),
            class_names=tuple(obj["class_names"]),
            motion_bins=tuple(obj["motion_bins"]),
            motion_offsets=tuple(obj["motion_offsets"]),
        )
    except (TypeError, ValueError) as exc:
        raise FileFormatError(path, 1, f"bad config: {exc}") from None


# ---------------------------------------------------------------------------
# record types


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    score: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class id must be >= 0, got {self.class_id}")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass
class FrameDetections:
    """Scored per-class box proposals for one frame of one video."""

    video_id: str
    frame: int
    entries: list

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame must be >= 0, got {self.frame}")


@dataclass
class GroundTruthTube:
    video_id: str
    tube_id: str
    class_id: int
    geometry: TubeGeometry

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class id must be >= 0, got {self.class_id}")

    @property
    def key(self):
        return (self.video_id, self.tube_id)


@dataclass
class Track:
    """Class-agnostic actor track, optionally with per-frame detector confidences."""

    video_id: str
    track_id: str
    geometry: TubeGeometry
    box_scores: list | None = None

    def __post_init__(self):
        if self.box_scores is not None:
            if len(self.box_scores) != len(self.geometry):
                raise ValueError(
                    f"track '{self.track_id}': {len(self.box_scores)} scores for "
                    f"{len(self.geometry)} boxes"
                )
            for s in self.box_scores:
                if not (math.isfinite(s) and 0.0 <= s <= 1.0):
                    raise ValueError(f"track '{self.track_id}': score {s} outside [0, 1]")

    @property
    def key(self):
        return (self.video_id, self.track_id)


@dataclass
class ActionTube:
    """A detected, temporally trimmed action tube with per-frame scores."""

    video_id: str
    class_id: int
    geometry: TubeGeometry
    frame_scores: list
    tube_score: float = field(default=None)

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class id must be >= 0, got {self.class_id}")
        if len(self.frame_scores) != len(self.geometry):
            raise ValueError(
                f"{len(self.frame_scores)} frame scores for {len(self.geometry)} boxes"
            )
        for s in self.frame_scores:
            if not (math.isfinite(s) and 0.0 <= s <= 1.0):
                raise ValueError(f"frame score {s} outside [0, 1]")
        mean = sum(self.frame_scores) / len(self.frame_scores)
        if self.tube_score is None:
            self.tube_score = mean
        elif abs(self.tube_score - mean) > 1e-5:
            raise ValueError(
                f"tube score {self.tube_score} disagrees with mean frame score {mean}"
            )


@dataclass
class TrackScores:
    """Per-frame class score vectors aligned with one track's geometry."""

    video_id: str
    track_id: str
    start_frame: int
    scores: np.ndarray  # (frames, classes)

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"track '{self.track_id}': scores must be a non-empty matrix")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"track '{self.track_id}': scores outside [0, 1]")
        arr.setflags(write=False)
        self.scores = arr

    @property
    def key(self):
        return (self.video_id, self.track_id)


# ---------------------------------------------------------------------------
# NDJSON plumbing


def _reject_constant(token):
    raise ValueError(f"non-finite number '{token}' not allowed")


def _iter_records(path, schema: str):
    """Yield (lineno, record dict) after checking the header line."""
    with open(path, "r", encoding="utf-8") as fh:
        saw_header = False
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except (json.JSONDecodeError, ValueError) as exc:
                raise FileFormatError(path, lineno, f"invalid JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise FileFormatError(path, lineno, "record must be a JSON object")
            if not saw_header:
                if obj != {"schema": schema}:
                    raise FileFormatError(
                        path, lineno, f'expected header {{"schema":"{schema}"}}'
                    )
                saw_header = True
                continue
            yield lineno, obj


def _check_fields(path, lineno, obj, required, optional=()):
    keys = set(obj)
    missing = set(required) - keys
    if missing:
        raise FileFormatError(path, lineno, f"missing fields: {sorted(missing)}")
    unknown = keys - set(required) - set(optional)
    if unknown:
        raise FileFormatError(path, lineno, f"unknown fields: {sorted(unknown)}")


def _get_str(path, lineno, obj, key) -> str:
    v = obj[key]
    if not isinstance(v, str) or not v:
        raise FileFormatError(path, lineno, f"field '{key}' must be a non-empty string")
    return v


def _get_int(path, lineno, obj, key, minimum=None) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise FileFormatError(path, lineno, f"field '{key}' must be an integer")
    if minimum is not None and v < minimum:
        raise FileFormatError(path, lineno, f"field '{key}' must be >= {minimum}, got {v}")
    return v


def _get_number(path, lineno, value, what) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FileFormatError(path, lineno, f"{what} must be a number")
    return float(value)


def _get_boxes(path, lineno, obj, key="boxes") -> list:
    v = obj[key]
    if not isinstance(v, list) or not v:
        raise FileFormatError(path, lineno, f"field '{key}' must be a non-empty list")
    rows = []
    for i, row in enumerate(v):
        if not isinstance(row, list) or len(row) != 4:
            raise FileFormatError(path, lineno, f"{key}[{i}] must be [x1,y1,x2,y2]")
        rows.append([_get_number(path, lineno, c, f"{key}[{i}]") for c in row])
    return rows


def _get_scores(path, lineno, obj, key, expected_len=None) -> list:
    v = obj[key]
    if not isinstance(v, list):
        raise FileFormatError(path, lineno, f"field '{key}' must be a list")
    vals = [_get_number(path, lineno, s, f"{key}[{i}]") for i, s in enumerate(v)]
    for i, s in enumerate(vals):
        if not 0.0 <= s <= 1.0:
            raise FileFormatError(path, lineno, f"{key}[{i}] = {s} outside [0, 1]")
    if expected_len is not None and len(vals) != expected_len:
        raise FileFormatError(
            path, lineno, f"field '{key}' has {len(vals)} entries, expected {expected_len}"
        )
    return vals


def _check_class(path, lineno, class_id, config):
    if config is not None and class_id >= config.num_classes:
        raise FileFormatError(
            path, lineno,
            f"class {class_id} outside the {config.num_classes}-class '{config.name}' vocabulary",
        )


def _wrap(path, lineno, fn):
    try:
        return fn()
    except ValueError as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(path, lineno, str(exc)) from None


def _write_lines(path, schema: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps({"schema": schema}) + "\n")
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# ground truth


def load_ground_truth(path, config: DatasetConfig | None = None) -> list:
    """Load ground-truth tubes, sorted by (video, tube). Duplicate ids are errors."""
    tubes = []
    seen = set()
    for lineno, obj in _iter_records(path, GT_SCHEMA):
        _check_fields(path, lineno, obj, ("video", "tube", "class", "start", "boxes"))
        video = _get_str(path, lineno, obj, "video")
        tube = _get_str(path, lineno, obj, "tube")
        class_id = _get_int(path, lineno, obj, "class", minimum=0)
        _check_class(path, lineno, class_id, config)
        start = _get_int(path, lineno, obj, "start", minimum=0)
        boxes = _get_boxes(path, lineno, obj)
        if (video, tube) in seen:
            raise FileFormatError(path, lineno, f"duplicate tube '{tube}' in video '{video}'")
        seen.add((video, tube))
        geom = _wrap(path, lineno, lambda: TubeGeometry(start, boxes))
        tubes.append(_wrap(path, lineno, lambda: GroundTruthTube(video, tube, class_id, geom)))
    tubes.sort(key=lambda t: t.key)
    return tubes


def save_ground_truth(tubes, path) -> None:
    lines = []
    for t in sorted(tubes, key=lambda t: t.key):
        lines.append(dumps({
            "video": t.video_id,
            "tube": t.tube_id,
            "class": int(t.class_id),
            "start": int(t.geometry.start_frame),
            "boxes": t.geometry.boxes,
        }))
    _write_lines(path, GT_SCHEMA, lines)


# ---------------------------------------------------------------------------
# frame detections


def load_detections(path, config: DatasetConfig | None = None) -> list:
    """Load per-frame detections, sorted by (video, frame)."""
    frames = []
    seen = set()
    for lineno, obj in _iter_records(path, DET_SCHEMA):
        _check_fields(path, lineno, obj, ("video", "frame", "dets"))
        video = _get_str(path, lineno, obj, "video")
        frame = _get_int(path, lineno, obj, "frame", minimum=0)
        if (video, frame) in seen:
            raise FileFormatError(path, lineno, f"duplicate frame {frame} in video '{video}'")
        seen.add((video, frame))
        dets = obj["dets"]
        if not isinstance(dets, list):
            raise FileFormatError(path, lineno, "field 'dets' must be a list")
        entries = []
        for i, row in enumerate(dets):
            if not isinstance(row, list) or len(row) != 6:
                raise FileFormatError(
                    path, lineno, f"dets[{i}] must be [x1,y1,x2,y2,class,score]"
                )
            coords = [_get_number(path, lineno, c, f"dets[{i}]") for c in row[:4]]
            if isinstance(row[4], bool) or not isinstance(row[4], int) or row[4] < 0:
                raise FileFormatError(path, lineno, f"dets[{i}] class must be an integer >= 0")
            _check_class(path, lineno, row[4], config)
            score = _get_number(path, lineno, row[5], f"dets[{i}] score")
            if not 0.0 <= score <= 1.0:
                raise FileFormatError(path, lineno, f"dets[{i}] score {score} outside [0, 1]")
            box = _wrap(path, lineno, lambda: Box(*coords))
            entries.append(Detection(box, row[4], score))
        frames.append(_wrap(path, lineno, lambda: FrameDetections(video, frame, entries)))
    frames.sort(key=lambda fd: (fd.video_id, fd.frame))
    return frames


def save_detections(frames, path) -> None:
    lines = []
    for fd in sorted(frames, key=lambda fd: (fd.video_id, fd.frame)):
        dets = [
            [d.box.x1, d.box.y1, d.box.x2, d.box.y2, int(d.class_id), d.score]
            for d in fd.entries
        ]
        lines.append(dumps({"video": fd.video_id, "frame": int(fd.frame), "dets": dets}))
    _write_lines(path, DET_SCHEMA, lines)


# ---------------------------------------------------------------------------
# tracks


def load_tracks(path) -> list:
    """Load tracks, sorted by (video, track)."""
    tracks = []
    seen = set()
    for lineno, obj in _iter_records(path, TRACK_SCHEMA):
        _check_fields(path, lineno, obj, ("video", "track", "start", "boxes"), ("scores",))
        video = _get_str(path, lineno, obj, "video")
        track = _get_str(path, lineno, obj, "track")
        start = _get_int(path, lineno, obj, "start", minimum=0)
        boxes = _get_boxes(path, lineno, obj)
        scores = None
        if "scores" in obj:
            scores = _get_scores(path, lineno, obj, "scores", expected_len=len(boxes))
        if (video, track) in seen:
            raise FileFormatError(path, lineno, f"duplicate track '{track}' in video '{video}'")
        seen.add((video, track))
        geom = _wrap(path, lineno, lambda: TubeGeometry(start, boxes))
        tracks.append(_wrap(path, lineno, lambda: Track(video, track, geom, scores)))
    tracks.sort(key=lambda t: t.key)
    return tracks


def save_tracks(tracks, path) -> None:
    lines = []
    for t in sorted(tracks, key=lambda t: t.key):
        rec = {
            "video": t.video_id,
            "track": t.track_id,
            "start": int(t.geometry.start_frame),
            "boxes": t.geometry.boxes,
        }
        if t.box_scores is not None:
            rec["scores"] = [float(s) for s in t.box_scores]
        lines.append(dumps(rec))
    _write_lines(path, TRACK_SCHEMA, lines)


# ---------------------------------------------------------------------------
# action tubes


def load_action_tubes(path, config: DatasetConfig | None = None) -> list:
    """Load detected action tubes, sorted by (video, class, start)."""
    tubes = []
    for lineno, obj in _iter_records(path, TUBE_SCHEMA):
        _check_fields(
            path, lineno, obj, ("video", "class", "start", "boxes", "frame_scores", "score")
        )
        video = _get_str(path, lineno, obj, "video")
        class_id = _get_int(path, lineno, obj, "class", minimum=0)
        _check_class(path, lineno, class_id, config)
        start = _get_int(path, lineno, obj, "start", minimum=0)
        boxes = _get_boxes(path, lineno, obj)
        frame_scores = _get_scores(path, lineno, obj, "frame_scores", expected_len=len(boxes))
        score = _get_number(path, lineno, obj["score"], "field 'score'")
        if not 0.0 <= score <= 1.0:
            raise FileFormatError(path, lineno, f"field 'score' = {score} outside [0, 1]")
        geom = _wrap(path, lineno, lambda: TubeGeometry(start, boxes))
        tubes.append(
            _wrap(path, lineno, lambda: ActionTube(video, class_id, geom, frame_scores, score))
        )
    tubes.sort(key=lambda t: (t.video_id, t.class_id, t.geometry.start_frame))
    return tubes


def save_action_tubes(tubes, path) -> None:
    lines = []
    ordered = sorted(tubes, key=lambda t: (t.video_id, t.class_id, t.geometry.start_frame))
    for t in ordered:
        lines.append(dumps({
            "video": t.video_id,
            "class": int(t.class_id),
            "start": int(t.geometry.start_frame),
            "boxes": t.geometry.boxes,
            "frame_scores": [float(s) for s in t.frame_scores],
            "score": float(t.tube_score),
        }))
    _write_lines(path, TUBE_SCHEMA, lines)


# ---------------------------------------------------------------------------
# per-track class scores (input to track trimming)


def load_track_scores(path) -> list:
    """Load per-track class score matrices, sorted by (video, track)."""
    out = []
    seen = set()
    width = None
    for lineno, obj in _iter_records(path, TRACK_SCORES_SCHEMA):
        _check_fields(path, lineno, obj, ("video", "track", "start", "scores"))
        video = _get_str(path, lineno, obj, "video")
        track = _get_str(path, lineno, obj, "track")
        start = _get_int(path, lineno, obj, "start", minimum=0)
        rows = obj["scores"]
        if not isinstance(rows, list) or not rows:
            raise FileFormatError(path, lineno, "field 'scores' must be a non-empty list")
        mat = []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or not row:
                raise FileFormatError(path, lineno, f"scores[{i}] must be a non-empty list")
            vals = [_get_number(path, lineno, s, f"scores[{i}]") for s in row]
            if any(not 0.0 <= s <= 1.0 for s in vals):
                raise FileFormatError(path, lineno, f"scores[{i}] outside [0, 1]")
            if width is None:
                width = len(vals)
            if len(vals) != width:
                raise FileFormatError(
                    path, lineno, f"scores[{i}] has {len(vals)} classes, expected {width}"
                )
            mat.append(vals)
        if (video, track) in seen:
            raise FileFormatError(path, lineno, f"duplicate track '{track}' in video '{video}'")
        seen.add((video, track))
        out.append(_wrap(path, lineno, lambda: TrackScores(video, track, start, np.array(mat))))
    out.sort(key=lambda t: t.key)
    return out


def save_track_scores(items, path) -> None:
    lines = []
    for ts in sorted(items, key=lambda t: t.key):
        lines.append(dumps({
            "video": ts.video_id,
            "track": ts.track_id,
            "start": int(ts.start_frame),
            "scores": ts.scores,
        }))
    _write_lines(path, TRACK_SCORES_SCHEMA, lines)
