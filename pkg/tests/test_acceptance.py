"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.
"""

import json
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from tubekit.aggregators import (
    ASPP_WEIGHT_SHAPES,
    CHANNELS,
    Conv1dSpec,
    aspp_forward,
    conv1d,
    random_weights,
)
from tubekit.datamodel import (
    Detection,
    FrameDetections,
    GroundTruthTube,
    Track,
    TrackScores,
    builtin_config,
    save_track_scores,
)
from tubekit.filtering import filter_by_tracks
from tubekit.geometry import Box, TubeGeometry, st_iou
from tubekit.linking import TrimParams, build_tubes, trim_path
from tubekit.metrics import evaluate_frames, evaluate_videos
from tubekit.motion import MotionCategory, MotionLabel, classify_motion
from tubekit.roialign import FeatureGrid, align_tracks, roi_align
from tubekit.synth import SynthSpec, generate
from tubekit.tensorfile import read_tensors, write_tensors

from oracles import (
    brute_frame_eval,
    brute_motion_eval,
    brute_st_iou,
    brute_video_eval,
    count_changes,
    exhaustive_trim_best,
    labeling_energy,
    naive_conv1d,
    naive_roi_align,
    segments_to_labels,
)
from test_metrics import random_frame_instance, random_video_instance


@contextmanager
def criterion(num, desc, max_seconds=None):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"FAIL criterion {num}: {desc}")
        raise
    elapsed = time.perf_counter() - start
    if max_seconds is not None:
        assert elapsed < max_seconds, (
            f"criterion {num} took {elapsed:.1f}s, limit {max_seconds}s"
        )
    print(f"PASS criterion {num}: {desc} ({elapsed:.2f}s)")


def test_criterion_1_motion_bins():
    with criterion(1, "builtin motion bins and boundary classification", 1.0):
        ms = builtin_config("multisports")
        ucf = builtin_config("ucf24")
        assert ms.motion_bins == (0.21, 0.51)
        assert ucf.motion_bins == (0.49, 0.66)
        assert ms.motion_offsets == (4, 8, 16, 24, 36)
        assert classify_motion(0.15, ms) == MotionCategory.LARGE
        assert classify_motion(0.21, ms) == MotionCategory.LARGE
        assert classify_motion(0.51, ms) == MotionCategory.MEDIUM
        assert classify_motion(0.70, ucf) == MotionCategory.SMALL
        assert classify_motion(0.49, ucf) == MotionCategory.LARGE
        assert classify_motion(0.66, ucf) == MotionCategory.MEDIUM


def _random_tube(rng, max_len=20):
    n = int(rng.integers(1, max_len + 1))
    start = int(rng.integers(0, 15))
    x, y = rng.uniform(0, 50, 2)
    dx, dy = rng.uniform(-3, 3, 2)
    w, h = rng.uniform(4, 25, 2)
    boxes = [(x + dx * t, y + dy * t, x + w + dx * t, y + h + dy * t) for t in range(n)]
    return TubeGeometry(start, boxes)


def test_criterion_2_st_iou_oracle():
    with criterion(2, "st-iou matches brute force on 1000 random pairs", 5.0):
        rng = np.random.default_rng(202)
        for _ in range(1000):
            a = _random_tube(rng)
            b = _random_tube(rng)
            got = st_iou(a, b)
            ref = brute_st_iou(a.start_frame, a.boxes, b.start_frame, b.boxes)
            assert abs(got - ref) <= 1e-12
        boxes = [(0, 0, 10, 10)] * 10
        assert st_iou(TubeGeometry(0, boxes), TubeGeometry(5, boxes)) == 1.0 / 3.0


def test_criterion_3_ap_oracle():
    with criterion(3, "frame and video AP match the exhaustive evaluator", 30.0):
        rng = np.random.default_rng(203)
        for _ in range(500):
            gts, dets = random_frame_instance(rng)
            report = evaluate_frames(dets, gts, 0.5)
            ref_ap, ref_map = brute_frame_eval(dets, gts, 0.5)
            assert set(report.per_class_ap) == set(ref_ap)
            for c, ap in ref_ap.items():
                assert abs(report.per_class_ap[c] - ap) <= 1e-12
            if ref_map is None:
                assert report.mean_ap is None
            else:
                assert abs(report.mean_ap - ref_map) <= 1e-12
        for _ in range(500):
            gts, tubes = random_video_instance(rng)
            report = evaluate_videos(tubes, gts, 0.5)
            ref_ap, ref_map = brute_video_eval(tubes, gts, 0.5)
            assert set(report.per_class_ap) == set(ref_ap)
            for c, ap in ref_ap.items():
                assert abs(report.per_class_ap[c] - ap) <= 1e-12


def test_criterion_4_motion_ignore_rule():
    with criterion(4, "motion positives partition GT and worked examples hold"):
        # worked example: one LARGE + one SMALL gt, both detected perfectly
        gts = [
            GroundTruthTube("v", "large", 0, TubeGeometry(0, [(0, 0, 10, 10)])),
            GroundTruthTube("v", "small", 0, TubeGeometry(1, [(30, 30, 40, 40)])),
        ]
        labels = {
            ("v", "large"): MotionLabel(0.1, MotionCategory.LARGE, (4,)),
            ("v", "small"): MotionLabel(0.9, MotionCategory.SMALL, (4,)),
        }
        dets = [
            FrameDetections("v", 0, [Detection(Box(0, 0, 10, 10), 0, 0.8)]),
            FrameDetections("v", 1, [Detection(Box(30, 30, 40, 40), 0, 0.9)]),
        ]
        report = evaluate_frames(dets, gts, 0.5, motion_labels=labels)
        assert report.per_motion[MotionCategory.LARGE].pooled_ap == 1.0
        assert report.per_motion[MotionCategory.SMALL].pooled_ap == 1.0
        assert report.per_motion[MotionCategory.MEDIUM].pooled_ap is None

        # all-small fixture: other categories report absent, not zero
        labels_small = {
            ("v", "large"): MotionLabel(0.9, MotionCategory.SMALL, (4,)),
            ("v", "small"): MotionLabel(0.9, MotionCategory.SMALL, (4,)),
        }
        report = evaluate_frames(dets, gts, 0.5, motion_labels=labels_small)
        assert report.per_motion[MotionCategory.SMALL].pooled_ap == 1.0
        assert report.per_motion[MotionCategory.SMALL].mean_ap == 1.0
        assert report.per_motion[MotionCategory.LARGE].num_positives == 0
        assert report.per_motion[MotionCategory.LARGE].pooled_ap is None

        # random mixed fixtures: partition + agreement with the brute oracle
        rng = np.random.default_rng(204)
        for _ in range(50):
            gts, dets = random_frame_instance(rng)
            if not gts:
                continue
            labels = {
                g.key: MotionLabel(0.5, MotionCategory(int(rng.integers(0, 3))), (4,))
                for g in gts
            }
            report = evaluate_frames(dets, gts, 0.5, motion_labels=labels)
            total = sum(len(g.geometry) for g in gts)
            assert sum(m.num_positives for m in report.per_motion.values()) == total
            ref = brute_motion_eval("frame", dets, gts, 0.5, labels)
            for cat in MotionCategory:
                n_ref, pooled_ref, mean_ref = ref[cat]
                m = report.per_motion[cat]
                assert m.num_positives == n_ref
                if pooled_ref is None:
                    assert m.pooled_ap is None
                else:
                    assert abs(m.pooled_ap - pooled_ref) <= 1e-12
                if mean_ref is None:
                    assert m.mean_ap is None
                else:
                    assert abs(m.mean_ap - mean_ref) <= 1e-12


def test_criterion_5_trim_dp_exhaustive():
    with criterion(5, "trim DP energy equals the 2^T maximum exactly", 60.0):
        rng = np.random.default_rng(205)
        alphas = (0.0, 0.5, 3.0)
        for i in range(200):
            n = (i % 14) + 1  # covers every T <= 14
            scores = [float(s) for s in rng.uniform(0, 1, n)]
            changes = []
            for alpha in alphas:
                segs = trim_path(scores, TrimParams(alpha=alpha, min_segment_length=1))
                labels = segments_to_labels(segs, n)
                dp_energy = labeling_energy(labels, scores, alpha)
                best, _ = exhaustive_trim_best(scores, alpha)
                assert dp_energy == best  # exact float equality
                changes.append(count_changes(labels))
            assert changes[0] >= changes[1] >= changes[2]


def test_criterion_6_end_to_end_closure():
    with criterion(6, "synthetic closure: clean v-mAP 1.0, drop-noise v-mAP >= 0.9", 120.0):
        clean = SynthSpec(seed=0, num_videos=20)
        gts, dets, _, _, _ = generate(clean)
        tubes = build_tubes(dets)
        report = evaluate_videos(tubes, gts, 0.5)
        assert report.mean_ap == pytest.approx(1.0, abs=1e-9)

        noisy = SynthSpec(seed=0, num_videos=20, drop_rate=0.1)
        gts, dets, _, _, _ = generate(noisy)
        tubes = build_tubes(dets)  # default max_misses = 5
        report = evaluate_videos(tubes, gts, 0.5)
        assert report.mean_ap >= 0.9


def test_criterion_7_roi_align():
    with criterion(7, "roi-align oracle, linearity, shift equivariance, replication"):
        rng = np.random.default_rng(207)
        for _ in range(200):
            c = int(rng.integers(1, 4))
            h = int(rng.integers(4, 9))
            w = int(rng.integers(4, 9))
            grid = rng.standard_normal((c, h, w))
            x1, y1 = rng.uniform(-30, 100, 2)
            box = Box(x1, y1, x1 + rng.uniform(0.5, 80), y1 + rng.uniform(0.5, 80))
            p = int(rng.integers(1, 5))
            s = int(rng.integers(1, 4))
            out = roi_align(grid, box, 16.0, output_size=p, sampling_ratio=s)
            ref = naive_roi_align(grid, box, 16.0, p, s)
            assert np.allclose(out, ref, atol=1e-6)

        a = rng.standard_normal((3, 8, 8))
        b = rng.standard_normal((3, 8, 8))
        box = Box(20, 12, 100, 90)
        lhs = roi_align(1.7 * a - 0.6 * b, box, 16.0)
        rhs = 1.7 * roi_align(a, box, 16.0) - 0.6 * roi_align(b, box, 16.0)
        assert np.allclose(lhs, rhs, atol=1e-9)

        grid = rng.standard_normal((1, 12, 12))
        shifted = np.roll(grid, (1, 2), axis=(1, 2))
        box = Box(4 * 16, 4 * 16, 7 * 16, 7 * 16)
        box2 = Box((4 + 2) * 16, (4 + 1) * 16, (7 + 2) * 16, (7 + 1) * 16)
        assert np.allclose(
            roi_align(grid, box, 16.0), roi_align(shifted, box2, 16.0), atol=1e-9
        )

        # track five frames shorter than the clip: tail replicates the last box
        feats = FeatureGrid(rng.standard_normal((10, 2, 6, 6)), 16.0)
        boxes = [(10 + 3 * t, 8, 40 + 3 * t, 44) for t in range(5)]
        tr = Track("v", "k", TubeGeometry(0, boxes))
        out = align_tracks(feats, [tr], output_size=3, sampling_ratio=2)
        assert out.shape == (1, 10, 2, 3, 3)
        last = Box(*boxes[-1])
        for f in range(5, 10):
            direct = roi_align(feats.values[f], last, 16.0, 3, 2)
            assert np.allclose(out[0, f], direct, atol=1e-12)


def test_criterion_8_tfa_kernels(tmp_path):
    with criterion(8, "conv oracle, dilation arithmetic, aspp checks, tensor round-trip"):
        rng = np.random.default_rng(208)
        dilations = [1, 2, 3, 5]
        for i in range(100):
            cin = int(rng.integers(1, 5))
            cout = int(rng.integers(1, 5))
            k = 3 if i < 60 else int(rng.choice([1, 3, 5]))
            d = dilations[i % 4] if k > 1 else 1
            p = int(rng.integers(0, 6))
            t_min = max(1, d * (k - 1) + 1 - 2 * p)
            t = int(rng.integers(t_min, t_min + 10))
            x = rng.standard_normal((t, cin))
            w = rng.standard_normal((cout, cin, k))
            b = rng.standard_normal(cout)
            spec = Conv1dSpec(cin, cout, k, padding=p, dilation=d)
            assert np.allclose(
                conv1d(x, spec, w, b), naive_conv1d(x, w, b, padding=p, dilation=d),
                atol=1e-6,
            )

        # K=3, d=2, p=2 preserves length for any T
        for t in (1, 2, 32):
            spec = Conv1dSpec(2, 2, 3, padding=2, dilation=2, has_bias=False)
            assert conv1d(np.zeros((t, 2)), spec, np.zeros((2, 2, 3))).shape[0] == t

        weights = random_weights("aspp", seed=208)
        for t in (1, 2, 32):
            out = aspp_forward(rng.standard_normal((t, CHANNELS)), weights)
            assert out.shape == (1, CHANNELS)
            assert np.all(out >= 0.0)

        store = {name: rng.standard_normal(shape).astype(np.float32)
                 for name, shape in ASPP_WEIGHT_SHAPES.items()}
        path = tmp_path / "weights.tkt"
        write_tensors(store, path)
        loaded = read_tensors(path)
        for name in store:
            assert np.array_equal(
                loaded[name].view(np.uint32), store[name].view(np.uint32)
            )


def test_criterion_9_filtering_properties():
    with criterion(9, "filter subset/monotone/idempotent plus the 0.05 example"):
        from test_filtering import random_fixture

        rng = np.random.default_rng(209)
        for _ in range(100):
            dets, tracks = random_fixture(rng)
            out = filter_by_tracks(dets, tracks, 0.3, 0.1)
            for fd_in, fd_out in zip(dets, out):
                for d in fd_out.entries:
                    assert d in fd_in.entries
            for tighter in (filter_by_tracks(dets, tracks, 0.3, 0.6),
                            filter_by_tracks(dets, tracks, 0.8, 0.1)):
                for fd_l, fd_t in zip(out, tighter):
                    for d in fd_t.entries:
                        assert d in fd_l.entries
            assert filter_by_tracks(out, tracks, 0.3, 0.1) == out

        dets = [FrameDetections("v", 0, [Detection(Box(0, 0, 10, 10), 0, 0.06)])]
        tracks = [Track("v", "k", TubeGeometry(0, [(0, 0, 10, 10)]))]
        kept = filter_by_tracks(dets, tracks, match_iou=0.5, score_thresh=0.05)
        assert len(kept[0].entries) == 1


def _run(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "tubekit", *[str(a) for a in args]],
        capture_output=True,
    )
    assert proc.returncode == 0, proc.stderr.decode()
    return proc.stdout


def test_criterion_10_cli_determinism(tmp_path):
    with criterion(10, "every subcommand is byte-deterministic, jobs-invariant"):
        spec = {
            "seed": 23, "num_videos": 2, "frames_per_video": 16,
            "num_classes": 2, "tubes_per_video": 2,
            "motion_targets": [1.0, 0.3],
        }
        fspec = dict(spec)
        fspec.update(num_videos=1, frames_per_video=8, emit_features=True,
                     feature_cells=6)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        fspec_path = tmp_path / "fspec.json"
        fspec_path.write_text(json.dumps(fspec))

        def file_bytes(folder):
            return {
                p.relative_to(folder): p.read_bytes()
                for p in sorted(folder.rglob("*")) if p.is_file()
            }

        # synth twice
        out_a, out_b = tmp_path / "sa", tmp_path / "sb"
        stdout_a = _run("synth", "--spec", spec_path, "--out", out_a)
        stdout_b = _run("synth", "--spec", spec_path, "--out", out_b)
        assert stdout_a.replace(bytes(out_a), b"") == stdout_b.replace(bytes(out_b), b"")
        assert {k: v for k, v in file_bytes(out_a).items()} == \
               {k: v for k, v in file_bytes(out_b).items()}
        feat_out = tmp_path / "sf"
        _run("synth", "--spec", fspec_path, "--out", feat_out)

        gt = out_a / "gt.ndjson"
        det = out_a / "detections.ndjson"
        tracks = out_a / "tracks.ndjson"

        # per-track class scores derived deterministically from the oracle
        oracle = json.loads((out_a / "oracle.json").read_text())
        class_of = {(r["video"], r["tube"]): r["class"] for r in oracle["tubes"]}
        import tubekit.datamodel as dm

        trs = dm.load_tracks(tracks)
        score_items = []
        for tr in trs:
            mat = np.full((len(tr.geometry), spec["num_classes"]), 0.02)
            mat[:, class_of[(tr.video_id, tr.track_id)]] = 0.95
            score_items.append(TrackScores(tr.video_id, tr.track_id,
                                           tr.geometry.start_frame, mat))
        scores_path = tmp_path / "scores.ndjson"
        save_track_scores(score_items, scores_path)

        weights_path = tmp_path / "tcn.tkt"
        write_tensors(random_weights("tcn", seed=0), weights_path)

        tubes_path = tmp_path / "tubes.ndjson"
        _run("build-tubes", "--det", det, "--out", tubes_path)

        runs = {
            "eval-frames": ("eval-frames", "--gt", gt, "--det", det,
                            "--dataset", "multisports", "--iou", "0.5", "--motion"),
            "eval-videos": ("eval-videos", "--gt", gt, "--tubes", tubes_path,
                            "--dataset", "multisports", "--st-iou", "0.5", "--motion"),
            "eval-videos-sweep": ("eval-videos", "--gt", gt, "--tubes", tubes_path,
                                  "--sweep", "0.1:0.9:0.1"),
            "label-motion": ("label-motion", "--gt", gt, "--dataset", "multisports",
                             "--out", tmp_path / "labels.json"),
            "motion-cdf": ("motion-cdf", "--gt", gt, "--edges", "0:1:0.1",
                           "--out", tmp_path / "cdf.csv"),
            "build-tubes": ("build-tubes", "--det", det, "--out", tmp_path / "bt.ndjson"),
            "trim-tracks": ("trim-tracks", "--tracks", tracks, "--scores", scores_path,
                            "--out", tmp_path / "tt.ndjson"),
            "filter-dets": ("filter-dets", "--det", det, "--tracks", tracks,
                            "--score-thresh", "0.05", "--match-iou", "0.5",
                            "--out", tmp_path / "fd.ndjson"),
            "pool-features": ("pool-features", "--features",
                              feat_out / "features" / "v000.tkt",
                              "--tracks", feat_out / "tracks.ndjson",
                              "--tfa", "tcn", "--weights", weights_path,
                              "--out", tmp_path / "pooled.tkt"),
        }
        out_files = {
            "label-motion": tmp_path / "labels.json",
            "motion-cdf": tmp_path / "cdf.csv",
            "build-tubes": tmp_path / "bt.ndjson",
            "trim-tracks": tmp_path / "tt.ndjson",
            "filter-dets": tmp_path / "fd.ndjson",
            "pool-features": tmp_path / "pooled.tkt",
        }
        jobs_capable = {"eval-frames", "eval-videos", "eval-videos-sweep",
                        "build-tubes", "trim-tracks", "pool-features"}

        for name, args in runs.items():
            first_stdout = _run(*args)
            first_file = out_files[name].read_bytes() if name in out_files else None
            second_stdout = _run(*args)
            assert second_stdout == first_stdout, f"{name}: stdout changed between runs"
            if first_file is not None:
                assert out_files[name].read_bytes() == first_file, \
                    f"{name}: output file changed between runs"
            if name in jobs_capable:
                j1 = _run(*args, "--jobs", "1")
                f1 = out_files[name].read_bytes() if name in out_files else None
                j8 = _run(*args, "--jobs", "8")
                f8 = out_files[name].read_bytes() if name in out_files else None
                assert j1 == j8, f"{name}: stdout differs between --jobs 1 and 8"
                assert f1 == f8, f"{name}: file differs between --jobs 1 and 8"
