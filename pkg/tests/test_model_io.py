import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zonetrack.model_io import (
    BBox,
    BoxRecord,
    Detection,
    FormatError,
    GlobalTrajectory,
    Tracklet,
    TrackletObservation,
    emit_detections,
    emit_records,
    emit_submission,
    emit_tracklets,
    l2_normalize,
    parse_detections,
    parse_records,
    parse_tracklets,
    parse_zone_map,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_detection_row(tmp_path):
    det = write(tmp_path, "d.txt", "41 5 10.0 20.0 30.0 40.0 0.9 car\n")
    feat = write(tmp_path, "f.txt", "1 0\n")
    (d,) = parse_detections(det, feat)
    assert (d.camera_id, d.frame, d.confidence, d.class_label) == (41, 5, 0.9, "car")
    assert d.bbox == BBox(10, 20, 30, 40)


def test_empty_file(tmp_path):
    assert parse_detections(write(tmp_path, "d.txt", ""), write(tmp_path, "f.txt", "")) == []


def test_feature_normalized_on_ingest(tmp_path):
    det = write(tmp_path, "d.txt", "41 0 0 0 10 10 0.5 bus\n")
    feat = write(tmp_path, "f.txt", "3 4\n")
    (d,) = parse_detections(det, feat, dim=2)
    # hand normalization: (3, 4) / 5
    np.testing.assert_allclose(d.feature, [0.6, 0.8])


@pytest.mark.parametrize(
    "row, needle",
    [
        ("41 5 10 20 0 40 0.9 car", "non-positive"),
        ("41 5 10 20 30 -1 0.9 car", "non-positive"),
        ("41 5 10 20 30 40 car", "expected 8 fields"),
        ("41 x 10 20 30 40 0.9 car", ":2:"),
        ("41 5 10 20 30 40 0.9 tank", "unknown class"),
        ("41 5 10 20 30 40 1.5 car", "confidence"),
    ],
)
def test_malformed_rows_name_the_line(tmp_path, row, needle):
    det = write(tmp_path, "d.txt", "41 4 1 1 10 10 0.9 car\n" + row + "\n")
    feat = write(tmp_path, "f.txt", "1 0\n1 0\n")
    with pytest.raises(FormatError, match=needle):
        parse_detections(det, feat)


def test_dimension_mismatch(tmp_path):
    det = write(tmp_path, "d.txt", "41 0 0 0 10 10 0.5 car\n")
    feat = write(tmp_path, "f.txt", "1 2 3\n")
    with pytest.raises(FormatError, match="dimension 3 != 2"):
        parse_detections(det, feat, dim=2)


def test_feature_row_count_mismatch(tmp_path):
    det = write(tmp_path, "d.txt", "41 0 0 0 10 10 0.5 car\n41 1 0 0 10 10 0.5 car\n")
    feat = write(tmp_path, "f.txt", "1 0\n")
    with pytest.raises(FormatError):
        parse_detections(det, feat)


SQUARE = [[0, 0], [10, 0], [10, 10], [0, 10]]


def zone_json(**overrides):
    cam = {str(k): [[x + 20 * k, y] for x, y in SQUARE] for k in (1, 2, 3, 4)}
    cam.update(overrides)
    return json.dumps({"43": cam})


def test_zone_map_four_polygons(tmp_path):
    zm = parse_zone_map(write(tmp_path, "z.json", zone_json()))
    assert zm.cameras() == [43]
    assert sorted(zm.for_camera(43)) == [1, 2, 3, 4]


def test_zone_map_duplicate_label(tmp_path):
    text = '{"43": {"1": %s, "1": %s, "2": %s, "3": %s, "4": %s}}' % ((json.dumps(SQUARE),) * 5)
    with pytest.raises(FormatError, match="duplicate zone label 1"):
        parse_zone_map(write(tmp_path, "z.json", text))


def test_zone_map_two_vertex_polygon(tmp_path):
    with pytest.raises(FormatError, match="at least 3"):
        parse_zone_map(write(tmp_path, "z.json", zone_json(**{"2": [[0, 0], [1, 1]]})))


def test_zone_map_missing_label(tmp_path):
    raw = json.loads(zone_json())
    del raw["43"]["3"]
    with pytest.raises(FormatError, match="camera 43: missing zone label 3"):
        parse_zone_map(write(tmp_path, "z.json", json.dumps(raw)))


def test_zone_map_self_intersecting(tmp_path):
    bowtie = [[0, 0], [10, 10], [10, 0], [0, 10]]
    with pytest.raises(FormatError, match="self-intersecting"):
        parse_zone_map(write(tmp_path, "z.json", zone_json(**{"4": bowtie})))


def _tracklet(cam, lid, frames, x0=0.0):
    obs = tuple(TrackletObservation(t, BBox(x0 + t, 5.0, 10.0, 8.0), np.array([1.0, 0.0])) for t in frames)
    return Tracklet(cam, lid, obs)


def test_submission_single_line(tmp_path):
    p = tmp_path / "sub.txt"
    emit_submission([GlobalTrajectory(1, [(41, _tracklet(41, 1, [3]))])], p)
    assert p.read_text() == "41 1 3 3.0 5.0 10.0 8.0 -1 -1\n"


def test_submission_empty(tmp_path):
    p = tmp_path / "sub.txt"
    emit_submission([], p)
    assert p.read_text() == ""


def test_submission_two_cameras_share_id(tmp_path):
    p = tmp_path / "sub.txt"
    traj = GlobalTrajectory(7, [(42, _tracklet(42, 2, [10, 11])), (41, _tracklet(41, 1, [0, 1]))])
    emit_submission([traj], p)
    rows = parse_records(p)
    assert [r.camera_id for r in rows] == [41, 41, 42, 42]
    assert {r.obj_id for r in rows} == {7}
    assert [r.frame for r in rows] == [0, 1, 10, 11]


def test_submission_io_failure_names_path(tmp_path):
    bad = tmp_path / "missing-dir" / "sub.txt"
    with pytest.raises(OSError, match="missing-dir"):
        emit_submission([], bad)


finite = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)
positive = st.floats(0.5, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def detections(draw):
    d = draw(st.integers(1, 6))
    n = draw(st.integers(0, 8))
    out = []
    for _ in range(n):
        vec = np.array(draw(st.lists(st.floats(-10, 10, allow_nan=False), min_size=d, max_size=d)))
        if np.linalg.norm(vec) < 1e-3:
            vec[0] = 1.0
        out.append(Detection(
            draw(st.integers(0, 999)), draw(st.integers(0, 10 ** 6)),
            BBox(draw(finite), draw(finite), draw(positive), draw(positive)),
            draw(st.floats(0, 1)), l2_normalize(vec), draw(st.sampled_from(["car", "truck", "bus"])),
        ))
    return out


@settings(max_examples=60, deadline=None)
@given(detections())
def test_detection_round_trip(tmp_path_factory, dets):
    tmp = tmp_path_factory.mktemp("rt")
    emit_detections(dets, tmp / "d.txt", tmp / "f.txt")
    assert parse_detections(tmp / "d.txt", tmp / "f.txt") == dets


@settings(max_examples=60, deadline=None)
@given(st.lists(st.builds(BoxRecord, st.integers(0, 99), st.integers(1, 99), st.integers(0, 9999),
                          finite, finite, positive, positive), max_size=20))
def test_record_round_trip(tmp_path_factory, rows):
    tmp = tmp_path_factory.mktemp("rec")
    emit_records(rows, tmp / "r.txt")
    assert parse_records(tmp / "r.txt") == sorted(rows, key=lambda r: (r.camera_id, r.frame, r.obj_id))


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=16).filter(
    lambda v: np.linalg.norm(v) > 1e-3))
def test_normalization_idempotent(v):
    once = l2_normalize(np.array(v))
    np.testing.assert_allclose(l2_normalize(once), once, atol=1e-9)
    assert abs(np.linalg.norm(once) - 1) < 1e-6


def test_tracklet_dump_round_trip(tmp_path):
    dets = [Detection(41, t, BBox(t, 0, 10, 10), 0.9, np.array([0.0, 1.0])) for t in range(3)]
    obs = tuple(TrackletObservation(d.frame, d.bbox, d.feature, i) for i, d in enumerate(dets))
    tr = Tracklet(41, 5, obs)
    emit_tracklets([tr], tmp_path / "t.jsonl")
    (back,) = parse_tracklets(tmp_path / "t.jsonl", dets)
    assert (back.camera_id, back.local_id) == (41, 5)
    assert [o.t for o in back.observations] == [0, 1, 2]
    assert [o.source_index for o in back.observations] == [0, 1, 2]


def test_tracklet_rejects_non_increasing_times():
    with pytest.raises(ValueError):
        _tracklet(41, 1, [2, 2])
