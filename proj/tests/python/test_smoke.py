# Copyright 2026 The tcb Authors
# SPDX-License-Identifier: Apache-2.0

import json
import math
import os
import pathlib

import numpy as np
import pytest

import tcb

DATA = pathlib.Path(os.environ.get("TCB_TEST_DATA_DIR", pathlib.Path(__file__).parents[1] / "data"))


def exemplar(name):
    return (DATA / "exemplars" / f"{name}.txt").read_text()


def test_frame_indices():
    assert tcb.equal_gap_indices(16) == list(range(1, 17))
    assert tcb.equal_gap_indices(4, 3) == [1, 3, 4]
    assert tcb.remap_index(9, 31) == 17
    with pytest.raises(tcb.ValidationError):
        tcb.remap_index(0, 8)


def test_assertions_round_trip():
    parsed = tcb.parse_assertions(exemplar("object_relation"))
    assert parsed["n"] == 8
    tcb.validate_assertions(parsed, "object_relation")
    again = tcb.parse_assertions(tcb.render_assertions(parsed))
    assert again["assertions"] == parsed["assertions"]
    with pytest.raises(ValueError):
        tcb.parse_assertions("no headers")


def test_scores():
    assert tcb.tcr([1, 0, 1, 1]) == 75.0
    assert tcb.map_similarity(0.94) == pytest.approx(0.5)
    assert tcb.map_similarity(0.5) == 0.0
    assert tcb.tc_score_i2v(0.5, 0.25) == pytest.approx(2 / 3 * 0.5 + 1 / 3 * 0.25)
    assert tcb.parse_answer("Yes.") == "Yes"
    assert tcb.parse_answer("maybe") is None
    c = tcb.consecutive_consistency([[1, 0], [1, 0], [0, 1]])
    assert c["mapped"] == [1.0, 0.0]
    assert c["mean_mapped"] == 0.5


def test_epe_and_ate():
    rng = np.random.default_rng(7)
    flows = [rng.normal(size=(3, 4, 2)).astype(np.float32) for _ in range(2)]
    ref = [rng.normal(size=(3, 4, 2)).astype(np.float32) for _ in range(2)]
    expected = np.mean([np.linalg.norm(f.astype(np.float64) - r, axis=2).mean() for f, r in zip(flows, ref)])
    assert tcb.epe(flows, ref) == pytest.approx(expected, rel=1e-6)
    traj = np.zeros((1, 2, 2))
    other = np.array([[[3.0, 4.0], [0.0, 0.0]]])
    assert tcb.ate(traj, other) == pytest.approx(2.5)


def test_ratings():
    r = tcb.rank_correlation([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
    assert r["spearman"] == pytest.approx(0.8)
    assert r["kendall"] == pytest.approx(0.6)
    agg = tcb.aggregate_ratings([("v", "a", 4, 4), ("v", "b", 4, 4), ("v", "c", 3, 4), ("w", "a", 1, 3), ("w", "b", 5, 3)])
    assert agg["videos"]["v"]["completed"]
    assert math.isclose(agg["videos"]["v"]["mean_q1"], 11 / 3)
    assert "w" in agg["discarded"]


def test_config_and_score(tmp_path):
    cfg = tcb.load_config()
    assert cfg["constants"]["frames"] == 16
    records = []
    for video, answers in (("p__1", ["Yes", "Yes"]), ("p__2", ["Yes", "No"])):
        for i, answer in enumerate(answers, start=1):
            records.append(
                {
                    "prompt_id": "p",
                    "video_id": video,
                    "category": "attribute",
                    "assertion_id": f"a{i}",
                    "dimension": "completion",
                    "frame_indices": [i],
                    "question": "Q?",
                    "answer": answer,
                    "raw_response": answer,
                    "degraded": False,
                }
            )
    path = tmp_path / "v.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    report = tcb.score_verdicts(path, model="m")
    assert report["report"]["overall"]["tcr"] == pytest.approx(50.0)
    assert report["report"]["overall"]["tc_score"] == pytest.approx(0.75)
    with pytest.raises(tcb.ValidationError, match="tcb embed"):
        tcb.score_verdicts(path, mode="i2v")
