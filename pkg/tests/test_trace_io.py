"""JSONL trajectory persistence: losslessness and schema policing."""

import json
import math

import numpy as np
import pytest

from ccd.engine import DecodeConfig, RegionSpec, SamplerSpec, StepTrace, Trajectory
from ccd.errors import TraceSchemaError
from ccd.trace_io import SCHEMA_VERSION, from_line, read_file, to_line, write_file


def random_trace(rng, step):
    """A StepTrace with adversarially awkward floats."""

    def weird_float():
        kind = rng.integers(0, 5)
        if kind == 0:
            return float(rng.normal(0, 1))
        if kind == 1:
            return float(rng.normal(0, 1e12))
        if kind == 2:
            return float(np.nextafter(rng.normal(), math.inf))
        if kind == 3:
            return float(rng.integers(-5, 6))  # integral-valued floats
        return float(rng.normal(0, 1e-12))

    warm = bool(rng.integers(0, 2))
    fired = bool(rng.integers(0, 2))
    return StepTrace(
        step=step,
        confidence=abs(weird_float()),
        tau_cd=weird_float() if warm else -math.inf,
        tau_rep=weird_float() if warm else math.inf,
        i_cd=int(fired),
        i_rep=int(rng.integers(0, 2)),
        in_region=bool(rng.integers(0, 2)),
        entropy_main=abs(weird_float()),
        top_margin_main=abs(weird_float()),
        token=int(rng.integers(0, 64)),
        entropy_cd=abs(weird_float()) if fired else None,
        top_margin_cd=abs(weird_float()) if fired else None,
        post_confidence=weird_float() if fired else None,
        clamped=bool(rng.integers(0, 2)),
    )


def random_trajectory(rng, n_traces=8):
    traces = [random_trace(rng, i + 1) for i in range(n_traces)]
    return Trajectory(
        prompt=[int(t) for t in rng.integers(0, 64, size=3)],
        generated=[t.token for t in traces],
        traces=traces,
        config=DecodeConfig(
            W=int(rng.integers(1, 80)),
            k=int(rng.integers(1, 30)),
            q_cd=float(rng.uniform(0, 40)),
            q_rep_top=float(rng.uniform(0, 40)),
            alpha=float(rng.uniform(0, 2)),
            sampler=SamplerSpec("temperature", float(rng.uniform(0.1, 2)), 0.95),
            seed=int(rng.integers(0, 1000)),
            region=RegionSpec(start=int(rng.integers(1, 5))),
        ),
        vocab={"vocab_size": 64, "placeholder_id": 0, "eos_id": 1, "region_end_id": None},
        label=["correct", "incorrect", "unknown"][int(rng.integers(0, 3))],
        text=None if rng.integers(0, 2) else "wait, hmm é中",
    )


def test_roundtrip_is_float_exact_on_randomized_traces():
    rng = np.random.default_rng(2024)
    for _ in range(125):  # 125 trajectories x 8 traces = 1000 step traces
        traj = random_trajectory(rng)
        back = from_line(to_line(traj))
        assert back.prompt == traj.prompt
        assert back.generated == traj.generated
        assert back.config == traj.config
        assert back.vocab == traj.vocab
        assert back.label == traj.label and back.text == traj.text
        for a, b in zip(traj.traces, back.traces):
            assert a == b  # dataclass equality: bit-for-bit on floats


def test_line_is_strict_json_with_version():
    rng = np.random.default_rng(7)
    line = to_line(random_trajectory(rng))
    doc = json.loads(line)
    assert doc["schema_version"] == SCHEMA_VERSION
    assert "\n" not in line
    # inf thresholds travel as strings, never as bare Infinity
    assert "Infinity" not in line


def test_warmup_thresholds_roundtrip_as_infinite():
    rng = np.random.default_rng(1)
    traj = random_trajectory(rng)
    cold = [t for t in traj.traces if math.isinf(t.tau_cd)]
    if not cold:
        pytest.skip("draw produced no warmup rows")
    back = from_line(to_line(traj))
    for a, b in zip(traj.traces, back.traces):
        if math.isinf(a.tau_cd):
            assert b.tau_cd == -math.inf
            assert b.tau_rep == math.inf


def test_rejects_wrong_major_version():
    rng = np.random.default_rng(3)
    line = to_line(random_trajectory(rng))
    doc = json.loads(line)
    doc["schema_version"] = "2.0"
    with pytest.raises(TraceSchemaError, match="version"):
        from_line(json.dumps(doc))
    doc["schema_version"] = "1.7"  # newer minor of a known major: accepted
    from_line(json.dumps(doc))
    del doc["schema_version"]
    with pytest.raises(TraceSchemaError, match="version"):
        from_line(json.dumps(doc))


def test_rejects_malformed_lines():
    with pytest.raises(TraceSchemaError):
        from_line("{truncated")
    with pytest.raises(TraceSchemaError):
        from_line("[1,2,3]")
    rng = np.random.default_rng(4)
    doc = json.loads(to_line(random_trajectory(rng)))
    doc["surprise"] = 1
    with pytest.raises(TraceSchemaError, match="malformed"):
        from_line(json.dumps(doc))
    doc = json.loads(to_line(random_trajectory(rng)))
    doc["traces"][0]["bogus_field"] = 1
    with pytest.raises(TraceSchemaError, match="malformed"):
        from_line(json.dumps(doc))


def test_nan_refuses_to_serialize():
    rng = np.random.default_rng(5)
    traj = random_trajectory(rng)
    bad = traj.traces[0].to_dict()
    bad["confidence"] = math.nan
    traj.traces[0] = StepTrace.from_dict(bad)
    with pytest.raises(ValueError):
        to_line(traj)


def test_file_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    trajs = [random_trajectory(rng) for _ in range(5)]
    path = tmp_path / "runs.jsonl"
    write_file(path, trajs)
    back = read_file(path)
    assert len(back) == 5
    for a, b in zip(trajs, back):
        assert a.traces == b.traces
        assert a.config == b.config


def test_blank_lines_are_skipped(tmp_path):
    rng = np.random.default_rng(8)
    traj = random_trajectory(rng)
    path = tmp_path / "padded.jsonl"
    path.write_text("\n" + to_line(traj) + "\n\n", encoding="utf-8")
    assert len(read_file(path)) == 1
