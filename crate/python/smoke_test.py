"""Exercises the Python bindings against the checked-in fixtures.

    pip install maturin
    maturin develop -m crates/python/Cargo.toml
    python python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import taskscope as ts

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    reg = ts.LabelRegistry.load(str(FIXTURES / "site_registry.json"))
    sched = ts.Schedule.load(str(FIXTURES / "site_schedule.json"))
    assert len(reg) == 18
    assert len(reg.task_labels("task-1")) == 6
    assert len(reg.task_labels("task-2")) == 5
    assert len(reg.union_labels(["task-1", "task-2"])) == 7

    labels, prov = sched.resolve(reg, "2023-05-03T11:00:00-07:00")
    assert len(labels) == 7 and prov.startswith("union"), prov
    labels, prov = sched.resolve(reg, "2023-05-01T23:00:00-07:00")
    assert len(labels) == 18 and prov == "fallback"
    try:
        sched.resolve(reg, "2023-05-01T23:00:00-07:00", fallback="error")
    except ts.TaskscopeError:
        pass
    else:
        raise AssertionError("expected TaskscopeError")

    v = ts.normalize([3.0, 4.0])
    assert close(v[0], 0.6) and close(v[1], 0.8)
    assert close(ts.cosine_similarity([1.0, 0.0], [2.0, 0.0]), 1.0)
    assert close(sum(ts.softmax([1.0, 2.0, 3.0])), 1.0)
    pooled = ts.mean_pool([[1.0, 0.0], [0.0, 1.0]])
    assert close(pooled[0], math.sqrt(0.5))
    assert ts.info_nce([[1.0, 2.0]], [[0.5, -1.0]], 0.07) == 0.0
    loss = ts.info_nce([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], 1.0)
    assert close(loss, math.log(1 + 1 / math.e))

    logits = [0.0] * 18
    penalized = ts.restrict_soft(reg, logits, reg.task_labels("task-1"), 2.0)
    assert sum(1 for x in penalized if x == -2.0) == 12

    classes = str(FIXTURES / "synthetic_classes.emb")
    clips = str(FIXTURES / "synthetic_clips.emb")
    base = ts.predict(reg, sched, classes, clips)
    hard = ts.predict(reg, sched, classes, clips, mode="hard")
    assert len(base) == len(hard) == 60
    assert all(len(p.labels) == 18 for p in base)
    for b, h in zip(base, hard):
        assert b.clip_id == h.clip_id
        assert h.confidence > b.confidence
    json.loads(hard[0].to_json())

    m_base = ts.metrics([p.ground_truth for p in base], [p.predicted_label for p in base])
    m_hard = ts.metrics([p.ground_truth for p in hard], [p.predicted_label for p in hard])
    assert m_hard["accuracy"] >= m_base["accuracy"]

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "hard.jsonl"
        out.write_text("".join(p.to_json() + "\n" for p in hard))
        report = ts.evaluate(str(out))
        assert close(report["accuracy"], m_hard["accuracy"])

    reference = ts.evaluate(str(FIXTURES / "reference_runs" / "task-1_restricted.jsonl"))
    assert reference["row"] == "57.14%\t0.41\t0.57\t0.48", reference["row"]

    print(f"ok: baseline {m_base['row']!r}, restricted {m_hard['row']!r}")


if __name__ == "__main__":
    main()
