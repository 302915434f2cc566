"""Smoke test for the gmem extension module.

Build and run from the repository root:

    cargo build --release -p gmem-python
    cp target/release/libgmem.so crates/python/python/gmem.so
    python3 crates/python/python/smoke_test.py
"""
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import gmem  # noqa: E402

CONFIG = """
train_examples = 32
test_examples = 16
slots = 4
steps = 5
batch_size = 4
pretrain_steps = 20
"""


def main():
    assert "slots = 16" in gmem.default_config()

    data = gmem.Dataset.generate(CONFIG)
    assert len(data) == 48
    segments, pos, answer, split = data.example(0)
    assert split == "train" and len(pos) == len(answer) == 1
    assert segments[-1][pos[0]] == answer[0]

    model = gmem.Model(CONFIG, data)
    backbone, memory, trainable = model.param_counts()
    assert memory < 0.03 * backbone, (memory, backbone)
    before = model.backbone_hash()

    logits = model.vanilla_logits(segments[0])
    assert len(logits) == len(segments[0]) and len(logits[0]) == 64

    off, _, _ = model.run_episode(segments, memory="off")
    for seg, lg in zip(segments, off):
        assert max(abs(a - b) for a, b in zip(lg[-1], model.vanilla_logits(seg)[-1])) < 1e-12

    rows = model.train(data)
    assert len(rows) == 5 and gmem.metrics_header().startswith("step,")
    assert all(math.isfinite(float(x)) for x in rows[-1].split(","))
    assert model.backbone_hash() == before

    metrics = dict(model.evaluate(data, "test", "on"))
    assert metrics["examples"] == 16 and 0.0 <= metrics["exact_match"] <= 1.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.gmem")
        model.save(path)
        again = gmem.Model.load(path)
        assert dict(again.evaluate(data)) == metrics

    checks = gmem.gradcheck()
    assert checks and all(ok for _, _, ok in checks), checks
    print("smoke test passed:", metrics)


if __name__ == "__main__":
    main()
