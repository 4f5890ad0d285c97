"""Smoke test for the boscids extension module.

Build and run from the repository root:

    cargo build --release -p boscids-py --features extension-module
    cp target/release/libboscids_py.so python/boscids.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import boscids


def main():
    assert boscids.parse_line("[pid 12] read(3, \"\", 8) = 0") == ("call", 12, "read")
    assert boscids.parse_line("--- SIGCHLD {si_signo=SIGCHLD} ---")[0] == "signal"
    names = boscids.ingest(["open(\"/x\", O_RDONLY) = 3", "read(3, <unfinished ...>",
                            "<... read resumed>) = 1", "garbage", "close(3) = 0"])
    assert names == ["open", "read", "close"], names
    assert boscids.count_table(["a", "b", "a"]) == [("a", 2), ("b", 1)]

    bag = boscids.bag_of([10, 3, 19, 10, 1, 8, 10, 16, 3, 10], 20)
    assert bag == [0, 1, 0, 2, 0, 0, 0, 0, 1, 0, 4, 0, 0, 0, 0, 0, 1, 0, 0, 1]
    assert math.isclose(boscids.cosine_similarity([1, 1], [2]), 1 / math.sqrt(2))

    cfg = boscids.Config(window=2, epoch_size=4)
    model = boscids.train(["a", "b"] * 8, cfg)
    assert model.converged and model.epochs_trained == 3 and model.db_size == 1, model

    model = boscids.train(boscids.gen_normal(500_000, seed=7))
    assert model.converged, model
    test, labels = boscids.gen_anomalous(200_000, [5, 17, 33], seed=8, source_seed=7)
    report = model.detect(test)
    assert report.anomalous_epochs == [5, 17, 33], report.anomalous_epochs
    assert report.trace_anomalous and len(report) == 40
    tp, fp, mal, norm, tpr, fpr = boscids.compute_metrics([("t", report)], [("t", labels)])
    assert (tp, fp, mal, norm, tpr, fpr) == (3, 0, 3, 37, 1.0, 0.0)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.model")
        model.save(path)
        again = boscids.TrainedModel.load(path)
        assert again.to_bytes() == model.to_bytes()
    try:
        boscids.TrainedModel.from_bytes(b"not a model")
    except ValueError as e:
        assert "model file" in str(e)
    else:
        raise AssertionError("corrupt model accepted")

    print("smoke test ok:", model)


if __name__ == "__main__":
    main()
