import json

import numpy as np

from sparsepf2.bench import bench_mttkrp, kr_bytes
from sparsepf2.synthetic import GeneratorSpec, generate_synthetic


def small():
    return generate_synthetic(GeneratorSpec(K=30, J=12, I_max=6, R_true=2, density=0.5))


def test_reps_and_median():
    rep = bench_mttkrp(small(), 2, reps=3)
    for r in rep.rows:
        assert r.reps == 3
        assert len(r.times_ms) == 3
        assert r.median_ms == float(np.median(r.times_ms))
        assert all(t >= 0 for t in r.times_ms)
        assert r.status == "ok"
    for key in ("1", "2", "3", "sweep"):
        assert rep.speedup[key] == rep.row("naive", key).median_ms / rep.row("specialized", key).median_ms
    json.dumps(rep.to_dict())


def test_budget_marks_oom():
    X = small()
    rep = bench_mttkrp(X, 2, reps=2, budget_mb=(30 * 12 * 2 * 8 - 1) / 2**20)
    mode1 = rep.row("naive", 1)
    assert mode1.status == "OoM" and mode1.times_ms == [] and mode1.median_ms is None
    assert rep.row("naive", 2).status == "ok"
    assert rep.row("naive", "sweep").status == "OoM"
    assert rep.speedup["1"] is None and rep.speedup["sweep"] is None
    assert rep.speedup["2"] is not None


def test_spill_to_disk(tmp_path):
    rep = bench_mttkrp(small(), 2, modes=(1,), reps=1, budget_mb=0, spill_dir=str(tmp_path))
    assert rep.row("naive", 1).status == "ok (spilled to disk)"
    assert rep.row("naive", 1).median_ms is not None
    assert list(tmp_path.iterdir()) == []


def test_kr_bytes():
    from sparsepf2.irregular import DenseSliceCollection

    Y = DenseSliceCollection.from_dense([np.ones((2, 5))] * 3)
    assert kr_bytes(Y, 1) == 3 * 5 * 2 * 8
