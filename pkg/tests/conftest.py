import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from side.config import TrainConfig
from side.data import ShiftSpec, generate_pair
from side.network import ArchSpec, init_model
from side.source import pretrain
from side.trainer import adapt, evaluate, label_monitor

BENCH_SEEDS = (0, 1, 2)


@pytest.fixture
def small_arch():
    return ArchSpec(input_dim=2, encoder_hidden=[8], feature_dim=6, class_count=3,
                    projector_hidden=5, projector_out=4)


@pytest.fixture
def small_bundle(small_arch):
    return init_model(small_arch, seed=7)


@pytest.fixture(scope="session")
def moons_source_models():
    """Source models for the two-moons 45 degree benchmark, one per seed."""
    out = {}
    for seed in BENCH_SEEDS:
        cfg = TrainConfig(seed=seed)
        src, tgt = generate_pair(ShiftSpec(seed=seed))
        t0 = time.perf_counter()
        model, history = pretrain(src, cfg.source_config())
        out[seed] = {"source": src, "target": tgt, "model": model, "history": history,
                     "seconds": time.perf_counter() - t0}
    return out


@pytest.fixture(scope="session")
def benchmark_runs(moons_source_models):
    """Default adaptation, with and without cyclic refreshes, on every seed."""
    runs = {}
    for seed, entry in moons_source_models.items():
        tgt = entry["target"]
        res = {"source_only": evaluate(entry["model"], tgt)}
        for cyclic in (True, False):
            cfg = TrainConfig(seed=seed, cyclic_filtering=cyclic)
            t0 = time.perf_counter()
            sel = []
            bundle, history = adapt(entry["model"], tgt.unlabeled(), cfg, label_monitor(tgt), sel)
            res["cyclic" if cyclic else "single"] = {
                "bundle": bundle, "history": history, "selections": sel,
                "final": evaluate(bundle, tgt), "seconds": time.perf_counter() - t0,
            }
        runs[seed] = res
    return runs
