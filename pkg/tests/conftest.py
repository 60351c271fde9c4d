import os
import time

# 1-thread BLAS before numpy loads: the numpy and scipy OpenBLAS pools
# otherwise spin against each other around the compiled kernels' many
# small products, roughly tripling training time on small machines
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import pytest

try:
    import threadpoolctl

    threadpoolctl.ThreadpoolController().limit(limits=1)
except ImportError:
    pass

SEEDS = (0, 1, 2, 3, 4)
ABLATIONS = ("no_contrastive", "no_encoder", "bce_generator")


def pytest_configure(config):
    config.addinivalue_line("markers",
                            "slow: multi-minute end-to-end training runs")


@pytest.fixture(scope="session")
def full_protocol_runs(tmp_path_factory):
    """The 5-seed full-model protocol plus its wall-clock total.

    Shared by the end-to-end acceptance criteria and the detection smoke
    checks so the expensive runs happen exactly once.
    """
    from protocol import run_protocol

    results = []
    t0 = time.perf_counter()
    for seed in SEEDS:
        out = tmp_path_factory.mktemp(f"full_seed{seed}")
        results.append(run_protocol(seed, out))
    return {"results": results, "total_s": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def ablation_protocol_runs(tmp_path_factory):
    """5-seed results for each Table-8-style ablation toggle."""
    from protocol import run_protocol

    out = {}
    for ablate in ABLATIONS:
        runs = []
        for seed in SEEDS:
            d = tmp_path_factory.mktemp(f"{ablate}_seed{seed}")
            runs.append(run_protocol(seed, d, ablate=ablate))
        out[ablate] = runs
    return out


@pytest.fixture(scope="session")
def mini_trained(tmp_path_factory):
    """A quickly trained small model on a small corpus, for detection and
    CLI tests that need a plausible (not strong) checkpoint."""
    from mtsdvgan.detection import detect
    from mtsdvgan.synth import SynthConfig, synth_generate
    from mtsdvgan.training import TrainConfig, train
    from protocol import prepare_splits

    cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=50,
                      window_size=16, shift_length=8, latent_dimension=8,
                      hidden_units=24, lstm_depth=2, seed=7, signal_number=4,
                      init_std=0.1)
    series = synth_generate(SynthConfig(n_features=6, length=2500, seed=11))
    tws, vws, ews = prepare_splits(series, cfg, train_frac=0.5)
    out = tmp_path_factory.mktemp("mini_run")
    bundle, history = train(tws, cfg, out)
    return {"bundle": bundle, "cfg": cfg, "train": tws, "val": vws,
            "eval": ews, "run_dir": out, "history": history}
