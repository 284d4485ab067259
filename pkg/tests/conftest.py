import pytest

from tdln.datagen import ProcessSpec, generate_benchmark
from tdln.pipeline import ForestConfig, PipelineConfig, fit_offline
from tdln.preprocess import WindowSpec
from tdln.training import NetConfig, TrainConfig


def small_config(mode="full", seed=0, **kw):
    return PipelineConfig(WindowSpec(10, 5), TrainConfig(epochs=2, batch_size=32), NetConfig(4, 4, (8, 6)),
                          ForestConfig(n_estimators=5), mode=mode, seed=seed, **kw)


@pytest.fixture(scope="session")
def small_data():
    spec = ProcessSpec.random(4, 0)
    return generate_benchmark(spec, 3, 6, 2, train_length=60, test_length=60)


@pytest.fixture(scope="session")
def small_models(small_data):
    train, _ = small_data
    return {mode: fit_offline(train, small_config(mode)) for mode in ("full", "dl_only", "ml_only")}


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
