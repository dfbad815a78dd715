"""Session fixtures: an on-disk synthetic two-speaker corpus shared by
the CLI and acceptance tests, the trained models the acceptance criteria
score, and the per-criterion verdict lines printed after the run.

The model fixtures are deliberately lazy: only the acceptance tests
request them, so a targeted `pytest tests/test_nn.py` run never pays for
training."""

import sys
import time

import pytest

_criterion_lines = {}


def pytest_terminal_summary(terminalreporter):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criterion_lines):
        terminalreporter.write_line(_criterion_lines[n])


@pytest.fixture(scope="session")
def criterion_report():
    def record(n, passed, detail):
        line = f"CRITERION {n}: {'PASS' if passed else 'FAIL'} - {detail}"
        _criterion_lines[n] = line
        print(line)
        return passed

    return record


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    """Default-size synthetic corpus (two speakers), written through the
    CLI so the fixture also exercises the synth-data entry point."""
    from speechpose.cli import main

    root = tmp_path_factory.mktemp("corpus")
    rc = main(["synth-data", "--out", str(root)])
    assert rc == 0
    return root


@pytest.fixture(scope="session")
def corpora(corpus_root):
    from speechpose.corpus import load_corpus

    out = {}
    for sid in ("speaker00", "speaker01"):
        out[sid] = load_corpus(corpus_root / sid)
    return out


@pytest.fixture(scope="session")
def splits(corpora):
    from speechpose.corpus import split_by_source

    return {sid: split_by_source(c, seed=0) for sid, c in corpora.items()}


def _train(corpora, splits, sid, gen_config, train_config):
    from speechpose.training import train

    t0 = time.time()
    res = train(corpora[sid], splits[sid], gen_config, train_config)
    print(f"[fixture] trained {sid} mode={train_config.mode} "
          f"iters={train_config.iterations} in {time.time() - t0:.1f}s "
          f"best_val={res.best_val_l1:.4f}", file=sys.stderr)
    return res


@pytest.fixture(scope="session")
def trained_s0(corpora, splits):
    """Full default no-GAN run on speaker00; timed for the runtime bound."""
    from speechpose.models import GeneratorConfig
    from speechpose.training import TrainConfig

    return _train(corpora, splits, "speaker00", GeneratorConfig(), TrainConfig())


@pytest.fixture(scope="session")
def trained_s1(corpora, splits):
    from speechpose.models import GeneratorConfig
    from speechpose.training import TrainConfig

    return _train(corpora, splits, "speaker01", GeneratorConfig(),
                  TrainConfig(iterations=1000))


@pytest.fixture(scope="session")
def trained_cond(corpora, splits):
    from speechpose.models import GeneratorConfig
    from speechpose.training import TrainConfig

    return _train(corpora, splits, "speaker00",
                  GeneratorConfig(conditioning="initial_pose"),
                  TrainConfig(iterations=1000))


@pytest.fixture(scope="session")
def trained_abl(corpora, splits):
    from speechpose.models import GeneratorConfig
    from speechpose.training import TrainConfig

    return _train(corpora, splits, "speaker00",
                  GeneratorConfig(conditioning="initial_pose", ablate_audio=True),
                  TrainConfig(iterations=1000))


@pytest.fixture(scope="session")
def trained_gan(corpora, splits):
    from speechpose.models import GeneratorConfig
    from speechpose.training import TrainConfig

    return _train(corpora, splits, "speaker00", GeneratorConfig(),
                  TrainConfig(iterations=500, mode="gan", lambda_l1=1.0))
