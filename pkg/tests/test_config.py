import pytest

from dsfactor.config import load_settings
from dsfactor.utils.errors import ConfigError
from dsfactor.utils.parallel import map_ordered, resolve_workers

ENV = ("DSFACTOR_THREADS", "DSFACTOR_SEED", "DSFACTOR_LOG_LEVEL")


@pytest.fixture
def clean_env(monkeypatch):
    for name in ENV:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def test_defaults(clean_env):
    s = load_settings()
    assert (s.threads, s.seed, s.log_level) == (0, 0, "INFO")


def test_environment_overrides(clean_env):
    clean_env.setenv("DSFACTOR_THREADS", "4")
    clean_env.setenv("DSFACTOR_SEED", "17")
    clean_env.setenv("DSFACTOR_LOG_LEVEL", "debug")
    s = load_settings()
    assert (s.threads, s.seed, s.log_level) == (4, 17, "DEBUG")


@pytest.mark.parametrize("name, value", [
    ("DSFACTOR_THREADS", "many"), ("DSFACTOR_SEED", "-1"), ("DSFACTOR_LOG_LEVEL", "LOUD"),
])
def test_bad_values(clean_env, name, value):
    clean_env.setenv(name, value)
    with pytest.raises(ConfigError, match=name):
        load_settings()


def test_map_ordered_keeps_input_order():
    items = list(range(20))
    assert map_ordered(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert map_ordered(str, [], threads=0) == []
    assert resolve_workers(3) == 3
    assert resolve_workers(0) >= 1
