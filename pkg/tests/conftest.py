"""Shared fixtures: parsed corpus modules and their elaborations.

Everything here is session-scoped because elaboration is pure; tests must
not mutate the returned objects.
"""

from pathlib import Path

import pytest

from hierlab.cli import main as cli_main
from hierlab.elaborator import EncodingStrategy, elaborate
from hierlab.kernel import DefEqConfig
from hierlab.surface import parse

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

ETA_OFF = DefEqConfig(eta_kernel=False, eta_unifier=False)
ETA_ON = DefEqConfig(eta_kernel=True, eta_unifier=False)
UNIFIER_ON = DefEqConfig(eta_kernel=True, eta_unifier=True)


def corpus_path(name: str) -> Path:
    return CORPUS / name


def load(name: str):
    return parse(corpus_path(name).read_text())


@pytest.fixture(scope="session")
def fig1_module():
    return load("fig1.hier")


@pytest.fixture(scope="session")
def fig1_nested(fig1_module):
    return elaborate(fig1_module, EncodingStrategy("nested"))


@pytest.fixture(scope="session")
def fig1_flat(fig1_module):
    return elaborate(fig1_module, EncodingStrategy("flat"))


@pytest.fixture(scope="session")
def fig1_hack(fig1_module):
    return elaborate(fig1_module, EncodingStrategy("flat_hack"))


@pytest.fixture(scope="session")
def module_module():
    return load("module.hier")


@pytest.fixture(scope="session")
def module_nested(module_module):
    return elaborate(module_module, EncodingStrategy("nested"))


@pytest.fixture(scope="session")
def module_flat(module_module):
    return elaborate(module_module, EncodingStrategy("flat"))


@pytest.fixture(scope="session")
def rootonly_nested():
    return elaborate(load("rootonly.hier"), EncodingStrategy("nested"))


@pytest.fixture(scope="session")
def cube_module():
    return load("cube.hier")


@pytest.fixture(scope="session")
def point_nested():
    return elaborate(load("point.hier"), EncodingStrategy("nested"))


@pytest.fixture
def run_cli(capsys):
    """Invoke the command line in-process and capture its streams."""

    def run(*argv: str):
        code = cli_main([str(a) for a in argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return run
