"""The twelve acceptance criteria, one test each.

The suite runs once per session through ``validate`` (which itself runs the
checks twice to establish determinism); every test prints the one-line
verdict of its check.
"""
import pytest

from mbmlab.acceptance import CHECKS, validate

NAMES = {number: name for number, name, _ in CHECKS}
NAMES[12] = "determinism"


@pytest.fixture(scope="session")
def results(tmp_path_factory, cache_dir):
    out = tmp_path_factory.mktemp("acceptance")
    return {r.number: r for r in validate(out, seed=0, cache_dir=cache_dir)}


@pytest.mark.parametrize("number", sorted(NAMES), ids=[f"{n:02d}_{NAMES[n]}" for n in sorted(NAMES)])
def test_criterion(results, number, capsys):
    res = results[number]
    with capsys.disabled():
        print(f"\n{res.line()}")
    assert res.passed, res.summary
