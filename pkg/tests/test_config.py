import numpy as np
import pytest

from mbmlab.config import SCHEMA, load_config, parse_config, read_hurst_table
from mbmlab.errors import ConfigurationError


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg["seed"] == 0
    assert cfg["replicates"] == 2000 and cfg["j_min"] == -8 and cfg["j_max"] == 12 and cfg["k_window"] == 50
    assert cfg["lags"] == "2^-9..2^-4" and cfg["out_dir"] == "./out"
    assert cfg.hurst().kind == "constant"
    assert cfg.t_grid().size == 1025
    for key, (_, default) in SCHEMA.items():
        if default is not None:
            assert cfg[key] == default


def test_a_above_b_rejected():
    with pytest.raises(ConfigurationError, match="a must be ≤ b"):
        parse_config("a = 0.6\nb = 0.5")


def test_unknown_key_named():
    with pytest.raises(ConfigurationError, match="'hurst.nope'"):
        parse_config("hurst.nope = 1")


def test_sine_from_mean_and_amp():
    cfg = parse_config("hurst.kind = sine\nhurst.mean = 0.5\nhurst.amp = 0.3  # comment")
    H = cfg.hurst()
    assert H.kind == "sine"
    assert (H.a, H.b) == pytest.approx((0.2, 0.8))
    assert (cfg["a"], cfg["b"]) == pytest.approx((0.2, 0.8))


def test_sine_from_range():
    H = parse_config("hurst.kind = sine\na = 0.45\nb = 0.55").hurst()
    assert (H.a, H.b) == pytest.approx((0.45, 0.55))


def test_range_disagreement_rejected():
    with pytest.raises(ConfigurationError):
        parse_config("hurst.kind = sine\nhurst.mean = 0.5\nhurst.amp = 0.3\na = 0.1")


@pytest.mark.parametrize("text", ["j_min = 0", "j_max = -1", "k_window = 4", "replicates = 0", "t_points = 1",
                                  "ell = 1", "beta = 0", "process = Y", "lags = 0,1", "seed = x",
                                  "just words", "a = 1.5"])
def test_invalid_documents(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_table_hurst_from_file(tmp_path):
    f = tmp_path / "h.csv"
    f.write_text("t,H\n0,0.4\n0.5,0.6\n1,0.5\n")
    knots, values = read_hurst_table(f)
    np.testing.assert_array_equal(knots, [0, 0.5, 1])
    cfg = parse_config(f"hurst.kind = table\nhurst.file = {f}")
    assert cfg.hurst()(0.5) == pytest.approx(0.6)


def test_step_and_piecewise():
    H = parse_config("hurst.kind = step\nhurst.breaks = 0.5\nhurst.values = 0.3, 0.7").hurst()
    assert not H.regular
    H = parse_config("hurst.kind = piecewise-linear\nhurst.knots = 0,1\nhurst.values = 0.3,0.7").hurst()
    assert H(0.5) == pytest.approx(0.5)


def test_echo_excludes_locations_and_is_sorted(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(f"seed = 3\nout_dir = {tmp_path}\n")
    cfg = load_config(p)
    echo = cfg.echo()
    assert "seed = 3" in echo
    assert not any(line.startswith("out_dir") for line in echo)
    assert echo == sorted(echo)
    cfg.override("out_dir", "/elsewhere")
    assert cfg.echo() == echo
    with pytest.raises(ConfigurationError):
        cfg.override("bogus", 1)
