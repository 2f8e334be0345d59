import logging

import numpy as np
import pytest

from axiharm.config import help_text, load_config, parse_config
from axiharm.errors import ConfigError

MINIMAL = """\
[rods]
gaps = [[-1.0, 1.0]]

[constants]
v = [0.0, 0.0]
"""

TWO_GAP = """\
command = "solve"
output = "out/two"

[rods]
gaps = [[-3.0, -1.0], [1.0, 3.0]]

[constants]
v = [0.3, -0.2, 0.5]
psi = [[0.2, 0.1], [-0.4, 0.0], [0.1, 0.3]]

[grid]
h = 0.5
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.command == "solve" and cfg.k == 0 and cfg.N == 1
    assert cfg.params.tol == 1e-8
    assert cfg.params.schedule(cfg.rods) == (16.0, 32.0, 64.0)
    echo = cfg.resolved()
    assert echo["solver"]["R_schedule"] == [16.0, 32.0, 64.0]
    assert echo["seed"]["bump_width"] == pytest.approx(0.5)
    assert cfg.gauge.is_identity()


def test_gauge_normalization_is_logged_and_invertible(caplog):
    with caplog.at_level(logging.INFO, logger="axiharm.config"):
        cfg = parse_config(TWO_GAP)
    assert cfg.k == 2 and cfg.n_free_parameters == 6
    text = caplog.text
    assert "gauge normalization: b =" in text
    assert "6 free parameters" in text
    assert cfg.solve_spec.v[0] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(cfg.solve_spec.psi[0], 0.0, atol=1e-15)
    back = cfg.solve_spec.transformed(cfg.gauge.inverse())
    assert np.allclose(back.constant_matrix(), cfg.spec.constant_matrix(), atol=1e-14)


def test_normalization_can_be_disabled():
    cfg = parse_config(TWO_GAP.replace("[grid]", "normalize_gauge = false\n\n[grid]"))
    assert cfg.gauge.is_identity()
    assert np.array_equal(cfg.solve_spec.v, cfg.spec.v)


@pytest.mark.parametrize("text,line,fragment", [
    (MINIMAL + "\n[grid]\nhh = 0.1\n", 8, "unknown key 'hh'"),
    (MINIMAL + "\n[solverr]\ntol = 1e-8\n", 7, "unknown section"),
    (MINIMAL.replace("[0.0, 0.0]", "[0.0, 0.0, 1.0]"), 5, "3 entries"),
    (MINIMAL.replace("[[-1.0, 1.0]]", "[[-1.0, 1.0], [0.5, 2.0]]"), 2, "overlap"),
    (MINIMAL + "\n[grid]\nh = -0.25\n", 8, "positive"),
    (MINIMAL + "\n[solver]\nR_schedule = [0.5, 16.0]\n", 8, "enclose"),
    (MINIMAL + "\n[reconstruct]\ntwist_convention = \"other\"\n", 8, "twist_convention"),
    (MINIMAL + "psi = [[0.1], [0.2, 0.3]]\n", 6, "different lengths"),
    (MINIMAL + "chi = [[0.1], [0.2]]\npsi = [[0.0], [0.0]]\n", 6, "allow_chi"),
])
def test_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, announce=False)
    msg = str(exc.value)
    assert fragment in msg
    assert msg.startswith(f"line {line}:")


def test_missing_required_and_bad_command():
    with pytest.raises(ConfigError, match="gaps is required"):
        parse_config("[constants]\nv = [0.0]\n")
    with pytest.raises(ConfigError, match="v is required"):
        parse_config("[rods]\ngaps = [[-1.0, 1.0]]\n")
    with pytest.raises(ConfigError, match="command must be one of"):
        parse_config('command = "fly"\n' + MINIMAL)
    with pytest.raises(ConfigError, match="syntax error"):
        parse_config("[rods\n")


def test_overrides_replace_file_values():
    cfg = parse_config(MINIMAL, overrides={"solver.tol": 1e-11, "grid.refine": 2})
    assert cfg.params.tol == 1e-11 and cfg.params.refine == 2
    with pytest.raises(ConfigError, match="unknown override"):
        parse_config(MINIMAL, overrides={"solver.tolerance": 1.0})


def test_validate_command_needs_no_rods():
    cfg = parse_config('command = "validate"\n')
    assert cfg.N == 1


def test_load_config_prefixes_path(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(MINIMAL + "\n[grid]\nh = \"fine\"\n")
    with pytest.raises(ConfigError, match=r"bad\.toml: line 8:"):
        load_config(p)


def test_help_lists_every_section():
    text = help_text()
    for sec in ("[rods]", "[constants]", "[seed]", "[grid]", "[solver]", "[reconstruct]", "[diagnostics]"):
        assert sec in text
    assert "gaps" in text and "(required)" in text
