import pytest

from fracstrat.config import ConfigError, load_config, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg.gamma == 0.5 and cfg.a == 0.0
    assert cfg.builtin == "example-x1sq"
    assert cfg.strat_field == "member:2" and cfg.threads >= 1


def test_weight_exponent_cannot_be_set():
    text = "[problem]\ngamma = 0.25\n\na = 0.5\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, "cfg.ini")
    assert err.value.line == 4
    assert str(err.value).startswith("cfg.ini:4:")


@pytest.mark.parametrize("g", ["0", "1", "-0.2", "1.5"])
def test_gamma_must_lie_in_unit_interval(g):
    with pytest.raises(ConfigError) as err:
        parse_config(f"[problem]\ngamma = {g}\n")
    assert err.value.line == 2


def test_derived_a():
    assert parse_config("[problem]\ngamma = 0.25\n").a == pytest.approx(0.5)


@pytest.mark.parametrize("text,line", [("[solver]\nx = 1\n", 1), ("[grid]\nh = 0.1\nstep = 2\n", 3),
                                       ("[grid]\nh = abc\n", 2), ("[grid]\ndoubled = maybe\n", 2),
                                       ("[problem]\nchart = conformal\n", 2), ("[problem]\nchart = torus\n", 2),
                                       ("[problem]\ndata = builtin:nope\n", 2), ("[problem]\nbottom = odd\n", 2),
                                       ("[stratify]\nfield = member:0\n", 2), ("[stratify]\nmu = 1.5\n", 2),
                                       ("[run]\nthreads = 0\n", 2), ("h = 1\n", 1)])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line


def test_fraction_values_and_lists():
    cfg = parse_config("[grid]\nh = 1/32\n[stratify]\nk = 0, 1 2\neps = 1/10\n")
    assert cfg.h == 1 / 32 and cfg.k == [0, 1, 2] and cfg.strat_eps == pytest.approx(0.1)


def test_relative_paths_resolve_against_config(tmp_path):
    (tmp_path / "p.txt").write_text("n=1 d=1 a=0 k_sym=1\n1 1 0\n")
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text("[problem]\ndata = poly:p.txt\n[stratify]\nfield = poly:p.txt\n")
    cfg = load_config(cfgfile)
    assert cfg.data_path == (tmp_path / "p.txt").resolve()
    assert cfg.field_path == cfg.data_path


def test_missing_data_file(tmp_path):
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text("[problem]\n\ndata = samples:missing.csv\n")
    with pytest.raises(ConfigError) as err:
        load_config(cfgfile)
    assert err.value.line == 3


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
