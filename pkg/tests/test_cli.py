import json
from pathlib import Path

import pytest

from ssx.cli import EXIT_CONFIG, EXIT_OK, EXIT_PIPELINE, main
from ssx.config import ConfigError, SCHEMA, defaults, parse_config, reference

DEMOS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- config --------------------------------------------------------------------

def test_defaults_depend_on_environment():
    fr, mp = defaults("four_rooms"), defaults("minipac")
    assert fr["policy.kind"] == "value_iteration" and fr["ssx.lambda"] == 50.0
    assert mp["policy.kind"] == "scripted" and mp["ssx.lambda"] == 0.1 and mp["ssx.horizon"] == 6


def test_parse_values_and_comments():
    cfg = parse_config("env.type = minipac  # board\n# note\neval.fractions = 1, 0.5\n"
                       "ssx.weighted_counts = off\nenv.scheme = HUNT\n")
    assert cfg["eval.fractions"] == [1.0, 0.5]
    assert cfg["ssx.weighted_counts"] is False
    assert cfg["env.scheme"] == "HUNT"


@pytest.mark.parametrize("text, msg", [
    ("ssx.bogus = 1\n", "unknown key"),
    ("ssx.k = 2\nssx.k = 3\n", "given twice"),
    ("ssx.k = 0\n", "out of range"),
    ("ssx.k = two\n", "bad value"),
    ("env.type = maze\n", "bad value"),
    ("just words\n", "expected"),
    ("policy.kind = scripted\n", "only for MiniPac"),
    ("policy.kind = file\n", "needs policy.path"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_canonical_form_and_hash():
    a = parse_config("ssx.k = 3\nenv.type = four_rooms\n")
    b = parse_config("env.type = four_rooms\n\nssx.k=3\n")
    assert a.canonical() == b.canonical() and a.hash() == b.hash()
    assert a.hash() != parse_config("ssx.k = 4\n").hash()
    # the canonical text parses back to the same values
    assert parse_config(a.canonical()).values == a.values


def test_reference_lists_every_key():
    ref = reference()
    for key in SCHEMA:
        assert f"\n{key} = " in "\n" + ref


# -- command line ------------------------------------------------------------------

def test_explain_is_byte_identical(tmp_path):
    cfg = str(DEMOS / "four_rooms.cfg")
    assert main(["explain", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["explain", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("explanation.json", "explanation.svg", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    doc = json.loads((tmp_path / "a" / "explanation.json").read_text())
    assert len(doc["meta_states"]) == 4
    assert doc["env"]["type"] == "four_rooms"


def test_seed_flag_changes_config_hash(tmp_path):
    cfg = str(DEMOS / "four_rooms.cfg")
    main(["explain", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "3"])
    doc = json.loads((tmp_path / "a" / "explanation.json").read_text())
    assert doc["seed"] == 3 and doc["params"]["seed"] == 3


def test_render_reproduces_svg(tmp_path):
    cfg = str(DEMOS / "four_rooms.cfg")
    main(["explain", "--config", cfg, "--out", str(tmp_path / "a")])
    assert main(["render", "--config", cfg, "--input", str(tmp_path / "a" / "explanation.json"),
                 "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "a" / "explanation.svg").read_bytes() == \
           (tmp_path / "r" / "explanation.svg").read_bytes()


def test_trained_policy_file_gives_same_explanation(tmp_path):
    cfg = write(tmp_path, "env.type = four_rooms\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == EXIT_OK
    pf = write(tmp_path, f"env.type = four_rooms\npolicy.kind = file\n"
                         f"policy.path = {tmp_path / 't' / 'policy.json'}\n", "pf.cfg")
    main(["explain", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["explain", "--config", pf, "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "explanation.json").read_text())
    b = json.loads((tmp_path / "b" / "explanation.json").read_text())
    assert a["partition"] == b["partition"] and a["meta_states"] == b["meta_states"]


def test_eval_growth(tmp_path):
    cfg = write(tmp_path, "env.type = minipac\neval.growth_roots = 3\neval.n_max = 3\n")
    assert main(["eval", "--config", cfg, "--study", "growth", "--out", str(tmp_path / "g")]) == EXIT_OK
    lines = (tmp_path / "g" / "growth.csv").read_text().splitlines()
    assert lines[0] == "N,mean_states" and len(lines) == 4
    manifest = json.loads((tmp_path / "g" / "manifest.json").read_text())
    assert set(manifest["files"]) == {"growth.csv", "growth.svg"}


def test_eval_perturbation_on_trajectory_roots(tmp_path):
    cfg = write(tmp_path, "env.type = minipac\nenv.scheme = HUNT\neval.root_source = trajectory\n"
                          "eval.roots = 2\neval.n_perturbations = 2\nssx.horizon = 3\n")
    out = tmp_path / "p"
    assert main(["eval", "--config", cfg, "--study", "perturbation", "--out", str(out)]) == EXIT_OK
    assert (out / "manifest.json").exists()


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "ssx.bogus = 1\n")
    assert main(["explain", "--config", bad, "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "unknown key" in capsys.readouterr().err
    assert main(["explain", "--config", str(tmp_path / "missing.cfg"), "--out", "x"]) == EXIT_CONFIG
    assert main(["explain", "--out", str(tmp_path / "x"), "--seed", "-1"]) == EXIT_CONFIG
    assert main(["explain"]) == EXIT_CONFIG
    assert main(["nonsense"]) == EXIT_CONFIG
    nofile = write(tmp_path, f"policy.kind = file\npolicy.path = {tmp_path / 'none.json'}\n", "p.cfg")
    assert main(["explain", "--config", nofile, "--out", str(tmp_path / "x")]) == EXIT_PIPELINE
    assert "[policy]" in capsys.readouterr().err
    impossible = write(tmp_path, "env.type = minipac\nroot.state = random\n"
                                 "root.min_ghost_distance = 60\n", "r.cfg")
    assert main(["explain", "--config", impossible, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_config_reference_command(capsys):
    assert main(["config-reference"]) == EXIT_OK
    assert "ssx.k = 4" in capsys.readouterr().out
