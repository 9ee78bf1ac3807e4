import pytest

from simaps.config import RunConfig, dump_config, load_config, parse_config
from simaps.errors import ConfigError


def test_defaults_round_trip():
    cfg = RunConfig()
    assert parse_config(dump_config(cfg)) == cfg


def test_values_are_typed():
    cfg = parse_config("""
[map]
scale = 0.1
width = 50
[merge]
k_percent = 9
[nav]
void_navigable = yes
navigable_classes = 0, 7
[paths]
dataset = /data/scene
""")
    assert cfg.map.scale == 0.1 and cfg.map.width == 50
    assert cfg.merge.k_percent == 9.0
    assert cfg.nav.void_navigable is True and cfg.nav.navigable_classes == (0, 7)
    assert cfg.paths.dataset == "/data/scene"
    assert parse_config(dump_config(cfg)) == cfg


def test_navigable_auto():
    assert parse_config("[nav]\nnavigable_classes = auto\n").nav.navigable_classes is None


@pytest.mark.parametrize("text", [
    "[mapp]\nscale = 0.1\n",
    "[map]\nscael = 0.1\n",
    "[map]\nscale = fast\n",
    "[nav]\nvoid_navigable = maybe\n",
    "[merge]\nk_percent = 150\n",
    "[nav]\ninflation = -1\n",
    "scale = 0.1\n",
])
def test_rejects_bad_files(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.ini"))
    p = tmp_path / "run.ini"
    p.write_text("[eval]\ntau = 0.75\n")
    assert load_config(str(p)).eval.tau == 0.75
