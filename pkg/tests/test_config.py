import pytest

from parabolic_cl.config import ABLATIONS, load, parse_overrides, parse_text
from parabolic_cl.errors import ConfigError

TEXT = """
[experiment]
output_dir = out
seeds = 0, 1
method = pcl, er

[stream]
n_tasks = 2
separation = 2.5

[train]
hidden = 32, 16
lr = 0.05

[pcl]
sigma_x = 0.1
include_endpoints = false
drift_kind = gaussian_prior
drift_center = 0, 0
"""


def test_parse_and_build(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(TEXT)
    exp = load(p)
    assert exp.seeds == (0, 1)
    assert exp.methods == ("pcl", "er")
    assert exp.output_dir == tmp_path / "out"
    cfg = exp.run_config("pcl", 1)
    assert cfg.seed == 1 and cfg.stream.seed == 1
    assert cfg.stream.n_tasks == 2 and cfg.stream.separation == 2.5
    assert cfg.hidden == (32, 16) and cfg.lr == 0.05
    assert cfg.pcl.bridge.sigma_x == 0.1 and cfg.pcl.bridge.sigma_y == 0.01
    assert cfg.pcl.include_endpoints is False
    assert cfg.pcl.drift.active and cfg.pcl.drift.center == (0.0, 0.0)


def test_defaults_without_sections():
    exp = parse_text("")
    cfg = exp.run_config("sgd", 0)
    assert cfg.lr == 0.08 and cfg.buffer_batch == 32 and cfg.pcl.bridge.k == 4


@pytest.mark.parametrize("text,msg", [
    ("[bogus]\na = 1\n", "unknown section"),
    ("[stream]\n\nn_task = 3\n", "line 3"),
    ("[train]\nlr = fast\n", "lr"),
    ("[pcl]\nshared_noise = maybe\n", "boolean"),
    ("no section header\n", "section"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_text(text)


def test_invalid_values_surface_as_config_errors():
    exp = parse_text("[stream]\ngenerator = cifar\n")
    with pytest.raises(ConfigError):
        exp.run_config("pcl", 0)


def test_overrides():
    ov = parse_overrides(["train.lr=0.2", "experiment.seeds=3,4", "pcl.pairing=euclidean_sorted"])
    assert ov == {"train.lr": 0.2, "experiment.seeds": (3, 4), "pcl.pairing": "euclidean_sorted"}
    exp = parse_text(TEXT).with_overrides(ov)
    assert exp.run_config("pcl", 3).lr == 0.2
    for bad in ("lr=0.2", "train.speed=1", "train.lr"):
        with pytest.raises(ConfigError):
            parse_overrides([bad])


def test_ablation_grid_named_and_product():
    exp = parse_text("[ablate]\nvariants = default, one_bb, max_loss\n")
    names = [n for n, _ in exp.ablation_grid()]
    assert names == ["default", "one_bb", "max_loss"]
    exp = parse_text("[ablate]\npairing = random_shuffle, euclidean_sorted\nvariance = constant\n")
    assert len(exp.ablation_grid()) == 2
    with pytest.raises(ConfigError):
        parse_text("[ablate]\nvariants = nope\n").ablation_grid()
    assert len(ABLATIONS) == 7


def test_ablation_presets_build():
    exp = parse_text("")
    for name, extra in ABLATIONS.items():
        cfg = exp.run_config("pcl", 0, extra)
        assert cfg.method == "pcl", name
    assert exp.run_config("pcl", 0, ABLATIONS["one_bb"]).pcl.shared_noise
    assert exp.run_config("pcl", 0, ABLATIONS["middle_loss"]).buffer_filter == "middle_loss"
