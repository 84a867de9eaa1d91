import pytest

from citeimpact.config import ConfigError, RunConfig, apply_overrides, load_config, save_config


def test_defaults_validate():
    cfg = load_config()
    assert cfg.train.lr == 1e-4 and cfg.graph.K == (100, 20) and cfg.model.layers == 4
    assert cfg.encoder_config(384).T == 5


def test_yaml_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("train:\n  lr: 1e-3\n  batch_size: 8\ngraph:\n  K: [10, 3]\n")
    cfg = load_config(p, ["train.alpha=0", "model.hidden_dim=16", "data.network=/x"])
    assert cfg.train.lr == 1e-3 and isinstance(cfg.train.lr, float)
    assert cfg.graph.K == (10, 3) and cfg.train.alpha == 0 and cfg.model.hidden_dim == 16
    assert cfg.data.network == "/x"


def test_round_trip(tmp_path):
    cfg = load_config(None, ["model.share_snapshots=true", "train.stop_train_male=0.1"])
    save_config(cfg, tmp_path / "out.yaml")
    assert load_config(tmp_path / "out.yaml") == cfg
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("override", ["model.cocite_weight=2", "graph.K=[5]", "train.tau=0",
                                      "train.drop_fraction=0.95", "train.dtype=float16", "model.hidden_dim=10",
                                      "train.stop_train_male=0"])
def test_invalid_values(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])


def test_unknown_keys():
    with pytest.raises(ConfigError):
        load_config(None, ["train.nope=1"])
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"extra": {}})
    with pytest.raises(ConfigError):
        apply_overrides({}, ["no_equals_sign"])
