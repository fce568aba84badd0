import copy

import numpy as np
import pytest
import yaml
from pathlib import Path

from bnnreach.abstraction import Label
from bnnreach.config import ConfigError, ExperimentConfig, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "horizon": 3,
    "environment": {"name": "chain1d"},
    "region": {"bounds": {"lo": [0.0], "hi": [1.0]}, "goal": {"lo": [0.8], "hi": [1.0]}},
    "partition": {"cells_per_dim": [10]},
}


def make(**changes):
    d = copy.deepcopy(BASE)
    for k, v in changes.items():
        d[k] = v
    return d


def test_defaults_and_builders():
    cfg = ExperimentConfig.from_dict(make())
    part = cfg.build_partition()
    assert part.n_cells == 10 and part.cells[-1].label == Label.GOAL
    assert cfg.cert_config().n_s == 20
    assert len(cfg.action_grid()) == 3
    assert cfg.to_dict()["horizon"] == 3


@pytest.mark.parametrize(
    "changes",
    [
        {"bogus": 1},
        {"environment": {"name": "segway"}},
        {"environment": {"name": "chain1d", "params": {"friction": 1.0}}},
        {"environment": {"name": "puck2d"}},
        {"partition": {"cells_per_dim": [10, 10]}},
        {"partition": {"cells_per_dim": [0]}},
        {"partition": {"cells_per_dim": [10], "discretized_dims": [1]}},
        {"certify": {"eta": 1.5}},
        {"certify": {"n_s": 10, "extra": True}},
        {"bnn": {"activation": "sigmoid"}},
        {"synthesis": {"actions": [[0.1, 0.2]]}},
        {"synthesis": {"actions": [[2.0]]}},
        {"region": {"bounds": {"lo": [0.0], "hi": [1.0]}, "goal": {"lo": [0.8], "hi": [1.5]}}},
        {"region": {"bounds": {"lo": [0.0], "hi": [1.0]}, "goal": {"lo": [0.8, 0.0], "hi": [1.0, 1.0]}}},
        {"horizon": -1},
        {"data": {"behavior": "teleop"}},
        {"simulate": {"n_traj": 0}},
    ],
)
def test_rejections(changes):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(make(**changes))


def test_goal_null_entries_default_to_bounds():
    d = make(
        environment={"name": "puck2d"},
        region={
            "bounds": {"lo": [-1, -1, -0.5, -0.5], "hi": [1, 1, 0.5, 0.5]},
            "goal": {"lo": [-0.2, -0.2, None, None], "hi": [0.2, 0.2, None, None]},
            "obstacles": [{"vertices": [[0.4, 0.4], [0.8, 0.4], [0.6, 0.8]]}],
        },
        partition={"cells_per_dim": [4, 4], "discretized_dims": [0, 1]},
    )
    cfg = ExperimentConfig.from_dict(d)
    spec = cfg.region_spec()
    assert np.array_equal(spec.goal.lo, [-0.2, -0.2, -0.5, -0.5])
    assert len(spec.obstacles) == 1
    assert cfg.build_partition().n_cells == 16


def test_load_config_with_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(make()))
    assert load_config(p, {"seed": 7}).seed == 7
    (tmp_path / "bad.yaml").write_text("horizon: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.yaml")


def test_shipped_configs_validate():
    for name in ("chain1d", "puck2d", "chain1d_clamp"):
        cfg = load_config(CONFIGS / f"{name}.yaml")
        assert cfg.build_partition().n_cells <= 400
        assert cfg.horizon <= 10 and cfg.certify.n_s <= 200
