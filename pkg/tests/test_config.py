"""Experiment-file parsing: defaults, key-path errors, and task wiring."""

import pytest

from consprox.config import ConfigError, load_config


def _write(tmp_path, text, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


MINIMAL_CDL = """
task: cdl
dataset:
  synthetic:
    count: 3
    shape: 32
"""


class TestTaskSelection:
    def test_task_from_file(self, tmp_path):
        cfg = load_config(_write(tmp_path, MINIMAL_CDL))
        assert cfg.task == "cdl"

    def test_task_from_command(self, tmp_path):
        path = _write(tmp_path, "dataset:\n  synthetic: {count: 2}\n")
        cfg = load_config(path, task="cdl")
        assert cfg.task == "cdl"

    def test_task_required(self, tmp_path):
        with pytest.raises(ConfigError, match="task: required"):
            load_config(_write(tmp_path, "dataset:\n  synthetic: {}\n"))

    def test_task_mismatch(self, tmp_path):
        with pytest.raises(ConfigError, match="file says 'cdl'"):
            load_config(_write(tmp_path, MINIMAL_CDL), task="csc")

    def test_unknown_task(self, tmp_path):
        with pytest.raises(ConfigError, match="task: expected one of"):
            load_config(_write(tmp_path, "task: train\n"))


class TestDefaults:
    def test_cdl_defaults(self, tmp_path):
        cfg = load_config(_write(tmp_path, MINIMAL_CDL))
        assert cfg.seed == 0 and cfg.workers == 1 and cfg.deterministic
        assert cfg.out_dir == "runs/out"
        assert cfg.dataset.synthetic == (3, (32, 32), 7)
        c = cfg.cdl
        assert c.m_count == 36
        assert c.filter_shape == (8, 8)
        assert c.lam == 0.1
        assert c.coef_solver == "fista3k"
        assert c.dict_solver == "apg_cns"
        assert c.dict_step_rule == "bb3"
        assert c.inertial.scheme == "nesterov"
        assert cfg.holdout is None

    def test_seed_and_workers_propagate(self, tmp_path):
        cfg = load_config(_write(tmp_path, MINIMAL_CDL + "seed: 9\nworkers: 4\n"))
        assert cfg.cdl.seed == 9 and cfg.cdl.workers == 4

    def test_overrides(self, tmp_path):
        text = MINIMAL_CDL + """
cdl:
  filters: 4
  filter_size: [4, 6]
  sparsity: 0.3
  outer_iters: 20
  coef_solver: admm
  dict_solver: admm_cns
  inertial:
    scheme: generalized
    a: 10
    b: 2
  holdout:
    images: [a.png]
"""
        cfg = load_config(_write(tmp_path, text))
        assert cfg.cdl.m_count == 4
        assert cfg.cdl.filter_shape == (4, 6)
        assert cfg.cdl.inertial.scheme == "generalized"
        assert cfg.cdl.inertial.a == 10.0
        assert cfg.holdout.images == ["a.png"]
        assert cfg.holdout.every == 50  # default cadence


class TestErrors:
    def test_unknown_key_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="cdl.flters: unknown key"):
            load_config(_write(tmp_path, MINIMAL_CDL + "cdl:\n  flters: 9\n"))

    def test_nested_unknown_key(self, tmp_path):
        text = "task: cdl\ndataset:\n  synthetic:\n    count: 2\n    sed: 1\n"
        with pytest.raises(ConfigError,
                           match="dataset.synthetic.sed: unknown key"):
            load_config(_write(tmp_path, text))

    def test_type_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="seed: expected an integer"):
            load_config(_write(tmp_path, MINIMAL_CDL + "seed: fast\n"))
        with pytest.raises(ConfigError, match="workers: must be at least 1"):
            load_config(_write(tmp_path, MINIMAL_CDL + "workers: 0\n"))
        with pytest.raises(ConfigError,
                           match="deterministic: expected true or false"):
            load_config(_write(tmp_path, MINIMAL_CDL + "deterministic: 1\n"))

    def test_pair_contract(self, tmp_path):
        text = "task: cdl\ndataset:\n  images: [a.png]\n  crop: [4]\n"
        with pytest.raises(ConfigError, match="dataset.crop"):
            load_config(_write(tmp_path, text))
        cfg = load_config(_write(
            tmp_path, "task: cdl\ndataset:\n  images: [a.png]\n  crop: 48\n"))
        assert cfg.dataset.crop == (48, 48)

    def test_dataset_required(self, tmp_path):
        with pytest.raises(ConfigError, match="dataset"):
            load_config(_write(tmp_path, "task: cdl\n"))

    def test_dataset_sources_exclusive(self, tmp_path):
        text = ("task: cdl\ndataset:\n  images: [a.png]\n"
                "  synthetic: {count: 2}\n")
        with pytest.raises(ConfigError, match="exclusive"):
            load_config(_write(tmp_path, text))
        with pytest.raises(ConfigError, match="images or synthetic"):
            load_config(_write(tmp_path, "task: cdl\ndataset: {crop: 8}\n"))

    def test_relax_bound(self, tmp_path):
        text = ("task: csc\ndataset:\n  images: [a.png]\n"
                "csc:\n  dict_path: d.cpxd\n  relax: 2.5\n")
        with pytest.raises(ConfigError, match=r"csc.relax: must be in \(0, 2\]"):
            load_config(_write(tmp_path, text))

    def test_inertial_validation_wrapped(self, tmp_path):
        text = MINIMAL_CDL + "cdl:\n  inertial:\n    scheme: linear\n    b: 1\n"
        with pytest.raises(ConfigError, match="cdl.inertial"):
            load_config(_write(tmp_path, text))

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(_write(tmp_path, "task: [unclosed\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.yaml")


class TestCscSection:
    def test_required(self, tmp_path):
        with pytest.raises(ConfigError, match="csc: section required"):
            load_config(_write(
                tmp_path, "task: csc\ndataset:\n  images: [a.png]\n"))
        with pytest.raises(ConfigError, match="csc.dict_path: required"):
            load_config(_write(
                tmp_path,
                "task: csc\ndataset:\n  images: [a.png]\ncsc: {iters: 5}\n"))

    def test_solver_choices(self, tmp_path):
        text = ("task: csc\ndataset:\n  images: [a.png]\n"
                "csc:\n  dict_path: d.cpxd\n  solver: sgd\n")
        with pytest.raises(ConfigError, match="csc.solver: expected one of"):
            load_config(_write(tmp_path, text))


class TestDenoiseSection:
    def test_defaults(self, tmp_path):
        text = ("task: denoise\ndataset:\n  images: [a.png]\n"
                "denoise:\n  dict_paths: [x.cpxd, y.cpxd]\n")
        cfg = load_config(_write(tmp_path, text))
        d = cfg.denoise
        assert d.dict_paths == ["x.cpxd", "y.cpxd"]
        assert d.noise_sigma == 0.1
        assert (d.grid_points, d.grid_low, d.grid_high) == (10, 0.01, 1.0)

    def test_grid_order(self, tmp_path):
        text = ("task: denoise\ndataset:\n  images: [a.png]\n"
                "denoise:\n  dict_paths: [x.cpxd]\n"
                "  lambda_grid: {low: 1.0, high: 0.5}\n")
        with pytest.raises(ConfigError, match="high must exceed low"):
            load_config(_write(tmp_path, text))


class TestAnomalySection:
    BASE = "task: anomaly\nanomaly:\n  series_csv: data.csv\n"

    def test_train_defaults(self, tmp_path):
        cfg = load_config(_write(tmp_path, self.BASE + "  train: {}\n"))
        a = cfg.anomaly
        assert a.solver == "apg_cns"
        assert a.grouping == "series"
        assert a.anomaly_weight == 2.0
        assert a.train.filters == 8
        assert a.train.segment == (0, 512)
        assert a.dict_paths is None
        assert cfg.dataset.images is None  # no image dataset needed

    def test_dict_paths_variant(self, tmp_path):
        cfg = load_config(_write(
            tmp_path, self.BASE + "  dict_paths: [a.cpxd, b.cpxd]\n"))
        assert cfg.anomaly.dict_paths == ["a.cpxd", "b.cpxd"]
        assert cfg.anomaly.train is None

    def test_source_exclusivity(self, tmp_path):
        with pytest.raises(ConfigError, match="exactly one of"):
            load_config(_write(tmp_path, self.BASE))
        with pytest.raises(ConfigError, match="exactly one of"):
            load_config(_write(
                tmp_path,
                self.BASE + "  dict_paths: [a.cpxd]\n  train: {}\n"))

    def test_segment_validation(self, tmp_path):
        text = self.BASE + "  train:\n    segment: [10, 4]\n"
        with pytest.raises(ConfigError, match="anomaly.train.segment"):
            load_config(_write(tmp_path, text))

    def test_grouping_choices(self, tmp_path):
        cfg = load_config(_write(
            tmp_path, self.BASE + "  train: {}\n  grouping: timestep\n"))
        assert cfg.anomaly.grouping == "timestep"
        with pytest.raises(ConfigError, match="anomaly.grouping"):
            load_config(_write(
                tmp_path, self.BASE + "  train: {}\n  grouping: column\n"))
