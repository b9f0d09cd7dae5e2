"""Experiment configuration: YAML loading with key-path-precise errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .cdl import CdlConfig
from .steps import InertialConfig

TASKS = ("cdl", "csc", "denoise", "anomaly")


class ConfigError(ValueError):
    pass


class _Section:
    """Typed getters over one mapping, error messages carry the key path."""

    def __init__(self, data: dict, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def _fetch(self, name: str, default):
        self.seen.add(name)
        value = self.data.get(name, None)
        return default if value is None else value

    def check_unknown(self) -> None:
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(f"{self._key(extra[0])}: unknown key")

    def int(self, name: str, default=None, minimum=None):
        v = self._fetch(name, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self._key(name)}: expected an integer")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{self._key(name)}: must be at least {minimum}")
        return v

    def float(self, name: str, default=None, minimum=None,
              exclusive: bool = False):
        v = self._fetch(name, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._key(name)}: expected a number")
        v = float(v)
        if minimum is not None and (v < minimum or (exclusive and v == minimum)):
            cmp = "greater than" if exclusive else "at least"
            raise ConfigError(f"{self._key(name)}: must be {cmp} {minimum}")
        return v

    def bool(self, name: str, default=None):
        v = self._fetch(name, default)
        if v is None:
            return None
        if not isinstance(v, bool):
            raise ConfigError(f"{self._key(name)}: expected true or false")
        return v

    def str(self, name: str, default=None, choices=None):
        v = self._fetch(name, default)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ConfigError(f"{self._key(name)}: expected a string")
        if choices and v not in choices:
            raise ConfigError(
                f"{self._key(name)}: expected one of {', '.join(choices)}")
        return v

    def pair(self, name: str, default=None):
        """An int or a two-int list, normalized to a tuple."""
        v = self._fetch(name, default)
        if v is None:
            return None
        if isinstance(v, bool):
            raise ConfigError(f"{self._key(name)}: expected size(s)")
        if isinstance(v, int):
            return (v, v)
        if (isinstance(v, (list, tuple)) and len(v) == 2
                and all(isinstance(x, int) and not isinstance(x, bool)
                        and x > 0 for x in v)):
            return (v[0], v[1])
        raise ConfigError(
            f"{self._key(name)}: expected a positive integer or a pair")

    def str_list(self, name: str, default=None):
        v = self._fetch(name, default)
        if v is None:
            return None
        if not (isinstance(v, list) and all(isinstance(x, str) for x in v)):
            raise ConfigError(f"{self._key(name)}: expected a list of strings")
        return list(v)

    def sub(self, name: str):
        self.seen.add(name)
        v = self.data.get(name, None)
        if v is None:
            return None
        return _Section(v, self._key(name))


@dataclass
class DatasetConfig:
    images: list[str] | None = None
    crop: tuple[int, int] | None = None
    rescale: tuple[int, int] | None = None
    synthetic: tuple[int, tuple[int, int], int] | None = None


@dataclass
class HoldoutConfig:
    images: list[str]
    every: int = 50
    sparsity: float = 0.1
    iters: int = 200


@dataclass
class CscSection:
    dict_path: str
    solver: str = "admm"
    sparsity: float = 0.1
    iters: int = 200
    rho0: float | None = None
    relax: float = 1.8


@dataclass
class DenoiseSection:
    dict_paths: list[str]
    noise_sigma: float = 0.1
    noise_seed: int = 123
    grid_points: int = 10
    grid_low: float = 0.01
    grid_high: float = 1.0
    iters: int = 200


@dataclass
class AnomalyTrainSection:
    filters: int = 8
    filter_length: int = 16
    segment: tuple[int, int] = (0, 512)
    sparsity: float = 0.05
    outer_iters: int = 100


@dataclass
class AnomalySection:
    series_csv: str
    solver: str = "apg_cns"
    sparsity: float = 0.1
    anomaly_weight: float = 2.0
    grouping: str = "series"
    iters: int = 200
    flag_sigma: float = 3.0
    dict_paths: list[str] | None = None
    train: AnomalyTrainSection | None = None


@dataclass
class ExperimentConfig:
    task: str
    out_dir: str = "runs/out"
    seed: int = 0
    workers: int = 1
    deterministic: bool = True
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    cdl: CdlConfig | None = None
    holdout: HoldoutConfig | None = None
    csc: CscSection | None = None
    denoise: DenoiseSection | None = None
    anomaly: AnomalySection | None = None


def _parse_dataset(sec: _Section | None) -> DatasetConfig:
    if sec is None:
        return DatasetConfig()
    images = sec.str_list("images")
    crop = sec.pair("crop")
    rescale = sec.pair("rescale")
    synthetic = None
    syn = sec.sub("synthetic")
    if syn is not None:
        count = syn.int("count", default=5, minimum=1)
        shape = syn.pair("shape", default=(64, 64))
        sseed = syn.int("seed", default=7)
        syn.check_unknown()
        synthetic = (count, shape, sseed)
    sec.check_unknown()
    if images is None and synthetic is None:
        raise ConfigError("dataset: needs either images or synthetic")
    if images is not None and synthetic is not None:
        raise ConfigError("dataset: images and synthetic are exclusive")
    return DatasetConfig(images, crop, rescale, synthetic)


def _parse_inertial(sec: _Section | None) -> InertialConfig:
    if sec is None:
        return InertialConfig()
    scheme = sec.str("scheme", default="nesterov",
                     choices=("nesterov", "linear", "generalized"))
    a = sec.float("a", default=50.0)
    b = sec.float("b", default=2.0)
    sec.check_unknown()
    try:
        return InertialConfig(scheme, a, b)
    except ValueError as err:
        raise ConfigError(f"{sec.path}: {err}") from None


def _parse_cdl(sec: _Section | None, seed: int, workers: int
               ) -> tuple[CdlConfig, HoldoutConfig | None]:
    sec = sec or _Section({}, "cdl")
    inertial = _parse_inertial(sec.sub("inertial"))
    kwargs = dict(
        m_count=sec.int("filters", default=36, minimum=1),
        filter_shape=sec.pair("filter_size", default=(8, 8)),
        lam=sec.float("sparsity", default=0.1, minimum=0.0),
        outer_iters=sec.int("outer_iters", default=1000, minimum=1),
        coef_solver=sec.str("coef_solver", default="fista3k",
                            choices=("admm", "fista", "fista3k")),
        dict_solver=sec.str("dict_solver", default="apg_cns",
                            choices=("admm_cns", "apg", "apg_cns")),
        coef_iters=sec.int("coef_iters", default=1, minimum=1),
        dict_iters=sec.int("dict_iters", default=1, minimum=1),
        rho0=sec.float("rho0", minimum=0.0, exclusive=True),
        sigma0=sec.float("sigma0", minimum=0.0, exclusive=True),
        relax=sec.float("relax", default=1.8, minimum=0.0, exclusive=True),
        fista_c=sec.float("fista_c", default=0.2, minimum=0.0, exclusive=True),
        dict_step_rule=sec.str("dict_step_rule", default="bb3",
                               choices=("bb3", "cauchy")),
        inertial=inertial,
        seed=seed,
        workers=workers,
        trace_every=sec.int("trace_every", default=1, minimum=1),
    )
    holdout = None
    hsec = sec.sub("holdout")
    if hsec is not None:
        himages = hsec.str_list("images")
        if not himages:
            raise ConfigError(f"{hsec.path}.images: required")
        holdout = HoldoutConfig(
            images=himages,
            every=hsec.int("every", default=50, minimum=0),
            sparsity=hsec.float("sparsity", default=0.1, minimum=0.0),
            iters=hsec.int("iters", default=200, minimum=1),
        )
        hsec.check_unknown()
    sec.check_unknown()
    if kwargs["relax"] > 2.0:
        raise ConfigError("cdl.relax: must be in (0, 2]")
    try:
        return CdlConfig(**kwargs), holdout
    except ValueError as err:
        raise ConfigError(f"cdl: {err}") from None


def _parse_csc(sec: _Section | None) -> CscSection:
    if sec is None:
        raise ConfigError("csc: section required for this task")
    dict_path = sec.str("dict_path")
    if not dict_path:
        raise ConfigError("csc.dict_path: required")
    out = CscSection(
        dict_path=dict_path,
        solver=sec.str("solver", default="admm",
                       choices=("admm", "fista", "fista3k")),
        sparsity=sec.float("sparsity", default=0.1, minimum=0.0),
        iters=sec.int("iters", default=200, minimum=1),
        rho0=sec.float("rho0", minimum=0.0, exclusive=True),
        relax=sec.float("relax", default=1.8, minimum=0.0, exclusive=True),
    )
    sec.check_unknown()
    if out.relax > 2.0:
        raise ConfigError("csc.relax: must be in (0, 2]")
    return out


def _parse_denoise(sec: _Section | None) -> DenoiseSection:
    if sec is None:
        raise ConfigError("denoise: section required for this task")
    paths = sec.str_list("dict_paths")
    if not paths:
        raise ConfigError("denoise.dict_paths: required")
    grid = sec.sub("lambda_grid")
    points, low, high = 10, 0.01, 1.0
    if grid is not None:
        points = grid.int("points", default=10, minimum=2)
        low = grid.float("low", default=0.01, minimum=0.0, exclusive=True)
        high = grid.float("high", default=1.0, minimum=0.0, exclusive=True)
        grid.check_unknown()
        if high <= low:
            raise ConfigError("denoise.lambda_grid: high must exceed low")
    out = DenoiseSection(
        dict_paths=paths,
        noise_sigma=sec.float("noise_sigma", default=0.1, minimum=0.0),
        noise_seed=sec.int("noise_seed", default=123),
        grid_points=points,
        grid_low=low,
        grid_high=high,
        iters=sec.int("iters", default=200, minimum=1),
    )
    sec.check_unknown()
    return out


def _parse_anomaly(sec: _Section | None) -> AnomalySection:
    if sec is None:
        raise ConfigError("anomaly: section required for this task")
    series_csv = sec.str("series_csv")
    if not series_csv:
        raise ConfigError("anomaly.series_csv: required")
    dict_paths = sec.str_list("dict_paths")
    train = None
    tsec = sec.sub("train")
    if tsec is not None:
        seg = tsec._fetch("segment", (0, 512))
        if not (isinstance(seg, (list, tuple)) and len(seg) == 2
                and all(isinstance(x, int) and not isinstance(x, bool)
                        for x in seg) and 0 <= seg[0] < seg[1]):
            raise ConfigError(f"{tsec.path}.segment: expected [start, stop] "
                              "with start < stop")
        train = AnomalyTrainSection(
            filters=tsec.int("filters", default=8, minimum=1),
            filter_length=tsec.int("filter_length", default=16, minimum=1),
            segment=(seg[0], seg[1]),
            sparsity=tsec.float("sparsity", default=0.05, minimum=0.0),
            outer_iters=tsec.int("outer_iters", default=100, minimum=1),
        )
        tsec.check_unknown()
    if (dict_paths is None) == (train is None):
        raise ConfigError("anomaly: exactly one of dict_paths or train "
                          "is required")
    out = AnomalySection(
        series_csv=series_csv,
        solver=sec.str("solver", default="apg_cns",
                       choices=("apg_cns", "admm_cns")),
        sparsity=sec.float("sparsity", default=0.1, minimum=0.0),
        anomaly_weight=sec.float("anomaly_weight", default=2.0, minimum=0.0),
        grouping=sec.str("grouping", default="series",
                         choices=("series", "timestep")),
        iters=sec.int("iters", default=200, minimum=1),
        flag_sigma=sec.float("flag_sigma", default=3.0, minimum=0.0),
        dict_paths=dict_paths,
        train=train,
    )
    sec.check_unknown()
    return out


def load_config(path, task: str | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment file.

    ``task`` (usually from the command line) must agree with the file's
    ``task`` key when both are present.
    """
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from None
    if raw is None:
        raw = {}
    top = _Section(raw)
    file_task = top.str("task", choices=TASKS)
    if task is None:
        task = file_task
    if task is None:
        raise ConfigError("task: required (in the file or via the command)")
    if file_task is not None and file_task != task:
        raise ConfigError(
            f"task: file says {file_task!r} but the command runs {task!r}")
    seed = top.int("seed", default=0, minimum=0)
    workers = top.int("workers", default=1, minimum=1)
    cfg = ExperimentConfig(
        task=task,
        out_dir=top.str("out_dir", default="runs/out"),
        seed=seed,
        workers=workers,
        deterministic=top.bool("deterministic", default=True),
        dataset=_parse_dataset(top.sub("dataset")),
    )
    if task == "cdl":
        cfg.cdl, cfg.holdout = _parse_cdl(top.sub("cdl"), seed, workers)
    elif task == "csc":
        cfg.csc = _parse_csc(top.sub("csc"))
    elif task == "denoise":
        cfg.denoise = _parse_denoise(top.sub("denoise"))
    else:
        cfg.anomaly = _parse_anomaly(top.sub("anomaly"))
    if task != "anomaly" and cfg.dataset.images is None \
            and cfg.dataset.synthetic is None:
        raise ConfigError("dataset: required for this task")
    top.check_unknown()
    return cfg
