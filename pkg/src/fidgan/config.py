"""YAML experiment configuration with strict keys.

Every section maps onto a dataclass below; unknown keys anywhere are an
error, and every random stream draws from a named seed in ``seeds``.
"""
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import yaml


@dataclass
class Seeds:
    phantom: int = 0
    noise: int = 1
    patches: int = 2
    train: int = 3


@dataclass
class PhantomSection:
    size: int = 64
    count: int = 20
    kinds: list = field(default_factory=lambda: ["S1", "S2", "S3"])
    anomaly_radius: Optional[float] = None


@dataclass
class GeometrySection:
    n_angles: int = 180
    pitch: float = 1.0


@dataclass
class NoiseSection:
    mode: str = "gaussian"  # or "quantum"
    sigma: float = 25.0  # HU, gaussian mode
    blank_flux: float = 8e4
    electronic_sd: float = 10.0
    flux_sweep: list = field(default_factory=list)  # quantum mode: one output set per value


@dataclass
class NetworkSection:
    scales: int = 2
    base_channels: int = 8
    lrelu_slope: float = 0.2
    disc_channels: list = field(default_factory=lambda: [8, 16, 32])


@dataclass
class TrainingSection:
    lambda_: float = 10.0
    lr: float = 2e-4
    batch_size: int = 40
    epochs: int = 300
    d_steps_per_g_step: int = 1
    intensity_scale: float = 100.0
    checkpoint_every: int = 0
    clean_kind: str = "S1"
    noisy_kind: str = "S3"


@dataclass
class PatchSection:
    size: int = 32
    stride: int = 4
    per_image: int = 40
    denoise_stride: int = 8


@dataclass
class MetricsSection:
    peak: Optional[float] = None
    ssim_window: int = 8
    kind: str = "S3"


@dataclass
class VerifySection:
    pairs: int = 20
    min_support: int = 2
    max_support: int = 16
    lambda_: float = 0.5
    fidelity: float = 0.3
    tol: float = 1e-8
    grid_tol: float = 1e-7
    seed: int = 0


@dataclass
class ExperimentConfig:
    out: str = "run"
    seeds: Seeds = field(default_factory=Seeds)
    phantom: PhantomSection = field(default_factory=PhantomSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    patches: PatchSection = field(default_factory=PatchSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    verify: VerifySection = field(default_factory=VerifySection)

    def to_dict(self):
        return _export(asdict(self))


# "lambda" is a Python keyword; the document spells it plainly
_RENAMES = {"lambda": "lambda_"}


def _export(d):
    if isinstance(d, dict):
        return {("lambda" if k == "lambda_" else k): _export(v) for k, v in d.items()}
    return d


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValueError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _RENAMES.get(key, key)
        where = f"{path}.{key}" if path else key
        if name not in known:
            raise ValueError(f"unknown config key {where!r}")
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if hasattr(default, "__dataclass_fields__"):
            kwargs[name] = _build(type(default), value, where)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data):
    return _build(ExperimentConfig, data or {}, "")


def load(path):
    with open(path) as fh:
        return from_dict(yaml.safe_load(fh))


def dump(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
