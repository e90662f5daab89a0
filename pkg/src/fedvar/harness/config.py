"""Experiment configuration: a JSON-serializable dataclass plus its hash.

The hash covers every semantically meaningful field, so two configs with
the same hash describe the same experiment; the output directory is
deliberately excluded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from ..dp import NOISE_MODES

KINDS = (
    "single_client_curve",
    "rank_table",
    "privacy_heatmap",
    "k_sweep",
    "t_sweep",
    "empirical",
)

RMSFE_AGGREGATES = ("mean", "pooled")

FORMAT_VERSION = 1


@dataclass(frozen=True)
class PanelSpec:
    """One client's CSV panel and its preprocessing.

    transforms: per-column code, or a single code broadcast to every
    column. 0 leaves a column as is, 1 takes first differences, 2 takes
    log differences (positive data only). sensitive lists 1-based column
    indices whose gradient coordinates are privacy-protected; the set is
    carried as metadata into run manifests.
    """

    path: str
    transforms: tuple = (0,)
    standardize: bool = False
    sensitive: tuple = ()
    client_id: str = ""

    def __post_init__(self):
        if isinstance(self.transforms, int):
            object.__setattr__(self, "transforms", (self.transforms,))
        object.__setattr__(self, "transforms", tuple(int(t) for t in self.transforms))
        for t in self.transforms:
            if t not in (0, 1, 2):
                raise ValueError(f"unknown transform code {t}")
        object.__setattr__(self, "sensitive", tuple(int(i) for i in self.sensitive))
        if any(i < 1 for i in self.sensitive):
            raise ValueError("sensitive indices are 1-based")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs besides the output location.

    Grid fields left empty fall back to per-kind defaults at run time.
    rounds=None means the ceil(10 log T) default.
    """

    kind: str
    seed: int
    out_dir: str = "out"
    d: int = 20
    p: int = 1
    rank: int = 2
    n_clients: int = 5
    t_len: int = 400
    reps: int = 100
    t_grid: tuple = ()
    rank_grid: tuple = ()
    k_grid: tuple = ()
    eps_grid: tuple = ()
    delta_grid: tuple = ()
    eps: float = 2.0
    delta: float = 0.1
    noise_mode: str = "none"
    kappa: float = 1.0
    sensitivity: float = 1.0
    ratio: float = 5.0
    q: float = 0.1
    s_q: float = 10.0
    target_radius: float = 0.9
    lam_scale: float = 1.4
    omega_scale: float = 1.0
    zeta: float | None = None
    rho_scale: float = 0.5
    varpi_scale: float = 0.5
    rounds: int | None = None
    fista_iters: int = 20
    n_origins: int = 20
    rmsfe_agg: str = "mean"
    panels: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for name in ("d", "p", "rank", "n_clients", "t_len", "fista_iters", "n_origins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.rmsfe_agg not in RMSFE_AGGREGATES:
            raise ValueError(f"unknown rmsfe aggregate {self.rmsfe_agg!r}")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError("rounds must be >= 1 when given")
        for name in ("t_grid", "rank_grid", "k_grid"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        for name in ("eps_grid", "delta_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        specs = tuple(
            s if isinstance(s, PanelSpec) else PanelSpec(**s) for s in self.panels
        )
        object.__setattr__(self, "panels", specs)
        if self.kind == "empirical" and not specs:
            raise ValueError("empirical experiments need at least one panel")


def to_json(cfg, path=None):
    """Serialize a config; returns the JSON text, optionally writing it."""
    doc = asdict(cfg)
    doc["format_version"] = FORMAT_VERSION
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def from_json(text=None, path=None, overrides=None):
    """Parse a config from JSON text or a file, applying CLI overrides."""
    if (text is None) == (path is None):
        raise ValueError("pass exactly one of text or path")
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("config document must be a JSON object")
    doc.pop("format_version", None)
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown config fields: {', '.join(unknown)}")
    if "kind" not in doc or "seed" not in doc:
        raise ValueError("config must set kind and seed")
    for name in ("t_grid", "rank_grid", "k_grid", "eps_grid", "delta_grid", "panels"):
        if name in doc and isinstance(doc[name], list):
            doc[name] = tuple(doc[name])
    return ExperimentConfig(**doc)


def config_hash(cfg):
    """Hex digest over every field except the output directory."""
    doc = asdict(cfg)
    doc.pop("out_dir")
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
