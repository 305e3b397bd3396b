"""Run configuration with per-dataset defaults."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ._validation import InputError, check_fraction, check_positive_int, check_ratio
from .coarsener import COST_MODES

TASKS = ("nc", "lp", "none")

# tuned settings (batch, SGC depth, PCA dim, neighbors per node, global fraction)
PRESETS = {
    ("cora", "nc"): dict(batch=10, sgc_k=3, pca_dim=15, knn=1, global_frac=0.01),
    ("cora", "lp"): dict(batch=10, sgc_k=4, pca_dim=15, knn=1, global_frac=0.01),
    ("citeseer", "nc"): dict(batch=1, sgc_k=3, pca_dim=5, knn=3, global_frac=0.1),
    ("citeseer", "lp"): dict(batch=1, sgc_k=4, pca_dim=10, knn=1, global_frac=0.01),
}

GENERIC = dict(batch=10, sgc_k=3, pca_dim=15, knn=1, global_frac=0.01)


@dataclass
class RunConfig:
    ratio: float = 0.1
    batch: int = 10
    sgc_k: int = 3
    pca_dim: int = 15
    knn: int = 1
    global_frac: float = 0.01
    cost: str = "approx"
    seed: int = 0
    task: str = "none"
    max_regenerations: int | None = None
    debug_verify: bool = False

    def __post_init__(self):
        self.ratio = check_ratio(self.ratio)
        self.batch = check_positive_int(self.batch, "batch")
        self.sgc_k = check_positive_int(self.sgc_k, "sgc_k", 0)
        self.pca_dim = check_positive_int(self.pca_dim, "pca_dim")
        self.knn = check_positive_int(self.knn, "knn")
        self.global_frac = check_fraction(self.global_frac, "global_frac")
        self.seed = int(self.seed)
        if self.cost not in COST_MODES:
            raise InputError(f"cost must be one of {COST_MODES}, got {self.cost!r}")
        if self.task not in TASKS:
            raise InputError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.max_regenerations is not None:
            self.max_regenerations = check_positive_int(self.max_regenerations, "max_regenerations", 0)

    @classmethod
    def resolve(cls, dataset: str | None = None, **overrides) -> "RunConfig":
        """Preset values for a recognized ``(dataset, task)``, then explicit overrides."""
        task = overrides.get("task") or "none"
        base = dict(GENERIC)
        if dataset is not None:
            key = (dataset.lower(), "lp" if task == "lp" else "nc")
            if key not in PRESETS:
                raise InputError(f"no preset for dataset {dataset!r}; known: cora, citeseer")
            base.update(PRESETS[key])
        names = {f.name for f in fields(cls)}
        base.update({k: v for k, v in overrides.items() if v is not None and k in names})
        return cls(**base)

    def coarsen_kwargs(self) -> dict:
        return dict(ratio=self.ratio, batch_size=self.batch, sgc_k=self.sgc_k,
                    pca_dim=self.pca_dim, knn=self.knn, global_frac=self.global_frac,
                    cost=self.cost, seed=self.seed, max_regenerations=self.max_regenerations,
                    debug_verify=self.debug_verify)

    def to_dict(self) -> dict:
        return asdict(self)
