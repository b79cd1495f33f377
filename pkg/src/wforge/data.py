"""Labelled dataset assembly from sampler recipes.

A dataset is a list of :class:`Component` draws. Component ``c`` is generated in
fixed blocks of :data:`BLOCK` rows, block ``b`` drawing from ``stream(seed, c, b)``,
so the rows do not depend on how many threads build them.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import sampler
from .featurize import FeatureBasis, featurize_kets, featurize_rhos
from .qcore import ParticleSpec, ket
from .sampler import MaConfig, stream
from .trainer import Dataset

BLOCK = 4096
KINDS = ("haar-product", "bisep-pure", "bisep-mixed", "fullsep-mixed", "werner")


def _named_targets() -> dict:
    s2, s3 = np.sqrt(2), np.sqrt(3)
    w3 = np.exp(2j * np.pi / 3)
    return {
        "phi+": (2, (ket("00") + ket("11")) / s2),
        "phi-": (2, (ket("00") - ket("11")) / s2),
        "psi+": (2, (ket("01") + ket("10")) / s2),
        "psi-": (2, (ket("01") - ket("10")) / s2),
        "ghz": (2, (ket("000") + ket("111")) / s2),
        "w": (2, (ket("001") + ket("010") + ket("100")) / s3),
        "qutrit-ghz": (3, (ket("00", 3) + ket("11", 3) + ket("22", 3)) / s3),
        "qutrit-slot1": (3, (ket("00", 3) + ket("11", 3)) / s2),
        "qutrit-slot2": (3, (ket("00", 3) + w3 * ket("11", 3) + w3**2 * ket("22", 3)) / s3),
    }


TARGETS = _named_targets()


def target_state(name: str) -> tuple[ParticleSpec, np.ndarray]:
    """Named target ket and its particle spec."""
    try:
        d, psi = TARGETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; known: {', '.join(TARGETS)}") from None
    n = round(np.log(len(psi)) / np.log(d))
    return ParticleSpec(d, n), psi.copy()


@dataclass(frozen=True)
class Component:
    """``count`` draws of one generator kind.

    ``p_range`` is the half-open uniform noise interval for ``werner``; ``target``
    names the Werner target; ``ma`` configures the mixed generators.
    """

    kind: str
    count: int
    target: str | None = None
    p_range: tuple = (0.0, 0.0)
    ma: MaConfig = field(default_factory=MaConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("component count must be positive")
        if self.kind == "werner":
            if self.target is None:
                raise ValueError("werner components need a target")
            lo, hi = self.p_range
            if not 0 <= lo <= hi <= 1:
                raise ValueError(f"invalid noise range {self.p_range}")

    @property
    def label(self) -> int:
        return -1 if self.kind == "werner" else 1

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "count": self.count}
        if self.kind == "werner":
            out.update(target=self.target, p_range=list(self.p_range))
        if self.kind in ("bisep-mixed", "fullsep-mixed"):
            out.update(ma={"alpha": self.ma.alpha, "k": self.ma.k})
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Component":
        ma = MaConfig(**d["ma"]) if "ma" in d else MaConfig()
        return cls(d["kind"], int(d["count"]), d.get("target"), tuple(d.get("p_range", (0.0, 0.0))), ma)


@dataclass
class RowMeta:
    """Per-row generator tag index (into KINDS), noise fraction (nan if none) and grouping (-1 if none)."""

    tag: np.ndarray
    p: np.ndarray
    perm: np.ndarray

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("tag", "p", "perm")))


def _werner_rows(basis: FeatureBasis, psi: np.ndarray, p: np.ndarray) -> np.ndarray:
    f_target = featurize_rhos(np.outer(psi, psi.conj()), basis)
    f_mixed = featurize_rhos(np.eye(len(psi)) / len(psi), basis)
    # features are affine in the noise fraction
    return (1 - p)[:, None] * f_target + p[:, None] * f_mixed


def _block(basis: FeatureBasis, comp: Component, rng: np.random.Generator, size: int, return_states=False):
    spec = basis.spec
    nan = np.full(size, np.nan)
    none = np.full(size, -1, dtype=np.int8)
    states = None
    if comp.kind == "haar-product":
        kets = sampler.fullsep_pure_batch(spec, rng, size)
        X, p, perm, states = featurize_kets(kets, basis), nan, none, kets
    elif comp.kind == "bisep-pure":
        kets, choice = sampler.bisep_pure_batch(spec, rng, size)
        X, p, perm, states = featurize_kets(kets, basis), nan, choice.astype(np.int8), kets
    elif comp.kind == "bisep-mixed":
        rhos, choice = sampler.bisep_mixed_batch(spec, comp.ma, rng, size)
        X, p, perm, states = featurize_rhos(rhos, basis), nan, choice.astype(np.int8), rhos
    elif comp.kind == "fullsep-mixed":
        rhos = sampler.fullsep_mixed_batch(spec, comp.ma, rng, size)
        X, p, perm, states = featurize_rhos(rhos, basis), nan, none, rhos
    else:
        tspec, psi = target_state(comp.target)
        if tspec != spec:
            raise ValueError(f"target {comp.target} lives in {tspec}, basis is {spec}")
        lo, hi = comp.p_range
        p = rng.uniform(lo, hi, size) if hi > lo else np.full(size, lo)
        X, perm = _werner_rows(basis, psi, p), none
        if return_states:
            states = (1 - p)[:, None, None] * np.outer(psi, psi.conj()) + (p / len(psi))[:, None, None] * np.eye(len(psi))
    meta = RowMeta(np.full(size, KINDS.index(comp.kind), dtype=np.int8), p, perm)
    return (X, meta, states) if return_states else (X, meta)


def build_dataset(basis: FeatureBasis, components, seed: int, threads: int = 1):
    """Featurized rows for every component, in component order.

    Returns ``(Dataset, RowMeta)``.
    """
    jobs = []
    for ci, comp in enumerate(components):
        for b, lo in enumerate(range(0, comp.count, BLOCK)):
            jobs.append((ci, comp, b, min(BLOCK, comp.count - lo)))

    def run(job):
        ci, comp, b, size = job
        return _block(basis, comp, stream(seed, ci, b), size)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    X = np.vstack([r[0] for r in results])
    labels = np.concatenate([np.full(j[3], j[1].label, dtype=np.int8) for j in jobs])
    return Dataset(X, labels, basis.basis_id), RowMeta.concat([r[1] for r in results])


def generate_states(basis: FeatureBasis, comp: Component, seed: int, index: int = 0):
    """Raw states (kets or density matrices) plus features for one component; for studies that need the states."""
    out_states, out_x, metas = [], [], []
    for b, lo in enumerate(range(0, comp.count, BLOCK)):
        X, meta, states = _block(basis, comp, stream(seed, index, b), min(BLOCK, comp.count - lo), return_states=True)
        out_states.append(states)
        out_x.append(X)
        metas.append(meta)
    return np.concatenate(out_states), np.vstack(out_x), RowMeta.concat(metas)


def separable_components(spec: ParticleSpec, count: int) -> list[Component]:
    """Pure separable-side training states: Haar products, plus biseparable products for three particles (equal split)."""
    if spec.n == 3:
        half = count // 2
        return [Component("haar-product", half), Component("bisep-pure", count - half)]
    return [Component("haar-product", count)]


def training_components(target: str, n_sep: int, n_ent: int, p_range) -> list[Component]:
    spec, _ = target_state(target)
    return separable_components(spec, n_sep) + [Component("werner", n_ent, target, tuple(p_range))]
