"""Scripted reproduction suites and studies.

Every suite returns a :class:`SuiteResult` holding the derived witnesses, CSV
tables and a list of named pass/fail criteria; :func:`write_run` lays these out
as a run directory (``config.json``, ``witnesses/``, ``tables/``, ``report.json``).
All randomness is derived from the suite seed, so a suite is reproducible from
``(suite id, seed, config)``.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, sampler
from .data import Component, build_dataset, generate_states, separable_components, target_state, training_components
from .featurize import build_basis, featurize_rhos
from .qcore import ParticleSpec, projector
from .sampler import MaConfig, stream
from .trainer import TrainConfig, WitnessModel
from .witness import (
    W_FIDELITY_C,
    assemble,
    derive,
    fidelity_witness,
    rfe,
)

log = logging.getLogger(__name__)

BELL_TARGETS = ("phi+", "phi-", "psi+", "psi-")
BELL_SIGNS = {
    "phi+": {"II": 1, "XX": -1, "YY": 1, "ZZ": -1},
    "phi-": {"II": 1, "XX": 1, "YY": -1, "ZZ": -1},
    "psi+": {"II": 1, "XX": -1, "YY": -1, "ZZ": 1},
    "psi-": {"II": 1, "XX": 1, "YY": 1, "ZZ": 1},
}
GHZ_SUPPORT = ("III", "XXX", "XYY", "YXY", "YYX")
QUTRIT_TARGETS = ("qutrit-ghz", "qutrit-slot1", "qutrit-slot2")
W_BISEP_LIMIT = 0.52


def sub_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for an independent part of a suite."""
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1, np.uint64)[0] >> 1)


@dataclass
class Criterion:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class SuiteResult:
    suite: str
    seed: int
    config: dict
    criteria: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.criteria.append(Criterion(name, bool(passed), detail))
        return bool(passed)

    def report(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "passed": self.passed,
            "criteria": [c.to_dict() for c in self.criteria],
            "values": _jsonable(self.values),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return "inf" if math.isinf(v) else (None if math.isnan(v) else v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_run(result: SuiteResult, out_dir) -> Path:
    out = Path(out_dir)
    (out / "witnesses").mkdir(parents=True, exist_ok=True)
    (out / "tables").mkdir(exist_ok=True)
    (out / "config.json").write_text(json.dumps(_jsonable({"suite": result.suite, "seed": result.seed,
                                                           **result.config}), indent=2))
    for name, model in result.witnesses.items():
        io.save_witness(out / "witnesses" / f"{_safe(name)}.json", model)
    for name, (header, rows) in result.tables.items():
        io.write_csv(out / "tables" / f"{_safe(name)}.csv", header, rows)
    for name, trace in result.traces.items():
        io.write_rfe_trace(out / f"{_safe(name)}.rfe.jsonl", trace)
    (out / "report.json").write_text(json.dumps(result.report(), indent=2, ensure_ascii=False))
    return out


def _safe(name: str) -> str:
    return name.replace("+", "plus").replace("-", "minus").replace("/", "_")


def _fmt_p(p) -> str:
    if p is None:
        return "undetected"
    return "inf" if math.isinf(p) else f"{p:.3f}"


def _coef_table(model: WitnessModel):
    return ["label", "coefficient"], [[k, repr(v)] for k, v in model.terms().items()]


def _maximally_mixed_side(model: WitnessModel) -> float:
    """Margin of I/D (separable-side iff >= 0)."""
    D = model.spec[0] ** model.spec[1]
    return float(np.trace(assemble(model)).real / D)


# -- Bell ----------------------------------------------------------------------------------

def run_bell_suite(seed: int = 0, *, n_train: int = 4000, n_val: int = 10000, cfg: TrainConfig | None = None,
                   calibration: str = "exact", threads: int = 1) -> SuiteResult:
    """Two-qubit witnesses for the four Bell states, validated on fresh samples."""
    cfg = cfg or TrainConfig(seed=seed)
    res = SuiteResult("bell", seed, {"n_train": n_train, "n_val": n_val, "train_config": cfg.to_dict(),
                                     "calibration": calibration, "werner_train": [0, 2 / 3], "werner_val": [0, 0.25]})
    t0 = time.perf_counter()
    for i, name in enumerate(BELL_TARGETS):
        spec, psi = target_state(name)
        basis = build_basis(spec)
        data, _ = build_dataset(basis, training_components(name, n_train, n_train, (0.0, 2 / 3)), sub_seed(seed, 1, i), threads)
        model, _ = derive(data, cfg, basis, psi, calibration=calibration, seed=seed)
        res.witnesses[name] = model
        res.tables[f"{name}_coefficients"] = _coef_table(model)
        terms = model.terms()
        signs = BELL_SIGNS[name]
        support_ok = set(terms) == set(signs)
        sign_ok = support_ok and all(np.sign(terms[k]) == s for k, s in signs.items())
        mag_ok = support_ok and all(abs(abs(terms[k]) - 1) <= 0.05 for k in signs)
        res.check(f"{name} support", support_ok, f"support {sorted(terms)}")
        res.check(f"{name} signs", sign_ok, ", ".join(f"{k}={v:+.3f}" for k, v in terms.items()))
        res.check(f"{name} magnitudes within 0.05 of 1", mag_ok)
        val, _ = build_dataset(basis, training_components(name, n_val, n_val, (0.0, 0.25)), sub_seed(seed, 2, i), threads)
        y = val.features @ model.coefficients
        errors = int(((y < 0) & (val.labels == 1)).sum() + ((y >= 0) & (val.labels == -1)).sum())
        res.values[f"{name}_p_max"] = model.p_max
        res.values[f"{name}_validation_errors"] = errors
        res.check(f"{name} validation accuracy 100%", errors == 0, f"{errors} errors in {len(val)}")
    elapsed = time.perf_counter() - t0
    res.values["runtime_s"] = elapsed
    res.check("runtime under 2 min", elapsed < 120, f"{elapsed:.1f} s")
    return res


# -- tripartite qubits -------------------------------------------------------------------------

def run_tripartite_suite(target: str, seed: int = 0, *, n_sep: int = 100_000, n_ent: int = 100_000,
                         p_range=(0.0, 0.3), cfg: TrainConfig | None = None, calibration: str = "exact",
                         rfe_min_terms: int | None = 5, threads: int = 1) -> SuiteResult:
    """GHZ or W witness from biseparable/separable and Werner training data (plus RFE for W)."""
    target = target.lower()
    if target not in ("ghz", "w"):
        raise ValueError("tripartite suite targets are 'ghz' and 'w'")
    cfg = cfg or TrainConfig(seed=seed)
    res = SuiteResult(target, seed, {"n_sep": n_sep, "n_ent": n_ent, "p_range": list(p_range),
                                     "train_config": cfg.to_dict(), "calibration": calibration,
                                     "rfe_min_terms": rfe_min_terms})
    t0 = time.perf_counter()
    spec, psi = target_state(target)
    basis = build_basis(spec)
    data, _ = build_dataset(basis, training_components(target, n_sep, n_ent, p_range), sub_seed(seed, 1), threads)
    model, raw = derive(data, cfg, basis, psi, calibration=calibration, seed=seed)
    res.witnesses[target] = model
    res.tables[f"{target}_coefficients"] = _coef_table(model)
    res.values["p_max"] = model.p_max
    res.values["n_terms"] = model.n_terms
    res.values["terms"] = model.terms()
    sep_rows = data.features[data.labels == 1]
    res.values["training_separable_violations"] = int(((sep_rows @ model.coefficients) < 0).sum())
    if target == "ghz":
        _check_ghz(res, model)
    else:
        _check_w(res, model, raw, data, cfg, basis, psi, calibration, rfe_min_terms, seed)
    res.values["runtime_s"] = time.perf_counter() - t0
    return res


def _check_ghz(res: SuiteResult, model: WitnessModel):
    terms = model.terms()
    res.check("GHZ support equals the five stabilizer strings", set(terms) == set(GHZ_SUPPORT),
              f"support {sorted(terms)}")
    a_iii, a_xxx = terms.get("III", 0.0), terms.get("XXX", 0.0)
    ratio = a_iii / a_xxx if a_xxx else math.nan
    res.values["ratio_III_XXX"] = ratio
    res.check("a_III / a_XXX = -2 +- 0.1", abs(ratio + 2) <= 0.1, f"ratio {ratio:.4f}")
    perm = [terms.get(k, 0.0) for k in ("XYY", "YXY", "YYX")]
    spread = max(perm) - min(perm)
    res.check("XYY, YXY, YYX equal within 0.05", all(perm) and spread <= 0.05,
              f"values {[round(v, 4) for v in perm]}")
    res.check("GHZ detected", model.p_max is not None, f"p_max {_fmt_p(model.p_max)}")


def _check_w(res, model, raw, data, cfg, basis, psi, calibration, min_terms, seed):
    p = model.p_max
    res.check("derived W witness has 8 terms", model.n_terms == 8, f"{model.n_terms} terms: {model.support}")
    res.check("derived W p_max below the biseparability limit 0.52", p is not None and p < W_BISEP_LIMIT,
              f"p_max {_fmt_p(p)}")
    if min_terms is None:
        return
    trace = rfe(data, cfg, basis, psi, min_terms=min_terms, calibration=calibration,
                initial=model, initial_raw=raw, seed=seed)
    res.traces["w"] = trace
    rows = [[s.n_terms, s.removed or "", _fmt_p(s.p_max), s.misclassified, " ".join(s.labels)]
            for s in (trace.initial, *trace.steps)]
    res.tables["w_rfe"] = (["n_terms", "removed", "p_max", "misclassified", "retained"], rows)
    res.values["rfe_counts"] = trace.counts()
    res.values["rfe_p_max"] = [s.p_max for s in (trace.initial, *trace.steps)]
    res.values["rfe_stop_reason"] = trace.stop_reason
    for s in trace.steps:
        res.witnesses[f"w_rfe_{s.n_terms}"] = s.model
    at8, at5 = trace.at(8), trace.at(5)
    p8 = at8.p_max if at8 else None
    res.values["p_max_8_terms"] = p8
    res.values["support_8_terms"] = at8.labels if at8 else None
    res.check("8-term witness (with III) in the elimination trace", at8 is not None and "III" in at8.labels,
              f"counts {trace.counts()}")
    res.check("8-term p_max = 0.42 +- 0.03", p8 is not None and abs(p8 - 0.42) <= 0.03, f"p_max {_fmt_p(p8)}")
    res.check("RFE reaches 5 terms", at5 is not None, f"counts {trace.counts()}, stop: {trace.stop_reason}")
    p5 = at5.p_max if at5 else None
    res.values["p_max_5_terms"] = p5
    res.check("5-term p_max = 0.27 +- 0.03", p5 is not None and abs(p5 - 0.27) <= 0.03, f"p_max {_fmt_p(p5)}")
    bad = [s.misclassified for s in (trace.initial, *trace.steps)]
    res.check("RFE steps misclassify no training separable state", not any(bad), f"misclassified per step {bad}")
    pm = [s.p_max for s in (trace.initial, *trace.steps)]
    res.check("RFE p_max non-increasing", all(b <= a + 1e-12 for a, b in zip(pm, pm[1:])), str([_fmt_p(v) for v in pm]))


# -- qutrits -------------------------------------------------------------------------------------

def run_qutrit_suite(target: str = "qutrit-ghz", seed: int = 0, *, n_sep: int = 100_000, n_ent: int = 100_000,
                     p_max_train: float = 0.125, n_val: int = 10_000, cfg: TrainConfig | None = None,
                     calibration: str = "exact", threads: int = 1) -> SuiteResult:
    """Two-qutrit witness trained on Werner noise up to ``p_max_train``."""
    cfg = cfg or TrainConfig(seed=seed)
    res = SuiteResult("qutrit", seed, {"target": target, "n_sep": n_sep, "n_ent": n_ent, "p_max_train": p_max_train,
                                       "n_val": n_val, "train_config": cfg.to_dict(), "calibration": calibration})
    spec, psi = target_state(target)
    if spec != ParticleSpec(3, 2):
        raise ValueError(f"{target} is not a two-qutrit target")
    basis = build_basis(spec)
    comps = training_components(target, n_sep, n_ent, (0.0, p_max_train))
    data, _ = build_dataset(basis, comps, sub_seed(seed, 1), threads)
    model, _ = derive(data, cfg, basis, psi, calibration=calibration, seed=seed)
    res.witnesses[target] = model
    res.tables[f"{target}_coefficients"] = _coef_table(model)
    res.values.update(p_max=model.p_max, n_terms=model.n_terms, basis_size=len(basis))
    y_target = float(featurize_rhos(projector(psi), basis) @ model.coefficients)
    y_mixed = _maximally_mixed_side(model)
    res.check("target classified entangled-side", y_target < 0, f"y = {y_target:.4f}")
    res.check("I/9 classified separable-side", y_mixed >= 0, f"y = {y_mixed:.4f}")
    p = model.p_max
    res.check("p_max above the training noise 0.125", p is not None and p > p_max_train, f"p_max {_fmt_p(p)}")
    val, _ = build_dataset(basis, training_components(target, n_val, n_val, (0.0, p_max_train)), sub_seed(seed, 2), threads)
    y = val.features @ model.coefficients
    errors = int(((y < 0) & (val.labels == 1)).sum() + ((y >= 0) & (val.labels == -1)).sum())
    res.values["validation_errors"] = errors
    res.check("validation accuracy 100%", errors == 0, f"{errors} errors in {len(val)}")
    return res


# -- convergence -----------------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    sizes: list
    labels: list
    means: np.ndarray
    stds: np.ndarray
    ratios: np.ndarray
    repeats: int
    converged: np.ndarray

    def median_ratios(self) -> np.ndarray:
        out = []
        for row in self.ratios:
            finite = row[np.isfinite(row)]
            out.append(float(np.median(finite)) if finite.size else math.nan)
        return np.array(out)

    def table(self):
        rows = []
        for i, size in enumerate(self.sizes):
            for j, label in enumerate(self.labels):
                rows.append([size, label, repr(float(self.means[i, j])), repr(float(self.stds[i, j])),
                             "" if not np.isfinite(self.ratios[i, j]) else repr(float(self.ratios[i, j]))])
        return ["size", "label", "mean", "std", "ratio"], rows


def convergence_study(sizes=(10_000, 100_000, 300_000, 1_000_000), repeats: int = 5, target: str = "qutrit-ghz",
                      seed: int = 0, *, p_max_train: float = 0.125, cfg: TrainConfig | None = None,
                      independent: bool = True, threads: int = 1) -> ConvergenceReport:
    """Coefficient spread over repeated trainings at each training size.

    Each size is split evenly between separable and entangled samples. With
    ``independent=False`` every repeat reuses the same data seed (zero spread).
    The ratio S/<a> (sample standard deviation, ddof=1) is reported only for
    coefficients that are nonzero in every repeat; others are NaN.
    """
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if repeats < 2:
        raise ValueError("at least two repeats are needed")
    cfg = cfg or TrainConfig(seed=seed)
    spec, psi = target_state(target)
    basis = build_basis(spec)
    F = len(basis)
    means = np.zeros((len(sizes), F))
    stds = np.zeros((len(sizes), F))
    ratios = np.full((len(sizes), F), np.nan)
    conv = np.ones((len(sizes), repeats), dtype=bool)
    for i, size in enumerate(sizes):
        coefs = np.zeros((repeats, F))
        for r in range(repeats):
            data_seed = sub_seed(seed, size, r if independent else 0)
            comps = training_components(target, size // 2, size - size // 2, (0.0, p_max_train))
            data, _ = build_dataset(basis, comps, data_seed, threads)
            model, _ = derive(data, cfg, basis, psi, calibration="none", seed=seed)
            coefs[r] = model.coefficients
            conv[i, r] = model.converged
            del data
            log.info("convergence: size %d repeat %d done", size, r)
        means[i] = coefs.mean(axis=0)
        stds[i] = coefs.std(axis=0, ddof=1)
        nonzero = (coefs != 0).all(axis=0)
        ratios[i, nonzero] = np.abs(stds[i, nonzero] / means[i, nonzero])
    return ConvergenceReport(sizes, basis.labels, means, stds, ratios, repeats, conv)


def run_convergence_suite(seed: int = 0, *, sizes=(10_000, 100_000, 300_000, 1_000_000), repeats: int = 5,
                          long: bool = False, threads: int = 1, cfg: TrainConfig | None = None) -> SuiteResult:
    if long:
        sizes = tuple(sizes) + (30_000_000,)
    res = SuiteResult("converge", seed, {"sizes": list(sizes), "repeats": repeats, "target": "qutrit-ghz"})
    rep = convergence_study(sizes, repeats, seed=seed, cfg=cfg, threads=threads)
    res.tables["convergence"] = rep.table()
    med = rep.median_ratios()
    res.values["median_ratio"] = dict(zip(map(str, rep.sizes), med))
    res.values["max_ratio"] = {str(s): float(np.nanmax(r)) for s, r in zip(rep.sizes, rep.ratios)}
    res.check("every repeat converged", bool(rep.converged.all()))
    gate = [i for i, s in enumerate(rep.sizes) if s == 1_000_000] or [len(rep.sizes) - 1]
    worst = float(np.nanmax(rep.ratios[gate[0]]))
    res.check(f"all ratios <= 0.01 at size {rep.sizes[gate[0]]}", worst <= 0.01, f"max ratio {worst:.4g}")
    gated = med[: gate[0] + 1]
    res.check("median ratio non-increasing with size", bool(np.all(np.diff(gated) <= 0)),
              ", ".join(f"{v:.4g}" for v in gated))
    return res


# -- noise sweep ------------------------------------------------------------------------------------

@dataclass
class SweepResult:
    grid: np.ndarray
    names: list
    curves: np.ndarray
    closed_form: np.ndarray
    crossings: list

    @property
    def max_affine_error(self) -> float:
        return float(np.abs(self.curves - self.closed_form).max())

    def table(self):
        header = ["p", *self.names]
        rows = [[repr(float(p)), *(repr(float(v)) for v in col)] for p, col in zip(self.grid, self.curves.T)]
        return header, rows


def _as_operator(w) -> np.ndarray:
    if isinstance(w, WitnessModel):
        return assemble(w)
    return np.asarray(getattr(w, "matrix", w))


def noise_sweep(witnesses: dict, target: np.ndarray, grid=None) -> SweepResult:
    """Expectation of each witness on (1 - p)|psi><psi| + (p/D) I over a grid of p.

    Curves are evaluated by direct trace against the mixed state; the closed-form
    affine line and its zero crossing come from the p = 0 and p = 1 values.
    """
    grid = np.linspace(0, 1, 101) if grid is None else np.asarray(grid, dtype=float)
    target = np.asarray(target, dtype=complex)
    D = len(target)
    ops = [_as_operator(w) for w in witnesses.values()]
    if any(op.shape != (D, D) for op in ops):
        raise ValueError("all witnesses must act on the target's space")
    curves = np.array([[np.trace(sampler.werner_matrix(target, p) @ W).real for p in grid] for W in ops])
    crossings, closed = [], []
    for W in ops:
        t = float(np.real(target.conj() @ W @ target))
        mixed = float(np.trace(W).real) / D
        closed.append((1 - grid) * t + grid * mixed)
        crossings.append(t / (t - mixed) if (t < 0 <= mixed) else (math.inf if t < 0 else None))
    return SweepResult(grid, list(witnesses), curves, np.array(closed), crossings)


def run_sweep_suite(w_witnesses: dict, grid=None, seed: int = 0) -> SuiteResult:
    """White-noise sweep of the W-state fidelity witness and the supplied SVM witnesses."""
    spec, psi = target_state("w")
    fid = fidelity_witness(psi, W_FIDELITY_C, spec)
    ws = {"fidelity": fid.matrix, **w_witnesses}
    sweep = noise_sweep(ws, psi, grid)
    res = SuiteResult("sweep", seed, {"witnesses": list(ws), "fidelity_c": W_FIDELITY_C})
    res.tables["sweep"] = sweep.table()
    res.values["crossings"] = dict(zip(sweep.names, sweep.crossings))
    res.values["max_affine_error"] = sweep.max_affine_error
    fid_x = sweep.crossings[0]
    res.check("fidelity crossing = 8/21 +- 1e-6", fid_x is not None and abs(fid_x - 8 / 21) <= 1e-6, f"{fid_x}")
    for name, x in zip(sweep.names[1:], sweep.crossings[1:]):
        res.check(f"{name} crossing >= 8/21", x is not None and x >= 8 / 21, f"crossing {_fmt_p(x)}")
    res.check("curves affine within 1e-9", sweep.max_affine_error < 1e-9, f"{sweep.max_affine_error:.2e}")
    res.check("all witnesses positive at p = 1", bool((sweep.curves[:, -1] > 0).all()) if sweep.grid[-1] == 1 else True)
    return res


# -- appendix studies -------------------------------------------------------------------------------

def _histogram(values, bins, rng):
    counts, edges = np.histogram(values, bins=bins, range=rng)
    return ["lo", "hi", "count"], [[repr(float(a)), repr(float(b)), int(c)] for a, b, c in zip(edges[:-1], edges[1:], counts)]


def _derive_reduced(data, cfg, basis, psi, calibration, seed, n_terms):
    """Derive a witness and, if it has more than ``n_terms`` terms, eliminate down to that count."""
    model, raw = derive(data, cfg, basis, psi, calibration=calibration, seed=seed)
    if model.n_terms <= n_terms:
        return model
    trace = rfe(data, cfg, basis, psi, min_terms=n_terms, calibration=calibration,
                initial=model, initial_raw=raw, seed=seed)
    step = trace.at(n_terms)
    return (step or (trace.steps[-1] if trace.steps else trace.initial)).model


def appendix_study(seed: int = 0, *, w_model: WitnessModel | None = None, n_ensemble: int = 5000,
                   n_scatter: int = 60_000, n_mixed_sep: int = 250_000, n_mixed_ent: int = 200_000,
                   n_bisep: int = 300_000, n_bisep_ent: int = 200_000, cfg: TrainConfig | None = None,
                   calibration: str = "exact", reference_n: int = 100_000, reference_terms: int = 8,
                   threads: int = 1) -> SuiteResult:
    """Mixed-state sampling studies for the W-state witness.

    (1)/(2) concurrence and purity histograms of two-qubit MA states;
    (3)/(4) purity and target fidelity against <W> for pure and mixed (bi)separable samples;
    (5) retraining on mixed plus pure (bi)separable data;
    (6) retraining on pure biseparable data only.
    ``w_model`` is the reference W witness; when absent it is derived with the
    standard tripartite training set of ``reference_n`` + ``reference_n`` samples
    and reduced by RFE to ``reference_terms`` terms. Retrained witnesses with more
    terms than the reference go through the same elimination on their own
    training data before supports are compared.
    """
    cfg = cfg or TrainConfig(seed=seed)
    ma = MaConfig()
    res = SuiteResult("appendix", seed, {"n_ensemble": n_ensemble, "n_scatter": n_scatter, "n_mixed_sep": n_mixed_sep,
                                         "n_mixed_ent": n_mixed_ent, "n_bisep": n_bisep, "n_bisep_ent": n_bisep_ent,
                                         "ma": {"alpha": ma.alpha, "k": ma.k}, "train_config": cfg.to_dict(),
                                         "calibration": calibration})
    spec, psi = target_state("w")
    basis = build_basis(spec)

    rhos = sampler.ma_batch(4, ma, stream(seed, 1), n_ensemble)
    conc = np.array([sampler.concurrence(r) for r in rhos])
    pur = sampler.purity_batch(rhos)
    res.tables["ma_concurrence_hist"] = _histogram(conc, 20, (0, 1))
    res.tables["ma_purity_hist"] = _histogram(pur, 20, (0.25, 1))
    res.values.update(ma_mean_concurrence=conc.mean(), ma_median_purity=np.median(pur))

    if w_model is None:
        data, _ = build_dataset(basis, training_components("w", reference_n, reference_n, (0.0, 0.3)), sub_seed(seed, 2), threads)
        w_model = _derive_reduced(data, cfg, basis, psi, calibration, seed, reference_terms)
        del data
    res.witnesses["reference"] = w_model
    n_ref = w_model.n_terms

    # pure (a) and mixed (b) branches of the sampling scheme, equal shares
    kinds = ("haar-product", "bisep-pure", "fullsep-mixed", "bisep-mixed")
    shares = np.diff(np.linspace(0, n_scatter, len(kinds) + 1).astype(int))
    xs, purity, fidelity = [], [], []
    for i, (kind, count) in enumerate(zip(kinds, shares)):
        states, x, _ = generate_states(basis, Component(kind, int(count), ma=ma), sub_seed(seed, 3), i)
        xs.append(x)
        if states.ndim == 2:
            purity.append(np.ones(len(states)))
            fidelity.append(np.abs(states @ psi.conj()) ** 2)
        else:
            purity.append(sampler.purity_batch(states))
            fidelity.append(np.einsum("i,bij,j->b", psi.conj(), states, psi).real)
        del states
    X = np.vstack(xs)
    purity, fidelity = np.concatenate(purity), np.concatenate(fidelity)
    w_vals = X @ w_model.coefficients
    res.tables["purity_vs_w"] = (["purity", "w"], [[repr(float(a)), repr(float(b))] for a, b in zip(purity, w_vals)])
    res.tables["fidelity_vs_w"] = (["fidelity", "w"], [[repr(float(a)), repr(float(b))] for a, b in zip(fidelity, w_vals)])
    arg = int(np.argmin(w_vals))
    res.values.update(scatter_min_w=w_vals[arg], scatter_min_purity=purity[arg],
                      scatter_violations=int((w_vals < 0).sum()))
    res.check("minimum <W> over (bi)separable samples at purity > 0.99", purity[arg] > 0.99,
              f"min <W> {w_vals[arg]:.4f} at purity {purity[arg]:.4f}")

    # (5) mixed + pure separable-side data, half of each
    q = n_mixed_sep // 4
    comps = [Component("bisep-mixed", q, ma=ma), Component("fullsep-mixed", q, ma=ma),
             *separable_components(spec, n_mixed_sep - 2 * q),
             Component("werner", n_mixed_ent, "w", (0.0, 0.3))]
    data, _ = build_dataset(basis, comps, sub_seed(seed, 4), threads)
    mixed_model = _derive_reduced(data, cfg, basis, psi, calibration, seed, n_ref)
    del data
    res.witnesses["mixed_plus_pure"] = mixed_model
    res.values.update(mixed_support=mixed_model.support, mixed_p_max=mixed_model.p_max)
    res.check("mixed+pure retraining keeps the full support", set(mixed_model.support) == set(w_model.support),
              f"reference {w_model.support}, retrained {mixed_model.support}")

    # (6) pure biseparable only
    comps = [Component("bisep-pure", n_bisep), Component("werner", n_bisep_ent, "w", (0.0, 0.3))]
    data, _ = build_dataset(basis, comps, sub_seed(seed, 5), threads)
    bisep_model = _derive_reduced(data, cfg, basis, psi, calibration, seed, n_ref)
    del data
    res.witnesses["bisep_only"] = bisep_model
    ref_terms = w_model.terms()
    smallest = min((k for k in ref_terms if k != "III"), key=lambda k: abs(ref_terms[k]), default=None)
    diff = set(bisep_model.support) ^ set(w_model.support)
    res.values.update(bisep_support=bisep_model.support, bisep_p_max=bisep_model.p_max, smallest_reference_term=smallest)
    res.check("biseparable-only retraining keeps the support up to the smallest term",
              diff <= {smallest}, f"symmetric difference {sorted(diff)}")
    p = bisep_model.p_max
    res.check("biseparable-only p_max = 0.42 +- 0.03", p is not None and abs(p - 0.42) <= 0.03, f"p_max {_fmt_p(p)}")
    return res


# -- scaling estimate --------------------------------------------------------------------------------

def sample_size_estimate(d: int, m_grid: int) -> int:
    """Grid-sampling estimate m^(4(d-1)) of the separable data needed for two qudits (exact integer)."""
    if int(d) != d or d < 2:
        raise ValueError("d must be an integer >= 2")
    if int(m_grid) != m_grid or m_grid < 2:
        raise ValueError("m_grid must be an integer >= 2")
    return int(m_grid) ** (4 * (int(d) - 1))
