"""Reproducible experiments: exact-identity suites, Bloom BMO reports and
bounded-ratio sweeps.

All randomness is derived from seeds in an :class:`ExperimentConfig`; trial
``t`` of a run uses its own streams keyed by ``(seed, component seed, t, tag)``
so results do not depend on scheduling.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .bmo import EQUIVALENCE_KEYS, bmo_equivalence_report, bmo_norm, bmo_q_norm
from .grid import Grid, GridError, make_grid
from .haar import (
    StepFunction,
    analyze,
    analyze_array,
    haar_function,
    int_to_sig,
    level_averages,
    signature_add,
    synthesize,
    synthesize_array,
)
from .norms import (
    SweepInstance,
    SweepReport,
    inequality_sweep,
    opnorm_l2,
    opnorm_lp,
    opnorm_shifted_square_l2,
)
from .operators import commutator_map, lambda_map, paraproduct_map, product_decomposition_check
from .shifts import (
    _increment,
    kappa,
    make_noncancellative_shift,
    make_random_shift,
    commutator_split,
    noncancellative_remainder_check,
    remainder,
)
from .weights import Weight, ap_characteristic, bloom, gen_cascade_weight

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "random_symbol",
    "make_weight",
    "run_identities",
    "run_bmo_equiv",
    "run_sweep",
    "SWEEP_TARGETS",
    "IDENTITY_SUITES",
]

log = logging.getLogger(__name__)

SWEEP_TARGETS = ("shift-norm", "shifted-sqfn", "paraproduct", "commutator", "lambda")
ALL_PAIRS = tuple((i, j) for i in range(3) for j in range(3))
REMAINDER_PAIRS = ((0, 1), (1, 0), (1, 1), (1, 2), (2, 1))

# stream tags
_MU, _LAM, _SYM, _SYM2, _SHIFT, _FUN, _FUN2, _PICK = range(8)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class WeightSpec:
    kind: str = "cascade"  # cascade | uniform
    ratio_bound: float = 2.0
    seed: int = 1


@dataclass
class SymbolSpec:
    decay: float = 0.7
    seed: int = 2
    normalize: bool = False
    scale: float = 1.0


@dataclass
class ShiftSpec:
    i: int | None = None
    j: int | None = None
    density: float = 1.0
    seed: int = 3
    pairs: list | None = None


@dataclass
class ExperimentConfig:
    n: int = 1
    K: int = 4
    shift: float | list = 0.0
    p: float = 2.0
    weight: WeightSpec = field(default_factory=WeightSpec)
    symbol: SymbolSpec = field(default_factory=SymbolSpec)
    shift_op: ShiftSpec = field(default_factory=ShiftSpec)
    trials: int = 50
    tol: float = 1e-12
    seed: int = 0
    depths: list | None = None
    out: str | None = None
    format: str = "csv"
    jobs: int = 1

    def __post_init__(self):
        try:
            self.validate()
        except (TypeError, ValueError, GridError) as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self):
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if not self.trials >= 1:
            raise ConfigError("trials must be positive")
        if not self.tol >= 0:
            raise ConfigError("tolerance must be non-negative")
        if not 1 < self.p < math.inf:
            raise ConfigError(f"p must lie in (1, inf), got {self.p}")
        if self.weight.kind not in ("cascade", "uniform"):
            raise ConfigError(f"unknown weight kind {self.weight.kind!r}")
        if self.weight.ratio_bound < 1:
            raise ConfigError("weight ratio_bound must be >= 1")
        if not 0 < self.shift_op.density <= 1:
            raise ConfigError("shift density must lie in (0, 1]")
        for K in self.all_depths:
            self.grid(K)

    @property
    def all_depths(self) -> list[int]:
        return list(self.depths) if self.depths else [self.K]

    def grid(self, K: int | None = None) -> Grid:
        return make_grid(self.n, self.K if K is None else K, shift=self.shift)

    def pairs(self, default=ALL_PAIRS) -> list[tuple[int, int]]:
        s = self.shift_op
        if s.pairs:
            return [tuple(int(x) for x in pr) for pr in s.pairs]
        if s.i is not None or s.j is not None:
            return [(s.i or 0, s.j or 0)]
        return list(default)

    def stream(self, seed: int, trial: int, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, seed, trial, tag])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = {"n": d.pop("n"), "K": d.pop("K"), "shift": d.pop("shift")}
        d["shift_spec"] = d.pop("shift_op")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)} | {"grid", "shift_spec"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        grid = d.pop("grid", {}) or {}
        if not isinstance(grid, dict) or set(grid) - {"n", "K", "shift"}:
            raise ConfigError("grid must be an object with keys n, K, shift")
        d.update(grid)
        subs = {"weight": WeightSpec, "symbol": SymbolSpec, "shift_spec": ShiftSpec}
        for key, sub in subs.items():
            if key in d:
                val = d.pop(key) or {}
                names = {f.name for f in dataclasses.fields(sub)}
                if not isinstance(val, dict) or set(val) - names:
                    raise ConfigError(f"{key} must be an object with keys {sorted(names)}")
                d["shift_op" if key == "shift_spec" else key] = sub(**val)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


# -- generators ---------------------------------------------------------------------

def random_symbol(grid: Grid, rng: np.random.Generator, decay: float = 0.7) -> StepFunction:
    """Mean-zero symbol with Haar coefficients ``N(0,1) * decay^level``.

    Coefficients are drawn level by level, so a deeper grid under the same
    stream refines the shallower symbol.
    """
    coeffs = [
        rng.standard_normal((2 ** (grid.n * k), grid.n_signatures)) * decay**k
        for k in range(grid.K)
    ]
    return StepFunction.from_tree(grid, synthesize_array(0.0, coeffs, grid))


def make_weight(cfg: ExperimentConfig, grid: Grid, trial: int, tag: int) -> Weight:
    if cfg.weight.kind == "uniform":
        return Weight.ones(grid)
    rng = cfg.stream(cfg.weight.seed, trial, tag)
    return gen_cascade_weight(grid, cfg.weight.ratio_bound, rng)


def _symbol(cfg, grid, trial, tag=_SYM, nu=None) -> StepFunction:
    b = random_symbol(grid, cfg.stream(cfg.symbol.seed, trial, tag), cfg.symbol.decay)
    if cfg.symbol.scale != 1.0:
        b = b * cfg.symbol.scale
    if cfg.symbol.normalize and nu is not None:
        s = bmo_q_norm(b, nu, 2.0).value
        if s > 0:
            b = b * (1 / s)
    return b


def _function(cfg, grid, trial, tag=_FUN) -> StepFunction:
    rng = cfg.stream(cfg.seed, trial, tag)
    return StepFunction(grid, rng.standard_normal(grid.cells_shape))


# -- identity suites ---------------------------------------------------------------

def _rec(module, operation, check, trial, grid, residual, **extra):
    return {
        "module": module,
        "operation": operation,
        "check": check,
        "instance": trial,
        "n": grid.n,
        "K": grid.K,
        "residual": float(residual),
        **extra,
    }


def suite_haar(cfg, grid, trial):
    f = _function(cfg, grid, trial)
    c = analyze(f)
    out = [
        _rec("haar-system", "synthesize", "round-trip", trial, grid, (synthesize(c) - f).max_abs()),
        _rec("haar-system", "analyze", "parseval", trial, grid,
             abs(c.energy() + c.mean**2 * grid.volume(0) - f.inner(f)) / max(1.0, f.inner(f))),
    ]
    if trial == 0 and grid.K > 0:
        # Gram matrix of constant + all Haar functions, normalized rows
        _, H = analyze_array(np.eye(grid.n_cells) / np.sqrt(grid.cell_volume), grid)
        M = np.concatenate([np.full((grid.n_cells, 1), np.sqrt(grid.cell_volume))]
                           + [h.reshape(grid.n_cells, -1) for h in H], axis=1)
        out.append(_rec("haar-system", "haar_function", "orthonormality", trial, grid,
                        np.abs(M.T @ M - np.eye(M.shape[1])).max()))
    if grid.K > 1:
        rng = cfg.stream(cfg.seed, trial, _PICK)
        k = int(rng.integers(0, grid.K - 1))
        Q = grid.cube(k, rng.integers(0, 2**k, size=grid.n))
        e, h = (int_to_sig(int(x), grid.n) for x in rng.integers(0, 2**grid.n, size=2))
        lhs = haar_function(Q, e) * haar_function(Q, h)
        rhs = haar_function(Q, signature_add(e, h)) * (Q.volume ** -0.5)
        out.append(_rec("haar-system", "signature_add", "product-rule", trial, grid, (lhs - rhs).max_abs()))
    return out


def suite_avg_difference(cfg, grid, trial):
    f = _function(cfg, grid, trial)
    avg = level_averages(f.tree, grid)
    _, coeffs = analyze_array(f.tree, grid)
    worst = 0.0
    for m in range(grid.K + 1):
        acc = np.zeros(2 ** (grid.n * m))
        for i in range(1, m + 1):
            acc = acc + _increment(coeffs, grid, m, i)
            lhs = avg[m] - np.repeat(avg[m - i], 2 ** (grid.n * i))
            worst = max(worst, float(np.abs(lhs - acc).max()))
    return [_rec("haar-system", "avg_difference", "average-difference", trial, grid, worst)]


def suite_product(cfg, grid, trial):
    f = _function(cfg, grid, trial)
    b = _function(cfg, grid, trial, _FUN2)
    return [
        _rec("dyadic-operators", "product_decomposition", "boundary-form", trial, grid,
             product_decomposition_check(b, f)),
        _rec("dyadic-operators", "product_decomposition", "literal-mean-zero", trial, grid,
             product_decomposition_check(b.centered(), f.centered(), literal=True)),
    ]


def suite_adjoint(cfg, grid, trial):
    f = _function(cfg, grid, trial)
    h = _function(cfg, grid, trial, _FUN2)
    b = _symbol(cfg, grid, trial)
    out = []
    pairs = {"Pi": "PiStar", "PiStar": "Pi", "Gamma": "Gamma"}
    for k, adj in pairs.items():
        lhs = paraproduct_map(k, b)(f).inner(h)
        rhs = f.inner(paraproduct_map(adj, b)(h))
        out.append(_rec("dyadic-operators", "paraproduct", f"adjoint-{k}", trial, grid, abs(lhs - rhs)))
    pr = [pq for pq in cfg.pairs() if sum(pq) <= grid.K]
    i, j = pr[trial % len(pr)]
    S = make_random_shift(grid, i, j, [cfg.seed, cfg.shift_op.seed, trial])
    out.append(_rec("dyadic-operators", "shift", "adjoint-shift", trial, grid,
                    abs(S(f).inner(h) - f.inner(S.adjoint(h))), i=i, j=j))
    if grid.n == 1:
        out.append(_rec("dyadic-operators", "paraproduct", "gamma-vanishes-1d", trial, grid,
                        paraproduct_map("Gamma", b)(f).max_abs()))
    return out


def suite_remainder(cfg, grid, trial):
    f = _function(cfg, grid, trial)
    b = _symbol(cfg, grid, trial)
    out = []
    for i, j in REMAINDER_PAIRS:
        if i + j > grid.K:
            continue
        S = make_random_shift(grid, i, j, [cfg.seed, cfg.shift_op.seed, trial, i, j])
        r = remainder(b, S, f, "direct")
        out.append(_rec("dyadic-operators", "remainder", "direct-vs-formula", trial, grid,
                        (r - remainder(b, S, f, "formula")).max_abs(), i=i, j=j))
        out.append(_rec("dyadic-operators", "remainder", "direct-vs-AB", trial, grid,
                        (r - remainder(b, S, f, "AB")).max_abs(), i=i, j=j))
        t1, t2, rr = commutator_split(b, S, f)
        comm = commutator_map(b, S.as_map())(f)
        out.append(_rec("dyadic-operators", "commutator_split", "split", trial, grid,
                        (comm - t1 - t2 - rr).max_abs(), i=i, j=j))
    return out


def suite_noncancellative(cfg, grid, trial):
    S00 = make_noncancellative_shift(grid, [cfg.seed, cfg.shift_op.seed, trial], cfg.symbol.decay)
    res = noncancellative_remainder_check(S00, _symbol(cfg, grid, trial), _function(cfg, grid, trial))
    return [
        _rec("dyadic-operators", "noncancellative_remainder", key, trial, grid, res[key])
        for key in ("cancellative", "R_a", "R_d*")
    ]


IDENTITY_SUITES: dict[str, Callable] = {
    "haar": suite_haar,
    "avg-difference": suite_avg_difference,
    "product": suite_product,
    "adjoint": suite_adjoint,
    "remainder": suite_remainder,
    "noncancellative": suite_noncancellative,
}


def run_identities(cfg: ExperimentConfig, suites: Iterable[str] | None = None) -> tuple[list[dict], dict]:
    """Run the exact-identity suites; returns ``(records, summary)``.

    A record passes when its residual is at most ``cfg.tol``.
    """
    names = list(suites) if suites is not None else list(IDENTITY_SUITES)
    records = []
    for K in cfg.all_depths:
        grid = cfg.grid(K)
        for name in names:
            fn = IDENTITY_SUITES[name]
            for t in range(cfg.trials):
                for r in fn(cfg, grid, t):
                    r["suite"] = name
                    r["tol"] = cfg.tol
                    r["passed"] = r["residual"] <= cfg.tol
                    records.append(r)
    worst = {}
    for r in records:
        key = f"{r['suite']}/{r['check']}"
        worst[key] = max(worst.get(key, 0.0), r["residual"])
    summary = {
        "command": "identities",
        "records": len(records),
        "violations": sum(not r["passed"] for r in records),
        "max_residual": worst,
        "tol": cfg.tol,
    }
    return records, summary


# -- Bloom BMO equivalence ----------------------------------------------------------

def run_bmo_equiv(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Seven-quantity table per instance plus a pairwise-ratio summary per depth."""
    records = []
    for K in cfg.all_depths:
        grid = cfg.grid(K)
        for t in range(cfg.trials):
            mu = make_weight(cfg, grid, t, _MU)
            lam = make_weight(cfg, grid, t, _LAM)
            nu = bloom(mu, lam, cfg.p)
            b = _symbol(cfg, grid, t, nu=nu)
            rep = bmo_equivalence_report(b, mu, lam, cfg.p, seed=[cfg.seed, t])
            records.append({
                "module": "bmo-functionals",
                "operation": "bmo_equivalence_report",
                "instance": t,
                "n": grid.n,
                "K": K,
                "p": cfg.p,
                "ap_mu": ap_characteristic(mu, cfg.p).value,
                "ap_lam": ap_characteristic(lam, cfg.p).value,
                **{f"q_{k}": v for k, v in rep["quantities"].items()},
                "ratios": rep["ratios"],
            })
    return records, equivalence_summary(records)


def equivalence_summary(records: list[dict]) -> dict:
    by_depth = {}
    for r in records:
        by_depth.setdefault(r["K"], []).append(r)
    out = {"command": "bmo-equiv", "instances": len(records), "by_depth": {}}
    bad = 0
    for K, rows in sorted(by_depth.items()):
        table = {}
        for key in rows[0]["ratios"]:
            vals = np.array([r["ratios"][key] for r in rows], dtype=float)
            fin = vals[np.isfinite(vals)]
            table[key] = {
                "min": float(fin.min()) if fin.size else None,
                "max": float(fin.max()) if fin.size else None,
                "nonfinite": int((~np.isfinite(vals)).sum()),
            }
        out["by_depth"][str(K)] = table
        for r in rows:
            q = np.array([r[f"q_{k}"] for k in EQUIVALENCE_KEYS])
            scale = max(1.0, float(q.max()))
            zero = q <= 1e-12 * scale
            if zero.any() and not zero.all():
                bad += 1
    out["mixed_zero_instances"] = bad
    return out


# -- sweeps ----------------------------------------------------------------------------

def _row_params(grid, i=None, j=None, p=None, ap_mu=None, ap_lam=None, ap_w=None, **extra):
    d = {"K": grid.K, "i": i, "j": j, "p": p, "ap_mu": ap_mu, "ap_lam": ap_lam, "ap_w": ap_w}
    d.update(extra)
    return d


def _lp_norm(A, mu, lam, p, seed):
    if p == 2:
        return opnorm_l2(A, mu, lam).value
    return opnorm_lp(A, mu, lam, p, seeds=seed).value


def sweep_family(cfg: ExperimentConfig, target: str, grid: Grid, class_index: int = 0):
    """``(family, bound_fn, axis)`` for one sweep target on one grid."""
    p = cfg.p
    pairs = [pq for pq in cfg.pairs() if sum(pq) <= grid.K]
    if not pairs:
        raise ConfigError(f"no shift parameters fit in depth {grid.K}")

    if target == "shifted-sqfn":
        # every (i, j) sees the same sequence of weights
        def family(t, rng):
            i, j = pairs[t % len(pairs)]
            w = make_weight(cfg, grid, t // len(pairs), _MU)
            est = opnorm_shifted_square_l2(grid, i, j, w, seed=[cfg.seed, t])
            ap = ap_characteristic(w, 2.0).value
            return SweepInstance(t, _row_params(grid, i, j, 2.0, ap_w=ap, i_plus_j=i + j), est.value)

        bound = lambda inst: 2.0 ** (grid.n * (inst.params["i"] + inst.params["j"]) / 2)
        return family, bound, "i_plus_j"

    if target == "shift-norm":
        def family(t, rng):
            i, j = pairs[t % len(pairs)]
            w = make_weight(cfg, grid, t, _MU)
            S = make_random_shift(grid, i, j, [cfg.seed, cfg.shift_op.seed, t], cfg.shift_op.density)
            lhs = _lp_norm(S.as_map(), w, w, p, [cfg.seed, t])
            ap = ap_characteristic(w, p).value
            return SweepInstance(t, _row_params(grid, i, j, p, ap_w=ap, i_plus_j=i + j), lhs)

        def bound(inst):
            i, j, ap = inst.params["i"], inst.params["j"], inst.params["ap_w"]
            return kappa(i, j) * ap ** max(1.0, 1.0 / (p - 1))

        return family, bound, "i_plus_j"

    def weights_and_symbol(t):
        mu = make_weight(cfg, grid, t, _MU)
        lam = make_weight(cfg, grid, t, _LAM)
        nu = bloom(mu, lam, p)
        b = _symbol(cfg, grid, t, nu=nu)
        aps = {"ap_mu": ap_characteristic(mu, p).value, "ap_lam": ap_characteristic(lam, p).value}
        return mu, lam, nu, b, aps

    if target == "paraproduct":
        def family(t, rng):
            mu, lam, nu, b, aps = weights_and_symbol(t)
            lhs = _lp_norm(paraproduct_map("Pi", b), mu, lam, p, [cfg.seed, t])
            return SweepInstance(t, _row_params(grid, p=p, **aps), lhs, {"rhs": bmo_q_norm(b, nu, 2.0).value})

        return family, lambda inst: inst.meta["rhs"], None

    if target == "commutator":
        def family(t, rng):
            mu, lam, nu, b, aps = weights_and_symbol(t)
            i, j = pairs[t % len(pairs)]
            S = make_random_shift(grid, i, j, [cfg.seed, cfg.shift_op.seed, t], cfg.shift_op.density)
            lhs = _lp_norm(commutator_map(b, S.as_map()), mu, lam, p, [cfg.seed, t])
            rhs = kappa(i, j) * bmo_norm(b, nu).value
            return SweepInstance(t, _row_params(grid, i, j, p, i_plus_j=i + j, **aps), lhs, {"rhs": rhs})

        return family, lambda inst: inst.meta["rhs"], "i_plus_j"

    if target == "lambda":
        def family(t, rng):
            mu, lam, nu, b, aps = weights_and_symbol(t)
            a = random_symbol(grid, cfg.stream(cfg.symbol.seed, t, _SYM2), cfg.symbol.decay)
            na = bmo_norm(a).value
            if na > 1:
                a = a * (1 / na)
                na = bmo_norm(a).value
            kind = ("Lambda", "LambdaStar")[t % 2]
            lhs = _lp_norm(lambda_map(kind, a, b), mu, lam, p, [cfg.seed, t])
            rhs = na * bmo_q_norm(b, nu, 2.0).value
            return SweepInstance(t, _row_params(grid, p=p, variant=kind, **aps), lhs, {"rhs": rhs})

        return family, lambda inst: inst.meta["rhs"], None

    raise ConfigError(f"unknown sweep target {target!r}; choose from {', '.join(SWEEP_TARGETS)}")


def run_sweep(cfg: ExperimentConfig, target: str) -> tuple[list[SweepReport], dict]:
    """One report per depth; the summary adds growth of the max ratio across depths."""
    if target not in SWEEP_TARGETS:
        raise ConfigError(f"unknown sweep target {target!r}; choose from {', '.join(SWEEP_TARGETS)}")
    reports = []
    for K in cfg.all_depths:
        grid = cfg.grid(K)
        family, bound, axis = sweep_family(cfg, target, grid)
        reports.append(inequality_sweep(family, bound, cfg.trials, cfg.seed, f"{target}@K={K}", axis, cfg.jobs))
    summaries = [r.summary() for r in reports]
    maxima = [s["max_ratio"] for s in summaries]
    growth = [
        b / a if a and b is not None else None for a, b in zip(maxima[:-1], maxima[1:])
    ]
    summary = {
        "command": "sweep",
        "target": target,
        "p": cfg.p,
        "depths": cfg.all_depths,
        "reports": summaries,
        "max_ratio": max((m for m in maxima if m is not None), default=None),
        "depth_growth": growth,
    }
    return reports, summary
