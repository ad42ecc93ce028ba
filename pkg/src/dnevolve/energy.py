"""Time-dependent energies, their subdifferential notions, and audits.

An EnergyModel owns E(t, u), a finite list of subgradient candidates, and a
generalized time derivative P(t, u, xi). Marginal models realize E as

    E(t, u) = min_{eta} I(t, u, eta)

over a finite set or a compact interval of internal states eta; their
subdifferential is the set of partial gradients D_u I at the minimizing eta
(the marginal subdifferential), and P is the conditioned supremum of d/dt I
over minimizers compatible with the supplied xi. A Clarke-type interval is
available in dimension 1 for models that declare their kink locations.

Energies carry an explicit constant offset chosen so the working minimum is
at least 1; the offset is stored and reported, never silently applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _optim
from .errors import (ConditioningError, DimensionMismatchError, DomainError,
                     RefinementError, ResolutionError)
from .potentials import as_state

DELTA_XI = 1e-8       # xi-to-eta matching tolerance; both sides come from
                      # the same analytic D_u I, so agreement is near machine
ETA_CLUSTER = 1e-7    # dedup radius for minimizing eta
XI_DEDUP = 1e-10


@dataclass(frozen=True)
class EnergyConstants:
    """C0: positive lower bound of E; C1: time-Lipschitz modulus;
    C2: bound modulus for P; tau_o: maximal admissible step."""

    C0: float
    C1: float
    C2: float
    tau_o: float


class EnergyModel:
    """Base energy: immutable after construction, all queries pure."""

    name: str = "energy"
    dim: int = 1
    offset: float = 0.0
    constants: EnergyConstants = EnergyConstants(1.0, 1.0, 1.0, 0.5)
    domain_box: Optional[Tuple[np.ndarray, np.ndarray]] = None
    is_marginal: bool = False
    c_chain: Optional[float] = None  # chain-rule defect scale; None = default

    def value(self, t: float, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, t: float, u: np.ndarray) -> np.ndarray:
        """Gradient of the smooth part in u; smooth models only."""
        raise NotImplementedError

    def subdiff(self, t: float, u: np.ndarray, tol: float) -> List[np.ndarray]:
        """Finite list of subgradient candidates at (t, u)."""
        raise NotImplementedError

    def time_deriv_P(self, t: float, u: np.ndarray, xi: np.ndarray) -> float:
        raise NotImplementedError

    def kinks_1d(self, t: float) -> Tuple[float, ...]:
        """u-locations where E(t, .) is not differentiable (d = 1 models)."""
        return ()

    def describe(self) -> str:
        return self.name


class MarginalEnergy(EnergyModel):
    """E(t, u) = min over eta of inner(t, u, eta).

    Subclasses provide inner (broadcasting over an eta array), the analytic
    partials inner_du and inner_dt, and exactly one of eta_values (finite
    tuple) or eta_interval (compact [lo, hi], discretized by grid plus
    golden-section refinement of every local basin).
    """

    is_marginal = True
    eta_values: Optional[Tuple[float, ...]] = None
    eta_interval: Optional[Tuple[float, float]] = None

    def inner(self, t: float, u: np.ndarray, eta):
        raise NotImplementedError

    def inner_du(self, t: float, u: np.ndarray, eta: float) -> np.ndarray:
        raise NotImplementedError

    def inner_dt(self, t: float, u: np.ndarray, eta: float) -> float:
        raise NotImplementedError

    def value(self, t, u):
        _, vals = _marginal_candidates(self, t, u)
        return float(np.min(vals))

    def subdiff(self, t, u, tol):
        return marginal_subdifferential(self, t, u, tol)

    def time_deriv_P(self, t, u, xi):
        return generalized_time_derivative(self, t, u, xi)


def default_delta_M(min_inner: float) -> float:
    return 1e-9 * (1.0 + abs(min_inner))


def _check_domain(model: EnergyModel, u: np.ndarray) -> None:
    if model.domain_box is None:
        return
    lo, hi = model.domain_box
    if np.any(u < lo) or np.any(u > hi):
        raise DomainError(
            f"state outside declared domain box of {model.name}: "
            f"u = {np.round(u, 6).tolist()}")


def _marginal_candidates(model: MarginalEnergy, t: float, u: np.ndarray):
    """All refined local minimizers of eta -> inner(t, u, eta).

    Returns (etas, vals) as float arrays. Interval models get a 129-point
    grid with golden-section refinement of every local basin, then a finer
    1025-point safety pass; a fine-grid value still beating the refined
    minimum by more than the argmin slack means the refinement failed.
    """
    if model.eta_values is not None:
        etas = np.asarray(model.eta_values, dtype=float)
        vals = np.asarray(model.inner(t, u, etas), dtype=float)
        return etas, vals

    lo, hi = model.eta_interval

    def batched(es):
        return np.asarray(model.inner(t, u, es), dtype=float)

    def refine(grid, vals):
        idx = _optim.local_min_indices(vals)
        a = grid[np.maximum(idx - 1, 0)]
        b = grid[np.minimum(idx + 1, grid.shape[0] - 1)]
        xs, fs = _optim.golden_min_batched(batched, a, b, iters=90)
        # keep the grid points too so a refined value never sits above one
        return (np.concatenate([np.atleast_1d(xs), grid[idx]]),
                np.concatenate([np.atleast_1d(fs), vals[idx]]))

    grid = np.linspace(lo, hi, 129)
    cand_x, cand_f = refine(grid, batched(grid))
    best = float(np.min(cand_f))

    fine = np.linspace(lo, hi, 1025)
    fvals = batched(fine)
    if float(np.min(fvals)) < best - default_delta_M(best):
        extra_x, extra_f = refine(fine, fvals)  # coarse grid missed a basin
        cand_x = np.concatenate([cand_x, extra_x])
        cand_f = np.concatenate([cand_f, extra_f])
        best = float(np.min(cand_f))
        if float(np.min(fvals)) < best - default_delta_M(best):
            raise RefinementError(
                f"interval minimization over eta failed to certify the "
                f"minimum for {model.name} at t={t}: grid value "
                f"{float(np.min(fvals))} beats refined value {best}")
    return cand_x, cand_f


def _cluster_scalars(xs: np.ndarray, fs: np.ndarray, tol: float) -> List[float]:
    """One representative per cluster of xs (radius tol): lowest fs wins,
    ties broken by the smaller x. Returned sorted ascending."""
    order = np.argsort(xs, kind="stable")
    reps: List[int] = []
    group = [int(order[0])]
    for j in order[1:]:
        j = int(j)
        if xs[j] - xs[group[-1]] <= tol:
            group.append(j)
        else:
            reps.append(min(group, key=lambda k: (fs[k], xs[k])))
            group = [j]
    reps.append(min(group, key=lambda k: (fs[k], xs[k])))
    return sorted(float(xs[k]) for k in reps)


# ---------------------------------------------------------------------------
# operations


def energy_value(model: EnergyModel, t: float, u) -> float:
    """E(t, u), with the declared domain box enforced."""
    u = as_state(u, model.dim)
    _check_domain(model, u)
    return float(model.value(t, u))


def argmin_set(model: MarginalEnergy, t: float, u,
               delta_M: Optional[float] = None) -> List[float]:
    """All eta with inner(t, u, eta) within delta_M of the minimum,
    deduplicated by clustering within 1e-7."""
    u = as_state(u, model.dim)
    _check_domain(model, u)
    etas, vals = _marginal_candidates(model, t, u)
    m = float(np.min(vals))
    slack = default_delta_M(m) if delta_M is None else float(delta_M)
    keep = vals <= m + slack
    return _cluster_scalars(etas[keep], vals[keep], ETA_CLUSTER)


def marginal_subdifferential(model: MarginalEnergy, t: float, u,
                             delta_M: Optional[float] = None) -> List[np.ndarray]:
    """{D_u I(t, u, eta) : eta minimizing}, deduplicated."""
    u = as_state(u, model.dim)
    etas = argmin_set(model, t, u, delta_M)
    xis = [np.asarray(model.inner_du(t, u, e), dtype=float).reshape(model.dim)
           for e in etas]
    xis.sort(key=lambda x: tuple(x))
    out: List[np.ndarray] = []
    for x in xis:
        if not out or np.linalg.norm(x - out[-1]) > XI_DEDUP:
            out.append(x)
    return out


def _one_sided(f, x: float, h: float, side: float) -> float:
    """One-sided difference quotient at x, Richardson-refined once."""
    def d(step):
        return (f(x + side * step) - f(x)) / (side * step)

    return 2.0 * d(h / 2.0) - d(h)


def clarke_subdifferential_1d(model: EnergyModel, t: float, u,
                              h: float = 1e-6) -> Tuple[float, float]:
    """Interval hull of the one-sided derivatives of E(t, .) at u (d = 1).

    Smooth points give the singleton derivative; within h of a declared kink
    the one-sided derivatives are taken from the kink itself. More than one
    kink inside the step is unresolvable at this h.
    """
    if model.dim != 1:
        raise DimensionMismatchError(1, model.dim, "Clarke interval")
    u = as_state(u, 1)
    _check_domain(model, u)
    x = float(u[0])
    near = [k for k in model.kinks_1d(t) if abs(k - x) <= h]
    if len(near) > 1:
        raise ResolutionError(
            f"{len(near)} kinks of {model.name} within step {h} of u={x}; "
            f"shrink h to separate them")
    base = near[0] if near else x

    def f(y):
        return model.value(t, np.array([y]))

    d_right = _one_sided(f, base, h, +1.0)
    d_left = _one_sided(f, base, h, -1.0)
    return (min(d_left, d_right), max(d_left, d_right))


def generalized_time_derivative(model: EnergyModel, t: float, u, xi,
                                delta_M: Optional[float] = None) -> float:
    """Conditioned P(t, u, xi).

    Marginal models: sup of inner_dt over minimizing eta whose D_u I lies
    within DELTA_XI of xi; an empty match means xi is stale or foreign.
    Smooth models: the analytic time derivative (xi-independent).
    """
    u = as_state(u, model.dim)
    xi = as_state(xi, model.dim)
    if not model.is_marginal:
        return float(model.time_deriv_P(t, u, xi))
    etas = argmin_set(model, t, u, delta_M)
    matched = [e for e in etas
               if np.linalg.norm(xi - np.asarray(model.inner_du(t, u, e),
                                                 dtype=float).reshape(model.dim))
               <= DELTA_XI]
    if not matched:
        cands = [np.round(np.asarray(model.inner_du(t, u, e)), 8).tolist()
                 for e in etas]
        raise ConditioningError(
            f"xi = {np.round(xi, 8).tolist()} matches no minimizer of "
            f"{model.name} at (t={t}); candidates {cands}")
    return max(float(model.inner_dt(t, u, e)) for e in matched)


def envelope_derivative_1d(model: EnergyModel, t: float, u) -> float:
    """dE/du at a differentiability point (d = 1), for stationarity polish.

    A model-supplied derivative_1d short-circuits (it is cross-checked
    against this routine's envelope value in the test suite, not here:
    polish loops call this hundreds of times per step). Marginal models
    otherwise use the envelope rule: D_u I at the best minimizer.
    Meaningless exactly at a kink; callers guard with a sign check.
    """
    u = as_state(u, 1)
    fast = getattr(model, "derivative_1d", None)
    if fast is not None:
        return float(fast(t, float(u[0])))
    if model.is_marginal:
        etas, vals = _marginal_candidates(model, t, u)
        e = float(etas[int(np.argmin(vals))])
        return float(np.asarray(model.inner_du(t, u, e)).reshape(1)[0])
    return float(np.asarray(model.grad(t, u)).reshape(1)[0])


def sup_energy(model: EnergyModel, u, times: Sequence[float]) -> float:
    """max over the given times of E(t, u); the audits' stand-in for sup_t."""
    return max(energy_value(model, t, u) for t in times)


# ---------------------------------------------------------------------------
# assumption audit


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    rows: Tuple[AssumptionCheck, ...] = ()

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, name: str) -> AssumptionCheck:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {r.name: {"passed": r.passed, "detail": r.detail} for r in self.rows}


@dataclass(frozen=True)
class ProbePlan:
    """(t, s, u) probe triples plus sublevel thresholds for the audit."""

    triples: Tuple = ()
    sublevel_thresholds: Tuple[float, ...] = (np.inf,)


def default_probe_plan(model: EnergyModel, t_final: float = 1.0,
                       n_states: int = 6, seed: int = 0) -> ProbePlan:
    """Deterministic probe set: grid times crossed with states sampled in the
    domain box (box center, a near-corner pair, and seeded interior draws)."""
    times = np.linspace(0.0, t_final, 5)
    if model.domain_box is not None:
        lo, hi = model.domain_box
    else:
        lo, hi = -2.0 * np.ones(model.dim), 2.0 * np.ones(model.dim)
    rng = np.random.default_rng(seed)
    states = [0.5 * (lo + hi), lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo)]
    for _ in range(n_states):
        states.append(lo + rng.random(model.dim) * (hi - lo))
    triples = tuple((float(t), float(s), u)
                    for u in states
                    for t in times for s in times if t != s)
    return ProbePlan(triples=triples)


def audit_assumptions(model: EnergyModel,
                      probe_plan: Optional[ProbePlan] = None) -> AssumptionReport:
    """Check the standing assumptions on the probe plan; failures are rows.

    Rows: positivity (E >= C0 > 0), time_lipschitz
    (|E(t,u) - E(s,u)| <= C1 E(t,u) |t-s|), exponential_bound
    (E(t,u) <= exp(C1 |t-s|) E(s,u)), power_bound (|P| <= C2 sup_t E(t,u)
    for every subgradient candidate), coercivity_witness (a bounded domain
    box is declared and every probed sublevel member lies inside it).
    """
    if probe_plan is None:
        probe_plan = default_probe_plan(model)
    K = model.constants
    slack = 1e-9

    triples = [(t, s, as_state(u, model.dim)) for (t, s, u) in probe_plan.triples]
    times = sorted({t for (t, s, _) in triples} | {s for (_, s, _) in triples})
    rows = []

    e_cache = {}

    def E(t, u_key, u):
        if (t, u_key) not in e_cache:
            e_cache[(t, u_key)] = energy_value(model, t, u)
        return e_cache[(t, u_key)]

    keyed = [(t, s, tuple(u), u) for (t, s, u) in triples]

    min_E = min(E(t, k, u) for (t, s, k, u) in keyed)
    rows.append(AssumptionCheck(
        "positivity", bool(K.C0 > 0.0 and min_E >= K.C0 - 1e-12),
        f"min probed E = {min_E:.6g} against C0 = {K.C0:.6g}"))

    worst_lip = -np.inf
    lip_ok = True
    for (t, s, k, u) in keyed:
        et, es = E(t, k, u), E(s, k, u)
        margin = abs(et - es) - K.C1 * et * abs(t - s)
        worst_lip = max(worst_lip, margin)
        if margin > slack * (1.0 + et):
            lip_ok = False
    rows.append(AssumptionCheck(
        "time_lipschitz", lip_ok, f"worst |dE| - C1 E |dt| = {worst_lip:.3e}"))

    worst_exp = -np.inf
    exp_ok = True
    for (t, s, k, u) in keyed:
        et, es = E(t, k, u), E(s, k, u)
        margin = et - np.exp(K.C1 * abs(t - s)) * es
        worst_exp = max(worst_exp, margin)
        if margin > slack * (1.0 + et):
            exp_ok = False
    rows.append(AssumptionCheck(
        "exponential_bound", exp_ok,
        f"worst E(t) - exp(C1 |dt|) E(s) = {worst_exp:.3e}"))

    p_ok = True
    p_detail = ""
    worst_p = -np.inf
    for (t, s, k, u) in keyed:
        g_u = max(E(tt, k, u) for tt in times)
        for xi in model.subdiff(t, u, 1e-9):
            xi = np.asarray(xi, dtype=float)
            if xi.shape != (model.dim,) or not np.all(np.isfinite(xi)):
                p_ok = False
                p_detail = f"malformed subgradient candidate {xi!r}"
                break
            p = model.time_deriv_P(t, u, xi)
            margin = abs(p) - K.C2 * g_u
            worst_p = max(worst_p, margin)
            if margin > slack * (1.0 + g_u):
                p_ok = False
                p_detail = f"|P| = {abs(p):.6g} > C2 sup E = {K.C2 * g_u:.6g} at t={t}"
        if not p_ok:
            break
    rows.append(AssumptionCheck(
        "power_bound", p_ok,
        p_detail or f"worst |P| - C2 sup E = {worst_p:.3e}"))

    if model.domain_box is None:
        rows.append(AssumptionCheck(
            "coercivity_witness", False, "no bounded domain box declared"))
    else:
        lo, hi = model.domain_box
        bounded = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))
        inside = True
        for L in probe_plan.sublevel_thresholds:
            for (t, s, k, u) in keyed:
                if E(t, k, u) <= L and (np.any(u < lo) or np.any(u > hi)):
                    inside = False
        rows.append(AssumptionCheck(
            "coercivity_witness", bounded and inside,
            f"box widths {np.round(hi - lo, 6).tolist()}, "
            f"all probed sublevel members inside: {inside}"))

    return AssumptionReport(rows=tuple(rows))
