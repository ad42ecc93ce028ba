"""Dissipation potentials and their convex-analysis queries.

A dissipation potential Psi is a convex, nonnegative function of the rate v
with Psi(0) = 0 and superlinear growth; state-dependent families Psi_u scale
a base potential by a positive weight omega(u). The queries this module owns:

    eval(psi, u, v)            Psi_u(v)
    conjugate(psi, u, xi)      Psi_u*(xi) = sup_v <xi,v> - Psi_u(v)
    fenchel_young_gap          Psi_u(v) + Psi_u*(xi) - <xi,v>  (>= 0)
    subdiff_contains           gap <= tol  certifies  xi in dPsi_u(v)
    check_admissible           axiom audit (nonnegativity, zero, convexity,
                               superlinearity, equal-conjugate condition)

The pairing is the Euclidean dot product throughout; models that need mesh
weights bake them into the potential and the energy.

Conjugates use closed forms where a kind has one; otherwise a certified
numeric supremum: per-coordinate 1D maximization for separable kinds, radial
reduction for kinds that are functions of ||v||, both by bracket expansion
plus bounded Brent refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _optim
from .errors import DimensionMismatchError, MaximizationFailureError

_CONJ_XTOL = 1e-10


def as_state(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce to a finite 1D float64 state vector."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError("state vectors are 1D")
    if not np.all(np.isfinite(v)):
        raise ValueError("state vector has non-finite coordinates")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(dim, v.shape[0], "state")
    return v


class DissipationPotential:
    """Base class: state-independent unless declared otherwise.

    Subclasses fill in the scalar/radial structure the numeric machinery
    needs. `scalar(s)` is the per-coordinate contribution of separable kinds
    (Psi(v) = sum_i scalar(v_i)); `radial(r)` is the profile of kinds that
    depend on v only through ||v||.
    """

    state_dependent: bool = False
    separable: bool = False
    is_radial: bool = False
    has_closed_conjugate: bool = False

    def value(self, v: np.ndarray) -> float:
        raise NotImplementedError

    def scalar(self, s):
        raise NotImplementedError

    def radial(self, r):
        raise NotImplementedError

    def closed_conjugate(self, xi: np.ndarray) -> float:
        raise NotImplementedError

    # decomposition Psi = one_hom * ||.||_1 + smooth part, used by the
    # proximal-gradient inner solver (the only nonsmooth piece in the
    # catalogue is an l1 term)
    @property
    def one_hom(self) -> float:
        return 0.0

    def smooth_scalar(self, s):
        """Per-coordinate value of the smooth part (separable kinds)."""
        raise NotImplementedError

    def smooth_scalar_grad(self, s):
        """Derivative of smooth_scalar."""
        raise NotImplementedError

    def label(self) -> str:
        return type(self).__name__

    def at_state(self, u) -> "DissipationPotential":
        """The frozen potential Psi_u; identity for state-independent kinds."""
        return self


@dataclass(frozen=True)
class Quadratic(DissipationPotential):
    """Psi(v) = (c/2) ||v||^2; conjugate ||xi||^2 / (2c)."""

    c: float = 1.0
    separable = True
    is_radial = True
    has_closed_conjugate = True

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("Quadratic needs c > 0")

    def value(self, v):
        return 0.5 * self.c * float(np.dot(v, v))

    def scalar(self, s):
        return 0.5 * self.c * np.square(s)

    def radial(self, r):
        return 0.5 * self.c * np.square(r)

    def closed_conjugate(self, xi):
        return float(np.dot(xi, xi)) / (2.0 * self.c)

    def smooth_scalar(self, s):
        return 0.5 * self.c * np.square(s)

    def smooth_scalar_grad(self, s):
        return self.c * np.asarray(s, dtype=float)

    def label(self):
        return f"Quadratic(c={self.c})"


@dataclass(frozen=True)
class PNorm(DissipationPotential):
    """Psi(v) = (c/p) sum_i |v_i|^p  (the lp-norm to the p-th power).

    For p > 1 the conjugate is (c^(1-q)/q) sum_i |xi_i|^q with 1/p + 1/q = 1.
    p = 1 gives the 1-homogeneous c ||v||_1 whose conjugate is the indicator
    of the ball ||xi||_inf <= c; alone it is not admissible (no superlinear
    growth) but it is a valid summand inside WeightedSum.
    """

    c: float = 1.0
    p: float = 2.0
    separable = True
    has_closed_conjugate = True

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("PNorm needs c > 0")
        if not self.p >= 1:
            raise ValueError("PNorm needs p >= 1")

    def value(self, v):
        return float(self.c / self.p * np.sum(np.abs(v) ** self.p))

    def scalar(self, s):
        return self.c / self.p * np.abs(s) ** self.p

    def closed_conjugate(self, xi):
        if self.p == 1.0:
            return 0.0 if np.max(np.abs(xi), initial=0.0) <= self.c else np.inf
        q = self.p / (self.p - 1.0)
        return float(self.c ** (1.0 - q) / q * np.sum(np.abs(xi) ** q))

    @property
    def one_hom(self):
        return self.c if self.p == 1.0 else 0.0

    def smooth_scalar(self, s):
        if self.p == 1.0:
            return np.zeros_like(np.asarray(s, dtype=float))
        return self.c / self.p * np.abs(s) ** self.p

    def smooth_scalar_grad(self, s):
        s = np.asarray(s, dtype=float)
        if self.p == 1.0:
            return np.zeros_like(s)
        return self.c * np.sign(s) * np.abs(s) ** (self.p - 1.0)

    def label(self):
        return f"PNorm(c={self.c}, p={self.p})"


@dataclass(frozen=True)
class OneHomPlusQuad(DissipationPotential):
    """Psi(v) = rho ||v||_1 + (eps/2) ||v||^2, the viscous regularization of a
    rate-independent potential; conjugate sum_i ((|xi_i| - rho)_+)^2 / (2 eps).
    """

    rho: float = 1.0
    eps: float = 1.0
    separable = True
    has_closed_conjugate = True

    def __post_init__(self):
        if self.rho < 0 or not self.eps > 0:
            raise ValueError("OneHomPlusQuad needs rho >= 0 and eps > 0")

    def value(self, v):
        return float(self.rho * np.sum(np.abs(v)) + 0.5 * self.eps * np.dot(v, v))

    def scalar(self, s):
        s = np.asarray(s, dtype=float)
        return self.rho * np.abs(s) + 0.5 * self.eps * np.square(s)

    def closed_conjugate(self, xi):
        excess = np.maximum(np.abs(xi) - self.rho, 0.0)
        return float(np.sum(np.square(excess)) / (2.0 * self.eps))

    @property
    def one_hom(self):
        return self.rho

    def smooth_scalar(self, s):
        return 0.5 * self.eps * np.square(np.asarray(s, dtype=float))

    def smooth_scalar_grad(self, s):
        return self.eps * np.asarray(s, dtype=float)

    def label(self):
        return f"OneHomPlusQuad(rho={self.rho}, eps={self.eps})"


@dataclass(frozen=True)
class WeightedSum(DissipationPotential):
    """Psi(v) = sum_k Psi_k(v) for separable members (weights folded into the
    members). The conjugate has no closed form in general and is computed by
    the certified per-coordinate supremum.
    """

    parts: tuple = ()

    def __post_init__(self):
        if not self.parts:
            raise ValueError("WeightedSum needs at least one member")
        if not all(p.separable for p in self.parts):
            raise ValueError("WeightedSum members must be separable")

    @property
    def separable(self):
        return True

    def value(self, v):
        return float(sum(p.value(v) for p in self.parts))

    def scalar(self, s):
        return sum(p.scalar(s) for p in self.parts)

    @property
    def one_hom(self):
        return sum(p.one_hom for p in self.parts)

    def smooth_scalar(self, s):
        return sum(p.smooth_scalar(s) for p in self.parts)

    def smooth_scalar_grad(self, s):
        return sum(p.smooth_scalar_grad(s) for p in self.parts)

    def label(self):
        return "WeightedSum(" + ", ".join(p.label() for p in self.parts) + ")"


@dataclass(frozen=True)
class Scaled(DissipationPotential):
    """w * base for a fixed positive weight; the frozen view Psi_u of a
    state-dependent family. Conjugate scales exactly: w * base*(xi / w).
    """

    base: DissipationPotential = None
    w: float = 1.0

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("Scaled needs w > 0")

    @property
    def separable(self):
        return self.base.separable

    @property
    def is_radial(self):
        return self.base.is_radial

    @property
    def has_closed_conjugate(self):
        return self.base.has_closed_conjugate

    def value(self, v):
        return self.w * self.base.value(v)

    def scalar(self, s):
        return self.w * self.base.scalar(s)

    def radial(self, r):
        return self.w * self.base.radial(r)

    def closed_conjugate(self, xi):
        return self.w * self.base.closed_conjugate(np.asarray(xi) / self.w)

    @property
    def one_hom(self):
        return self.w * self.base.one_hom

    def smooth_scalar(self, s):
        return self.w * self.base.smooth_scalar(s)

    def smooth_scalar_grad(self, s):
        return self.w * self.base.smooth_scalar_grad(s)

    def label(self):
        return f"{self.w} * {self.base.label()}"


@dataclass(frozen=True)
class StateWeighted(DissipationPotential):
    """Family Psi_u(v) = omega(u) * Psi0(v) with 0 < omega_min <= omega <= omega_max.

    All queries take the state u; at_state(u) freezes the weight.
    """

    base: DissipationPotential = None
    omega: Callable[[np.ndarray], float] = None
    omega_bounds: tuple = (0.0, np.inf)
    state_dependent = True

    def weight(self, u) -> float:
        w = float(self.omega(as_state(u)))
        lo, hi = self.omega_bounds
        if not (w > 0.0 and np.isfinite(w)):
            raise ValueError(f"omega(u) = {w} is not a positive finite weight")
        if not (lo <= w <= hi):
            raise ValueError(f"omega(u) = {w} outside declared bounds [{lo}, {hi}]")
        return w

    def at_state(self, u) -> Scaled:
        return Scaled(base=self.base, w=self.weight(u))

    def value(self, v):  # pragma: no cover - state required
        raise TypeError("state-dependent potential: use at_state(u) or pass u")

    def label(self):
        return f"StateWeighted({self.base.label()}, omega in {list(self.omega_bounds)})"


@dataclass(frozen=True)
class TwoSlope(DissipationPotential):
    """Psi(v) = max(||v||, 2||v|| - 1).

    Designed inadmissible example: convex and nonnegative with Psi(0) = 0,
    but only linear growth, and the subdifferential on the unit sphere is the
    segment [1, 2] with unequal conjugate values (Psi*(1) = 0, Psi*(2) = 1),
    so the equal-conjugate admissibility condition fails there.
    """

    is_radial = True

    def value(self, v):
        r = float(np.linalg.norm(v))
        return max(r, 2.0 * r - 1.0)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.maximum(r, 2.0 * r - 1.0)

    def scalar(self, s):
        return self.radial(np.abs(s))

    def label(self):
        return "TwoSlope"


# ---------------------------------------------------------------------------
# module-level queries


def _resolve(psi: DissipationPotential, u) -> DissipationPotential:
    if psi.state_dependent:
        if u is None:
            raise TypeError("state-dependent potential requires the state u")
        return psi.at_state(u)
    return psi


def eval(psi: DissipationPotential, u, v) -> float:
    """Psi_u(v). u is required iff psi is state-dependent."""
    v = as_state(v)
    if u is not None:
        as_state(u, dim=v.shape[0])  # state and rate dimensions must agree
    p = _resolve(psi, u)
    return p.value(v)


def _scalar_conjugate_numeric(p: DissipationPotential, sigma: float) -> float:
    """sup_s sigma*s - scalar(s) by two-sided bracket expansion + Brent."""
    best = 0.0  # s = 0 is always feasible and gives 0
    for sgn in (1.0, -1.0):
        def g(s, sgn=sgn):
            return sigma * sgn * s - float(p.scalar(sgn * s))

        a, b = _optim.bracket_max(g, x0=0.0, step=max(1e-2, abs(sigma)))
        a = max(a, 0.0)
        _, val = _optim.max_scalar(g, a, b, xtol=_CONJ_XTOL)
        best = max(best, val)
    return best


def _radial_conjugate_numeric(p: DissipationPotential, rho: float) -> float:
    """sup_{r>=0} rho*r - radial(r) for ||xi|| = rho."""
    def g(r):
        return rho * r - float(p.radial(r))

    a, b = _optim.bracket_max(g, x0=0.0, step=max(1e-2, rho))
    a = max(a, 0.0)
    _, val = _optim.max_scalar(g, a, b, xtol=_CONJ_XTOL)
    return max(val, 0.0)


def conjugate(psi: DissipationPotential, u, xi) -> float:
    """Psi_u*(xi) = sup_v <xi,v> - Psi_u(v), always >= 0.

    Closed form when available; else the certified numeric supremum
    (per-coordinate for separable kinds, radial otherwise). Raises
    MaximizationFailureError when the supremum fails to bracket (infinite
    conjugate outside the effective domain).
    """
    p = _resolve(psi, u)
    xi = as_state(xi)
    if p.has_closed_conjugate:
        return max(p.closed_conjugate(xi), 0.0)
    if p.separable:
        return max(sum(_scalar_conjugate_numeric(p, float(s)) for s in xi), 0.0)
    if p.is_radial:
        return _radial_conjugate_numeric(p, float(np.linalg.norm(xi)))
    raise MaximizationFailureError(
        f"no conjugate route for potential {p.label()}")


def fenchel_young_gap(psi: DissipationPotential, u, v, xi) -> float:
    """Psi_u(v) + Psi_u*(xi) - <xi, v>; nonnegative, zero iff xi in dPsi_u(v)."""
    v = as_state(v)
    xi = as_state(xi, dim=v.shape[0])
    p = _resolve(psi, u)
    return p.value(v) + conjugate(p, None, xi) - float(np.dot(xi, v))


def subdiff_contains(psi: DissipationPotential, u, v, xi, tol: float) -> bool:
    """True iff the Fenchel-Young gap is at most tol."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    return fenchel_young_gap(psi, u, v, xi) <= tol


# ---------------------------------------------------------------------------
# admissibility audit


@dataclass(frozen=True)
class SamplePlan:
    """Test inputs for check_admissible.

    vectors: nonzero probe directions; radii: increasing growth ladder for
    the superlinearity witness; superlin_bound: the bound M the last ratio
    must exceed; thetas: convexity interpolation weights; state: u for
    state-dependent families.
    """

    vectors: Sequence = ()
    radii: Sequence = ()
    superlin_bound: float = 1e3
    thetas: Sequence = (0.25, 0.5, 0.75)
    state: Optional[np.ndarray] = None


def default_sample_plan(dim: int = 1, state=None) -> SamplePlan:
    dirs = []
    for mag in (0.5, 1.0, 3.0):
        for sgn in (1.0, -1.0):
            e = np.zeros(dim)
            e[0] = sgn * mag
            dirs.append(e)
            if dim > 1:
                dirs.append(np.full(dim, sgn * mag / np.sqrt(dim)))
    return SamplePlan(vectors=tuple(dirs),
                      radii=tuple(np.logspace(0, 6, 13)),
                      state=state)


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AdmissibilityReport:
    rows: tuple = ()

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, name: str) -> AxiomCheck:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {r.name: {"passed": r.passed, "detail": r.detail} for r in self.rows}


def _one_sided_lambda_derivatives(value, v, h: float = 1e-6):
    """Richardson-refined one-sided derivatives of lambda -> Psi(lambda v) at 1."""
    def dplus(step):
        return (value((1.0 + step) * v) - value(v)) / step

    def dminus(step):
        return (value(v) - value((1.0 - step) * v)) / step

    rp = 2.0 * dplus(h / 2) - dplus(h)
    rm = 2.0 * dminus(h / 2) - dminus(h)
    return rp, rm


def check_admissible(psi: DissipationPotential, plan: Optional[SamplePlan] = None
                     ) -> AdmissibilityReport:
    """Audit the potential axioms on the sample plan.

    Rows: nonnegativity, zero_at_origin, convexity, superlinearity, and
    equal_conjugates, the condition that lambda -> Psi(lambda v) is
    differentiable at lambda = 1 for every probe v (equivalently, all
    subgradients at v share one conjugate value). Failures are rows, not
    exceptions.
    """
    if plan is None:
        plan = default_sample_plan(1)
    p = _resolve(psi, plan.state)
    vecs = [as_state(v) for v in plan.vectors]
    rows = []

    worst = min((p.value(v) for v in vecs), default=0.0)
    for v in vecs:
        for r in plan.radii:
            worst = min(worst, p.value(r * v / max(np.linalg.norm(v), 1e-300)))
    rows.append(AxiomCheck("nonnegativity", bool(worst >= -1e-12),
                           f"min sampled value {worst:.3e}"))

    z = p.value(np.zeros(vecs[0].shape[0] if vecs else 1))
    rows.append(AxiomCheck("zero_at_origin", z == 0.0, f"Psi(0) = {z!r}"))

    conv_ok, conv_worst = True, 0.0
    for v1 in vecs:
        for v2 in vecs:
            f1, f2 = p.value(v1), p.value(v2)
            for th in plan.thetas:
                lhs = p.value(th * v1 + (1.0 - th) * v2)
                rhs = th * f1 + (1.0 - th) * f2
                viol = lhs - rhs
                conv_worst = max(conv_worst, viol)
                if viol > 1e-12 * (1.0 + abs(rhs)):
                    conv_ok = False
    rows.append(AxiomCheck("convexity", conv_ok,
                           f"max segment violation {conv_worst:.3e}"))

    sup_ok = True
    sup_detail = ""
    for v in vecs:
        vhat = v / np.linalg.norm(v)
        ratios = np.array([p.value(r * vhat) / r for r in plan.radii])
        nondecreasing = bool(np.all(np.diff(ratios) >= -1e-9 * (1.0 + np.abs(ratios[:-1]))))
        exceeds = bool(ratios[-1] >= plan.superlin_bound)
        if not (nondecreasing and exceeds):
            sup_ok = False
            sup_detail = (f"direction {np.round(vhat, 3).tolist()}: "
                          f"final ratio {ratios[-1]:.3e} vs bound {plan.superlin_bound:.1e}, "
                          f"nondecreasing={nondecreasing}")
            break
    rows.append(AxiomCheck("superlinearity", sup_ok,
                           sup_detail or f"all ratios reach {plan.superlin_bound:.1e}"))

    psi3_ok = True
    psi3_detail = ""
    for v in vecs:
        rp, rm = _one_sided_lambda_derivatives(p.value, v)
        tol = 1e-4 * (1.0 + p.value(v))
        if abs(rp - rm) > tol:
            psi3_ok = False
            psi3_detail = (f"at v = {np.round(v, 6).tolist()}: one-sided "
                           f"lambda-derivatives {rm:.6f} / {rp:.6f} differ beyond {tol:.1e}")
            break
    rows.append(AxiomCheck("equal_conjugates", psi3_ok,
                           psi3_detail or "lambda-derivative matches on all probes"))

    return AdmissibilityReport(rows=tuple(rows))


# ---------------------------------------------------------------------------
# helpers for the scheme's inner solver


def rate_bound_radius(p: DissipationPotential, tau: float, budget: float,
                      s0: float = None) -> float:
    """Smallest R (within a factor ~2) with tau * psi_scalar(R / tau) >= budget.

    Inverts the scalar growth of a resolved separable potential; this bounds
    the coercivity box of the per-step objective in 1D, since any candidate
    minimizer U must satisfy tau Psi((U - u)/tau) <= budget.
    """
    if budget <= 0.0:
        return max(1e-12, 1e-9 * tau)
    r = s0 if s0 is not None else max(tau, 1e-6)
    for _ in range(400):
        if tau * float(p.scalar(r / tau)) >= budget:
            return r
        r *= 2.0
    return r


def scalar_derivative(p: DissipationPotential, s: float) -> float:
    """d/ds psi_scalar(s) away from the l1 kink (s != 0 when one_hom > 0)."""
    g = float(p.smooth_scalar_grad(s))
    if p.one_hom:
        g += p.one_hom * float(np.sign(s))
    return g
