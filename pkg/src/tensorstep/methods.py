"""Outer optimization loops and the rate-theory calculators.

``itm_run`` is the deterministic inexact tensor method: at each iterate it
obtains a derivative bundle (exact by default, or from an injected oracle),
minimizes the smooth regularized model, and steps. ``stm_run`` is the
stochastic variant: per-order mini-batch sizes come from the concentration
lemmas, the bundle is sampled, and the same model step is taken.

The theory-side calculators mirror the convergence analysis:

* ``theoretical_residual_bound(t, ...)`` evaluates the objective-residual
  bound after ``t + 1`` iterations,
* ``iteration_budget`` solves the iteration count ``T`` from
  ``(T+p+1)^p = (p+1)^(p+2)/(p+1)! * (L_p + p sigma)/eps * D^(p+1)``,
* ``kappa_defaults`` produces the per-order tolerance choice
  ``kappa_i ~ L^((i-1)/p) i! / D^((p-i+1)/p)``. As printed, those values are
  inconsistent with the budget: the order-1 term alone contributes
  ``2 (p+1) eps`` to the bound, so the residual target can never be met. The
  calibrated variant (default) scales order ``i`` by ``1 / (2 (p+1)^(i+1))``,
  which makes every term of the bound at the budget at most ``eps / (p+1)``
  and the total at most ``eps``; ``calibrated=False`` returns the raw values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .models import DerivativeBundle, InexactnessBudget, ModelConfig
from .problems import LipschitzProfile
from .sampling import EXACT, BatchPlan, ConditionReport, plan_batches, sample_bundle, verify_condition
from .subsolvers import (
    InnerStats,
    SubsolverConfig,
    bregman_minimize_zeta,
    generic_model_minimize,
    solve_model_p2,
)

#: Step-norm floor below which a run is declared converged.
STEP_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# theory calculators
# ---------------------------------------------------------------------------

def kappa_defaults(lip_top: float, diameter: float, p: int,
                   calibrated: bool = True) -> tuple:
    """Per-order inexactness tolerances for an eps-accurate run.

    With ``calibrated=True`` (default) the raw choice is scaled by
    ``1/(2 (p+1)^(i+1))`` per order so that the residual bound evaluated at
    the iteration budget is at most ``eps``.
    """
    if lip_top <= 0 or diameter <= 0:
        raise ValueError("need positive Lipschitz constant and diameter")
    out = []
    for i in range(1, p + 1):
        raw = lip_top ** ((i - 1) / p) * math.factorial(i) / diameter ** ((p - i + 1) / p)
        if calibrated:
            raw /= 2.0 * (p + 1) ** (i + 1)
        out.append(raw)
    return tuple(out)


def iteration_budget(eps: float, lip_top: float, sigma: float, diameter: float,
                     p: int) -> int:
    """Iteration count sufficient for an eps-solution under the default kappas."""
    if p < 2:
        raise ValueError("tensor methods need p >= 2")
    if min(eps, lip_top, sigma, diameter) <= 0:
        raise ValueError("all budget inputs must be positive")
    rhs = (p + 1) ** (p + 2) / math.factorial(p + 1) * (lip_top + p * sigma) / eps \
        * diameter ** (p + 1)
    return max(0, math.ceil(rhs ** (1.0 / p) - (p + 1)))


def theoretical_residual_bound(t: float, kappas, eps: float, diameter: float,
                               lip_top: float, sigma: float, p: int) -> float:
    """Objective-residual bound after ``t + 1`` iterations.

    ``2 sum_i kappa_i eps^((p-i+1)/p) D^i / i! * (p+1)^i / (t+p+1)^(i-1)
    + (L_p + p sigma)/(p+1)! * (p+1)^(p+1) / (t+p+1)^p * D^(p+1)``.
    """
    if t < 0:
        raise ValueError("iteration index must be nonnegative")
    base = t + p + 1
    total = (lip_top + p * sigma) / math.factorial(p + 1) \
        * (p + 1) ** (p + 1) / base ** p * diameter ** (p + 1)
    for i in range(1, p + 1):
        total += 2.0 * kappas[i - 1] * eps ** ((p - i + 1) / p) * diameter ** i \
            / math.factorial(i) * (p + 1) ** i / base ** (i - 1)
    return total


def alpha_schedule(t: int, p: int) -> float:
    """The averaging weight ``(p+1)/(t+p+1)`` used in the rate analysis.

    Appears only in the residual bound; the method itself never uses it.
    """
    return (p + 1) / (t + p + 1)


# ---------------------------------------------------------------------------
# run configuration and traces
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything needed to drive one deterministic or stochastic run."""

    p: int = 3
    eps: float = 1e-6
    kappa: object = "exact"          # "exact" | "corollary" | explicit sequence
    sigma: float | None = None       # None -> auto (coupling for p=3, L_p for p=2)
    tau: float = 4.0
    diameter: float | None = None    # needed by the corollary kappa policy
    max_iter: int = 100
    seed: int = 0
    mode: str = "deterministic"      # "deterministic" | "stochastic"
    delta: float = 0.1
    grad_stop: float = 0.0           # optional gradient-norm stop (0 = off)
    step_stop: float = STEP_FLOOR
    inner: SubsolverConfig | None = None
    verify_each: bool = False        # test mode: per-iteration condition report

    def __post_init__(self):
        if self.p not in (2, 3):
            raise ValueError("shipped problems exercise p in {2, 3}")
        if self.eps <= 0:
            raise ValueError("target accuracy must be positive")
        if self.kappa == "corollary" and (self.diameter is None or self.diameter <= 0):
            raise ValueError("the corollary kappa policy needs a positive diameter")
        if self.mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    f: float
    step_norm: float
    inner_iters: int
    batch: tuple                      # (n1, n2, n3); zeros where unused
    grad_calls: int                   # cumulative sampled-derivative counts
    hess_calls: int
    third_calls: int
    condition: ConditionReport | None = None


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    status: str = "running"
    f_ref: float | None = None
    x_final: np.ndarray | None = None

    def gaps(self):
        if self.f_ref is None:
            raise ValueError("trace has no reference value")
        return np.array([r.f - self.f_ref for r in self.records])

    def iterations(self):
        return np.array([r.k for r in self.records])

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


def monotonicity_guard(trace: RunTrace, tol: float = 1e-12) -> list:
    """Iteration indices where the objective increased beyond ``tol``.

    Must be empty for exact deterministic runs; stochastic runs report
    violations without failing.
    """
    out = []
    for prev, cur in zip(trace.records, trace.records[1:]):
        if cur.f > prev.f + tol * max(1.0, abs(prev.f)):
            out.append(cur.k)
    return out


# ---------------------------------------------------------------------------
# bundles, policies, stepping
# ---------------------------------------------------------------------------

def exact_bundle(problem, x, p: int) -> DerivativeBundle:
    """Bundle of exact derivatives at ``x`` (third in operator form)."""
    x = np.asarray(x, dtype=float)
    return DerivativeBundle(
        x=x, value=problem.value(x), grad=problem.gradient(x),
        hess=problem.hessian(x), third=problem.third(x) if p >= 3 else None, p=p,
    )


def resolve_kappas(config: RunConfig, profile: LipschitzProfile) -> tuple:
    if config.kappa == "exact":
        return tuple(0.0 for _ in range(config.p))
    if config.kappa == "corollary":
        return kappa_defaults(profile.lip(config.p), config.diameter, config.p)
    kappas = tuple(float(k) for k in config.kappa)
    if len(kappas) != config.p:
        raise ValueError(f"expected {config.p} tolerances, got {len(kappas)}")
    return kappas


def resolve_model_config(config: RunConfig, profile: LipschitzProfile,
                         kappas: tuple) -> ModelConfig:
    """Model regularization: the tau coupling for p=3, sigma >= L_p otherwise.

    For the order-3 path the coupling overrides any user sigma, because the
    proved relative-smoothness constants of the inner solver require it.
    """
    lip_top = profile.lip(config.p)
    if config.p == 3:
        return ModelConfig.coupled(lip_top, kappas[2], tau=config.tau)
    sigma = config.sigma if config.sigma is not None else lip_top
    if sigma < lip_top:
        raise ValueError(f"sigma={sigma} below the certified L_p={lip_top}")
    return ModelConfig(p=config.p, sigma=sigma, tau=config.tau)


def model_step(bundle: DerivativeBundle, budget: InexactnessBudget,
               mconfig: ModelConfig, inner: SubsolverConfig | None):
    """Minimize the smooth model; returns ``(step, inner_iterations)``."""
    if bundle.p == 2:
        return solve_model_p2(bundle, budget, mconfig), 1
    step, stats = bregman_minimize_zeta(bundle, budget, mconfig, inner)
    return step, stats.iterations


# ---------------------------------------------------------------------------
# outer loops
# ---------------------------------------------------------------------------

def itm_run(problem, x0, config: RunConfig, oracle=None, f_ref=None,
            profile: LipschitzProfile | None = None) -> RunTrace:
    """Deterministic inexact tensor method.

    ``oracle(x) -> DerivativeBundle`` defaults to exact derivatives (counted
    as one full pass, ``m`` component calls per order). With exact bundles
    the run is monotone; injected bundles must satisfy the inexactness
    condition, which is the caller's responsibility.
    """
    x = np.asarray(x0, dtype=float).copy()
    profile = profile or default_profile(problem, x0)
    kappas = resolve_kappas(config, profile)
    budget = InexactnessBudget(config.eps, kappas)
    mconfig = resolve_model_config(config, profile, kappas)
    inner = config.inner or SubsolverConfig(tau=config.tau)

    exact_cost = (problem.m,) * 3
    get_bundle = oracle or (lambda pt: exact_bundle(problem, pt, config.p))

    trace = RunTrace(f_ref=f_ref)
    calls = [0, 0, 0]
    for k in range(config.max_iter + 1):
        fx = problem.value(x)
        trace.x_final = x
        if f_ref is not None and fx - f_ref <= config.eps:
            trace.records.append(IterationRecord(k, fx, 0.0, 0, (0, 0, 0), *calls))
            trace.status = "gap-target"
            return trace
        if k == config.max_iter:
            trace.records.append(IterationRecord(k, fx, 0.0, 0, (0, 0, 0), *calls))
            trace.status = "max-iter"
            return trace

        bundle = get_bundle(x)
        used = exact_cost[:2] + ((exact_cost[2],) if config.p >= 3 else (0,))
        calls = [c + u for c, u in zip(calls, used)]
        if config.grad_stop > 0 and float(np.linalg.norm(bundle.grad)) <= config.grad_stop:
            trace.records.append(IterationRecord(k, fx, 0.0, 0, (0, 0, 0), *calls))
            trace.status = "grad-floor"
            return trace

        step, inner_iters = model_step(bundle, budget, mconfig, inner)
        step_norm = float(np.linalg.norm(step))
        trace.records.append(IterationRecord(
            k, fx, step_norm, inner_iters, tuple(used), *calls))
        x = x + step
        trace.x_final = x
        if step_norm <= config.step_stop:
            trace.status = "step-floor"
            trace.records.append(IterationRecord(
                k + 1, problem.value(x), 0.0, 0, (0, 0, 0), *calls))
            return trace
    return trace


def stm_run(problem, x0, config: RunConfig, f_ref=None,
            profile: LipschitzProfile | None = None) -> RunTrace:
    """Stochastic tensor method with lemma-sized per-order mini-batches.

    Not monotone: the inexactness condition holds only with probability
    ``1 - delta`` per iteration, so objective increases are recorded by the
    guard rather than treated as failures.
    """
    if config.mode != "stochastic":
        config = replace(config, mode="stochastic")
    x = np.asarray(x0, dtype=float).copy()
    profile = profile or default_profile(problem, x0)
    kappas = resolve_kappas(config, profile)
    budget = InexactnessBudget(config.eps, kappas)
    mconfig = resolve_model_config(config, profile, kappas)
    inner = config.inner or SubsolverConfig(tau=config.tau)
    rng = np.random.default_rng(config.seed)

    trace = RunTrace(f_ref=f_ref)
    calls = [0, 0, 0]
    for k in range(config.max_iter + 1):
        fx = problem.value(x)
        trace.x_final = x
        if f_ref is not None and fx - f_ref <= config.eps:
            trace.records.append(IterationRecord(k, fx, 0.0, 0, (0, 0, 0), *calls))
            trace.status = "gap-target"
            return trace
        if k == config.max_iter:
            trace.records.append(IterationRecord(k, fx, 0.0, 0, (0, 0, 0), *calls))
            trace.status = "max-iter"
            return trace

        plan = plan_batches(budget, config.delta, problem, profile)
        bundle = sample_bundle(problem, x, plan, config.p, rng)
        sizes = [problem.m if s == EXACT else s for s in plan.sizes]
        if config.p == 2:
            sizes.append(0)
        calls = [c + s for c, s in zip(calls, sizes)]
        report = None
        if config.verify_each:
            report = verify_condition(problem, bundle, budget, rng=rng)

        step, inner_iters = model_step(bundle, budget, mconfig, inner)
        step_norm = float(np.linalg.norm(step))
        trace.records.append(IterationRecord(
            k, fx, step_norm, inner_iters, tuple(sizes), *calls, condition=report))
        x = x + step
        trace.x_final = x
        if step_norm <= config.step_stop:
            trace.status = "step-floor"
            trace.records.append(IterationRecord(
                k + 1, problem.value(x), 0.0, 0, (0, 0, 0), *calls))
            return trace
    return trace


# ---------------------------------------------------------------------------
# reference solutions and default constants
# ---------------------------------------------------------------------------

def default_profile(problem, x0, radius: float | None = None) -> LipschitzProfile:
    """Certify constants on a generous ball around the start point."""
    if radius is None:
        radius = 4.0 * max(1.0, float(np.linalg.norm(x0)))
    return problem.lipschitz_profile(np.asarray(x0, dtype=float), radius)


def reference_solution(problem, x0=None, grad_tol: float = 1e-12,
                       max_iter: int = 300):
    """High-accuracy minimizer via the exact order-2 method.

    With zero tolerances the model epsilon only scales the regularizer, so it
    is pinned at 1 to keep the quartic term benign; the run is then a
    regularized Newton method with superlinear local convergence. Returns
    ``(x_star, f_star)``.
    """
    x0 = np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=float)
    config = RunConfig(p=2, eps=1.0, kappa="exact", max_iter=max_iter,
                       grad_stop=grad_tol, step_stop=1e-15)
    trace = itm_run(problem, x0, config)
    return trace.x_final, problem.value(trace.x_final)
