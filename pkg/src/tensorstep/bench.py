"""Experiment harness: configs, trace CSVs, rate fitting, complexity sweeps.

Config files are JSON with a required ``version`` field; every run is
replayable from its config and seed, and deterministic runs rewrite
byte-identical CSVs. Traces use the fixed column set

    k, f_gap, step_norm, n1, n2, n3, inner_iters,
    grad_calls, hess_calls, third_calls

with gaps measured against a high-accuracy reference solution computed once
per problem.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .methods import (
    IterationRecord,
    RunConfig,
    RunTrace,
    itm_run,
    reference_solution,
    stm_run,
)
from .problems import (
    LogisticProblem,
    QuadraticProblem,
    make_logistic,
    make_online_logistic,
    make_quadratic,
    problem_from_dict,
)
from .sampling import plan_batches
from .models import InexactnessBudget
from .methods import default_profile, resolve_kappas

CONFIG_VERSION = 1

TRACE_COLUMNS = ("k", "f_gap", "step_norm", "n1", "n2", "n3", "inner_iters",
                 "grad_calls", "hess_calls", "third_calls")

VALID_METHODS = ("itm", "stm", "gd", "agd")


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple
    rms: float


def fit_rate(ks, gaps, p: int, drop_head: int = 2,
             f_ref: float | None = None) -> RateFit:
    """Least-squares slope of ``log(gap)`` against ``log(k + p + 1)``.

    Drops the first ``drop_head`` points and anything within 100 machine
    epsilons of the reference value (the numerical floor). Needs at least
    five usable points.
    """
    ks = np.asarray(ks, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if ks.shape != gaps.shape:
        raise ValueError("iteration and gap arrays must align")
    floor = 0.0
    if f_ref is not None:
        floor = 100.0 * np.finfo(float).eps * abs(f_ref)
    keep = (np.arange(ks.size) >= drop_head) & (gaps > max(floor, 0.0))
    if keep.sum() < 5:
        raise InsufficientDataError(
            f"only {int(keep.sum())} usable points above the floor, need 5")
    xs = np.log(ks[keep] + p + 1)
    ys = np.log(gaps[keep])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    window = (int(ks[keep][0]), int(ks[keep][-1]))
    return RateFit(float(slope), float(intercept), window,
                   float(np.sqrt(np.mean(resid ** 2))))


# ---------------------------------------------------------------------------
# first-order baselines (comparison curves only)
# ---------------------------------------------------------------------------

def gd_baseline(problem, x0, eps: float, max_iter: int = 10000,
                accelerated: bool = False, f_ref: float | None = None) -> RunTrace:
    """Plain or Nesterov-accelerated gradient descent with 1/L_1 steps."""
    profile = default_profile(problem, x0)
    lip = profile.lip(1)
    step = 1.0 / lip
    x = np.asarray(x0, dtype=float).copy()
    x_prev = x.copy()
    trace = RunTrace(f_ref=f_ref)
    calls = 0
    for k in range(max_iter + 1):
        fx = problem.value(x)
        trace.x_final = x
        if f_ref is not None and fx - f_ref <= eps:
            trace.records.append(IterationRecord(
                k, fx, 0.0, 0, (0, 0, 0), calls, 0, 0))
            trace.status = "gap-target"
            return trace
        if k == max_iter:
            trace.records.append(IterationRecord(
                k, fx, 0.0, 0, (0, 0, 0), calls, 0, 0))
            trace.status = "max-iter"
            return trace
        if accelerated and k > 0:
            y = x + (k - 1.0) / (k + 2.0) * (x - x_prev)
        else:
            y = x
        g = problem.gradient(y)
        calls += problem.m
        x_next = y - step * g
        trace.records.append(IterationRecord(
            k, fx, float(np.linalg.norm(x_next - x)), 0, (problem.m, 0, 0),
            calls, 0, 0))
        x_prev, x = x, x_next
        trace.x_final = x
    return trace


# ---------------------------------------------------------------------------
# config parsing and validation
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    problem: dict
    method: str = "itm"
    p: int = 3
    eps: tuple = (1e-6,)
    seeds: tuple = (0,)
    kappa: object = "exact"
    delta: float = 0.1
    tau: float = 4.0
    max_iter: int = 100
    diameter: float | None = None
    x0_offset: float = 1.0
    out: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        problems = []
        if not isinstance(data, dict):
            raise ConfigError(["config: top level must be an object"])
        version = data.get("version")
        if version != CONFIG_VERSION:
            problems.append(f"version: expected {CONFIG_VERSION}, got {version!r}")
        prob = data.get("problem")
        if not isinstance(prob, dict):
            problems.append("problem: required object is missing")
        method = data.get("method", "itm")
        if method not in VALID_METHODS:
            problems.append(f"method: must be one of {VALID_METHODS}, got {method!r}")
        p = data.get("p", 3)
        if p not in (2, 3):
            problems.append(f"p: must be 2 or 3, got {p!r}")
        eps = data.get("eps", [1e-6])
        if not isinstance(eps, (list, tuple)) or len(eps) == 0:
            problems.append("eps: must be a nonempty list")
        elif any(not isinstance(e, (int, float)) or e <= 0 for e in eps):
            problems.append("eps: entries must be positive numbers")
        seeds = data.get("seeds", [0])
        if not isinstance(seeds, (list, tuple)) or len(seeds) == 0:
            problems.append("seeds: must be a nonempty list")
        elif len(set(seeds)) != len(seeds):
            problems.append("seeds: entries must be distinct")
        kappa = data.get("kappa", "exact")
        if isinstance(kappa, str):
            if kappa not in ("exact", "corollary"):
                problems.append(f"kappa: unknown policy {kappa!r}")
        elif isinstance(kappa, (list, tuple)):
            if len(kappa) != p or any(k < 0 for k in kappa):
                problems.append("kappa: explicit array needs p nonnegative entries")
        else:
            problems.append("kappa: must be a policy name or an array")
        delta = data.get("delta", 0.1)
        if not 0 < delta <= 1:
            problems.append(f"delta: must be in (0, 1], got {delta!r}")
        max_iter = data.get("max_iter", 100)
        if not isinstance(max_iter, int) or max_iter < 1:
            problems.append(f"max_iter: must be a positive integer, got {max_iter!r}")
        diameter = data.get("diameter")
        if diameter is not None and diameter <= 0:
            problems.append("diameter: must be positive when given")
        if problems:
            raise ConfigError(problems)
        return cls(
            problem=prob, method=method, p=p,
            eps=tuple(float(e) for e in eps),
            seeds=tuple(int(s) for s in seeds),
            kappa=tuple(kappa) if isinstance(kappa, (list, tuple)) else kappa,
            delta=float(delta), tau=float(data.get("tau", 4.0)),
            max_iter=max_iter, diameter=diameter,
            x0_offset=float(data.get("x0_offset", 1.0)),
            out=data.get("out"),
        )


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]
        ) from exc
    return ExperimentConfig.from_dict(data)


def build_problem(spec: dict):
    """Instantiate a problem from its config block (inline or generator)."""
    kind = spec.get("kind")
    if kind == "quadratic" and "A" in spec:
        return problem_from_dict(spec)
    if kind == "logistic-finite-sum" and ("features" in spec or "generator" in spec):
        return problem_from_dict(spec)
    if kind == "quadratic-synthetic":
        return make_quadratic(n=spec["n"], seed=spec.get("seed", 0),
                              cond=spec.get("cond", 10.0))
    if kind == "logistic-synthetic":
        return make_logistic(n=spec["n"], m=spec["m"], seed=spec.get("seed", 0),
                             mu=spec.get("mu", 1e-3),
                             row_scale=spec.get("row_scale", 1.0),
                             flip_fraction=spec.get("flip_fraction", 0.1))
    if kind == "online-logistic":
        return make_online_logistic(n=spec["n"], pool=spec.get("pool", 8192),
                                    seed=spec.get("seed", 0),
                                    mu=spec.get("mu", 1e-3),
                                    clamp=spec.get("clamp", 1.0),
                                    flip_fraction=spec.get("flip_fraction", 0.1))
    raise ConfigError([f"problem.kind: cannot build {kind!r}"])


def start_point(problem, offset: float, seed: int) -> np.ndarray:
    """Deterministic start at distance ``offset`` from the origin."""
    rng = np.random.default_rng(seed + 10_000)
    direction = rng.standard_normal(problem.dim)
    direction /= np.linalg.norm(direction)
    return offset * direction


# ---------------------------------------------------------------------------
# trace IO
# ---------------------------------------------------------------------------

def trace_rows(trace: RunTrace):
    f_ref = trace.f_ref if trace.f_ref is not None else 0.0
    for rec in trace.records:
        n1, n2, n3 = rec.batch
        yield (rec.k, rec.f - f_ref, rec.step_norm, n1, n2, n3,
               rec.inner_iters, rec.grad_calls, rec.hess_calls, rec.third_calls)


def write_trace_csv(path, trace: RunTrace) -> None:
    """Atomic CSV write with a fixed float format (17 significant digits)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for row in trace_rows(trace):
                writer.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def load_trace_csv(path):
    """Columns of a trace CSV as a dict of arrays."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    out = {}
    for col in TRACE_COLUMNS:
        out[col] = np.array([float(r[col]) for r in rows])
    return out


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    traces: dict            # (eps, seed) -> RunTrace
    fits: dict              # (eps, seed) -> RateFit | None
    f_ref: float
    files: list = field(default_factory=list)


def run_cell(problem, config: ExperimentConfig, eps: float, seed: int,
             f_ref: float, x_ref) -> RunTrace:
    x0 = start_point(problem, config.x0_offset, seed)
    diameter = config.diameter or 2.0 * float(np.linalg.norm(x0 - x_ref))
    run_cfg = RunConfig(
        p=config.p, eps=eps, kappa=config.kappa, tau=config.tau,
        diameter=diameter, max_iter=config.max_iter, seed=seed,
        mode="stochastic" if config.method == "stm" else "deterministic",
        delta=config.delta,
    )
    if config.method == "itm":
        return itm_run(problem, x0, run_cfg, f_ref=f_ref)
    if config.method == "stm":
        return stm_run(problem, x0, run_cfg, f_ref=f_ref)
    return gd_baseline(problem, x0, eps, max_iter=config.max_iter,
                       accelerated=(config.method == "agd"), f_ref=f_ref)


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Run every (eps, seed) cell, write one CSV per cell plus a summary."""
    problem = build_problem(config.problem)
    x_ref, f_ref = reference_solution(problem)
    result = ExperimentResult(traces={}, fits={}, f_ref=f_ref)
    out_dir = out_dir or config.out
    summary_rows = []
    for eps in config.eps:
        for seed in config.seeds:
            trace = run_cell(problem, config, eps, seed, f_ref, x_ref)
            result.traces[(eps, seed)] = trace
            try:
                fit = fit_rate(trace.iterations(), trace.gaps(), config.p,
                               f_ref=f_ref)
            except InsufficientDataError:
                fit = None
            result.fits[(eps, seed)] = fit
            final = trace.final
            summary_rows.append({
                "eps": eps, "seed": seed, "status": trace.status,
                "final_gap": final.f - f_ref,
                "iterations": final.k,
                "grad_calls": final.grad_calls,
                "hess_calls": final.hess_calls,
                "third_calls": final.third_calls,
                "slope": None if fit is None else fit.slope,
            })
            if out_dir is not None:
                path = os.path.join(out_dir, f"trace_eps{eps:g}_seed{seed}.csv")
                write_trace_csv(path, trace)
                result.files.append(path)
    if out_dir is not None:
        spath = os.path.join(out_dir, "summary.json")
        os.makedirs(out_dir, exist_ok=True)
        with open(spath, "w") as fh:
            json.dump({"f_ref": f_ref, "cells": summary_rows}, fh, indent=2,
                      sort_keys=True)
        result.files.append(spath)
    return result


# ---------------------------------------------------------------------------
# complexity sweep
# ---------------------------------------------------------------------------

@dataclass
class ComplexitySummary:
    eps: tuple
    iterations: tuple
    grad_totals: tuple
    hess_totals: tuple
    third_totals: tuple
    q_iter: float
    q_grad: float
    q_hess: float
    clamped: bool

    @property
    def report_only(self):
        return self.clamped


def _fit_exponent(eps_values, totals) -> float:
    xs = np.log(1.0 / np.asarray(eps_values, dtype=float))
    ys = np.log(np.asarray(totals, dtype=float))
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def complexity_sweep(problem, config: ExperimentConfig, f_ref=None,
                     x_ref=None) -> ComplexitySummary:
    """Oracle-call totals of the stochastic method across the eps axis.

    Totals and outer-iteration counts are averaged over the configured seeds
    before the log-log exponent fit. Offline problems can clamp batch sizes
    at the full component count, which flattens the exponents: clamping is
    detected and flags the summary as report-only.
    """
    if config.method != "stm":
        raise ConfigError(["method: complexity_sweep requires method == 'stm'"])
    if x_ref is None or f_ref is None:
        x_ref, f_ref = reference_solution(problem)
    iterations, grads, hessians, thirds = [], [], [], []
    clamped = False
    for eps in config.eps:
        its, g, h, t3 = [], [], [], []
        for seed in config.seeds:
            trace = run_cell(problem, config, eps, seed, f_ref, x_ref)
            final = trace.final
            its.append(max(final.k, 1))
            g.append(max(final.grad_calls, 1))
            h.append(max(final.hess_calls, 1))
            t3.append(max(final.third_calls, 1))
            if problem.mode == "offline":
                for rec in trace.records:
                    if rec.step_norm > 0 and max(rec.batch) >= problem.m:
                        clamped = True
        iterations.append(float(np.mean(its)))
        grads.append(float(np.mean(g)))
        hessians.append(float(np.mean(h)))
        thirds.append(float(np.mean(t3)))
    return ComplexitySummary(
        eps=tuple(config.eps), iterations=tuple(iterations),
        grad_totals=tuple(grads), hess_totals=tuple(hessians),
        third_totals=tuple(thirds),
        q_iter=_fit_exponent(config.eps, iterations),
        q_grad=_fit_exponent(config.eps, grads),
        q_hess=_fit_exponent(config.eps, hessians),
        clamped=clamped,
    )


def plan_for_eps(problem, budget_eps: float, kappas, delta: float,
                 profile=None, x0=None):
    """The per-iteration batch plan at one accuracy (for scaling checks)."""
    if profile is None:
        x0 = np.zeros(problem.dim) if x0 is None else x0
        profile = default_profile(problem, x0)
    budget = InexactnessBudget(budget_eps, tuple(kappas))
    return plan_batches(budget, delta, problem, profile)
