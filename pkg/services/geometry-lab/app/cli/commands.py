"""
Command dispatch: one :class:`RunConfig` in, one :class:`ExperimentReport` out.

``stats``, ``small-ball``, ``moments`` and ``sections`` wrap the estimators
directly; ``verify <name>`` forwards to the registered experiment.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

from common.errors import InvalidParameterError, UsageError
from common.runcontext import run_context
from contracts.records import DataTable, EstimateCI, ExperimentReport, Flag, Method, SeedSpec

from app.cli.parser import RunConfig
from app.core.config import CI_SIGMAS
from app.services import experiments as exp
from app.services.bodies import ConvexBody, lipschitz_constant, parse_body_spec
from app.services.estimators import (
    body_stats,
    critical_dimension,
    estimate_M,
    geometric_mean_norm,
    negative_moment,
    positive_moment,
    small_ball_curve,
)
from app.services.sections import diameters_of, lk_average, sample_sections
from app.services.sphere_opt import OptimizerConfig

logger = logging.getLogger(__name__)

DEFAULT_EPS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_NEGATIVE_ORDERS = (0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_POSITIVE_ORDERS = (1.0, 2.0, 4.0, 8.0)
DEFAULT_SECTION_DIM = 4

STATS_COLUMNS = ("body", "n", "quantity", "value", "stderr", "samples", "method", "seed_path")
SECTIONS_COLUMNS = ("subspace_idx", "diameter", "inradius", "vrad_k", "flags")


def _body(config: RunConfig) -> ConvexBody:
    if config.body is None:
        raise UsageError("a body is required", flag="--body")
    return parse_body_spec(config.body)


def _ints(values: Sequence[float] | None, flag: str) -> tuple[int, ...] | None:
    if values is None:
        return None
    out = []
    for v in values:
        if not float(v).is_integer() or v < 1:
            raise UsageError(f"expected positive integers, got {v:g}", flag=flag)
        out.append(int(v))
    return tuple(out)


def _first(values: tuple[int, ...] | None) -> int | None:
    return values[0] if values else None


def _report(name: str, body: ConvexBody, config: RunConfig, seed: SeedSpec, **parameters: Any) -> ExperimentReport:
    return ExperimentReport(
        name=name,
        body=body.spec,
        parameters={"samples": config.samples, **parameters},
        seed=seed,
        ci_sigmas=CI_SIGMAS,
    )


# ── Commands ──────────────────────────────────────────────────────────


def run_stats(config: RunConfig, seed: SeedSpec) -> ExperimentReport:
    body = _body(config)
    stats = body_stats(body, config.samples, seed, opt_config=OptimizerConfig(restarts=config.restarts))
    assert stats.b is not None and stats.k is not None
    d = critical_dimension(body, config.u, config.samples, seed, M=stats.M)
    b = EstimateCI.exact(stats.b.value, seed=seed)
    k = (
        EstimateCI.exact(stats.k, seed=seed)
        if stats.M.is_exact
        else EstimateCI(
            value=stats.k,
            stderr=2.0 * stats.k * stats.M.stderr / stats.M.value,
            samples=stats.M.samples,
            method=Method.MONTE_CARLO,
            seed=seed,
        )
    )

    report = _report(
        "stats",
        body,
        config,
        seed,
        u=config.u,
        d_route=d.estimator_route.value,
        b_exact=stats.b.exact,
        k_heuristic=stats.k_heuristic,
    )
    report.estimates.update({"M": stats.M, "Med": stats.Med, "b": b, "k": k, "d": d.d})
    report.verdicts["median_at_most_twice_mean"] = stats.Med.value <= 2.0 * stats.M.value
    if stats.b.exact:
        report.verdicts["k_at_most_n"] = stats.k <= body.n * (1.0 + 1e-12)
    if d.surrogate_centre is not None:
        report.notes.append(f"surrogate centre −log γ(t√nK) = {d.surrogate_centre:.6g}")

    table = DataTable(columns=STATS_COLUMNS)
    for quantity, est in report.estimates.items():
        method = "Derived" if quantity == "k" else est.method.value
        seed_path = est.seed.path_str if est.seed else ""
        table.add(body.spec, body.n, quantity, est.value, est.stderr, est.samples, method, seed_path)
    report.tables["stats"] = table
    return report


def run_small_ball(config: RunConfig, seed: SeedSpec) -> ExperimentReport:
    body = _body(config)
    M = estimate_M(body, config.samples, seed)
    curve = small_ball_curve(body, M, config.eps or DEFAULT_EPS, config.samples, seed)
    report = _report("small-ball", body, config, seed, eps=list(curve.eps_grid))
    report.estimates["M"] = M
    table = DataTable(columns=("eps", "threshold", "hits", "prob", "stderr", "rule_of_three"))
    for e, p, h in zip(curve.eps_grid, curve.probs, curve.hits):
        report.estimates[f"small_ball[eps={e:g}]"] = p
        table.add(e, e * M.value, h, p.value, p.stderr, p.has(Flag.RULE_OF_THREE))
    report.verdicts["hits_non_decreasing_in_eps"] = all(b >= a for a, b in zip(curve.hits, curve.hits[1:]))
    probs = [p.value for p in curve.probs]
    report.verdicts["probs_non_decreasing_in_eps"] = all(b >= a for a, b in zip(probs, probs[1:]))
    report.fitted_constants["slope"] = curve.fitted_exponent
    report.tables["small_ball"] = table
    return report


def run_moments(config: RunConfig, seed: SeedSpec) -> ExperimentReport:
    body = _body(config)
    negative_orders = sorted(config.l or DEFAULT_NEGATIVE_ORDERS)
    positive_orders = sorted(config.k or DEFAULT_POSITIVE_ORDERS)
    M = estimate_M(body, config.samples, seed)
    d = critical_dimension(body, 2.0, config.samples, seed, M=M)
    geo = geometric_mean_norm(body, config.samples, seed)
    report = _report("moments", body, config, seed, negative_orders=negative_orders, positive_orders=positive_orders)
    report.estimates.update({"M": M, "d": d.d, "geometric_mean": geo})

    table = DataTable(columns=("order", "moment", "stderr", "ratio_to_M", "heavy_tail"))
    negatives = []
    for l in negative_orders:
        est = negative_moment(body, l, config.samples, seed, d_hat=d.d.value)
        negatives.append(est.value)
        report.estimates[f"negative_moment[l={l:g}]"] = est
        table.add(-l, est.value, est.stderr, est.value / M.value, est.has(Flag.HEAVY_TAIL))
    table.add(0.0, geo.value, geo.stderr, geo.value / M.value, False)
    positives = []
    for q in positive_orders:
        est = positive_moment(body, q, config.samples, seed)
        positives.append(est.value)
        report.estimates[f"positive_moment[k={q:g}]"] = est
        table.add(q, est.value, est.stderr, est.value / M.value, False)

    tol = 1.0 + 1e-12
    report.verdicts["negative_non_increasing_in_l"] = all(b <= a * tol for a, b in zip(negatives, negatives[1:]))
    report.verdicts["positive_non_decreasing_in_k"] = all(a <= b * tol for a, b in zip(positives, positives[1:]))
    report.verdicts["power_mean_chain"] = all(v <= geo.value * tol for v in negatives) and all(
        geo.value <= v * tol for v in positives
    )
    if 1.0 in positive_orders:
        report.verdicts["first_moment_equals_M"] = report.estimates["positive_moment[k=1]"].value == M.value
    report.tables["moments"] = table
    return report


def run_sections(config: RunConfig, seed: SeedSpec) -> ExperimentReport:
    body = _body(config)
    l = _first(_ints(config.l, "--l")) or DEFAULT_SECTION_DIM
    vrad_order = _first(_ints(config.k, "--k")) or l
    opt = OptimizerConfig(restarts=config.restarts)
    sections = sample_sections(
        body, l, config.subspaces, opt, seed, vrad_order=vrad_order, samples=config.inner_samples
    )

    report = _report(
        "sections",
        body,
        config,
        seed,
        l=l,
        vrad_order=vrad_order,
        subspaces=config.subspaces,
        restarts=config.restarts,
        inner_samples=config.inner_samples,
    )
    table = DataTable(columns=SECTIONS_COLUMNS)
    for s in sections:
        vrad = s.volume_radius.value if s.volume_radius else None
        table.add(s.index, s.diameter.value, s.inradius.value, vrad, ";".join(f.value for f in s.flags))
    report.tables["sections"] = table

    flags = tuple(dict.fromkeys(f for s in sections for f in s.flags))
    report.estimates[f"diameter_L{l}_average"] = lk_average(diameters_of(sections), l, seed).with_flags(*flags)
    report.verdicts["diameter_at_least_twice_inradius"] = all(
        s.diameter.value >= 2.0 * s.inradius.value * (1.0 - 1e-12) for s in sections
    )
    b = lipschitz_constant(body)
    if b is not None:
        report.verdicts["diameter_at_least_2_over_b"] = all(
            s.diameter.value >= (2.0 / b.value) * (1.0 - 1e-12) for s in sections
        )
    unstable = sum(1 for s in sections if s.restart_gap > 1e-6)
    if unstable:
        report.notes.append(f"{unstable} of {len(sections)} sections have a best/second-best restart gap above 1e-6")
    if not body.is_cube and not body.is_euclidean and l > 1:
        report.notes.append("inradii come from the multistart maximiser and are upper bounds")
    return report


def run_verify(config: RunConfig, seed: SeedSpec) -> ExperimentReport:
    name = config.experiment
    assert name is not None
    opt = OptimizerConfig(restarts=config.restarts)
    body = parse_body_spec(config.body) if config.body else None
    k_ints = _ints(config.k, "--k")
    l_ints = _ints(config.l, "--l")

    calls: dict[str, tuple[tuple[Any, ...], dict[str, Any]]] = {
        "transfer": ((), {"n_list": config.n, "samples": config.samples}),
        "vrad": ((body,), {"k_list": k_ints, "samples": config.samples, "num_subspaces": config.subspaces}),
        "neg-khinchine": ((body,), {"l_grid": config.l, "samples": config.samples, "u": config.u}),
        "pos-khinchine": ((body,), {"k_grid": config.k, "samples": config.samples, "opt_config": opt}),
        "me-stability": (
            (body,),
            {
                "k_list": k_ints,
                "num_subspaces": config.subspaces,
                "inner_samples": config.inner_samples,
                "samples": config.samples,
            },
        ),
        "dim-lift": (
            ([parse_body_spec(spec) for spec in config.bodies],),
            {
                "k": _first(k_ints),
                "num_subspaces": config.subspaces,
                "samples": config.samples,
                "opt_config": opt,
                "u": config.u,
            },
        ),
        "upper-inclusion": (
            (body,),
            {
                "l": _first(l_ints),
                "C_grid": config.C,
                "num_subspaces": config.subspaces,
                "samples": config.samples,
                "opt_config": opt,
                "u": config.u,
            },
        ),
        "lower-inclusion": (
            (body,),
            {
                "l_list": l_ints,
                "c_grid": config.c,
                "num_subspaces": config.subspaces,
                "samples": config.samples,
                "opt_config": opt,
            },
        ),
        "cube-gap": ((), {"n_list": config.n, "samples": config.samples, "u": config.u}),
        "small-ball-fit": (
            (body,),
            {"eps_grid": config.eps, "samples": config.samples, "u": config.u, "opt_config": opt},
        ),
        "concentration": ((body,), {"t_grid": config.t, "samples": config.samples, "opt_config": opt}),
    }
    args, kwargs = calls[name]
    kwargs = {key: value for key, value in kwargs.items() if value is not None}
    return exp.EXPERIMENTS[name](*args, seed=seed, **kwargs)


_COMMANDS = {
    "stats": run_stats,
    "small-ball": run_small_ball,
    "moments": run_moments,
    "sections": run_sections,
}


def run_command(config: RunConfig) -> ExperimentReport:
    seed = SeedSpec(root=config.seed)
    try:
        if config.command == "verify":
            return run_verify(config, seed)
        with run_context(config.command, seed.path_str):
            report = _COMMANDS[config.command](config, seed)
    except InvalidParameterError as exc:
        # grids the experiments reject (k > n, empty body list, ...)
        raise UsageError(exc.detail) from exc
    logger.info("%s finished for %s", config.command, report.body)
    return report
