"""Experiment runners behind the command line.

Each runner takes a validated :class:`ExperimentConfig`, writes its data
files into `out` and returns a :class:`Manifest` listing them together with
the key scalar results.  All randomness is drawn from seeds derived from the
master seed and a fixed tag path, so output does not depend on `threads`.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
import math
from pathlib import Path

import numpy as np

from .asymptotics import RateFunction, argmax_k_probe, hop_scale
from .config import ExperimentConfig
from .dense import SubareaSpec, ma_rate_field, twohop_bounds, twohop_condition
from .game import (
    abstract_game,
    best_response_dynamics,
    equilibria_and_optima,
    example_nonselfish,
    relay_insertion_monotonicity_check,
)
from .geometry import UserConfiguration, sample_uniform_ball
from .gibbs import ENUMERATION_BUDGET, GibbsModel, anneal, run_chain, total_variation
from .limit import LimitKernel
from .manifest import Manifest, write_csv, write_json
from .seeds import derive_seed

__all__ = ["run", "RUNNERS"]


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _manifest(cfg: ExperimentConfig) -> Manifest:
    # the output location is not part of the result
    conf = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    return Manifest(cfg.experiment, cfg.seed, conf)


def _emit(man: Manifest, out: Path, name: str, header, rows) -> None:
    man.add_file(write_csv(out / name, header, rows), out)


def _users(cfg: ExperimentConfig, tag: str, index: int = 0) -> UserConfiguration:
    p = cfg.params
    geom = cfg.geometry()
    s = derive_seed(cfg.seed, tag, "users", index)
    pts = sample_uniform_ball(np.random.default_rng(s), p["n_users"], geom.d, geom.radius)
    return UserConfiguration(p.get("lam", 1.0), pts), s


# -- limit profiles -----------------------------------------------------------------


def run_limit_profiles(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    geom, model = cfg.geometry(), cfg.pathloss()
    kernel = LimitKernel(geom, model, seed=derive_seed(cfg.seed, "limit-profiles"))
    radii = np.linspace(0.0, geom.radius, p.get("n_radii", 101))
    gammas = [float(g) for g in p.get("gammas", [0, 0.001, 0.01, 0.1, 0.4, 0.7, 1])]
    man.seeds["kernel"] = kernel.seed

    profiles = _pmap(lambda g: kernel.with_gamma(g).nu1_density_profile(radii), gammas, cfg.threads)
    for g, prof in zip(gammas, profiles):
        _emit(man, out, f"nu1_gamma_{g:g}.csv", ["radius", "nu1_density"], prof)
    _emit(man, out, "nu1_gamma_inf.csv", ["radius", "nu1_density"], kernel.nu1_limit_profile(radii))

    n2 = p.get("n_nu2", 41)
    if geom.kmax >= 2 and n2 > 0:
        grid = np.linspace(-geom.radius, geom.radius, n2)
        pts = np.zeros((n2, geom.d))
        pts[:, 0] = grid
        rows = []
        mu = geom.mu_density(pts)
        for a, x0 in enumerate(pts):
            T = kernel.typical_density(x0)
            ld = T.log_density(pts[:, None, :])
            for b in range(n2):
                rows.append((grid[a], grid[b], math.log(mu[a]) + math.log(mu[b]) + ld[b]))
        _emit(man, out, "nu2_logdensity.csv", ["x0", "x1", "log_nu2_density"], rows)

    at0 = dict(zip(gammas, [prof[0][1] for prof in profiles]))
    for g in gammas:
        man.add(f"nu1_density_at_o[gamma={g:g}]", at0[g], "report")
    if geom.kmax >= 2:
        tr = kernel.transition_radius()
        man.add("transition_radius", tr.radius if tr.found else None, "reference", tolerance=1e-9, flagged=not tr.found)
    return man


# -- relay map ------------------------------------------------------------------------


def run_relay_map(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    geom, model = cfg.geometry(), cfg.pathloss()
    kernel = LimitKernel(geom, model)
    s = derive_seed(cfg.seed, "relay-map", "points")
    man.seeds["points"] = s
    X = sample_uniform_ball(np.random.default_rng(s), p.get("n_points", 100), geom.d, geom.radius)
    res = _pmap(kernel.optimal_relay, list(X), cfg.threads)
    rows, fracs = [], []
    for x0, r in zip(X, res):
        rel = np.atleast_1d(r.relay) if r.relay is not None else np.full(geom.d, np.nan)
        fr = r.fraction if r.fraction is not None else np.nan
        rows.append((*x0.tolist(), *rel.tolist(), fr, r.value))
        fracs.append(fr)
    coords = ["x0", "y0"][: geom.d]
    _emit(man, out, "relay_map.csv", [*coords, *(c.replace("0", "1") for c in coords), "fraction", "two_hop_energy"], rows)
    fracs = np.asarray(fracs, float)
    tr = kernel.transition_radius()
    man.add("fraction_min", float(np.nanmin(fracs)), "reference")
    man.add("fraction_max", float(np.nanmax(fracs)), "reference")
    man.add("transition_radius", tr.radius if tr.found else None, "reference", tolerance=1e-9, flagged=not tr.found)
    if tr.found:
        beyond = int(np.sum(np.linalg.norm(X, axis=1) > tr.radius))
        man.add("points_beyond_transition", beyond, "report")
    return man


# -- finite Gibbs model ---------------------------------------------------------------


def run_mcmc(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    geom, model = cfg.geometry(), cfg.pathloss()
    users, us = _users(cfg, "mcmc")
    gm = GibbsModel(users, geom, model)
    man.seeds["users"] = us
    cs = derive_seed(cfg.seed, "mcmc", "chain")
    man.seeds["chain"] = cs
    enumerable = gm.n_states() <= min(ENUMERATION_BUDGET, 10**6)
    state = gm.initial_state(cs, kernel=p.get("kernel", "metropolis"))
    steps = p.get("steps", 200000)
    trace, hist = run_chain(state, steps, thin=p.get("thin", 100), burn_in=p.get("burn_in", 0), collect_histogram=enumerable)
    trace.to_csv(out / "trace.csv")
    man.add_file(out / "trace.csv", out)
    hh = trace.hop_histogram(gm.space)
    _emit(man, out, "hop_histogram.csv", ["hops", "count"], [(k + 1, int(c)) for k, c in enumerate(hh)])
    mh = trace.m_histogram(gm.counts)
    _emit(man, out, "relay_load_histogram.csv", ["relay_load", "count"], [(k, int(c)) for k, c in enumerate(mh)])
    write_json(out / "snapshots.json", {"steps": trace.steps, "configs": [list(c) for c in trace.states]})
    man.add_file(out / "snapshots.json", out)
    man.add("acceptance_rate", float(np.mean(trace.accepted)) if len(trace) else 0.0, "report")
    if enumerable:
        ex = gm.enumerate_exact()
        emp = hist / hist.sum()
        tv = total_variation(emp, ex.probs)
        _emit(man, out, "distribution.csv", ["state", "exact", "empirical"], [(i, ex.probs[i], emp[i]) for i in range(len(ex.probs))])
        man.add("tv_distance", tv, "oracle", tolerance=0.02, flagged=tv >= 0.02)
    else:
        man.flag("state space too large for exact enumeration; no TV distance")
    return man


def run_anneal(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    geom, model = cfg.geometry(), cfg.pathloss()
    users, us = _users(cfg, "anneal")
    gm = GibbsModel(users, geom, model)
    man.seeds["users"] = us
    ex = gm.enumerate_exact()
    minimizers = {tuple(m) for m in ex.minimizers()}
    E_min = gm.total_energy(next(iter(minimizers)))
    runs = p.get("runs", 20)
    seeds = [derive_seed(cfg.seed, "anneal", "run", i) for i in range(runs)]
    man.seeds["runs"] = seeds
    res = _pmap(lambda s: anneal(gm, p.get("t_max", 5000), c0=p.get("c0"), seed=s), seeds, cfg.threads)
    rows, hits = [], 0
    for i, (best, E) in enumerate(res):
        ok = tuple(best) in minimizers
        hits += ok
        rows.append((i, E, E_min, int(ok), " ".join(map(str, best))))
    _emit(man, out, "anneal_runs.csv", ["run", "best_energy", "exhaustive_min", "success", "config"], rows)
    man.add("exhaustive_min_energy", E_min, "oracle")
    man.add("success_count", hits, "oracle", tolerance=f">= {math.ceil(0.95 * runs)} of {runs}")
    return man


# -- asymptotics ------------------------------------------------------------------------


def run_asymptotics(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    model = cfg.pathloss()
    rf = RateFunction.from_model(model, p["dimension"], p["gamma"])
    man.add("rate_t_star", rf.t_star, "oracle")
    man.add("rate_min_value", rf.min_value, "oracle")
    h = p.get("h", 0.02)

    def probe(r0):
        kern = LimitKernel(cfg.probe_geometry(r0), model)
        k_pred = hop_scale(model, r0)
        kmax = int(max(8, math.ceil(2.5 * k_pred / rf.t_star) + 5))
        return argmax_k_probe(kern, r0, range(1, kmax + 1), method="transfer", h=h), k_pred

    r0s = [float(r) for r in p["r0_list"]]
    probes = _pmap(probe, r0s, cfg.threads)
    summary = []
    for r0, (pr, k_pred) in zip(r0s, probes):
        _emit(man, out, f"log_ak_r0_{r0:g}.csv", ["k", "log_a_k", "stderr"], pr.rows())
        ratio = pr.k_star / (rf.t_star * k_pred)
        summary.append((r0, pr.k_star, k_pred / rf.t_star, ratio, int(pr.resolved)))
        man.add(f"k_star[r0={r0:g}]", pr.k_star, "report", flagged=not pr.resolved)
        man.add(f"k_star_ratio[r0={r0:g}]", ratio, "oracle", tolerance=[0.7, 1.3])
    _emit(man, out, "argmax_k.csv", ["r0", "k_star", "k_predicted", "ratio", "resolved"], summary)
    return man


# -- dense subarea ----------------------------------------------------------------------


def run_dense_subarea(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    spec = SubareaSpec(cfg.geometry(), cfg.pathloss())
    v = twohop_condition(spec, n_grid=p.get("n_grid", 64))
    pp, lo, hi = twohop_bounds(spec)
    rate = ma_rate_field(spec, kmax=p.get("rate_kmax", 2), n_grid=p.get("n_grid", 64))
    write_json(out / "twohop_verdict.json", {**v.to_dict(), "bounds": {"p": pp, "lower": lo, "upper": hi}})
    man.add_file(out / "twohop_verdict.json", out)
    x = ["x0", "y0"][: spec.d]
    _emit(man, out, "rate_field.csv", [*x, "rate"], rate.rows())
    man.add("twohop_holds", v.holds, "oracle", flagged=v.indeterminate)
    man.add("twohop_margin", v.margin, "oracle")
    man.add("rate_field_sup", rate.sup, "oracle")
    if not v.forms_agree:
        man.flag("two forms of the two-hop condition disagree")
    return man


# -- game ---------------------------------------------------------------------------------


def run_game(cfg: ExperimentConfig, out: Path) -> Manifest:
    p = cfg.params
    man = _manifest(cfg)
    if "game_file" in p:
        game = abstract_game(p["game_file"])
    else:
        game = example_nonselfish(Fraction(str(p.get("q", "1"))), Fraction(str(p["beta"])), Fraction(str(p.get("gamma", 1))))
    rep = equilibria_and_optima(game)
    brd = best_response_dynamics(game)
    mono = relay_insertion_monotonicity_check(game, seed=derive_seed(cfg.seed, "game", "insertion"))
    write_json(
        out / "game_report.json",
        {**rep.to_dict(), "best_response": {"profile": list(brd.profile), "potentials": [str(x) for x in brd.potentials], "nash": brd.nash}, "insertion_check": mono},
    )
    man.add_file(out / "game_report.json", out)
    man.add("n_nash", len(rep.nash), "reference")
    man.add("optimum_cost", rep.optimum_cost, "reference")
    man.add("non_selfish", rep.non_selfish, "reference")
    man.add("insertion_counterexamples", len(mono["counterexamples"]), "definitional")
    return man


RUNNERS = {
    "limit-profiles": run_limit_profiles,
    "relay-map": run_relay_map,
    "mcmc": run_mcmc,
    "anneal": run_anneal,
    "asymptotics": run_asymptotics,
    "dense-subarea": run_dense_subarea,
    "game": run_game,
}


def run(cfg: ExperimentConfig, out=None, created=None) -> Manifest:
    """Run the experiment, write ``manifest.json`` into the output directory."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    man = RUNNERS[cfg.experiment](cfg, out)
    man.write(out / "manifest.json", created)
    return man
