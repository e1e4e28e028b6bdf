"""Seeded experiment runners behind the CLI.

Every trial derives its randomness from ``SeedSequence(seed, spawn_key=...)``
with a key built from its grid position, so results do not depend on the
number of worker threads or on scheduling order.
"""
from __future__ import annotations

import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..model import GenerationError, generate_network, near_orthonormality
from ..oracle import PullbackOracle, QueryOracle, gradient_fd, hessian_fd_cost, hessians_fd, sample_ball, sample_sphere
from ..rank1 import collect_directions
from ..reconstruct import reconstruct, reconstruction_cost
from ..subspace import RankDeficiencyError, recover_matrix_space, recover_vector_space, reduce_dimension
from ..whitening import InfeasibleError, bootstrap_whitening, synthetic_bootstrap
from .config import ExperimentConfig
from .gd import gradient_descent, haar_init, match_directions, network_mse

__all__ = [
    "git_describe",
    "parallel_map",
    "exact_hessian_sampler",
    "identify_trial",
    "run_identify",
    "run_phase_transition",
    "run_whitening_curve",
    "run_gd_baseline",
    "RUNNERS",
]

# failures that are part of the experiment outcome rather than bugs
TRIAL_ERRORS = (RankDeficiencyError, InfeasibleError, GenerationError, np.linalg.LinAlgError)

_NET, _ALG = 0, 1


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def parallel_map(fn, tasks, threads: int = 1) -> list:
    """Ordered map; results are placed by task index whatever the completion order."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


def _clean(x):
    """Make a value JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _root(oracle):
    while isinstance(oracle, PullbackOracle):
        oracle = oracle.parent
    return oracle


def _composed_map(oracle) -> np.ndarray:
    M = None
    while isinstance(oracle, PullbackOracle):
        M = oracle.M if M is None else oracle.M @ M
        oracle = oracle.parent
    return np.eye(oracle.dim) if M is None else M


def exact_hessian_sampler(net):
    """Analytic Hessians of ``x -> f(M x)`` for any pullback chain over ``net``; no queries."""

    def sampler(oracle, X):
        M = _composed_map(oracle)
        H = net.hess(np.atleast_2d(X) @ M.T)
        return np.einsum("ji,njk,kl->nil", M, H, M)

    return sampler


class _Stopwatch:
    def __init__(self):
        self.ms = {}

    def __call__(self, name):
        watch = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                watch.ms[name] = watch.ms.get(name, 0.0) + 1e3 * (time.perf_counter() - self.t)

        return _Ctx()


def identify_trial(cfg: ExperimentConfig, eps: float, m_X: int, net_key, alg_key, do_reconstruct: bool):
    """One end-to-end identification run.

    Returns ``(record, timings_ms, extras)``; ``extras`` holds arrays that are
    not serialized (network, matched estimates).
    """
    m, d = cfg.m, cfg.d
    net_seed = _seed_int(np.random.SeedSequence(cfg.seed, spawn_key=net_key))
    streams = np.random.SeedSequence(cfg.seed, spawn_key=alg_key).spawn(6)
    noise_ss, grad_ss, hess_ss, rank1_ss, white_ss, test_ss = streams
    watch = _Stopwatch()
    rec = {
        "eps": eps,
        "m_X": m_X,
        "network_seed": net_seed,
        "s_value": None,
        "n_found": 0,
        "success": False,
        "n_distinct": 0,
        "direction_errors": None,
        "matched_errors": None,
        "frobenius_error": None,
        "queries": {},
        "reconstruction": None,
        "whitening": None,
        "error": None,
    }
    extras = {}
    queries = rec["queries"]
    try:
        net = generate_network(m, d, eps, seed=net_seed)
    except (GenerationError, ValueError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return _clean(rec), watch.ms, extras
    extras["network"] = net
    A = net.weights
    rec["s_value"] = near_orthonormality(A).s_value
    oracle = QueryOracle(net.eval, d, cfg.noise_bound, seed=noise_ss)
    sampler = exact_hessian_sampler(net) if cfg.exact_hessians else (lambda o, X: hessians_fd(o, X, cfg.h))
    try:
        # dimension reduction
        if d > m:
            with watch("sampling"):
                rng = np.random.default_rng(grad_ss)
                X = sample_sphere(rng, m_X, d)
                if cfg.exact_hessians:
                    G = net.grad(X)
                else:
                    G = np.array([gradient_fd(oracle, x, cfg.h) for x in X])
            queries["gradients"] = oracle.query_count
            with watch("pca"):
                vspace = recover_vector_space(G.T, m)
            B = vspace.basis
            work = reduce_dimension(oracle, vspace)
        else:
            B = np.eye(d)
            work = PullbackOracle(oracle, B)
            queries["gradients"] = 0
        extras["basis"] = B
        before = oracle.query_count
        if cfg.whitening:
            with watch("whitening"):
                truth_r = B.T @ A
                truth_r = truth_r / np.linalg.norm(truth_r, axis=0)
                boot = bootstrap_whitening(
                    work, m, cfg.k_max, m_X, cfg.h, seed=white_ss, truth=truth_r, hessians=sampler
                )
            space = boot.space
            rec["whitening"] = boot.history
            pull = boot.pull_back
            queries["hessians"] = oracle.query_count - before
        else:
            with watch("sampling"):
                X = sample_sphere(np.random.default_rng(hess_ss), m_X, m)
                Hs = sampler(work, X)
            queries["hessians"] = oracle.query_count - before
            with watch("pca"):
                space = recover_matrix_space(Hs, m)
            pull = None
        queries["hessians_formula"] = 0 if cfg.exact_hessians else m_X * hessian_fd_cost(m)
        queries["hessians_formula_alt"] = 0 if cfg.exact_hessians else m_X * (1 + (m * m + m) // 2)
        with watch("rank1"):
            ds = collect_directions(
                space, cfg.n_rep, cfg.gamma, cfg.steps, cfg.dedup_delta, seed=rank1_ss, clustering=cfg.clustering
            )
        raw_r, reps_r = ds.raw, ds.vectors
        if pull is not None:
            raw_r, reps_r = pull(raw_r), pull(reps_r)
        raw, reps = raw_r @ B.T, reps_r @ B.T
        raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        reps = reps / np.linalg.norm(reps, axis=1, keepdims=True)
        # distance of each true direction to the nearest extracted direction (up to sign)
        dist = np.minimum(
            np.linalg.norm(raw[:, :, None] - A[None, :, :], axis=1),
            np.linalg.norm(raw[:, :, None] + A[None, :, :], axis=1),
        ).min(axis=0)
        rec["direction_errors"] = dist
        rec["n_found"] = int(np.sum(dist <= cfg.dedup_delta))
        rec["success"] = rec["n_found"] == m
        rec["n_distinct"] = int(reps.shape[0])
        matched, errs, _ = match_directions(reps.T, A)
        rec["matched_errors"] = errs
        if reps.shape[0] >= m:
            rec["frobenius_error"] = float(np.linalg.norm(matched - A))
            extras["matched"] = matched
        if do_reconstruct and reps_r.shape[0] >= m:
            before = oracle.query_count
            with watch("reconstruction"):
                fhat = reconstruct(work, reps_r[:m].T, cfg.n_grid, extrapolate=True)
            queries["reconstruction"] = oracle.query_count - before
            queries["reconstruction_formula"] = reconstruction_cost(m, cfg.n_grid)
            with watch("testing"):
                Xt = sample_ball(np.random.default_rng(test_ss), cfg.n_test, d)
                Y = Xt @ B
                err = net.eval(Xt) - fhat(Y)
            rec["reconstruction"] = {
                "sup": float(np.abs(err).max()),
                "mse": float(np.mean(err**2)),
                "extrapolated_fraction": fhat.extrapolated_fraction(Y),
            }
            extras["approximant"] = fhat
    except TRIAL_ERRORS as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    queries["total"] = oracle.query_count
    extras["oracle"] = oracle
    return _clean(rec), watch.ms, extras


def _report(cfg: ExperimentConfig, per_trial, aggregate, timings) -> dict:
    return {
        "config": cfg.to_dict(),
        "git_describe": git_describe(),
        "per_trial": per_trial,
        "aggregate": _clean(aggregate),
        "timings_ms": _clean(timings),
    }


def _summary(records) -> dict:
    n = len(records)
    frob = [r["frobenius_error"] for r in records if r["frobenius_error"] is not None]
    recon = [r["reconstruction"] for r in records if r.get("reconstruction")]
    return {
        "trials": n,
        "success_fraction": sum(r["success"] for r in records) / n if n else 0.0,
        "mean_n_found": float(np.mean([r["n_found"] for r in records])) if n else 0.0,
        "mean_frobenius_error": float(np.mean(frob)) if frob else None,
        "complete_trials": len(frob),
        "failed_trials": sum(r["error"] is not None for r in records),
        "mean_reconstruction_mse": float(np.mean([x["mse"] for x in recon])) if recon else None,
        "max_reconstruction_sup": float(np.max([x["sup"] for x in recon])) if recon else None,
    }


def _grid_tasks(cfg: ExperimentConfig):
    for i, eps in enumerate(cfg.eps):
        for j, m_X in enumerate(cfg.m_X):
            for t in range(cfg.trials):
                yield i, j, t, eps, m_X


def _sweep(cfg: ExperimentConfig, threads: int, do_reconstruct: bool):
    tasks = list(_grid_tasks(cfg))

    def work(task):
        i, j, t, eps, m_X = task
        start = time.perf_counter()
        rec, ms, _ = identify_trial(cfg, eps, m_X, (_NET, i, t), (_ALG, i, j, t), do_reconstruct)
        ms["total"] = 1e3 * (time.perf_counter() - start)
        rec = {"cell": [i, j], "trial": t, **rec}
        return rec, ms

    start = time.perf_counter()
    results = parallel_map(work, tasks, threads)
    records = [r for r, _ in results]
    timings = {"total": 1e3 * (time.perf_counter() - start), "per_trial": [ms for _, ms in results]}
    return records, timings


def run_identify(cfg: ExperimentConfig, threads: int = 1) -> dict:
    records, timings = _sweep(cfg, threads, cfg.reconstruct)
    return _report(cfg, records, _summary(records), timings)


def run_phase_transition(cfg: ExperimentConfig, threads: int = 1) -> dict:
    records, timings = _sweep(cfg, threads, False)
    grid = np.zeros((len(cfg.eps), len(cfg.m_X)))
    for r in records:
        i, j = r["cell"]
        grid[i, j] += r["success"]
    grid /= cfg.trials
    aggregate = _summary(records) | {"eps": cfg.eps, "m_X": cfg.m_X, "success_fraction_grid": grid}
    return _report(cfg, records, aggregate, timings)


def run_whitening_curve(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Synthetic bootstrap whitening: each recovered space is the true space perturbed by ``eta``."""
    tasks = [(i, t, eps) for i, eps in enumerate(cfg.eps) for t in range(cfg.trials)]

    def work(task):
        i, t, eps = task
        start = time.perf_counter()
        net_seed = _seed_int(np.random.SeedSequence(cfg.seed, spawn_key=(_NET, i, t)))
        rec = {"cell": [i, 0], "trial": t, "eps": eps, "network_seed": net_seed, "history": None, "error": None}
        try:
            net = generate_network(cfg.m, cfg.m, eps, seed=net_seed)
            ss = np.random.SeedSequence(cfg.seed, spawn_key=(_ALG, i, 0, t))
            rec["history"] = synthetic_bootstrap(net.weights, cfg.eta, cfg.k_max, seed=ss, stop_if_infeasible=True)
            if rec["history"][-1].get("infeasible"):
                rec["error"] = f"InfeasibleError: no positive definite member at k={rec['history'][-1]['k']}"
        except (GenerationError, np.linalg.LinAlgError) as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        s = [h["s_value"] for h in rec["history"]] if rec["history"] else []
        rec["s_history"] = s
        rec["reached_below_one"] = bool(s) and min(s[1:] or s) < 1.0
        return _clean(rec), {"total": 1e3 * (time.perf_counter() - start)}

    start = time.perf_counter()
    results = parallel_map(work, tasks, threads)
    records = [r for r, _ in results]
    curves = [r["s_history"] for r in records if r["s_history"]]
    width = max((len(c) for c in curves), default=0)
    mean_curve = [
        float(np.mean([c[k] for c in curves if len(c) > k])) for k in range(width)
    ]
    aggregate = {
        "trials": len(records),
        "failed_trials": sum(r["error"] is not None for r in records),
        "fraction_below_one": sum(r["reached_below_one"] for r in records) / len(records),
        "mean_s_by_iteration": mean_curve,
    }
    timings = {"total": 1e3 * (time.perf_counter() - start), "per_trial": [ms for _, ms in results]}
    return _report(cfg, records, aggregate, timings)


def _loss_samples(hist: np.ndarray, every: int = 50) -> list:
    idx = sorted(set(range(0, len(hist), every)) | {len(hist) - 1})
    return [[i, float(hist[i])] for i in idx]


def run_gd_baseline(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Pipeline versus gradient descent on the inner weights at an equal query budget.

    Uses the first ``eps`` and ``m_X`` values.  GD knows ``b`` and ``theta``;
    the pipeline's matched estimate is scored with the same known ``b`` and ``theta``.
    """
    eps, m_X = cfg.eps[0], cfg.m_X[0]

    def work(t):
        start = time.perf_counter()
        rec, ms, extras = identify_trial(cfg, eps, m_X, (_NET, 0, t), (_ALG, 0, 0, t), True)
        out = {"trial": t, "pipeline": rec, "gd": None}
        net = extras.get("network")
        if net is None:
            return _clean(out), ms
        gd_ss, init_ss, test_ss = np.random.SeedSequence(cfg.seed, spawn_key=(2, 0, 0, t)).spawn(3)
        rng = np.random.default_rng(gd_ss)
        budget = rec["queries"].get("gradients", 0) + rec["queries"].get("hessians", 0)
        train_oracle = QueryOracle(net.eval, cfg.d, cfg.noise_bound, seed=rng)
        Xtr = sample_ball(rng, budget, cfg.d)
        ytr = train_oracle.query_batch(Xtr)
        init = haar_init(np.random.default_rng(init_ss), cfg.d, cfg.m)
        t0 = time.perf_counter()
        res = gradient_descent(Xtr, ytr, net.scales, net.offsets, init, cfg.gd_steps, cfg.gd_stepsize)
        ms["gd"] = 1e3 * (time.perf_counter() - t0)
        Xte = sample_ball(np.random.default_rng(test_ss), cfg.n_test, cfg.d)
        yte = net.eval(Xte)
        A = net.weights
        err_gd = np.tanh(Xte @ res.weights + net.offsets) @ net.scales - net.scales @ np.tanh(net.offsets) - yte
        out["gd"] = {
            "training_points": budget,
            "init": "haar",
            "frobenius_error": float(np.linalg.norm(res.weights - A)),
            "mse": float(np.mean(err_gd**2)),
            "sup": float(np.abs(err_gd).max()),
            "train_loss": _loss_samples(res.loss_history),
            "monotone": bool(np.all(np.diff(res.loss_history) <= 0.0)),
        }
        matched = extras.get("matched")
        if matched is not None:
            err_p = net.with_weights(matched)(Xte) - yte
            out["pipeline"]["known_profile_mse"] = float(np.mean(err_p**2))
            out["pipeline"]["known_profile_sup"] = float(np.abs(err_p).max())
        ms["total"] = 1e3 * (time.perf_counter() - start)
        return _clean(out), ms

    start = time.perf_counter()
    results = parallel_map(work, range(cfg.trials), threads)
    records = [r for r, _ in results]

    def mean_of(path):
        vals = []
        for r in records:
            cur = r
            for key in path:
                cur = cur.get(key) if isinstance(cur, dict) else None
            if cur is not None:
                vals.append(cur)
        return float(np.mean(vals)) if vals else None

    aggregate = {
        "trials": len(records),
        "pipeline_mean_frobenius_error": mean_of(("pipeline", "frobenius_error")),
        "pipeline_mean_mse": mean_of(("pipeline", "reconstruction", "mse")),
        "pipeline_mean_known_profile_mse": mean_of(("pipeline", "known_profile_mse")),
        "gd_mean_frobenius_error": mean_of(("gd", "frobenius_error")),
        "gd_mean_mse": mean_of(("gd", "mse")),
        "gd_monotone_trials": sum(bool(r["gd"] and r["gd"]["monotone"]) for r in records),
    }
    timings = {"total": 1e3 * (time.perf_counter() - start), "per_trial": [ms for _, ms in results]}
    return _report(cfg, records, aggregate, timings)


RUNNERS = {
    "identify": run_identify,
    "phase-transition": run_phase_transition,
    "whitening-curve": run_whitening_curve,
    "compare-gd": run_gd_baseline,
}
