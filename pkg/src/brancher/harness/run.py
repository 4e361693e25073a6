"""Experiment execution: task lists, checks and output files.

Each experiment is split into independent tasks (one per law, distance,
set or scale) that derive all randomness from (master seed, task address)
through ``streams``; results are reduced in task order, so the output does
not depend on the number of workers.  Outputs are ``<experiment>.csv`` and
``<experiment>_summary.yaml`` in the output directory.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .config import ExperimentConfig
from .stats import exp1_cdf, gumbel_cdf, ks_statistic, loglog_slope
from .streams import stream


class ResourceBudgetExceeded(RuntimeError):
    def __init__(self, msg: str, result=None):
        super().__init__(msg)
        self.result = result


COLUMNS = {
    "survival": ["law", "n", "replicas", "p_hat", "se", "n_p_hat", "target"],
    "green": ["r", "g", "g_err", "g_scaled", "a_prime", "G", "G_err",
              "G_scaled", "a"],
    "bcap": ["set", "size", "bcap", "se", "systematic", "raw", "radius",
             "ratio_lower", "ratio_upper", "c_lower", "c_upper"],
    "pair_deficit": ["r", "deficit", "se", "systematic", "asymptotic", "ratio"],
    "vacancy": ["u", "measured", "se", "systematic", "raw", "raw_se",
                "predicted", "predicted_se", "predicted_systematic", "bcap_K",
                "bcap_window"],
    "covariance": ["r", "u", "cov", "se", "predicted", "predicted_se",
                   "predicted_systematic", "bcap_pair", "bcap_single"],
    "decorrelation": ["r", "distance", "u", "cov", "se", "abs_cov", "bound", "ratio"],
    "cover": ["replica", "U0", "statistic", "M", "arrivals"],
    "gumbel": ["replica", "statistic"],
    "crossing": ["u", "n", "L0", "d", "mode", "replicas", "p_hat", "se"],
    "embeddings": ["item", "d", "n", "count", "passed"],
}


# ------------------------------------------------------------ sets

def build_set(spec: dict, d: int):
    from ..lattice import LatticeSet, frame, linf_ball, plane_box
    c = tuple(spec.get("center", (0,) * d))
    if len(c) != d:
        raise ValueError("set center has the wrong dimension")
    kind, r = spec["kind"], spec.get("r", 0)
    if kind == "singleton":
        return LatticeSet([c], d=d)
    if kind == "frame":
        return frame(c, r, d)
    if kind == "plane_box":
        return plane_box(c, r)
    if kind == "linf_ball":
        return linf_ball(c, r)
    if kind == "line":
        return LatticeSet([(c[0] + k,) + c[1:] for k in range(r + 1)], d=d)
    return LatticeSet(spec["points"], d=d)


def set_label(spec: dict) -> str:
    if spec["kind"] == "points":
        return "points:" + ";".join(",".join(map(str, p)) for p in spec["points"])
    return f"{spec['kind']}:{spec.get('r', 0)}"


# ------------------------------------------------------------ tasks

def tasks(cfg: ExperimentConfig) -> list[dict]:
    p, e = cfg.params, cfg.experiment
    if e == "survival":
        return [{"law": law} for law in p["laws"]]
    if e == "bcap":
        out = [{"set": s} for s in p["sets"]]
        out += [{"random": i} for i in range(p["random_sets"])]
        return out
    if e in ("pair_deficit", "covariance", "decorrelation"):
        return [{"r": r} for r in p["distances"]]
    if e == "crossing":
        return [{"level": n} for n in p["levels"]]
    return [{}]


def _unit(d: int, r: int) -> tuple:
    return (int(r),) + (0,) * (d - 1)


def run_task(cfg: ExperimentConfig, task: dict) -> list[dict]:
    """Rows of one task; pure given (config, task)."""
    from .. import capacity as cap
    from .. import interlacement as il
    from .. import percolation as pc
    from ..gwtree import survival_probability
    from ..lattice import LatticeSet, ScaleLadder, origin, sample_points
    from ..offspring import make_law

    e, p, d, seed = cfg.experiment, cfg.params, cfg.d, cfg.seed
    if e == "survival":
        law = make_law(task["law"])
        est = survival_probability(law, p["n"], cfg.replicas, seed)
        return [{"law": law.name, "n": p["n"], "replicas": cfg.replicas,
                 "p_hat": est.mean, "se": est.se, "n_p_hat": p["n"] * est.mean,
                 "target": 2.0 / law.sigma2}]
    law = make_law(cfg.law)
    if e == "green":
        cal = cap.calibration(d, law)
        rows = []
        for r in p["radii"]:
            z = _unit(d, r)
            G = cap.green_branching(d, law, z)
            rows.append({"r": r, "g": cap.green_value(z, d), "g_err": cap.green_srw(d, r).error(z),
                         "g_scaled": cap.green_value(z, d) * r ** (d - 2),
                         "a_prime": cal.a_prime, "G": G.value, "G_err": G.error,
                         "G_scaled": G.value * r ** (d - 4), "a": cal.a})
        return rows
    if e == "bcap":
        cal = cap.calibration(d, law, full=True)
        if "set" in task:
            K, label = build_set(task["set"], d), set_label(task["set"])
        else:
            K = sample_points(stream(seed, "bcap-random", task["random"]),
                              p["random_size"], d, p["random_radius"])
            label = "points:" + ";".join(",".join(map(str, q)) for q in K)
        est = cap.bcap(K, law, cfg.replicas, stop_radius=p["stop_radius"], seed=seed)
        lo, hi = cap.capacity_ratios(K, est.value.mean, law)
        return [{"set": label, "size": len(K), "bcap": est.value.mean,
                 "se": est.value.se, "systematic": est.value.systematic,
                 "raw": est.raw.mean, "radius": est.radius, "ratio_lower": lo,
                 "ratio_upper": hi, "c_lower": cal.c_lower, "c_upper": cal.c_upper}]
    if e == "pair_deficit":
        b0 = cap.calibration(d, law, full=True).bcap_singleton
        a = cap.calibration(d, law).a
        r = task["r"]
        est = cap.pair_deficit(_unit(d, r), law, cfg.replicas, seed)
        asym = 2 * b0 ** 2 * a / r ** (d - 4)
        return [{"r": r, "deficit": est.mean, "se": est.se,
                 "systematic": est.systematic, "asymptotic": asym,
                 "ratio": est.mean / asym}]
    if e == "vacancy":
        K, W = build_set(p["K"], d), build_set(p["window"], d)
        res = il.vacancy_experiment(K, W, p["us"], law, cfg.replicas, seed,
                                    p["cap_replicas"], p["stop_radius"])
        rows = []
        for u, pr in res.items():
            rows.append({"u": u, "measured": pr.measured.mean, "se": pr.measured.se,
                         "systematic": pr.measured.systematic, "raw": pr.raw.mean,
                         "raw_se": pr.raw.se, "predicted": pr.predicted.mean,
                         "predicted_se": pr.predicted.se,
                         "predicted_systematic": pr.predicted.systematic,
                         "bcap_K": pr.extra["bcap_K"],
                         "bcap_window": pr.extra["bcap_window"]})
        return rows
    if e == "covariance":
        r = task["r"]
        pr = il.covariance_probe(origin(d), _unit(d, r), p["u"], law, cfg.replicas,
                                 seed, p["cap_replicas"])
        return [{"r": r, "u": p["u"], "cov": pr.measured.mean, "se": pr.measured.se,
                 "predicted": pr.predicted.mean, "predicted_se": pr.predicted.se,
                 "predicted_systematic": pr.predicted.systematic,
                 "bcap_pair": pr.extra["bcap_pair"],
                 "bcap_single": pr.extra["bcap_single"]}]
    if e == "decorrelation":
        r = task["r"]
        K1 = build_set(p["K"], d)
        K2 = K1.translate(_unit(d, r))
        pr = il.decorrelation_probe(K1, K2, p["u"], tuple(p["events"]), law,
                                    cfg.replicas, seed, p["cap_replicas"],
                                    p["independent"])
        return [{"r": r, "distance": pr.extra["distance"], "u": p["u"],
                 "cov": pr.raw.mean, "se": pr.raw.se, "abs_cov": pr.measured.mean,
                 "bound": pr.predicted.mean, "ratio": pr.extra["ratio"]}]
    if e == "cover":
        K = build_set(p["K"], d)
        cap0 = cap.bcap(LatticeSet([origin(d)], d=d), law, p["cap_replicas"], seed=seed)
        capK = cap0 if len(K) == 1 and origin(d) in K else cap.bcap(K, law, p["cap_replicas"], seed=seed)
        sampler = il.TrajectorySampler(K, capK, law)
        b0 = cap0.value.mean
        x0 = tuple(K.points[0]) if origin(d) not in K else origin(d)
        rows = []
        for i in range(cfg.replicas):
            res = il.cover_process(K, law, stream(seed, "cover", i), sampler, b0)
            U0 = res.cover_levels[tuple(int(c) for c in x0)]
            rows.append({"replica": i, "U0": U0, "statistic": b0 * U0, "M": res.M,
                         "arrivals": res.arrivals})
        return rows
    if e == "gumbel":
        K = il.separated_grid(p["n_side"], d, p["lam"], p["dims"])
        res = il.gumbel_experiment(K, law, cfg.replicas, seed, p["lam"], p["cap_replicas"])
        return [{"replica": i, "statistic": float(s)} for i, s in enumerate(res.statistic)]
    if e == "crossing":
        return pc.crossing_curve(p["us"], task["level"], law, cfg.replicas, seed,
                                 p["L0"], d, p["cap_replicas"])
    if e == "embeddings":
        lad = ScaleLadder(p["L0"])
        o = origin(d)
        rows = []
        en = pc.enumerate_embeddings(p["n"], o, lad, d)
        rows.append({"item": "count", "d": d, "n": p["n"], "count": en.count,
                     "passed": en.count == pc.embedding_count(p["n"], d)})
        rows.append({"item": "exhaustive", "d": d, "n": p["n"], "count": int(en.exhaustive),
                     "passed": True})
        if en.exhaustive:
            ok = sum(pc.embedding_separation_check(M)
                     for M in pc.iter_embeddings(p["n"], o, lad, d))
            rows.append({"item": "separation_enumerated", "d": d, "n": p["n"],
                         "count": en.count, "passed": ok == en.count})
        rng = stream(seed, "embeddings", "random")
        ok = sum(pc.embedding_separation_check(
            pc.random_embedding(p["random_n"], o, lad, d, rng))
            for _ in range(p["random_embeddings"]))
        rows.append({"item": "separation_random", "d": d, "n": p["random_n"],
                     "count": p["random_embeddings"], "passed": ok == p["random_embeddings"]})
        fails = 0
        for i in range(p["paths"]):
            g = stream(seed, "embeddings", "path", i)
            path = pc.random_crossing_path(o, p["path_n"], lad, d, g)
            try:
                M = pc.embedding_from_path(path, o, p["path_n"], lad)
                hit = all(bool(np.any(np.max(np.abs(np.asarray(path) - np.asarray(v)), axis=1)
                                      == p["L0"] - 1))
                          for v in M.leaf_values().values())
                fails += not (hit and M.is_proper())
            except pc.PathDoesNotCross:
                fails += 1
        rows.append({"item": "witness", "d": d, "n": p["path_n"], "count": p["paths"],
                     "passed": fails == 0})
        return rows
    raise ValueError(f"unknown experiment {e!r}")


# ------------------------------------------------------------ checks

@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def _f(x) -> float:
    return float(x) if x is not None else 0.0


def checks(cfg: ExperimentConfig, rows: list[dict]) -> list[Check]:
    e, p = cfg.experiment, cfg.params
    out: list[Check] = []
    if e == "survival":
        for r in rows:
            tol = 0.1 * r["target"] + 3 * r["n"] * r["se"]
            dev = abs(r["n_p_hat"] - r["target"])
            out.append(Check(f"kolmogorov[{r['law']}]", dev <= tol,
                             f"|nP - 2/s2| = {dev:.4g} <= {tol:.4g}"))
    elif e == "green":
        last = rows[-1]
        for col, ref in (("g_scaled", "a_prime"), ("G_scaled", "a")):
            rel = abs(last[col] / last[ref] - 1)
            out.append(Check(f"asymptotic[{col}]", rel <= 0.05,
                             f"relative gap {rel:.3g} at r={last['r']}"))
    elif e == "bcap":
        for r in rows:
            out.append(Check(f"bcap_le_size[{r['set']}]",
                             r["bcap"] <= r["size"],
                             f"{r['bcap']:.4g} <= {r['size']}"))
            ok = (r["ratio_lower"] >= r["c_lower"] - 3 * r["se"]
                  and r["ratio_upper"] <= r["c_upper"] + 3 * r["se"])
            out.append(Check(f"capacity_bounds[{r['set']}]", ok,
                             f"[{r['ratio_lower']:.3g}, {r['ratio_upper']:.3g}] within "
                             f"[{r['c_lower']:.3g}, {r['c_upper']:.3g}]"))
    elif e == "pair_deficit":
        rs = [r["r"] for r in rows]
        ys = [r["deficit"] for r in rows]
        ses = [float(np.hypot(r["se"], _f(r["systematic"]))) for r in rows]
        if min(ys) > 0:
            slope, _ = loglog_slope(rs, ys, ses)
            out.append(Check("slope", abs(slope + (cfg.d - 4)) <= 0.4,
                             f"slope {slope:.3f}, expected {-(cfg.d - 4)} +- 0.4"))
        else:
            out.append(Check("slope", False, "nonpositive deficit"))
        last = rows[-1]
        out.append(Check("prefactor", abs(last["ratio"] - 1) <= 0.25,
                         f"deficit / asymptote = {last['ratio']:.3f} at r={last['r']}"))
    elif e == "vacancy":
        for r in rows:
            se = float(np.hypot(np.hypot(r["se"], _f(r["systematic"])),
                                np.hypot(r["predicted_se"], _f(r["predicted_systematic"]))))
            dev = abs(r["measured"] - r["predicted"])
            out.append(Check(f"vacancy[u={r['u']}]", dev <= 3 * se,
                             f"|{r['measured']:.4g} - {r['predicted']:.4g}| <= 3 x {se:.3g}"))
    elif e == "covariance":
        for r in rows:
            se = float(np.hypot(r["se"], np.hypot(r["predicted_se"],
                                                  _f(r["predicted_systematic"]))))
            dev = abs(r["cov"] - r["predicted"])
            out.append(Check(f"covariance[r={r['r']}]", dev <= 3 * se,
                             f"|{r['cov']:.4g} - {r['predicted']:.4g}| <= 3 x {se:.3g}"))
    elif e == "decorrelation":
        if p["independent"]:
            for r in rows:
                out.append(Check(f"null[r={r['r']}]", abs(r["cov"]) <= 3 * r["se"],
                                 f"|{r['cov']:.3g}| <= 3 x {r['se']:.3g}"))
        else:
            a, b = rows[0], rows[-1]
            out.append(Check("decay", b["abs_cov"] <= a["abs_cov"] + 3 * np.hypot(a["se"], b["se"]),
                             f"{b['abs_cov']:.3g} at r={b['r']} vs {a['abs_cov']:.3g} at r={a['r']}"))
    elif e == "cover":
        ks = ks_statistic([r["statistic"] for r in rows], exp1_cdf)
        out.append(Check("ks_exponential", ks < 0.02, f"KS {ks:.4f} < 0.02"))
    elif e == "gumbel":
        s = np.array([r["statistic"] for r in rows])
        ks = ks_statistic(s, gumbel_cdf)
        med = float(np.median(s))
        out.append(Check("ks_gumbel", ks <= 0.08, f"KS {ks:.4f} <= 0.08"))
        out.append(Check("median", abs(med - 0.3665) <= 0.15,
                         f"median {med:.4f} vs 0.3665 +- 0.15"))
    elif e == "crossing":
        for n in sorted({r["n"] for r in rows}):
            ps = [r["p_hat"] for r in rows if r["n"] == n and r["mode"] == "nearest_neighbor"]
            out.append(Check(f"vacant_monotone[n={n}]",
                             all(a >= b for a, b in zip(ps, ps[1:])),
                             "vacant crossing nonincreasing in u"))
    elif e == "embeddings":
        for r in rows:
            out.append(Check(r["item"], bool(r["passed"]), f"count {r['count']}"))
    return out


# ------------------------------------------------------------ output

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def to_csv(experiment: str, rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS[experiment]
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list
    checks: list = field(default_factory=list)
    truncated: bool = False
    csv_path: Path | None = None
    summary_path: Path | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        from ..capacity import CALIBRATION_VERSION
        s = {"experiment": self.config.experiment, "config": self.config.as_dict(),
             "calibration_version": CALIBRATION_VERSION, "rows": len(self.rows),
             "truncated": self.truncated,
             "checks": [c.as_dict() for c in self.checks],
             "passed": self.passed}
        if self.config.experiment != "embeddings" and self.config.d >= 5:
            from ..capacity import calibration
            cal = calibration(self.config.d, self.config.law)
            s["calibration"] = {"key": cal.key, "a_prime": cal.a_prime, "a": cal.a,
                                "bcap_singleton": cal.bcap_singleton}
        if self.config.experiment in ("cover", "gumbel") and self.rows:
            st = [r["statistic"] for r in self.rows]
            s["statistic"] = {"mean": float(np.mean(st)), "median": float(np.median(st)),
                              "ks": ks_statistic(st, exp1_cdf if self.config.experiment == "cover"
                                                 else gumbel_cdf)}
        return _plain(s)

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        e = self.config.experiment
        self.csv_path = out / f"{e}.csv"
        self.summary_path = out / f"{e}_summary.yaml"
        self.csv_path.write_text(to_csv(e, self.rows))
        self.summary_path.write_text(yaml.safe_dump(self.summary(), sort_keys=True))


def run(cfg: ExperimentConfig, out: str | Path | None = None,
        workers: int | None = None, check: bool = True) -> RunResult:
    """Run every task of the experiment and write its outputs.

    Tasks are reduced in their listed order whatever the worker count.  If
    budget_seconds runs out, the rows finished so far are written with
    truncated: true and ResourceBudgetExceeded is raised.
    """
    workers = workers or cfg.workers
    out = Path(out or cfg.out)
    ts = tasks(cfg)
    t0 = time.monotonic()
    rows: list[dict] = []
    truncated = False
    if workers <= 1 or len(ts) <= 1:
        for t in ts:
            if cfg.budget_seconds is not None and time.monotonic() - t0 > cfg.budget_seconds:
                truncated = True
                break
            rows.extend(run_task(cfg, t))
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        try:
            futs = [pool.submit(run_task, cfg, t) for t in ts]
            for f in futs:
                left = None
                if cfg.budget_seconds is not None:
                    left = max(cfg.budget_seconds - (time.monotonic() - t0), 0.0)
                try:
                    rows.extend(f.result(timeout=left))
                except FutureTimeout:
                    truncated = True
                    break
        finally:
            if truncated:
                for proc in list(getattr(pool, "_processes", {}).values()):
                    proc.terminate()
            pool.shutdown(wait=not truncated, cancel_futures=True)
    res = RunResult(cfg, rows, truncated=truncated)
    if check and not truncated:
        res.checks = checks(cfg, rows)
    res.write(out)
    if truncated:
        raise ResourceBudgetExceeded(
            f"budget of {cfg.budget_seconds} s exhausted after {len(rows)} rows", res)
    return res
