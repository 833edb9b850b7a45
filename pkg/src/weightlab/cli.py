"""weightlab command line: constants, verify, cfi, sweep.

Exit codes: 0 when every verdict passes, 1 on a verdict failure, 2 on a
usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import plotting, sawyer
from .geometry import Cube, GeometryError
from .report import Report, write_report
from .tails import (
    ainfty_constant,
    continuous_tails,
    cp_constant,
    cps_constant,
    delta_cp,
    family_numerators,
    rh_constant,
    theorem_constants,
    TailDivergence,
)
from .verify import (
    Verdict,
    check_cp_definition,
    check_monotonicity,
    check_rhi_ainfty,
    check_rhi_cp,
    check_rhi_dilation,
    check_tail_equivalence,
    combine,
    default_family,
    subset_sampler,
    sweep_power_weights,
    sweep_verdict,
)
from .weights import Weight, WeightError, gallery_weights, random_grid_weight, weight_from_spec

SUITES = ("tail-equivalence", "rhi-cp", "rhi-ainfty", "rhi-dilation", "cp-definition", "monotonicity", "power-sweep")
SWEEP_EPS = (0.2, 0.1, 0.05)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    n: int = 1
    resolution: int = 4096
    depth: int = 8
    p: list[float] = field(default_factory=lambda: [2.0])
    q: list[float] = field(default_factory=lambda: [3.0])
    s: list[float] = field(default_factory=lambda: [1.5])
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise UsageError(f"--n must be 1 or 2, got {self.n}")
        if self.resolution < 1 or self.resolution & (self.resolution - 1):
            raise UsageError(f"--resolution must be a power of two, got {self.resolution}")
        if not 0 <= self.depth <= 14:
            raise UsageError(f"--depth must lie in [0, 14], got {self.depth}")
        if any(p <= 1 for p in self.p):
            raise UsageError("every exponent p must exceed 1")
        if any(q < 1 for q in self.q):
            raise UsageError("every exponent q must be at least 1")
        if any(not 1 < s <= 2 for s in self.s):
            raise UsageError("every dilation s must lie in (1, 2]")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")

    @property
    def numerator_resolution(self) -> int:
        # per-cube local grids; the global grid in 2-D would be resolution^2 cells per cube
        return min(self.resolution, 4096 if self.n == 1 else 256)


def threads() -> int:
    raw = os.environ.get("WEIGHTLAB_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"WEIGHTLAB_THREADS must be an integer, got {raw!r}") from None


def ordered_map(fn, items):
    """map with at most WEIGHTLAB_THREADS workers; results keep input order."""
    k = threads()
    if k == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# spec loading


def parse_weight(text: str, n: int) -> tuple[str, Weight]:
    """A gallery name, an inline JSON object, or a path to a JSON spec file."""
    if text in gallery_weights(n):
        return text, gallery_weights(n)[text]
    if text.lstrip().startswith("{"):
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed inline weight spec: {exc}") from exc
        return _spec_id(spec), weight_from_spec(spec, n)
    path = Path(text)
    if not path.exists():
        raise UsageError(f"weight spec {text!r} is neither a gallery name, inline JSON, nor an existing file")
    return path.stem, weight_from_spec(path, n)


def _spec_id(spec: dict) -> str:
    if spec.get("type") == "gallery":
        params = ",".join(f"{k}={v}" for k, v in sorted(spec.get("params", {}).items()))
        return f"{spec['name']}({params})" if params else spec["name"]
    return json.dumps(spec, sort_keys=True)


def resolve_weights(items: list[str] | None, n: int, rng: np.random.Generator, count: int) -> list[tuple[str, Weight]]:
    items = items or ["gallery"]
    out = []
    for it in items:
        if it == "gallery":
            out.extend(gallery_weights(n).items())
        elif it == "random":
            out.extend((f"random_{i:03d}", random_grid_weight(rng, n)) for i in range(count))
        else:
            out.append(parse_weight(it, n))
    return out


def parse_signal(text: str, box: Cube, resolution: int):
    if text in ("bump", "step", "chirp"):
        spec = {"type": text}
    else:
        try:
            spec = json.loads(Path(text).read_text()) if Path(text).exists() else json.loads(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"malformed signal spec {text!r}: {exc}") from exc
    return spec.get("type", "signal"), sawyer.signal_from_spec(spec, box, resolution)


# ---------------------------------------------------------------------------
# verify


def _verify_weight(args) -> list[Verdict]:
    wid, w, cfg, suites, subsets = args
    fam = default_family(cfg.n, cfg.depth)
    res = cfg.numerator_resolution
    num = family_numerators(w, fam, res)
    out = []
    cps_cache = {}
    for p in cfg.p:
        try:
            tails = continuous_tails(w, fam.cubes, p, cfg.tol)
        except TailDivergence:
            tails = None
        cp = cp_constant(w, p, fam, cfg.tol, res, numerators=num, tails=tails)
        if "tail-equivalence" in suites:
            out.append(check_tail_equivalence(w, fam, p, cfg.tol, weight_id=wid))
        if "rhi-cp" in suites:
            out.append(check_rhi_cp(w, fam, p, cp=cp, tol=cfg.tol, resolution=res, weight_id=wid))
        if "rhi-dilation" in suites:
            for s in cfg.s:
                cps_cache[(p, s)] = cps_constant(w, p, s, fam, cfg.tol, res, numerators=num)
                out.append(check_rhi_dilation(w, fam, p, s, cps=cps_cache[(p, s)], tol=cfg.tol, resolution=res, weight_id=wid))
        if "cp-definition" in suites:
            # the root cube and its dyadic children
            parts = [check_cp_definition(w, Q, p, subsets, cp.upper, cfg.tol, weight_id=wid) for Q in fam.cubes[: 1 + 2**cfg.n]]
            out.append(combine("cp-definition", parts))
    if "rhi-ainfty" in suites:
        out.append(check_rhi_ainfty(w, fam, ainfty_constant(w, fam, res, numerators=num), weight_id=wid))
    if "monotonicity" in suites:
        out.append(check_monotonicity(w, fam, tol=cfg.tol, resolution=res, weight_id=wid, numerators=num))
    return out


def cmd_verify(cfg: RunConfig, suite: str, weights: list[str] | None, count: int) -> Report:
    if suite not in SUITES + ("all",):
        raise UsageError(f"unknown suite {suite!r}; valid: {', '.join(SUITES + ('all',))}")
    suites = set(SUITES) if suite == "all" else {suite}
    rng = np.random.default_rng(cfg.seed)
    ws = resolve_weights(weights, cfg.n, rng, count)
    # subsets drawn once, up front, so the seed fixes them regardless of threading
    cells = 64 if cfg.n == 1 else 32
    subsets = subset_sampler(cfg.n, cells, rng, dyadic_depth=6 if cfg.n == 1 else 5, random_sets=100)
    per_weight = suites - {"power-sweep"}
    verdicts: list[Verdict] = []
    if per_weight:
        for vs in ordered_map(_verify_weight, [(wid, w, cfg, per_weight, subsets) for wid, w in ws]):
            verdicts.extend(vs)
    tables = {}
    if "power-sweep" in suites:
        rows = sweep_power_weights(2.0, SWEEP_EPS, default_family(cfg.n, cfg.depth), cfg.n, cfg.tol, cfg.numerator_resolution)
        verdicts.append(sweep_verdict(rows))
        tables["power_sweep"] = [r.to_dict() for r in rows]
    tables["verdicts"] = [
        {
            "theorem": v.theorem,
            "weight": v.witness.get("weight"),
            "passed": v.passed,
            "worst_margin": v.worst_margin,
            "tests_run": v.tests_run,
            "skipped": v.skipped,
            "params": v.witness.get("params", {}),
        }
        for v in verdicts
    ]
    config = {**asdict(cfg), "suite": suite, "weights": [wid for wid, _ in ws]}
    return Report("verify", config, verdicts=verdicts, tables=tables)


# ---------------------------------------------------------------------------
# constants


def cmd_constants(cfg: RunConfig, weight: str) -> Report:
    wid, w = parse_weight(weight, cfg.n)
    fam = default_family(cfg.n, cfg.depth)
    res = cfg.numerator_resolution
    num = family_numerators(w, fam, res)
    estimates = [ainfty_constant(w, fam, res, numerators=num)]
    rows = []
    ainf = estimates[0].value
    for p in sorted(set(cfg.p + cfg.q)):
        cp = cp_constant(w, p, fam, cfg.tol, res, numerators=num)
        estimates.append(cp)
        for s in cfg.s:
            estimates.append(cps_constant(w, p, s, fam, cfg.tol, res, numerators=num))
        tc = theorem_constants(cfg.n, p, cfg.s[0], cp=cp.upper, ainfty=max(ainf, 1.0), cps=estimates[-1].upper)
        row = tc.to_dict()
        # empirical link between the reverse Hoelder exponent and the C_p-condition exponent
        row["delta_over_epsilon"] = tc.delta_cp / tc.epsilon_remark
        rows.append(row)
        if not cp.divergent:
            estimates.append(rh_constant(w, 1 + delta_cp(cfg.n, p, cp.upper), fam))
    table = [
        {"weight": wid, "name": e.name, "value": e.value, "upper": e.upper, "divergent": e.divergent, "family_size": e.family_size}
        for e in estimates
    ]
    config = {**asdict(cfg), "weight": wid}
    return Report("constants", config, estimates=estimates, tables={"constants": table, "theorem_constants": rows})


# ---------------------------------------------------------------------------
# cfi


def cmd_cfi(cfg: RunConfig, signals: list[str], weights: list[str], gammas: list[float]) -> Report:
    p, q = cfg.p[0], cfg.q[0]
    if not q > p > 1:
        raise UsageError(f"cfi needs the precondition q>p>1, got p={p}, q={q}")
    box = Cube((0.0,), 1.0)
    res = cfg.resolution
    fam = default_family(1, cfg.depth)
    ws = [parse_weight(t, 1) for t in (weights or ["constant"])]
    sigs = [parse_signal(t, box, res) for t in (signals or ["bump"])]
    config = sawyer.GoodLambdaConfig(gammas=list(gammas))
    cfi_rows, gl_rows, fits = [], [], []
    verdicts = []
    for sid, f in sigs:
        T = sawyer.truncated_hilbert_maximal(f)
        M = sawyer.hl_maximal(f)
        for wid, w in ws:
            rows = sawyer.good_lambda_measure(f, w, config, T, M)
            gl_rows.extend({"signal": sid, "weight": wid, **r.to_dict()} for r in rows)
            g, fr, fit = sawyer.decay_fit(rows) if rows else (config.gammas, [0.0] * len(config.gammas), sawyer.log_linear_fit([], []))
            fits.append({"signal": sid, "weight": wid, "gammas": g, "max_fraction": fr, **fit.to_dict()})
            ok = fit.defined and fit.slope < 0 and fit.r2 >= 0.9
            verdicts.append(
                Verdict(
                    "good-lambda-decay",
                    ok,
                    fit.r2 - 0.9 if fit.defined else float("-inf"),
                    {"weight": wid, "signal": sid},
                    len(rows),
                    notes={"zero_fractions": fit.zeros, "hilbert_ceiling": sawyer.discrete_hilbert_ceiling(res)},
                )
            )
            cfi_rows.append(sawyer.cfi_ratio(f, w, p, q, fam, wid, sid))
    fitted = sawyer.fit_cfi_constant(cfi_rows)
    verdicts.append(Verdict("cfi-one-sidedness", fitted["holds"], 0.0, {"weight": "all"}, len(cfi_rows), notes=fitted))
    report = Report(
        "cfi",
        {**asdict(cfg), "signals": [s for s, _ in sigs], "weights": [w for w, _ in ws], "gammas": config.gammas},
        verdicts=verdicts,
        tables={"cfi": [r.to_dict() for r in cfi_rows], "good_lambda": gl_rows, "good_lambda_fit": fits},
    )
    report.extras["fitted"] = fitted
    return report


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(cfg: RunConfig, eps: list[float], profile_depths: list[int]) -> Report:
    fam = default_family(cfg.n, cfg.depth)
    tables = {}
    verdicts = []
    for p in cfg.p:
        rows = sweep_power_weights(p, eps, fam, cfg.n, cfg.tol, cfg.numerator_resolution)
        tables.setdefault("power_sweep", []).extend({"p": p, **r.to_dict()} for r in rows)
        verdicts.append(sweep_verdict(rows))
    Q = Cube((0.5,) * cfg.n, 0.5)
    profiles = []
    for d in profile_depths:
        for q in cfg.q:
            prof = sawyer.fefferman_stein_profile(Q, sawyer.accumulating_cubes(Q, d), q, 2.0, cfg.resolution if cfg.n == 1 else 256)
            profiles.append(prof)
            fit = prof.fit
            verdicts.append(
                Verdict(
                    "level-set-decay",
                    fit.defined and fit.slope < 0 and fit.r2 >= 0.9,
                    fit.r2 - 0.9 if fit.defined else float("-inf"),
                    {"weight": f"depth={d},q={q:g}"},
                    len(prof.lambdas),
                    notes={"slope": fit.slope, "r2": fit.r2},
                )
            )
            tables.setdefault("level_set_profiles", []).append({"depth": d, "q": q, **prof.fit.to_dict()})
            tables.setdefault("level_set_measures", []).extend(
                {"depth": d, "q": q, "lambda": l, "measure": m} for l, m in zip(prof.lambdas, prof.measures)
            )
    report = Report("sweep", {**asdict(cfg), "eps": list(eps), "profile_depths": list(profile_depths)}, verdicts=verdicts, tables=tables)
    report.extras["profiles"] = profiles
    return report


# ---------------------------------------------------------------------------
# figures and output


def render_figures(report: Report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    figs = []
    if report.verdicts:
        figs.append(plotting.margins(report.verdicts, out / "margins.png"))
    if report.estimates:
        figs.append(plotting.refinement_traces(report.estimates, out / "refinement.png"))
    if "power_sweep" in report.tables:
        from .verify import SweepRow

        rows = [SweepRow(r["eps"], r["cp"], r["cp_upper"], r["ratio"]) for r in report.tables["power_sweep"]]
        figs.append(plotting.power_sweep(rows, out / "power_sweep.png"))
    extras = report.extras
    for i, prof in enumerate(extras.get("profiles", [])):
        figs.append(plotting.level_set_profile(prof, out / f"level_sets_{i}.png"))
    for i, fit in enumerate(report.tables.get("good_lambda_fit", [])):
        f = sawyer.Fit(fit["slope"], fit["intercept"], fit["r2"], fit["points"], fit["zeros"])
        figs.append(plotting.good_lambda(fit["gammas"], fit["max_fraction"], f, out / f"good_lambda_{i}.png"))
    if report.tables.get("cfi"):
        rows = [sawyer.CfiRow(**r) for r in report.tables["cfi"]]
        figs.append(plotting.cfi_rows(rows, extras.get("fitted", {}).get("c", 1.0), out / "cfi.png"))
    report.figures = [f.name for f in figs]


def summarize(report: Report, stream=None) -> None:
    stream = stream or sys.stdout
    for v in report.verdicts:
        status = "PASS" if v.passed else "FAIL"
        w = v.witness
        print(f"{status} {v.theorem:<18} weight={w.get('weight')} margin={v.worst_margin:.3e} tests={v.tests_run}", file=stream)
        if not v.passed and w.get("cube"):
            print(f"     witness cube={w['cube']} lhs={w.get('lhs')} rhs={w.get('rhs')}", file=stream)
    for e in report.estimates:
        flag = " (divergent tail: constant 0)" if e.divergent else ""
        print(f"{e.name:<22} {e.value:.6g} .. {e.upper:.6g}{flag}", file=stream)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=1, help="dimension, 1 or 2")
    common.add_argument("--resolution", type=int, default=None, help="grid cells per axis (power of two)")
    common.add_argument("--depth", type=int, default=None, help="dyadic family depth (<= 14)")
    common.add_argument("--tol", type=float, default=1e-9, help="tail truncation tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None, help="output directory for report, tables and figures")
    common.add_argument("--format", choices=("json", "csv", "both"), default="both")
    common.add_argument("--p", type=float, nargs="+", default=None)
    common.add_argument("--q", type=float, nargs="+", default=None)
    common.add_argument("--s", type=float, nargs="+", default=None)
    common.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    ap = argparse.ArgumentParser(prog="weightlab", description="C_p / A_infinity weight constants and inequality checks")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("constants", parents=[common], help="estimate weight constants")
    c.add_argument("--weight", default="constant", help="gallery name, inline JSON, or spec file")

    v = sub.add_parser("verify", parents=[common], help="run inequality checks")
    v.add_argument("suite", help=f"one of {', '.join(SUITES)}, all")
    v.add_argument("--weights", nargs="+", default=None, help="'gallery', 'random', gallery names, inline JSON or spec files")
    v.add_argument("--count", type=int, default=10, help="number of random grid weights for --weights random")

    f = sub.add_parser("cfi", parents=[common], help="good-lambda and Coifman-Fefferman ratio experiment")
    f.add_argument("--signal", action="append", default=None, help="bump, step, chirp, or a JSON spec (repeatable)")
    f.add_argument("--weight", action="append", default=None, help="weight spec (repeatable)")
    f.add_argument("--gammas", type=float, nargs="+", default=[1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32])

    s = sub.add_parser("sweep", parents=[common], help="power-weight and level-set sweeps")
    s.add_argument("--eps", type=float, nargs="+", default=list(SWEEP_EPS))
    s.add_argument("--profile-depths", type=int, nargs="*", default=[8, 10])
    return ap


def make_config(args) -> RunConfig:
    n = args.n
    defaults = {"constants": (2.0, 3.0), "verify": (2.0, 3.0), "cfi": (2.0, 3.0), "sweep": (2.0, 1.0)}
    p0, q0 = defaults[args.command]
    # only the sweep's level-set exponent may equal 1
    if args.command != "sweep" and args.q and any(q <= 1 for q in args.q):
        raise UsageError("every exponent q must exceed 1")
    return RunConfig(
        n=n,
        resolution=args.resolution or (4096 if n == 1 else 256),
        depth=args.depth if args.depth is not None else (8 if n == 1 else 4),
        p=args.p or [p0],
        q=args.q or [q0],
        s=args.s or [1.5],
        tol=args.tol,
        seed=args.seed,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        if args.command == "verify":
            report = cmd_verify(cfg, args.suite, args.weights, args.count)
        elif args.command == "constants":
            report = cmd_constants(cfg, args.weight)
        elif args.command == "cfi":
            if cfg.n != 1:
                raise UsageError("cfi is one-dimensional; use --n 1")
            report = cmd_cfi(cfg, args.signal, args.weight, args.gammas)
        else:
            report = cmd_sweep(cfg, args.eps, args.profile_depths)
    except (UsageError, WeightError, GeometryError, sawyer.SignalError, ValueError) as exc:
        print(f"weightlab: error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        if not args.no_figures:
            render_figures(report, args.out)
        for path in write_report(report, args.out, args.format):
            print(f"wrote {path}")
    summarize(report)
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
