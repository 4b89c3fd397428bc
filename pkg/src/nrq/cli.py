"""Command-line front end: configuration, orchestration, output emission.

Subcommands
-----------
check      validate the structural hypotheses for the configured law
fibering   emit the sampled fibering profile of a seed ray
extremal   tabulate the extremal curves mu_n(lambda) < mu_e(lambda)
solve      both-branch solves at explicit or auto-multiplied mu values
sweep      full (lambda, mu) table with certificates
nonexist   sampled nonexistence certificates below mu_n

Outputs are CSV tables ('#'-prefixed header comments, 17-significant-digit
floats), JSON reports with stable key order, a gnuplot script, and a
manifest that suffices to re-run bit-identically.  Independent parameter
cells may run on a thread pool; all summation inside a cell is sequential
and deterministic, so tables do not depend on the worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .grid import BoxGrid, Field, PotentialPair, gaussian_bump
from .functionals import ProblemData
from .nfunction import (
    GrowthLaw,
    check_hypotheses,
    custom_from_csv,
    power,
    power_log,
    power_sum,
)
from .fibering import build_profile, nehari_roots
from .extremal import extremal_pair, lambda_n_floor, minimize_extremal
from . import solver as _solver

__all__ = ["RunConfig", "ConfigParseError", "main", "run_command"]

FLOAT_FMT = "%.17g"


class ConfigParseError(ValueError):
    """Config file could not be parsed or is missing required fields."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Validated run configuration (see docs/example configs in README)."""

    law_kind: str
    law_params: dict
    s: float
    dim: int
    n_per_axis: int
    q: float
    p: float
    lambdas: list
    mus: Optional[list] = None
    mu_multipliers: Optional[list] = None
    half_width: Optional[float] = None
    padding: Optional[int] = None
    V_spec: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    a_spec: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    seed: int = 0
    restarts: int = 4
    workers: int = 1
    samples: int = 200
    profile_points: int = 120
    branch: str = "both"
    seed_kind: str = "gaussian"
    outdir: str = "nrq-out"

    def to_dict(self) -> dict:
        return {
            "law": {"kind": self.law_kind, **self.law_params},
            "domain": {
                "s": self.s,
                "dim": self.dim,
                "n_per_axis": self.n_per_axis,
                "half_width": self.half_width,
                "padding": self.padding,
            },
            "potential": {"V": self.V_spec, "a": self.a_spec},
            "exponents": {"q": self.q, "p": self.p},
            "parameters": {
                "lambdas": self.lambdas,
                "mus": self.mus,
                "mu_multipliers": self.mu_multipliers,
            },
            "run": {
                "seed": self.seed,
                "restarts": self.restarts,
                "workers": self.workers,
                "samples": self.samples,
                "profile_points": self.profile_points,
                "branch": self.branch,
                "seed_kind": self.seed_kind,
                "outdir": self.outdir,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            law = dict(raw["law"])
            kind = law.pop("kind")
            dom = raw["domain"]
            expo = raw["exponents"]
            par = raw["parameters"]
        except KeyError as exc:
            raise ConfigParseError(f"missing config section/field: {exc}") from exc
        pot = raw.get("potential", {})
        run = raw.get("run", {})

        def _pot_spec(entry, default):
            if entry is None:
                return default
            if isinstance(entry, str):
                return {"kind": entry}
            return dict(entry)

        cfg = cls(
            law_kind=kind,
            law_params=law,
            s=float(dom["s"]),
            dim=int(dom.get("dim", 1)),
            n_per_axis=int(dom["n_per_axis"]),
            half_width=None if dom.get("half_width") is None else float(dom["half_width"]),
            padding=None if dom.get("padding") is None else int(dom["padding"]),
            q=float(expo["q"]),
            p=float(expo["p"]),
            lambdas=[float(v) for v in par["lambdas"]],
            mus=None if par.get("mus") is None else [float(v) for v in par["mus"]],
            mu_multipliers=None
            if par.get("mu_multipliers") is None
            else [float(v) for v in par["mu_multipliers"]],
            V_spec=_pot_spec(pot.get("V"), {"kind": "constant", "value": 1.0}),
            a_spec=_pot_spec(pot.get("a"), {"kind": "constant", "value": 1.0}),
            seed=int(run.get("seed", 0)),
            restarts=int(run.get("restarts", 4)),
            workers=int(run.get("workers", 1)),
            samples=int(run.get("samples", 200)),
            profile_points=int(run.get("profile_points", 120)),
            branch=str(run.get("branch", "both")),
            seed_kind=str(run.get("seed_kind", "gaussian")),
            outdir=str(run.get("outdir", "nrq-out")),
        )
        if sorted(cfg.lambdas) != cfg.lambdas or any(l <= 0 for l in cfg.lambdas):
            raise ConfigParseError("parameters.lambdas must be positive and sorted")
        if cfg.branch not in ("minus", "plus", "both"):
            raise ConfigParseError("run.branch must be minus|plus|both")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        text = path.read_text()
        try:
            if path.suffix == ".json":
                raw = json.loads(text)
            else:
                raw = tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigParseError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)


def build_law(cfg: RunConfig) -> GrowthLaw:
    kind, params = cfg.law_kind, cfg.law_params
    if kind == "power":
        return power(float(params["p"]))
    if kind == "power_sum":
        return power_sum(float(params["p"]), float(params["q"]))
    if kind == "power_log":
        return power_log(float(params["p"]))
    if kind == "custom":
        return custom_from_csv(params["csv"])
    raise ConfigParseError(f"unknown law kind {kind!r}")


def build_domain(cfg: RunConfig) -> tuple[BoxGrid, PotentialPair]:
    vk = cfg.V_spec.get("kind", "constant")
    L = cfg.half_width
    if L is None:
        if vk == "quadratic":
            # heuristic: boundary potential at least 10x the coercivity floor
            L = float(np.sqrt(10.0 * float(cfg.V_spec.get("value", 1.0))))
        else:
            raise ConfigParseError(
                "domain.half_width is required unless V is quadratic"
            )
    grid = BoxGrid(cfg.dim, L, cfg.n_per_axis)
    pts = grid.nodes()
    r2 = (pts**2).sum(axis=1)
    if vk == "constant":
        v0 = float(cfg.V_spec.get("value", 1.0))
        V = np.full(grid.n_nodes, v0)
    elif vk == "quadratic":
        v0 = float(cfg.V_spec.get("value", 1.0))
        V = v0 + r2
    elif vk == "file":
        V = np.loadtxt(cfg.V_spec["path"], delimiter=",", comments="#").ravel()
        v0 = float(V.min())
    else:
        raise ConfigParseError(f"unknown V kind {vk!r}")
    ak = cfg.a_spec.get("kind", "constant")
    if ak == "constant":
        a = np.full(grid.n_nodes, float(cfg.a_spec.get("value", 1.0)))
    elif ak == "gaussian":
        sigma = float(cfg.a_spec.get("sigma", 1.0))
        a = np.exp(-r2 / (2.0 * sigma**2))
    elif ak == "file":
        a = np.loadtxt(cfg.a_spec["path"], delimiter=",", comments="#").ravel()
    else:
        raise ConfigParseError(f"unknown a kind {ak!r}")
    return grid, PotentialPair(V, a, v0)


def build_problem(cfg: RunConfig, lam: float, mu: float, validate: bool = True) -> ProblemData:
    law = build_law(cfg)
    grid, pots = build_domain(cfg)
    return ProblemData(
        law, cfg.s, grid, pots, cfg.q, cfg.p, lam, mu,
        padding=cfg.padding, validate=validate,
    )


def seed_fields(cfg: RunConfig, grid: BoxGrid) -> list[Field]:
    rng = np.random.default_rng(cfg.seed)
    L = grid.half_width
    if cfg.seed_kind == "gaussian":
        out = [gaussian_bump(grid)]
    elif cfg.seed_kind == "two-bump":
        out = [Field(grid, gaussian_bump(grid, center=L / 2).values
                     + gaussian_bump(grid, center=-L / 2).values)]
    elif cfg.seed_kind == "random":
        out = [Field(grid, np.abs(rng.standard_normal(grid.n_nodes)) + 0.05)]
    else:
        raise ConfigParseError(f"unknown seed kind {cfg.seed_kind!r}")
    return out


# ---------------------------------------------------------------------------
# output bundle
# ---------------------------------------------------------------------------

class OutputBundle:
    """Collects tables/reports in memory; one writer flushes them to disk."""

    def __init__(self, outdir: Path):
        self.outdir = Path(outdir)
        self.tables: dict[str, tuple[list[str], list[str], list[list[float]]]] = {}
        self.reports: dict[str, dict] = {}
        self.plot_lines: list[str] = []
        self.flags: list[str] = []
        self.wall_times: dict[str, float] = {}

    def add_table(self, name: str, comments: list[str], columns: list[str],
                  rows: list[list[float]]) -> None:
        self.tables[name] = (comments, columns, rows)

    def add_report(self, name: str, payload: dict) -> None:
        self.reports[name] = payload

    def flag(self, message: str) -> None:
        self.flags.append(message)

    def write(self, manifest_extra: dict) -> None:
        self.outdir.mkdir(parents=True, exist_ok=True)
        for name, (comments, columns, rows) in self.tables.items():
            lines = [f"# {c}" for c in comments]
            lines.append(f"# columns: {','.join(columns)}")
            lines.append(",".join(columns))
            for row in rows:
                lines.append(",".join(
                    (FLOAT_FMT % v) if isinstance(v, float) else str(v) for v in row
                ))
            (self.outdir / f"{name}.csv").write_text("\n".join(lines) + "\n")
        for name, payload in self.reports.items():
            (self.outdir / f"{name}.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n"
            )
        if self.plot_lines:
            (self.outdir / "plot.gp").write_text("\n".join(self.plot_lines) + "\n")
        manifest = {
            "flags": self.flags,
            "versions": {
                "nrq": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
            "wall_times_s": self.wall_times,
            **manifest_extra,
        }
        (self.outdir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )


def _field_rows(u: Field) -> tuple[list[str], list[list[float]]]:
    pts = u.grid.nodes()
    if u.grid.dim == 1:
        return ["x", "value"], [[float(x), float(v)] for (x,), v in zip(pts, u.values)]
    return ["x", "y", "value"], [
        [float(x), float(y), float(v)] for (x, y), v in zip(pts, u.values)
    ]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_check(cfg: RunConfig, bundle: OutputBundle) -> int:
    law = build_law(cfg)
    report = check_hypotheses(law, cfg.s, cfg.dim, cfg.q, cfg.p)
    for line in report.lines():
        print(line)
    payload = {
        "all_pass": report.all_pass,
        "verdicts": {
            k: getattr(report, k)
            for k in ("regularity", "monotonicity", "index_bounds", "embedding", "doubling", "ordering", "product")
        },
        "details": {k: str(v) for k, v in report.details.items()},
    }
    bundle.add_report("hypothesis_check", payload)
    if not report.all_pass:
        bundle.flag("hypothesis check failed")
        return 2
    return 0


def cmd_fibering(cfg: RunConfig, bundle: OutputBundle) -> int:
    lam = cfg.lambdas[0]
    mus = cfg.mus or []
    pd = build_problem(cfg, lam, mus[0] if mus else 1.0)
    seed = seed_fields(cfg, pd.grid)[0]
    prof = build_profile(seed, pd, n_samples=cfg.profile_points)
    comments = [
        f"fibering profile along a normalized {cfg.seed_kind} ray",
        f"lambda = {FLOAT_FMT % lam}",
        f"t_crit = {FLOAT_FMT % prof.t_crit}  (ray minimum of Q_n)",
        f"s_crit = {FLOAT_FMT % prof.s_crit}  (ray minimum of Q_e)",
        f"lambda_n = {FLOAT_FMT % prof.lambda_n}",
        f"lambda_e = {FLOAT_FMT % prof.lambda_e}",
    ]
    marker_rows = []
    for mu in mus:
        roots = nehari_roots(prof.u, pd.with_params(mu=mu))
        if roots.status == "two":
            comments.append(
                f"mu = {FLOAT_FMT % mu}: roots t- = {FLOAT_FMT % roots.t_minus}, "
                f"t+ = {FLOAT_FMT % roots.t_plus}"
            )
            marker_rows.append([mu, roots.t_minus, roots.t_plus])
        elif roots.status == "degenerate":
            comments.append(f"mu = {FLOAT_FMT % mu}: degenerate root at t = "
                            f"{FLOAT_FMT % roots.t_crit}")
            marker_rows.append([mu, roots.t_crit, roots.t_crit])
        else:
            comments.append(f"mu = {FLOAT_FMT % mu}: no intersection (empty regime)")
    bundle.add_table("fibering", comments, ["t", "Q_n", "Q_e", "dQ_n"],
                     prof.sample_rows())
    if marker_rows:
        bundle.add_table("fibering_markers",
                         ["Nehari roots of Q_n(t) = mu per requested mu"],
                         ["mu", "t_minus", "t_plus"], marker_rows)
    bundle.plot_lines.extend([
        "set logscale x",
        "set xlabel 't'",
        "set ylabel 'Rayleigh quotients'",
        "plot 'fibering.csv' using 1:2 with lines title 'Q_n', \\",
        "     'fibering.csv' using 1:3 with lines title 'Q_e'",
    ])
    return 0


def _extremal_for(cfg: RunConfig, pd: ProblemData):
    return extremal_pair(pd, restarts=cfg.restarts, rng=cfg.seed)


def cmd_extremal(cfg: RunConfig, bundle: OutputBundle) -> int:
    rows = []
    code = 0
    warm_n = warm_e = None
    for lam in cfg.lambdas:
        pd = build_problem(cfg, lam, 1.0)
        t0 = time.perf_counter()
        un, mun, sn, _ = minimize_extremal(pd, "n", cfg.restarts, cfg.seed, warm_n)
        ue, mue, se, _ = minimize_extremal(pd, "e", cfg.restarts, cfg.seed, warm_e)
        bundle.wall_times[f"extremal_lambda_{lam:g}"] = time.perf_counter() - t0
        warm_n, warm_e = [un], [ue]
        floor = lambda_n_floor(pd)
        rows.append([lam, mun, mue, sn, se, floor])
        if not (0.0 < floor <= mun < mue):
            bundle.flag(f"extremal ordering violated at lambda = {lam:g}")
            code = 2
    bundle.add_table(
        "extremal",
        ["extremal parameter estimates (upper bounds; infima over sampled rays)",
         "mu_n/mu_e: best ray level found for each quotient; spread_* = max-min over restarts",
         "floor = analytic positive lower bound with the discrete embedding constant"],
        ["lambda", "mu_n", "mu_e", "spread_n", "spread_e", "floor"],
        rows,
    )
    bundle.plot_lines.extend([
        "set xlabel 'lambda'",
        "set ylabel 'mu'",
        "plot 'extremal.csv' using 1:2 with linespoints title 'mu_n', \\",
        "     'extremal.csv' using 1:3 with linespoints title 'mu_e'",
    ])
    return code


def _resolve_mus(cfg: RunConfig, mu_n_hat: float) -> list[float]:
    if cfg.mus is not None:
        return list(cfg.mus)
    if cfg.mu_multipliers is not None:
        return [m * mu_n_hat for m in cfg.mu_multipliers]
    raise ConfigParseError("need parameters.mus or parameters.mu_multipliers")


def _solve_cell(cfg: RunConfig, lam: float, extremal, pd_base: ProblemData, mu: float):
    pd = pd_base.with_params(lam=lam, mu=mu)
    seeds = [extremal.minimizer_n] + seed_fields(cfg, pd.grid)
    out = {"lambda": lam, "mu": mu, "mu_n_hat": extremal.mu_n, "mu_e_hat": extremal.mu_e}
    if mu < extremal.mu_n:
        cert = _solver.nonexistence_check(pd, cfg.samples, extremal.mu_n, rng=cfg.seed)
        out["nonexistence"] = cert.row()
        return out
    if mu <= extremal.mu_n * (1.0 + 1e-9):
        # degenerate band: the admissible cone collapses to the extremal ray
        out["degenerate_regime"] = True
        return out
    for branch in ("minus", "plus"):
        if cfg.branch not in (branch, "both"):
            continue
        rep = _solver.minimize_branch(pd, branch, seeds,
                                      extremal_anchor=extremal.minimizer_n)
        row = rep.row()
        row["certificates"] = [c.row() for c in rep.certificates]
        if branch == "plus":
            row["sign_diagnostics"] = _solver.sign_diagnostics(pd, rep, extremal.mu_e)
        out[branch] = row
        out[f"field_{branch}"] = rep.field
    return out


def _cells_exit_code(cells, bundle: OutputBundle) -> int:
    code = 0
    for cell in cells:
        for branch in ("minus", "plus"):
            row = cell.get(branch)
            if row is None:
                continue
            if not row["converged"]:
                bundle.flag(
                    f"unconverged {branch} solve at lambda={cell['lambda']:g}, "
                    f"mu={cell['mu']:g}"
                )
                code = max(code, 2)
            for cert in row["certificates"]:
                if not cert["satisfied"]:
                    bundle.flag(
                        f"certificate {cert['name']} violated at "
                        f"lambda={cell['lambda']:g}, mu={cell['mu']:g}"
                    )
                    code = max(code, 2)
    return code


def _run_cells(cfg: RunConfig, bundle: OutputBundle):
    """Shared orchestration for solve/sweep: extremal -> cells on a pool."""
    from .functionals import padding_tail_estimate

    pd_cache: dict[float, ProblemData] = {}
    extremals = {}
    pd0 = build_problem(cfg, cfg.lambdas[0], 1.0)
    bundle.add_report(
        "discretization",
        {
            "padding_shells": pd0.pairs.padding,
            "pair_count": int(pd0.pairs.i.size),
            "tail_estimate_gaussian_seed": padding_tail_estimate(
                seed_fields(cfg, pd0.grid)[0], pd0
            ),
        },
    )
    warm_n = warm_e = None
    for lam in cfg.lambdas:
        pd = pd0.with_params(lam=lam)
        t0 = time.perf_counter()
        un, mun, sn, _ = minimize_extremal(pd, "n", cfg.restarts, cfg.seed, warm_n)
        ue, mue, se, _ = minimize_extremal(pd, "e", cfg.restarts, cfg.seed, warm_e)
        warm_n, warm_e = [un], [ue]
        from .extremal import ExtremalResult

        extremals[lam] = ExtremalResult(
            lam=lam, mu_n=mun, mu_e=mue, minimizer_n=un, minimizer_e=ue,
            spread_n=sn, spread_e=se, lower_floor=lambda_n_floor(pd),
        )
        bundle.wall_times[f"extremal_lambda_{lam:g}"] = time.perf_counter() - t0
        pd_cache[lam] = pd

    tasks = []
    for lam in cfg.lambdas:
        for mu in _resolve_mus(cfg, extremals[lam].mu_n):
            tasks.append((lam, mu))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [
                pool.submit(_solve_cell, cfg, lam, extremals[lam], pd_cache[lam], mu)
                for lam, mu in tasks
            ]
            cells = [f.result() for f in futures]
    else:
        cells = [
            _solve_cell(cfg, lam, extremals[lam], pd_cache[lam], mu)
            for lam, mu in tasks
        ]
    return extremals, cells


def cmd_solve(cfg: RunConfig, bundle: OutputBundle) -> int:
    t0 = time.perf_counter()
    extremals, cells = _run_cells(cfg, bundle)
    bundle.wall_times["solve_total"] = time.perf_counter() - t0
    for idx, cell in enumerate(cells):
        payload = {k: v for k, v in cell.items() if not k.startswith("field_")}
        bundle.add_report(f"solution_{idx:03d}", payload)
        for branch in ("minus", "plus"):
            u = cell.get(f"field_{branch}")
            if u is not None:
                cols, rows = _field_rows(u)
                bundle.add_table(
                    f"field_{idx:03d}_{branch}",
                    [f"solution field, branch {branch}, lambda={cell['lambda']:g}, "
                     f"mu={cell['mu']:g}"],
                    cols, rows,
                )
    return _cells_exit_code(cells, bundle)


def cmd_sweep(cfg: RunConfig, bundle: OutputBundle) -> int:
    t0 = time.perf_counter()
    extremals, cells = _run_cells(cfg, bundle)
    bundle.wall_times["sweep_total"] = time.perf_counter() - t0
    rows = []
    for cell in cells:
        def g(branch, key):
            row = cell.get(branch)
            return float("nan") if row is None else row[key]

        rows.append([
            cell["lambda"], cell["mu"], cell["mu_n_hat"], cell["mu_e_hat"],
            g("minus", "energy"), g("plus", "energy"),
            g("minus", "norm"), g("plus", "norm"),
            g("minus", "residual"), g("plus", "residual"),
        ])
    bundle.add_table(
        "sweep",
        ["branch energies/norms/residuals per (lambda, mu) cell",
         "mu_n_hat/mu_e_hat: estimated extremal parameters at this lambda",
         "energy_*: constrained minimum of the energy on each branch",
         "norm_*: Luxemburg norm of the minimizer; resid_*: max_k |I'(u)e_k|/||e_k||",
         "nonexistence cells carry NaN branch columns (see solution reports)"],
        ["lambda", "mu", "mu_n_hat", "mu_e_hat", "energy_minus", "energy_plus",
         "norm_minus", "norm_plus", "resid_minus", "resid_plus"],
        rows,
    )
    for idx, cell in enumerate(cells):
        payload = {k: v for k, v in cell.items() if not k.startswith("field_")}
        bundle.add_report(f"cell_{idx:03d}", payload)
    bundle.plot_lines.extend([
        "set xlabel 'mu'",
        "set ylabel 'energy'",
        "plot 'sweep.csv' using 2:5 with linespoints title 'E-', \\",
        "     'sweep.csv' using 2:6 with linespoints title 'E+'",
    ])
    return _cells_exit_code(cells, bundle)


def cmd_nonexist(cfg: RunConfig, bundle: OutputBundle) -> int:
    rows = []
    code = 0
    for lam in cfg.lambdas:
        pd = build_problem(cfg, lam, 1.0)
        un, mun, _, _ = minimize_extremal(pd, "n", cfg.restarts, cfg.seed)
        for mu in _resolve_mus(cfg, mun):
            if mu >= mun:
                bundle.flag(f"mu = {mu:g} is not below mu_n_hat = {mun:g}; skipped")
                code = max(code, 2)
                continue
            cert = _solver.nonexistence_check(
                pd.with_params(mu=mu), cfg.samples, mun, rng=cfg.seed
            )
            rows.append([lam, mu, mun, cert.min_lambda_n, cert.margin,
                         float(cert.samples)])
            if cert.margin <= 0:
                bundle.flag(f"nonexistence margin not positive at lambda={lam:g}")
                code = max(code, 2)
    bundle.add_table(
        "nonexistence",
        ["sampled nonexistence certificates (not proofs): min_t Q_n(t) > mu",
         "margin = min over sampled rays of Lambda_n - mu"],
        ["lambda", "mu", "mu_n_hat", "min_lambda_n", "margin", "samples"],
        rows,
    )
    return code


COMMANDS = {
    "check": cmd_check,
    "fibering": cmd_fibering,
    "extremal": cmd_extremal,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "nonexist": cmd_nonexist,
}


def run_command(command: str, cfg: RunConfig, outdir: Optional[str] = None) -> int:
    bundle = OutputBundle(Path(outdir or cfg.outdir))
    t0 = time.perf_counter()
    code = COMMANDS[command](cfg, bundle)
    bundle.wall_times["total"] = time.perf_counter() - t0
    bundle.write({"command": command, "config": cfg.to_dict(), "exit_code": code})
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nrq",
        description="Nehari / nonlinear Rayleigh quotient solver for nonlocal "
                    "Phi-Laplacian problems",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML or JSON run config")
    parser.add_argument("--outdir", default=None, help="override run.outdir")
    parser.add_argument("--workers", type=int, default=None, help="override run.workers")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="solve at this single lambda")
    parser.add_argument("--mu", type=float, default=None,
                        help="solve at this single explicit mu")
    parser.add_argument("--branch", choices=["minus", "plus", "both"], default=None)
    parser.add_argument("--law", default=None,
                        help="law kind override (power|power_sum|power_log)")
    parser.add_argument("--grid-n", type=int, default=None,
                        help="override domain.n_per_axis")
    parser.add_argument("--box-L", type=float, default=None,
                        help="override domain.half_width")
    parser.add_argument("--seed-kind", choices=["gaussian", "two-bump", "random"],
                        default=None)
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
        if args.lam is not None:
            cfg.lambdas = [args.lam]
        if args.mu is not None:
            cfg.mus, cfg.mu_multipliers = [args.mu], None
        if args.branch is not None:
            cfg.branch = args.branch
        if args.law is not None:
            cfg.law_kind = args.law
        if args.grid_n is not None:
            cfg.n_per_axis = args.grid_n
        if args.box_L is not None:
            cfg.half_width = args.box_L
        if args.seed_kind is not None:
            cfg.seed_kind = args.seed_kind
        return run_command(args.command, cfg, outdir=args.outdir)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
