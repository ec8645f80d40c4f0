"""Experiment harness: ``frontbddc solve`` runs one configuration, ``frontbddc sweep`` many.

Every flag can also be given in a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes); flags on the command line
win. Exit codes: 0 converged, 2 not converged, 1 error.
"""
import argparse
import csv
import itertools
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from .estimator import BDDCSolver
from .mesh import generate_cube, read_mesh
from .partition import divide_rcb, divide_regular
from .validation import COARSE_SPACES

log = logging.getLogger("frontbddc")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class PhaseError(RuntimeError):
    def __init__(self, phase, exc):
        self.phase = phase
        self.original = exc
        super().__init__(f"{phase}: {type(exc).__name__}: {exc}")


@dataclass(frozen=True)
class ExperimentConfig:
    cube: int = None
    mesh: str = None
    parts: tuple = None
    rcb: int = None
    coarse: str = "corners+edges+faces"
    extra_corners: int = 0
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 500
    csv: str = None

    def __post_init__(self):
        if (self.cube is None) == (self.mesh is None):
            raise ValueError("give exactly one of cube / mesh")
        if self.cube is not None and self.cube < 1:
            raise ValueError("cube must be positive")
        if self.parts is None and self.rcb is None:
            object.__setattr__(self, "parts", (2, 2, 2))
        if self.parts is not None and self.rcb is not None:
            raise ValueError("give at most one of parts / rcb")
        if self.parts is not None:
            object.__setattr__(self, "parts", tuple(int(p) for p in self.parts))
            if len(self.parts) != 3 or min(self.parts) < 1:
                raise ValueError("parts needs three positive counts")
        if self.rcb is not None and self.rcb < 1:
            raise ValueError("rcb must be positive")
        if self.coarse not in COARSE_SPACES:
            raise ValueError(f"coarse must be one of {', '.join(COARSE_SPACES)}")
        if self.extra_corners < 0 or self.max_iter < 0:
            raise ValueError("counts must be nonnegative")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")

    @property
    def label(self):
        extra = f" +{self.extra_corners}c" if self.extra_corners else ""
        return f"{self.coarse}{extra}"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    iterations: int = None
    cond_est: float = None
    t_fact_s: float = None
    t_iter_s: float = None
    t_total_s: float = None
    converged: bool = False
    n_corners: int = None
    n_edges: int = None
    n_faces: int = None
    n_averages: int = None
    coarse_dim: int = None
    t_setup_s: float = None
    final_residual: float = None
    error: str = ""
    residuals: tuple = field(default=(), repr=False)


_CONFIG_COLUMNS = [f.name for f in fields(ExperimentConfig)]
_RESULT_COLUMNS = [f.name for f in fields(ExperimentResult) if f.name != "config"]
CSV_COLUMNS = _CONFIG_COLUMNS + _RESULT_COLUMNS

_INT = {"cube", "rcb", "extra_corners", "seed", "max_iter", "iterations", "n_corners", "n_edges", "n_faces",
        "n_averages", "coarse_dim"}
_FLOAT = {"tol", "cond_est", "t_fact_s", "t_iter_s", "t_total_s", "t_setup_s", "final_residual"}


def _fmt(name, value):
    if value is None:
        return "n/a" if name == "cond_est" else ""
    if name == "parts":
        return ",".join(map(str, value))
    if name == "residuals":
        return ";".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name, text):
    if name == "error":
        return text
    if text in ("", "n/a"):
        return () if name == "residuals" else None
    if name == "parts":
        return tuple(int(p) for p in text.split(","))
    if name == "residuals":
        return tuple(float(v) for v in text.split(";"))
    if name == "converged":
        return text == "True"
    if name in _INT:
        return int(text)
    if name in _FLOAT:
        return float(text)
    return text


def result_to_row(result):
    row = {k: _fmt(k, getattr(result.config, k)) for k in _CONFIG_COLUMNS}
    row.update({k: _fmt(k, getattr(result, k)) for k in _RESULT_COLUMNS})
    return row


def row_to_result(row):
    cfg = ExperimentConfig(**{k: _parse(k, row[k]) for k in _CONFIG_COLUMNS})
    return ExperimentResult(cfg, **{k: _parse(k, row[k]) for k in _RESULT_COLUMNS})


def write_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(result_to_row(r))


def read_csv(path):
    with open(path, newline="") as fh:
        return [row_to_result(row) for row in csv.DictReader(fh)]


def run(config, n_jobs=None):
    """Build the mesh and decomposition, set up BDDC, solve, and collect the result."""
    t_start = time.perf_counter()
    phase = "mesh"
    try:
        mesh = generate_cube(config.cube) if config.cube is not None else read_mesh(config.mesh)
        phase = "partition"
        dec = divide_rcb(mesh, config.rcb) if config.rcb is not None else divide_regular(mesh, config.parts)
        phase = "setup"
        solver = BDDCSolver(
            coarse=config.coarse,
            extra_corners=config.extra_corners,
            seed=config.seed,
            tol=config.tol,
            max_iter=config.max_iter,
            n_jobs=n_jobs,
        ).fit(mesh, dec)
        phase = "solve"
        solver.predict()
    except Exception as exc:
        raise PhaseError(phase, exc) from exc
    rep = solver.report_
    plan = solver.plan_
    result = ExperimentResult(
        config=config,
        iterations=rep.iterations,
        cond_est=rep.cond_est,
        t_fact_s=solver.timings_["factorization"],
        t_iter_s=rep.timings["iterations"],
        t_total_s=time.perf_counter() - t_start,
        converged=rep.converged,
        n_corners=len(plan.corners),
        n_edges=plan.n_edges,
        n_faces=plan.n_faces,
        n_averages=len(plan.average_rows),
        coarse_dim=plan.coarse_dimension,
        t_setup_s=solver.timings_["setup"],
        final_residual=rep.final_residual,
        residuals=tuple(rep.residuals),
    )
    if config.csv:
        write_csv([result], config.csv)
    return result


def sweep(configs, n_jobs=None):
    """Run configurations in order; a failing one is recorded in its row and the sweep goes on."""
    results = []
    for cfg in configs:
        try:
            results.append(run(cfg, n_jobs))
        except PhaseError as exc:
            log.error("%s failed: %s", cfg.label, exc)
            results.append(ExperimentResult(cfg, error=str(exc)))
    return results


_TABLE_ROWS = [
    ("iterations", "iterations", "{}"),
    ("cond. number est.", "cond_est", "{:.0f}"),
    ("factorization (sec)", "t_fact_s", "{:.2f}"),
    ("pcg iter (sec)", "t_iter_s", "{:.2f}"),
    ("total (sec)", "t_total_s", "{:.2f}"),
]


def format_table(results):
    """Aligned text: one column per configuration; rows for iterations, condition estimate and timings."""
    if not results:
        return ""
    header = ["coarse problem"] + [r.config.label for r in results]
    body = []
    for title, attr, spec in _TABLE_ROWS:
        cells = [title]
        for r in results:
            v = getattr(r, attr)
            if r.error:
                cells.append("error")
            elif v is None:
                cells.append("n/a")
            elif attr == "iterations" and not r.converged:
                cells.append(f">{v}")
            else:
                cells.append(spec.format(v))
        body.append(cells)
    widths = [max(len(row[k]) for row in [header] + body) for k in range(len(header))]
    lines = ["  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(row, widths))) for row in [header] + body]
    return "\n".join(lines) + "\n"


def _read_config_file(path):
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _build_parser():
    p = argparse.ArgumentParser(prog="frontbddc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi):
        sp.add_argument("--config", help="key = value file with defaults for any flag")
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--cube", type=int, help="generate the unit cube with N elements per edge")
        src.add_argument("--mesh", help="read a MESH v1 file")
        part = sp.add_mutually_exclusive_group()
        part.add_argument("--parts", help="regular division PX,PY,PZ (default 2,2,2)")
        part.add_argument("--rcb", type=int, help="recursive coordinate bisection into N subdomains")
        if multi:
            sp.add_argument("--coarse", help="comma-separated coarse spaces, or 'all' (default)")
            sp.add_argument("--extra-corners", help="comma-separated counts of random extra corners (default 0)")
        else:
            sp.add_argument("--coarse", choices=COARSE_SPACES)
            sp.add_argument("--extra-corners", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int)
        sp.add_argument("--csv", help="write results as CSV")
        sp.add_argument("--jobs", type=int, default=None, help="threads for per-subdomain work")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("solve", help="run one configuration"), multi=False)
    sw = sub.add_parser("sweep", help="run coarse-space variants and added-corner counts")
    common(sw, multi=True)
    sw.add_argument("--table", help="write the aligned text table here (default: stdout)")
    return p


_KEYS = ("cube", "mesh", "parts", "rcb", "coarse", "extra_corners", "seed", "tol", "max_iter", "csv")


def _merged(args):
    values = _read_config_file(args.config) if args.config else {}
    unknown = set(values) - set(_KEYS) - {"table", "jobs"}
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in _KEYS + ("table", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if "mesh" in values and args.cube is not None:
        values.pop("mesh")
    if "cube" in values and args.mesh is not None:
        values.pop("cube")
    if "parts" in values and args.rcb is not None:
        values.pop("parts")
    if "rcb" in values and args.parts is not None:
        values.pop("rcb")
    return values


def _config(values, **override):
    v = dict(values, **override)
    kw = {}
    for key in ("cube", "rcb", "extra_corners", "seed", "max_iter"):
        if v.get(key) is not None:
            kw[key] = int(v[key])
    if v.get("tol") is not None:
        kw["tol"] = float(v["tol"])
    if v.get("parts") is not None:
        p = v["parts"]
        kw["parts"] = tuple(int(x) for x in p.split(",")) if isinstance(p, str) else tuple(p)
    for key in ("mesh", "coarse", "csv"):
        if v.get(key) is not None:
            kw[key] = str(v[key])
    return ExperimentConfig(**kw)


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which is reserved for non-convergence here
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        values = _merged(args)
        jobs = int(values["jobs"]) if values.get("jobs") is not None else None
        if args.command == "solve":
            cfg = _config(values)
            result = run(cfg, jobs)
            sys.stdout.write(format_table([result]))
            return EXIT_OK if result.converged else EXIT_NOT_CONVERGED

        coarse = values.get("coarse") or "all"
        variants = list(COARSE_SPACES) if coarse == "all" else [c.strip() for c in str(coarse).split(",")]
        extras = [int(x) for x in str(values.get("extra_corners", "0")).split(",")]
        base = {k: v for k, v in values.items() if k not in ("coarse", "extra_corners", "csv", "table", "jobs")}
        configs = [_config(base, coarse=c, extra_corners=e) for e, c in itertools.product(extras, variants)]
    except PhaseError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        log.error("error: %s", exc)
        return EXIT_ERROR

    results = sweep(configs, jobs)
    table = format_table(results)
    if values.get("table"):
        Path(values["table"]).write_text(table)
    else:
        sys.stdout.write(table)
    if values.get("csv"):
        write_csv(results, values["csv"])
    if any(r.error for r in results):
        return EXIT_ERROR
    return EXIT_OK if all(r.converged for r in results) else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
