"""Experiment harness: config files, CSV traces and summary tables.

A config is one flat TOML document.  ``problem``, ``solver`` and ``seeds``
are required; ``out`` and ``time_budget_s`` are optional; any
:class:`~lancbio.solvers.SolverConfig` field sets the solver configuration;
every other key is passed to the problem builder.  A list value (other than
``seeds``) turns the key into a grid axis and the file expands to the
cross-product of all axes.
"""

from __future__ import annotations

import csv
import itertools
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigParse, EmptyInput, UnknownProblem, UnknownSolver
from .problems import PROBLEMS, build_problem, problem_params
from .solvers import SOLVERS, TRACE_COLUMNS, SolverConfig, run_solver

RUN_KEYS = ("problem", "solver", "seeds", "out", "time_budget_s")
SOLVER_KEYS = tuple(f.name for f in fields(SolverConfig) if f.name not in ("seed", "time_budget_s"))
SUMMARY_METRICS = ("iter", "hypergrad_norm", "residual_norm", "upper_value",
                   "lower_grad_norm", "test_metric", "n_hvp", "n_jvp", "n_grad", "wall_time_s")
TRACE_NAME = re.compile(r"^(?P<problem>[^_].*?)__(?P<solver>.+?)__cell(?P<cell>\d+)__seed(?P<seed>-?\d+)$")


@dataclass
class RunConfig:
    """One grid cell: a problem instance, a solver and the seeds to run."""

    problem: str
    solver: str
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    problem_params: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    time_budget_s: float | None = None
    out: str = "runs"
    cell: int = 0

    def config_for_seed(self, seed: int) -> SolverConfig:
        params = asdict(self.solver_config)
        params.update(seed=seed, time_budget_s=self.time_budget_s)
        return SolverConfig(**params)

    def trace_name(self, seed: int) -> str:
        return f"{self.problem}__{self.solver}__cell{self.cell:03d}__seed{seed}.csv"


def _expect(key, value, kind):
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "bool": isinstance(value, bool),
        "str": isinstance(value, str),
    }[kind]
    if not ok:
        raise ConfigParse(f"field {key!r}: expected {kind}, got {value!r}")
    return float(value) if kind == "float" else value


_SOLVER_KINDS = {}
for _f in fields(SolverConfig):
    _t = str(_f.type)
    _SOLVER_KINDS[_f.name] = "bool" if "bool" in _t else "int" if _t.startswith("int") else "float"


def _cell(base: dict, cell: int) -> RunConfig:
    problem = _expect("problem", base["problem"], "str")
    solver = _expect("solver", base["solver"], "str")
    if problem not in PROBLEMS:
        raise UnknownProblem(
            f"field 'problem': unknown problem {problem!r}; known: {', '.join(sorted(PROBLEMS))}"
        )
    if solver not in SOLVERS:
        raise UnknownSolver(f"field 'solver': unknown solver {solver!r}; known: {', '.join(SOLVERS)}")
    allowed = problem_params(problem)
    solver_kw, problem_kw = {}, {}
    for key, value in base.items():
        if key in RUN_KEYS:
            continue
        if key in SOLVER_KEYS:
            solver_kw[key] = _expect(key, value, _SOLVER_KINDS[key])
        elif key in allowed:
            problem_kw[key] = value
        else:
            raise ConfigParse(f"field {key!r}: unknown key for problem {problem!r}")
    try:
        solver_config = SolverConfig(**solver_kw)
    except ValueError as exc:
        raise ConfigParse(f"solver configuration: {exc}") from exc
    budget = base.get("time_budget_s")
    return RunConfig(
        problem=problem,
        solver=solver,
        solver_config=solver_config,
        problem_params=problem_kw,
        seeds=list(base["seeds"]),
        time_budget_s=None if budget is None else _expect("time_budget_s", budget, "float"),
        out=_expect("out", base.get("out", "runs"), "str"),
        cell=cell,
    )


def parse_config(text: str) -> list[RunConfig]:
    """Parse config text and expand its grid into one :class:`RunConfig` per cell."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParse(f"invalid TOML: {exc}") from exc
    for key in ("problem", "solver", "seeds"):
        if key not in doc:
            raise ConfigParse(f"field {key!r}: missing")
    for key, value in doc.items():
        if isinstance(value, dict):
            raise ConfigParse(f"field {key!r}: tables are not allowed, keep the file flat")
    seeds = doc["seeds"]
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigParse(f"field 'seeds': expected a nonempty list of integers, got {seeds!r}")
    doc["seeds"] = seeds

    axes = [k for k, v in doc.items() if k != "seeds" and isinstance(v, list)]
    for key in axes:
        if not doc[key]:
            raise ConfigParse(f"field {key!r}: empty grid axis")
    cells = []
    for idx, combo in enumerate(itertools.product(*(doc[k] for k in axes))):
        base = dict(doc)
        base.update(zip(axes, combo))
        cells.append(_cell(base, idx))
    return cells


def load_config(path) -> list[RunConfig]:
    return parse_config(Path(path).read_text())


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        text = repr(value)
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def dump_config(cfg: RunConfig) -> str:
    """Serialize a single cell so that ``parse_config`` returns it unchanged."""
    lines = [
        f"problem = {_toml_value(cfg.problem)}",
        f"solver = {_toml_value(cfg.solver)}",
        f"seeds = {_toml_value(list(cfg.seeds))}",
        f"out = {_toml_value(cfg.out)}",
    ]
    if cfg.time_budget_s is not None:
        lines.append(f"time_budget_s = {_toml_value(float(cfg.time_budget_s))}")
    for key in SOLVER_KEYS:
        lines.append(f"{key} = {_toml_value(getattr(cfg.solver_config, key))}")
    for key, value in cfg.problem_params.items():
        if value is not None:
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_cell(cfg: RunConfig, seed: int, out_dir, extra_params: dict | None = None) -> Path:
    """Run one ``(cell, seed)`` pair, streaming rows to its CSV file."""
    params = dict(cfg.problem_params)
    params.update(extra_params or {})
    problem = build_problem(cfg.problem, seed=seed, **params)
    path = Path(out_dir) / cfg.trace_name(seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        fh.flush()

        def emit(record):
            writer.writerow([_format(v) for v in record.row()])
            fh.flush()

        run_solver(cfg.solver, problem, cfg.config_for_seed(seed), callback=emit)
    return path


def run_experiment(cells: list[RunConfig], out_dir=None, jobs: int = 1,
                   extra_params: dict | None = None, seeds: list | None = None) -> list[Path]:
    """Run every ``(cell, seed)``; returns trace paths in cell/seed order.

    ``out_dir``, ``seeds`` and ``extra_params`` override what the config
    says (the CLI's ``--out``, ``--seed`` and dataset flags).
    """
    jobs_list = []
    for cfg in cells:
        target = Path(out_dir if out_dir is not None else cfg.out)
        target.mkdir(parents=True, exist_ok=True)
        (target / f"cell{cfg.cell:03d}.toml").write_text(dump_config(cfg))
        for seed in (seeds if seeds is not None else cfg.seeds):
            jobs_list.append((cfg, seed, target))
    if jobs <= 1:
        return [run_cell(c, s, t, extra_params) for c, s, t in jobs_list]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_cell, c, s, t, extra_params) for c, s, t in jobs_list]
        return [f.result() for f in futures]


def read_trace(path) -> list[dict]:
    """Parse a trace CSV; a file cut short mid-run still yields its full rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        rows = []
        for raw in reader:
            if len(raw) != len(header):
                break
            rows.append({k: (float(v) if v != "" else None) for k, v in zip(header, raw)})
    return rows


def trace_keys(path) -> dict:
    stem = Path(path).stem
    match = TRACE_NAME.match(stem)
    if match is None:
        return {"problem": stem, "solver": "", "cell": "", "seed": ""}
    return match.groupdict()


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.asarray(vals, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def summarize(paths, group_by=("problem", "solver", "cell")) -> list[dict]:
    """Mean and sample standard deviation of final-row metrics per group."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise EmptyInput("no trace files to summarize")
    groups: dict[tuple, list[dict]] = {}
    for path in sorted(paths):
        rows = read_trace(path)
        if not rows:
            continue
        keys = trace_keys(path)
        groups.setdefault(tuple(keys[k] for k in group_by), []).append(rows[-1])
    if not groups:
        raise EmptyInput("trace files contain no rows")
    table = []
    for key, finals in groups.items():
        row = dict(zip(group_by, key))
        row["n_runs"] = len(finals)
        for metric in SUMMARY_METRICS:
            mean, std = _mean_std(f.get(metric) for f in finals)
            row[f"{metric}_mean"] = mean
            row[f"{metric}_std"] = std
        table.append(row)
    return table


def write_summary_csv(table: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0]), lineterminator="\n")
        writer.writeheader()
        for row in table:
            writer.writerow({k: _format(v) for k, v in row.items()})


def format_summary(table: list[dict], metrics=("hypergrad_norm", "residual_norm",
                                               "upper_value", "test_metric")) -> str:
    """Aligned text table with ``mean ± std`` cells."""
    keys = [k for k in table[0] if not k.endswith(("_mean", "_std"))]
    header = keys + list(metrics)
    body = []
    for row in table:
        cells = [str(row[k]) for k in keys]
        for metric in metrics:
            mean, std = row[f"{metric}_mean"], row[f"{metric}_std"]
            cells.append("-" if mean is None else f"{mean:.4e} ± {std:.2e}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body]
    return "\n".join(lines)
