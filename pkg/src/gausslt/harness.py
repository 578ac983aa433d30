"""Experiment runner: dispatches a configuration to the numerical modules and
renders the result as CSV with a provenance comment line."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, build_operator, operator_sequence
from .gram import VerifyReport
from .hilbert import builtin_operator, make_grid
from .lemmas import run_verify_suite
from .localtime import (convergence_table, mc_convergence_gap, mc_selfoverlap, second_moment_exact,
                        selfoverlap_expectation)
from .selfx import (EmptyRegionError, bridge_selfx_moment, classify_limit, mc_bridge_selfx,
                    planar_selfx_moment, selfx_discrete_expectation, spans_three_decades)
from .sim import bridge_paths, integrator_paths

log = logging.getLogger(__name__)

__all__ = ["SuiteResult", "RunOutput", "run", "write_output", "emit_plotdata", "DEFAULT_MOMENT_GRID"]

#: Exact moments use at most this many cells unless ``moment_grid`` is set.
DEFAULT_MOMENT_GRID = 1024


@dataclass(frozen=True)
class SuiteResult:
    reports: tuple[tuple[str, VerifyReport], ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for _, r in self.reports)


@dataclass
class RunOutput:
    config: ExperimentConfig
    header: list[str]
    rows: list[list]
    exit_code: int = 0
    suite: SuiteResult | None = None
    messages: list[str] = field(default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        c = self.config
        buf.write(f"# gausslt {__version__} command={c.command} seed={c.seed} config_sha256={c.sha256}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _moment_grid(cfg: ExperimentConfig):
    cfg.require("grid")
    return make_grid(cfg.moment_grid or min(cfg.grid, DEFAULT_MOMENT_GRID))


def _run_simulate(cfg):
    cfg.require("grid", "reps", "seed")
    grid = make_grid(cfg.grid)
    reps = np.arange(cfg.reps)
    if cfg.a:
        paths = bridge_paths(np.asarray(cfg.a), grid, cfg.seed, reps)
    else:
        A = build_operator(cfg, grid)
        paths = np.stack([integrator_paths(A, cfg.seed, reps, c) for c in range(cfg.dim)], axis=1)
    dim = paths.shape[1]
    header = ["replicate", "t"] + [f"x{c + 1}" for c in range(dim)]
    t = grid.nodes
    rows = [[r, t[k]] + [paths[r, c, k] for c in range(dim)] for r in range(len(reps)) for k in range(len(t))]
    return header, rows, 0, None, []


def _run_verify(cfg):
    cfg.require("seed")
    reports = run_verify_suite(cfg.seed, workers=cfg.threads, trials=cfg.trials)
    suite = SuiteResult(tuple((r.name, r) for r in reports))
    rows = [r.csv_row() for r in reports]
    msgs = [r.summary() for r in reports]
    for r in reports:
        if not r.passed:
            msgs.append(f"witness for {r.name}:\n{r.witness_json()}")
    return ["check", "trials", "worst_margin", "seed", "status"], rows, 0 if suite.passed else 1, suite, msgs


def _run_lt_moments(cfg):
    cfg.require("grid", "eps", "reps")
    mgrid = _moment_grid(cfg)
    exact = second_moment_exact(build_operator(cfg, mgrid), cfg.refinement)
    mc_mean = mc_se = expected = None
    if cfg.reps > 0:
        cfg.require("seed")
        A = build_operator(cfg, make_grid(cfg.grid))
        mc_mean, mc_se = mc_selfoverlap(A, cfg.eps, cfg.reps, cfg.seed, cfg.threads)
        expected = selfoverlap_expectation(A, cfg.eps)
    header = ["operator", "grid", "moment_grid", "refinement", "exact_value", "error_estimate",
              "mc_mean", "mc_se", "mc_expected", "eps"]
    row = [cfg.operator, cfg.grid, mgrid.n_cells, cfg.refinement, exact.value, exact.error_estimate,
           mc_mean, mc_se, expected, cfg.eps]
    return header, [row], 0, None, [f"second moment {exact.value:.10g} +- {exact.error_estimate:.2e}"]


def _run_lt_converge(cfg):
    cfg.require("grid", "eps", "reps")
    mgrid = _moment_grid(cfg)
    seq = operator_sequence(cfg, mgrid)
    table = convergence_table(seq, builtin_operator("identity", mgrid), cfg.ns, cfg.refinement)
    rows = []
    if cfg.reps > 0:
        cfg.require("seed")
        fgrid = make_grid(cfg.grid)
        fseq = operator_sequence(cfg, fgrid)
        ident = builtin_operator("identity", fgrid)
    for r in table:
        mc = (None, None)
        if cfg.reps > 0:
            mc = mc_convergence_gap(fseq(r["n"]), ident, cfg.eps, cfg.reps, cfg.seed, cfg.threads)
        rows.append([r["n"], r["value"], mc[0], mc[1], r["error_estimate"]])
    msgs = [f"sup_n |A_n^-1| = {max(r['inverse_norm'] for r in table):.6g}"]
    return ["n", "exact_value", "mc_mean", "mc_se", "refinement_error"], rows, 0, None, msgs


def _run_selfx_1d(cfg):
    if not cfg.a:
        raise ConfigError("selfx-1d needs a (comma-separated endpoint values)")
    if cfg.reps is None:
        raise ConfigError("selfx-1d needs explicit reps (0 for exact values only) or a preset")
    if cfg.reps > 0:
        cfg.require("grid", "eps", "seed")
    rows = []
    for a in cfg.a:
        exact = bridge_selfx_moment(a, cfg.refinement + 1) if cfg.p == 1 else None
        mc_mean = mc_se = expected = None
        if cfg.reps > 0:
            mc_mean, mc_se = mc_bridge_selfx(a, cfg.p, cfg.eps, cfg.reps, 1, None, cfg.grid, cfg.seed, cfg.threads)
            if cfg.p == 1:
                expected = selfx_discrete_expectation(abs(a), cfg.eps, 1, None, cfg.grid)
        rows.append([a, cfg.p, exact, mc_mean, mc_se, expected])
    return ["a", "p", "exact", "mc_mean", "mc_se", "mc_expected"], rows, 0, None, []


def _run_selfx_planar(cfg):
    if not cfg.a or not cfg.alpha:
        raise ConfigError("selfx-planar needs a and alpha")
    if cfg.reps is None:
        raise ConfigError("selfx-planar needs explicit reps (0 for exact values only) or a preset")
    if cfg.reps > 0:
        cfg.require("grid", "eps", "seed")
    a_norms = [abs(x) for x in cfg.a]
    spans = spans_three_decades(a_norms)
    rows, msgs = [], []
    for alpha in cfg.alpha:
        verdict = str(classify_limit(alpha, a_norms, cfg.refinement + 1)) if spans else "n/a"
        msgs.append(f"alpha={alpha:g}: {verdict}")
        for an in a_norms:
            exact = planar_selfx_moment(an, alpha, cfg.refinement + 1)
            mc_mean = mc_se = None
            if cfg.reps > 0:
                mc_mean, mc_se = mc_bridge_selfx([an, 0.0], 1, cfg.eps, cfg.reps, 2, alpha, cfg.grid,
                                                 cfg.seed, cfg.threads)
            rows.append([an, alpha, exact, mc_mean, mc_se, verdict])
    return ["a_norm", "alpha", "exact", "mc_mean", "mc_se", "classification"], rows, 0, None, msgs


def _run_plotdata(cfg):
    if not cfg.input or not cfg.output:
        raise ConfigError("plotdata needs input (CSV) and output (directory)")
    files = emit_plotdata(cfg.input, cfg.output)
    return ["file"], [[f] for f in files], 0, None, [f"wrote {len(files)} series file(s)"]


_DISPATCH = {
    "simulate": _run_simulate,
    "verify": _run_verify,
    "lt-moments": _run_lt_moments,
    "lt-converge": _run_lt_converge,
    "selfx-1d": _run_selfx_1d,
    "selfx-planar": _run_selfx_planar,
    "plotdata": _run_plotdata,
}


def run(config: ExperimentConfig) -> RunOutput:
    """Run one experiment.  Configuration problems raise :class:`ConfigError`."""
    cfg = config.with_preset().validate()
    try:
        header, rows, code, suite, msgs = _DISPATCH[cfg.command](cfg)
    except EmptyRegionError as exc:
        raise ConfigError(str(exc)) from exc
    return RunOutput(cfg, header, rows, code, suite, msgs)


def write_output(out: RunOutput, stream=None):
    """Write the CSV to ``config.output`` (atomically) or to ``stream``."""
    text = out.csv_text()
    target = out.config.output
    if target and target != "-" and out.config.command != "plotdata":
        path = Path(target)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
    else:
        (stream or io.StringIO()).write(text)
    return text


# ---------------------------------------------------------------- plot data

_ERR = {"exact_value": "refinement_error", "mc_mean": "mc_se", "exact": None, "value": "error_estimate"}
_X_PRIORITY = ("n", "a_norm", "a", "t", "check")
_LOG_X = ("a_norm", "a")
_GROUP = ("alpha", "replicate", "p")


def _read_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return (rows[0], rows[1:]) if rows else (None, [])


def _number(s):
    try:
        return float(s)
    except ValueError:
        return None


def emit_plotdata(csv_path, out_dir) -> list[str]:
    """Split a result CSV into ``x y [err]`` text files, one per series.

    Files are named ``<stem>__<y>[__<group>=<value>].dat``; ``a`` and
    ``a_norm`` axes are written as natural logs.
    """
    header, rows = _read_csv(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if header is None:
        return []
    xcol = next((c for c in _X_PRIORITY if c in header), header[0])
    group = next((g for g in _GROUP if g in header and g != xcol), None)
    skip = {xcol, group} | {e for e in _ERR.values() if e}
    ycols = [c for c in header if c not in skip and c not in ("seed", "status", "classification",
                                                                 "operator", "eps")]
    # y columns must be numeric somewhere (or the CSV is empty)
    if rows:
        ycols = [c for c in ycols if any(_number(r[header.index(c)]) is not None for r in rows)]
    xi = header.index(xcol)
    gi = header.index(group) if group else None
    groups = sorted({r[gi] for r in rows}, key=lambda g: (_number(g) is None, _number(g) or 0, g)) if gi is not None and rows else [None]
    stem = Path(csv_path).stem
    written = []
    for g in groups:
        for yc in ycols:
            yi = header.index(yc)
            err = _ERR.get(yc)
            ei = header.index(err) if err in header else None
            name = f"{stem}__{yc}" + (f"__{group}={g}" if g is not None else "") + ".dat"
            lines = []
            for idx, r in enumerate(rows):
                if g is not None and r[gi] != g:
                    continue
                y = _number(r[yi])
                if y is None:
                    continue
                x = _number(r[xi])
                if x is None:
                    x = float(idx)
                elif xcol in _LOG_X:
                    x = math.log(abs(x)) if x != 0 else -math.inf
                e = _number(r[ei]) if ei is not None else None
                lines.append(" ".join(repr(v) for v in ((x, y) if e is None else (x, y, e))))
            (out / name).write_text("".join(ln + "\n" for ln in lines))
            written.append(str(out / name))
    return written
