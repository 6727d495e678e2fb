"""Command line driver.

Every subcommand reads a point cloud (CSV, or the binary format when the
file ends in ``.bin``) or generates one with ``--shape``, builds the
Markov chain, eigenbasis and carre du champ blocks from the global options,
and writes CSV or JSON to ``--output`` (stdout by default).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import sys
import time
import tracemalloc
import warnings
from contextlib import nullcontext
from dataclasses import asdict, dataclass
from math import comb

import click
import numpy as np

from . import geometry, pde, shapes, tda
from .carre_du_champ import GammaTensors, KForm, gamma_blocks, visualize_form
from .function_space import FunctionBasis, eigenbasis
from .kernel import MarkovModel, markov_from_points, merge_duplicates
from .operators import calculus

FLOAT_FMT = "%.17g"


# ------------------------------------------------------------------ config
@dataclass(frozen=True)
class PipelineConfig:
    knn: int = 32
    bandwidth_rank: int = 8
    n0: int = 50
    n1: int | None = None
    condition_target: float = 1e5
    smooth_coords: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("knn", "bandwidth_rank", "n0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n1 is not None and not 0 < self.n1 <= self.n0:
            raise ValueError(f"n1={self.n1} must lie in [1, n0={self.n0}]")
        if self.condition_target <= 1:
            raise ValueError("condition_target must exceed 1")

    @property
    def n1_eff(self) -> int:
        return min(self.n0, 50) if self.n1 is None else self.n1


@dataclass
class Pipeline:
    points: np.ndarray
    model: MarkovModel
    basis: FunctionBasis
    gt: GammaTensors
    config: PipelineConfig

    @property
    def calc(self):
        return calculus(self.gt)


def build_pipeline(points, config: PipelineConfig) -> Pipeline:
    """Kernel, eigenbasis and Gamma blocks for a cloud."""
    X = np.asarray(points, dtype=float)
    uniq, counts, _ = merge_duplicates(X)
    weights = None
    if len(uniq) < len(X):
        warnings.warn(f"merged {len(X) - len(uniq)} duplicate points; outputs index the "
                      "unique points in sorted order", RuntimeWarning)
        X, weights = uniq, counts
    n = len(X)
    knn = min(config.knn, n - 1)
    model = markov_from_points(X, knn=knn, neighbor_rank=min(config.bandwidth_rank, knn),
                               weights=weights)
    basis = eigenbasis(model, min(config.n0, n))
    n1 = min(config.n1_eff, basis.n0)
    gt = gamma_blocks(model, basis, X, n1, coords="smooth" if config.smooth_coords else "raw")
    calc = calculus(gt)
    calc.condition_target = config.condition_target
    return Pipeline(X, model, basis, gt, config)


# --------------------------------------------------------------------- I/O
def read_binary(path: str) -> np.ndarray:
    """Column-major float64 with an 8-byte header (u32 n, u32 d, little-endian)."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) == 0:
            raise click.UsageError(f"input {path} is empty")
        if len(head) < 8:
            raise click.ClickException(f"{path}: truncated header")
        n, d = struct.unpack("<II", head)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * d:
        raise click.ClickException(f"{path}: header says {n}x{d} but found {data.size} values")
    return data.reshape(d, n).T.copy()


def write_binary(path: str, X: np.ndarray) -> None:
    X = np.asarray(X, dtype="<f8")
    n, d = X.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", n, d))
        fh.write(np.asfortranarray(X).T.tobytes())


def read_csv(path: str, skip_header: bool = False) -> np.ndarray:
    """Numeric CSV with a consistent column count; errors name the row and column."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if skip_header and rows:
        rows = rows[1:]
    if not rows:
        raise click.UsageError(f"input {path} is empty")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    first = 2 if skip_header else 1
    for r, row in enumerate(rows):
        if len(row) != width:
            raise click.ClickException(
                f"{path}: row {r + first} has {len(row)} columns, expected {width}")
        for c, val in enumerate(row):
            try:
                out[r, c] = float(val)
            except ValueError:
                raise click.ClickException(
                    f"{path}: row {r + first}, column {c + 1}: cannot parse {val!r} as a number"
                ) from None
    if not np.all(np.isfinite(out)):
        r, c = np.argwhere(~np.isfinite(out))[0]
        raise click.ClickException(f"{path}: row {r + first}, column {c + 1} is not finite")
    return out


def read_points(path: str, skip_header: bool = False) -> np.ndarray:
    if path.endswith(".bin"):
        return read_binary(path)
    return read_csv(path, skip_header)


def read_values(path: str, n: int, columns: int | None = None) -> np.ndarray:
    """Per-point values; a leading point-index column is dropped when present."""
    A = read_csv(path)
    if A.shape[0] != n:
        raise click.ClickException(f"{path}: expected {n} rows, found {A.shape[0]}")
    if columns is not None and A.shape[1] == columns + 1 and np.array_equal(A[:, 0], np.arange(n)):
        A = A[:, 1:]
    if columns is not None and A.shape[1] != columns:
        raise click.ClickException(f"{path}: expected {columns} value columns, found {A.shape[1]}")
    return A


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def write_table(out, header: list[str], rows) -> None:
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")


def _to_json(o, indent: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(o, np.ndarray):
        o = o.tolist()
    elif isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, bool) or o is None:
        return json.dumps(o)
    if isinstance(o, int):
        return str(o)
    if isinstance(o, float):
        return FLOAT_FMT % o if math.isfinite(o) else "null"
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in o.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(o, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in o):
            return "[" + ", ".join(_to_json(v) for v in o) + "]"
        return "[\n" + ",\n".join(inner + _to_json(v, indent + 1) for v in o) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dump_json(obj, out) -> None:
    out.write(_to_json(obj) + "\n")


def _open_out(path):
    return open(path, "w", newline="") if path and path != "-" else nullcontext(sys.stdout)


# --------------------------------------------------------------- threading
def _thread_limit(threads: int):
    env = os.environ.get("PCGEOM_THREADS")
    if env is not None:
        threads = int(env)
    if threads <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


# --------------------------------------------------------------- commands
@click.group()
@click.option("--knn", default=32, show_default=True, help="Kernel neighbours.")
@click.option("--bandwidth-rank", default=8, show_default=True, help="Neighbour rank for rho.")
@click.option("--n0", default=50, show_default=True, help="Function basis size.")
@click.option("--n1", default=None, type=int, help="Coefficient basis size [min(n0, 50)].")
@click.option("--condition", "condition_target", default=1e5, show_default=True,
              help="Gram pseudoinverse condition target.")
@click.option("--smooth-coords/--raw-coords", default=False, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Seed for bundled shapes.")
@click.option("--threads", default=0, show_default=True, help="BLAS threads (0 = auto).")
@click.pass_context
def main(ctx, knn, bandwidth_rank, n0, n1, condition_target, smooth_coords, seed, threads):
    """Calculus, geometry and topology on point clouds."""
    try:
        cfg = PipelineConfig(knn, bandwidth_rank, n0, n1, condition_target, smooth_coords, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    ctx.obj = {"config": cfg}
    ctx.with_resource(_thread_limit(threads))


def _input_options(f):
    f = click.option("--output", "-o", default="-", help="Output path (stdout by default).")(f)
    f = click.option("--skip-header", is_flag=True, help="Ignore the first CSV row.")(f)
    f = click.option("--n", "shape_n", default=1000, show_default=True,
                     help="Sample size for --shape.")(f)
    f = click.option("--shape", type=click.Choice(sorted(shapes.SHAPES)), default=None,
                     help="Use a bundled sample instead of INPUT.")(f)
    f = click.argument("input_path", required=False, metavar="[INPUT]")(f)
    return f


def _load(ctx, input_path, shape, shape_n, skip_header) -> Pipeline:
    cfg = ctx.obj["config"]
    if shape is not None:
        X = shapes.make(shape, shape_n, seed=cfg.seed)
    elif input_path is None:
        raise click.UsageError("give an INPUT file or --shape")
    else:
        if not os.path.exists(input_path):
            raise click.UsageError(f"input {input_path} does not exist")
        if os.path.getsize(input_path) == 0:
            raise click.UsageError(f"input {input_path} is empty")
        X = read_points(input_path, skip_header)
    if len(X) < 3:
        raise click.UsageError("need at least 3 points")
    return build_pipeline(X, cfg)


def _function_arg(pl: Pipeline, function_path, coord) -> np.ndarray:
    """Coefficients of a function given as a file of n values or a coordinate index."""
    if function_path is not None:
        f = read_values(function_path, pl.basis.n, 1)[:, 0]
    elif coord is not None:
        if not 0 <= coord < pl.points.shape[1]:
            raise click.UsageError(f"--coord must lie in [0, {pl.points.shape[1]})")
        f = pl.points[:, coord]
    else:
        raise click.UsageError("give --function or --coord")
    return pl.basis.project(f)


def _form_arg(pl: Pipeline, path, k: int) -> np.ndarray:
    C = comb(pl.gt.d, k)
    F = read_values(path, pl.basis.n, C)
    return (pl.gt.U1.T @ (pl.gt.mu[:, None] * F)).ravel()


@main.command()
@_input_options
@click.option("--eigvals", "eig_path", default=None, help="Also write eigenvalues as JSON here.")
@click.pass_context
def basis(ctx, input_path, shape, shape_n, skip_header, output, eig_path):
    """Eigenfunction basis as CSV (point, phi_0, ...)."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    U = pl.basis.U
    with _open_out(output) as out:
        write_table(out, ["point"] + [f"phi_{i}" for i in range(U.shape[1])],
                    ([p, *U[p]] for p in range(len(U))))
    if eig_path:
        with open(eig_path, "w") as fh:
            dump_json({"eigvals": pl.basis.lam}, fh)


@main.command()
@_input_options
@click.option("--function", "function_path", default=None, help="CSV of n function values.")
@click.option("--coord", type=int, default=None, help="Use coordinate j as the function.")
@click.pass_context
def gradient(ctx, input_path, shape, shape_n, skip_header, output, function_path, coord):
    """Gradient arrows (point, v_0, ...)."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    f = _function_arg(pl, function_path, coord)
    A = pl.calc.arrows(pl.calc.gradient() @ f)
    with _open_out(output) as out:
        write_table(out, ["point"] + [f"v_{j}" for j in range(A.shape[1])],
                    ([p, *A[p]] for p in range(len(A))))


@main.command()
@_input_options
@click.option("--degree", "-k", default=1, show_default=True)
@click.option("--num", "-m", default=10, show_default=True)
@click.option("--up", type=click.Choice(["direct", "projected"]), default="direct",
              show_default=True)
@click.pass_context
def hodge(ctx, input_path, shape, shape_n, skip_header, output, degree, num, up):
    """Low Hodge Laplacian spectrum as JSON."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    _check_degree(pl, degree)
    w, _ = pl.calc.harmonic_spectrum(degree, num, up)
    G = pl.calc.gram(degree)
    with _open_out(output) as out:
        dump_json({"degree": degree, "eigvals": w, "gram_B": G.B, "gram_rank": G.rank}, out)


def _check_degree(pl: Pipeline, k: int) -> None:
    if not 0 <= k <= pl.gt.d:
        raise click.UsageError(f"degree must lie in [0, {pl.gt.d}]")


@main.command()
@_input_options
@click.option("--form", "form_path", required=True,
              help="CSV of per-point form components (n rows, C(d, k) columns).")
@click.option("--degree", "-k", default=1, show_default=True)
@click.pass_context
def decompose(ctx, input_path, shape, shape_n, skip_header, output, form_path, degree):
    """Hodge decomposition; per-point exact, coexact and harmonic components."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    _check_degree(pl, degree)
    a = _form_arg(pl, form_path, degree)
    parts = pl.calc.hodge_decomposition(a, degree)
    cols = [pl.calc.functions(getattr(parts, name), degree)
            for name in ("exact", "coexact", "harmonic")]
    C = cols[0].shape[1]
    header = ["point"] + [f"{name}_{j}" for name in ("exact", "coexact", "harmonic")
                          for j in range(C)]
    M = np.hstack(cols)
    with _open_out(output) as out:
        write_table(out, header, ([p, *M[p]] for p in range(len(M))))


def _times(text: str) -> np.ndarray:
    """"a:b:m" gives m evenly spaced times from a to b; otherwise a comma list."""
    try:
        if ":" in text:
            a, b, m = text.split(":")
            ts = np.linspace(float(a), float(b), int(m))
        else:
            ts = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise click.UsageError(f"cannot parse --times {text!r}") from None
    if ts.size == 0 or np.any(ts < 0) or np.any(np.diff(ts) < 0):
        raise click.UsageError("--times must be non-negative and ascending")
    return ts


@main.command(name="pde")
@_input_options
@click.option("--equation", type=click.Choice(["heat", "wave", "damped"]), default="heat",
              show_default=True)
@click.option("--function", "function_path", default=None, help="CSV of n initial values.")
@click.option("--coord", type=int, default=None, help="Use coordinate j as initial data.")
@click.option("--times", default="0:1:11", show_default=True, help="a:b:m or a comma list.")
@click.option("--gamma", default=0.1, show_default=True, help="Friction for --equation damped.")
@click.pass_context
def pde_cmd(ctx, input_path, shape, shape_n, skip_header, output, equation, function_path,
            coord, times, gamma):
    """Heat or wave evolution; CSV (time, point, value)."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    f = _function_arg(pl, function_path, coord)
    ts = _times(times)
    if equation == "heat":
        tr = pde.heat(pl.gt, f, ts)
    else:
        tr = pde.wave(pl.gt, f, ts, gamma=gamma if equation == "damped" else 0.0)
    _write_frames(output, ts, pl.basis.U @ tr.states.T)


def _write_frames(output, ts, V) -> None:
    with _open_out(output) as out:
        write_table(out, ["time", "point", "value"],
                    ([t, p, V[p, i]] for i, t in enumerate(ts) for p in range(V.shape[0])))


@main.command()
@_input_options
@click.option("--field", "field_path", default=None,
              help="CSV of per-point vector field components (n rows, d columns).")
@click.option("--grad-coord", type=int, default=None, help="Use grad x_j as the field.")
@click.option("--function", "function_path", default=None)
@click.option("--coord", type=int, default=None)
@click.option("--times", default="0:1:11", show_default=True)
@click.option("--curves", is_flag=True, help="Emit integral curves, not a transported function.")
@click.pass_context
def flow(ctx, input_path, shape, shape_n, skip_header, output, field_path, grad_coord,
         function_path, coord, times, curves):
    """Transport along a vector field; CSV frames."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    if field_path is not None:
        X = _form_arg(pl, field_path, 1)
    elif grad_coord is not None:
        X = pl.calc.coordinate_field(grad_coord)
    else:
        raise click.UsageError("give --field or --grad-coord")
    ts = _times(times)
    if curves:
        P = pde.integral_curves(X, ts, pl.basis, pl.gt)
        d = P.shape[2]
        with _open_out(output) as out:
            write_table(out, ["time", "point"] + [f"x_{j}" for j in range(d)],
                        ([t, p, *P[i, p]] for i, t in enumerate(ts) for p in range(P.shape[1])))
        return
    f = _function_arg(pl, function_path, coord)
    tr = pde.vf_flow(X, f, ts, pl.basis, pl.gt)
    _write_frames(output, ts, pl.basis.U @ tr.states.T)


@main.command()
@_input_options
@click.option("--source", type=int, required=True, help="Source point index.")
@click.pass_context
def geodesic(ctx, input_path, shape, shape_n, skip_header, output, source):
    """Geodesic distance from one point; CSV (point, distance)."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    if not 0 <= source < pl.basis.n:
        raise click.UsageError(f"--source must lie in [0, {pl.basis.n})")
    res = geometry.geodesic_solve(source, pl.basis, pl.gt)
    with _open_out(output) as out:
        write_table(out, ["point", "distance"], ([p, v] for p, v in enumerate(res.distance)))
    if not res.converged:
        click.echo(f"warning: solver status {res.status}, max constraint {res.max_constraint}",
                   err=True)


@main.command()
@_input_options
@click.option("--fields", default="coords", show_default=True,
              help='"coords" for all coordinate-gradient pairs, or X.csv,Y.csv.')
@click.pass_context
def curvature(ctx, input_path, shape, shape_n, skip_header, output, fields):
    """Sectional curvature; CSV (point, K) with empty K where undefined."""
    ctx.obj["config"] = _smooth(ctx.obj["config"])
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    if fields == "coords":
        cv = geometry.coordinate_curvature(pl.basis, pl.gt)
    else:
        try:
            xp, yp = fields.split(",")
        except ValueError:
            raise click.UsageError('--fields must be "coords" or two comma-separated files')
        X, Y = _form_arg(pl, xp, 1), _form_arg(pl, yp, 1)
        cv = geometry.sectional_curvature(X, Y, pl.basis, pl.gt)
    with _open_out(output) as out:
        out.write("point,K\n")
        for p, k in enumerate(cv.K):
            out.write(f"{p},{'' if np.isnan(k) else FLOAT_FMT % k}\n")


def _smooth(cfg: PipelineConfig) -> PipelineConfig:
    """Second-order operators and the topology commands use smoothed coordinates."""
    return PipelineConfig(**{**asdict(cfg), "smooth_coords": True})


@main.command(name="tda")
@_input_options
@click.option("--degree", "-k", default=1, show_default=True)
@click.option("--num", "-m", default=10, show_default=True)
@click.option("--ratio", default=tda.GAP_RATIO, show_default=True, help="Spectral gap ratio.")
@click.option("--forms-dir", default=None, help="Write one visualisation CSV per eigenform.")
@click.pass_context
def tda_cmd(ctx, input_path, shape, shape_n, skip_header, output, degree, num, ratio, forms_dir):
    """Harmonic spectrum and Betti estimate as JSON."""
    ctx.obj["config"] = _smooth(ctx.obj["config"])
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    _check_degree(pl, degree)
    s = tda.harmonic_forms(pl.basis, pl.gt, degree, num, ratio)
    with _open_out(output) as out:
        dump_json({"degree": degree, "eigvals": s.eigvals, "gap_index": s.gap_index}, out)
    if forms_dir:
        os.makedirs(forms_dir, exist_ok=True)
        for i, a in enumerate(s.eigforms):
            _write_visual(os.path.join(forms_dir, f"form_{degree}_{i}"), a, pl)


def _visual_columns(a: KForm, pl: Pipeline):
    """Per-point columns and JSON records for one form, or None without a reduction."""
    n = pl.gt.n
    if a.degree == 0:
        V = (pl.basis.U @ a.coeffs)[:, None]
        return V, [{"point": p, "scalar": V[p, 0]} for p in range(n)]
    try:
        vis = visualize_form(a, pl.gt)
    except ValueError:
        return None
    if vis.vectors is not None:
        V = vis.vectors
        return V, [{"point": p, "vector": V[p]} for p in range(n)]
    if vis.scalar is not None:
        V = vis.scalar[:, None]
        return V, [{"point": p, "scalar": V[p, 0]} for p in range(n)]
    V = np.c_[vis.magnitude, vis.plane.reshape(n, -1)]
    return V, [{"point": p, "plane": vis.plane[p], "magnitude": vis.magnitude[p]}
               for p in range(n)]


def _write_visual(stem, a: KForm, pl: Pipeline) -> None:
    """Flat CSV (point, components) and JSON records for one form."""
    cols = _visual_columns(a, pl)
    if cols is None:
        return
    V, records = cols
    with open(stem + ".csv", "w") as fh:
        write_table(fh, ["point"] + [f"c_{j}" for j in range(V.shape[1])],
                    ([p, *V[p]] for p in range(len(V))))
    with open(stem + ".json", "w") as fh:
        dump_json(records, fh)


@main.command()
@_input_options
@click.option("--form", "form_path", default=None, help="CSV of per-point 1-form components.")
@click.option("--harmonic", "which", default=0, show_default=True,
              help="Without --form, use this harmonic 1-form.")
@click.option("--eps", default=1.0, show_default=True)
@click.pass_context
def circular(ctx, input_path, shape, shape_n, skip_header, output, form_path, which, eps):
    """Circular coordinate; CSV (point, angle)."""
    ctx.obj["config"] = _smooth(ctx.obj["config"])
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    if form_path is not None:
        a = KForm(1, _form_arg(pl, form_path, 1))
    else:
        a = tda.harmonic_forms(pl.basis, pl.gt, 1, max(which + 1, 2)).eigforms[which]
    try:
        ang, _ = tda.circular_coordinates(a, pl.basis, pl.gt, eps)
    except tda.NoRotationalMode as exc:
        raise click.ClickException(str(exc)) from None
    with _open_out(output) as out:
        write_table(out, ["point", "angle"], ([p, v] for p, v in enumerate(ang)))


@main.command()
@_input_options
@click.option("--function", "function_path", default=None)
@click.option("--coord", type=int, default=None)
@click.pass_context
def morse(ctx, input_path, shape, shape_n, skip_header, output, function_path, coord):
    """Critical points with Morse index; CSV (point, index, degenerate)."""
    pl = _load(ctx, input_path, shape, shape_n, skip_header)
    f = _function_arg(pl, function_path, coord)
    cps = tda.morse_analysis(f, pl.basis, pl.gt)
    with _open_out(output) as out:
        write_table(out, ["point", "index", "degenerate"],
                    ([c.index_in_cloud, c.morse_index, int(c.degenerate)] for c in cps))


# ------------------------------------------------------------------- bench
def parse_sizes(text: str) -> list[int]:
    """"a..b" doubles from a while below b and ends at b; otherwise a comma list."""
    if ".." in text:
        a, b = (int(s) for s in text.split(".."))
        if a <= 0 or b < a:
            raise click.BadParameter("need 0 < a <= b in a..b")
        out, n = [], a
        while n < b:
            out.append(n)
            n *= 2
        return out + [b]
    sizes = [int(s) for s in text.split(",")]
    if sizes != sorted(sizes):
        raise click.BadParameter("sizes must be ascending")
    return sizes


def time_pipeline(X: np.ndarray, degree: int, config: PipelineConfig) -> tuple[float, int]:
    """Seconds and traced peak bytes from kernel build to the degree-k Hodge Laplacian."""
    tracemalloc.start()
    t0 = time.perf_counter()
    pl = build_pipeline(X, config)
    pl.calc.hodge_laplacian(degree)
    seconds = time.perf_counter() - t0
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return seconds, peak


def loglog_slopes(rows) -> dict[int, float]:
    """Least-squares slope of log(seconds) against log(n) for each degree."""
    out = {}
    for k in sorted({r[1] for r in rows}):
        n = np.array([r[0] for r in rows if r[1] == k], dtype=float)
        t = np.array([r[2] for r in rows if r[1] == k])
        if len(n) >= 2:
            out[k] = float(np.polyfit(np.log(n), np.log(t), 1)[0])
    return out


def benchmark_scaling(shape: str, sizes, degrees, config: PipelineConfig, trace_memory=True):
    """Timing rows (n, degree, seconds, peak_mem) and per-degree log-log slopes."""
    rows = []
    for n in sizes:
        X = shapes.make(shape, n, seed=config.seed)
        for k in degrees:
            if trace_memory:
                sec, peak = time_pipeline(X, k, config)
            else:
                t0 = time.perf_counter()
                pl = build_pipeline(X, config)
                pl.calc.hodge_laplacian(k)
                sec, peak = time.perf_counter() - t0, 0
            rows.append((n, k, sec, peak))
    return rows, loglog_slopes(rows)


@main.command()
@click.option("--shape", type=click.Choice(sorted(shapes.SHAPES)), default="torus",
              show_default=True)
@click.option("--sizes", default="1000..12000", show_default=True)
@click.option("--degrees", default="0,1,2", show_default=True)
@click.option("--output", "-o", default="-")
@click.option("--slopes", "slopes_path", default=None, help="Write slopes JSON here.")
@click.pass_context
def bench(ctx, shape, sizes, degrees, output, slopes_path):
    """Scaling benchmark; CSV (n, degree, seconds, peak_mem) and slopes on stderr."""
    cfg = ctx.obj["config"]
    ks = [int(k) for k in degrees.split(",")]
    rows, slopes = benchmark_scaling(shape, parse_sizes(sizes), ks, cfg)
    with _open_out(output) as out:
        write_table(out, ["n", "degree", "seconds", "peak_mem"], rows)
    payload = {"slopes": {str(k): v for k, v in slopes.items()}}
    if slopes:
        payload["max_slope_spread"] = max(slopes.values()) - min(slopes.values())
    if slopes_path:
        with open(slopes_path, "w") as fh:
            dump_json(payload, fh)
    else:
        buf = io.StringIO()
        dump_json(payload, buf)
        click.echo(buf.getvalue(), err=True, nl=False)


def run(subcommand: str, config: PipelineConfig, input_path: str | None = None,
        output_path: str | None = None, args=()) -> int:
    """Run one subcommand in-process and return its exit code."""
    argv = ["--knn", str(config.knn), "--bandwidth-rank", str(config.bandwidth_rank),
            "--n0", str(config.n0), "--condition", repr(config.condition_target),
            "--seed", str(config.seed),
            "--smooth-coords" if config.smooth_coords else "--raw-coords"]
    if config.n1 is not None:
        argv += ["--n1", str(config.n1)]
    argv.append(subcommand)
    if input_path is not None:
        argv.append(input_path)
    if output_path is not None:
        argv += ["--output", output_path]
    try:
        main.main(argv + list(args), standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    return 0


if __name__ == "__main__":
    main()
