"""File formats: pattern CSVs, datasets, JSON-lines traces, grid and PCF tables, provenance."""
from __future__ import annotations

import csv
import json
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import DataFormatError, DomainError
from .gp import LMCParams
from .pattern import Domain, MarkedPattern, PointPattern

COORD_NAMES = ("x", "y")


def fmt(value: float) -> str:
    return "%.17g" % value


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def provenance(config: dict | None = None, seed: int | None = None, **extra) -> dict:
    """Config echo, seed, package version and source revision for output headers."""
    return {"coxthin_version": __version__, "git": git_describe(), "seed": seed, "config": config, **extra}


def _comment_lines(prov: dict | None) -> list[str]:
    if prov is None:
        return []
    return ["# " + json.dumps(prov, sort_keys=True, default=_json_default)]


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, LMCParams):
        return {"A": obj.A.tolist(), "rho": obj.rho.tolist(), "mu": obj.mu.tolist()}
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dumps(obj, **kw) -> str:
    return json.dumps(obj, default=_json_default, **kw)


# patterns -----------------------------------------------------------------------

def pattern_header(pattern: MarkedPattern) -> list[str]:
    cols = list(COORD_NAMES[: pattern.domain.d])
    if pattern.times is not None:
        cols.append("t")
    cols += [f"g{k + 1}" for k in range(pattern.n_marks)]
    if pattern.colours is not None:
        cols.append("colour")
    return cols


def write_pattern_csv(path, pattern, prov: dict | None = None) -> Path:
    """Write ``x,y[,t][,g1..gp][,colour]`` with 17 significant digits; provenance as ``#`` lines."""
    if isinstance(pattern, PointPattern):
        pattern = MarkedPattern._trusted(pattern.points, pattern.domain)
    path = Path(path)
    cols = [pattern.locations]
    if pattern.times is not None:
        cols.append(pattern.times[:, None])
    if pattern.marks is not None:
        cols.append(pattern.marks)
    body = np.hstack(cols) if len(pattern) else np.zeros((0, sum(c.shape[1] for c in cols)))
    lines = _comment_lines(prov) + [",".join(pattern_header(pattern))]
    for i, row in enumerate(body):
        fields = [fmt(v) for v in row]
        if pattern.colours is not None:
            fields.append(str(int(pattern.colours[i])))
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n")
    return path


def _data_rows(path: Path):
    """Yield ``(line_number, fields)`` skipping comment lines; the first yielded row is the header."""
    with path.open(newline="") as fh:
        reader = csv.reader(line for line in fh)
        for fields in reader:
            lineno = reader.line_num
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if fields[0].lstrip().startswith("#"):
                continue
            yield lineno, [f.strip() for f in fields]


def read_pattern_csv(path, domain: Domain) -> MarkedPattern:
    """Inverse of :func:`write_pattern_csv`."""
    path = Path(path)
    rows = _data_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise DataFormatError(f"{path} has no header", 1) from None
    coords = list(COORD_NAMES[: domain.d])
    if header[: domain.d] != coords:
        raise DataFormatError(f"header must start with {','.join(coords)}, got {header}", 1)
    has_t = "t" in header
    mark_cols = [i for i, h in enumerate(header) if h.startswith("g") and h[1:].isdigit()]
    colour_col = header.index("colour") if "colour" in header else None
    locs, times, marks, colours = [], [], [], []
    for lineno, f in rows:
        if len(f) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(f)}", lineno)
        try:
            locs.append([float(v) for v in f[: domain.d]])
            if has_t:
                times.append(float(f[header.index("t")]))
            marks.append([float(f[i]) for i in mark_cols])
            if colour_col is not None:
                colours.append(int(f[colour_col]))
        except ValueError as exc:
            raise DataFormatError(str(exc), lineno) from None
    n = len(locs)
    return MarkedPattern(
        np.array(locs, dtype=float).reshape(n, domain.d), domain,
        times=np.array(times) if has_t else None,
        marks=np.array(marks, dtype=float).reshape(n, len(mark_cols)) if mark_cols else None,
        colours=np.array(colours, dtype=np.int64) if colour_col is not None else None,
    )


# datasets -----------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Observed points split by type, with the common domain."""

    patterns: tuple[PointPattern, ...]
    domain: Domain
    type_names: tuple[str, ...]

    @property
    def counts(self) -> dict[str, int]:
        return {name: len(p) for name, p in zip(self.type_names, self.patterns)}

    @property
    def p(self) -> int:
        return len(self.patterns)


def load_csv(path, domain: Domain, type_column: str | None = "type", rescale: bool = False,
             source_bounds: tuple[Sequence[float], Sequence[float]] | None = None) -> Dataset:
    """Read ``x,y[,type]`` rows into a :class:`Dataset`.

    Without ``rescale`` every point must already lie in ``domain``.  With it,
    coordinates are mapped affinely from ``source_bounds`` (default: the data
    bounding box) onto ``domain``.  Types keep first-appearance order.
    """
    path = Path(path)
    rows = _data_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise DataFormatError(f"{path} has no header", 1) from None
    coords = list(COORD_NAMES[: domain.d])
    missing = [c for c in coords if c not in header]
    if missing:
        raise DataFormatError(f"header lacks column(s) {missing}", 1)
    idx = [header.index(c) for c in coords]
    t_idx = header.index(type_column) if type_column and type_column in header else None
    pts, labels, lines = [], [], []
    for lineno, f in rows:
        if len(f) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(f)}", lineno)
        try:
            pts.append([float(f[i]) for i in idx])
        except ValueError:
            raise DataFormatError(f"non-numeric coordinate in {f}", lineno) from None
        if not np.all(np.isfinite(pts[-1])):
            raise DataFormatError("non-finite coordinate", lineno)
        labels.append(f[t_idx] if t_idx is not None else "all")
        lines.append(lineno)
    pts = np.array(pts, dtype=float).reshape(-1, domain.d)
    if rescale and len(pts):
        src_lo, src_hi = (pts.min(axis=0), pts.max(axis=0)) if source_bounds is None else map(np.asarray, source_bounds)
        span = np.where(src_hi > src_lo, src_hi - src_lo, 1.0)
        lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
        pts = np.clip(lo + (pts - src_lo) / span * (hi - lo), lo, hi)
    outside = ~domain.contains(pts)
    if np.any(outside):
        k = int(np.flatnonzero(outside)[0])
        raise DomainError(f"line {lines[k]}: point {pts[k].tolist()} outside the domain (use --rescale)")
    names = list(dict.fromkeys(labels)) or ["all"]
    labels = np.array(labels, dtype=object)
    patterns = tuple(PointPattern(pts[labels == name], domain) for name in names)
    return Dataset(patterns, domain, tuple(names))


# traces -------------------------------------------------------------------------

def write_trace_jsonl(path, trace, prov: dict | None = None) -> Path:
    """One header line, then one line per kept iteration (with latent state if stored)."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(dumps({"type": "header", **(prov or {}), "meta": trace.meta,
                        "domain": None if trace.dom is None else
                        {"lower": list(trace.dom.lower), "upper": list(trace.dom.upper)}}, sort_keys=True) + "\n")
        for k, rec in enumerate(trace.records):
            line = {"type": "iteration", **rec}
            if trace.latent is not None:
                snap = trace.latent[k]
                line["latent"] = {"locations": snap["locations"], "values": snap["values"],
                                  "colours": snap["colours"]}
            fh.write(dumps(line, sort_keys=True) + "\n")
    return path


def read_trace_jsonl(path):
    """Rebuild a :class:`~coxthin.mtsgcp.gibbs.Trace` (latent states included when present)."""
    from .mtsgcp.gibbs import Trace

    path = Path(path)
    records, latent, header = [], [], None
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(str(exc), lineno) from None
            if obj.get("type") == "header":
                header = obj
                continue
            obj.pop("type", None)
            snap = obj.pop("latent", None)
            records.append(obj)
            if snap is not None:
                lmc = LMCParams(obj["A"], obj["rho"], obj["mu"])
                latent.append({"locations": np.asarray(snap["locations"], dtype=float),
                               "values": np.asarray(snap["values"], dtype=float),
                               "colours": np.asarray(snap["colours"], dtype=np.int64),
                               "lam": obj["lam"], "lmc": lmc})
    dom = None
    if header and header.get("domain"):
        dom = Domain(tuple(header["domain"]["lower"]), tuple(header["domain"]["upper"]))
    return Trace(records=records, latent=latent or None, dom=dom, meta=(header or {}).get("meta", {}))


# tables -------------------------------------------------------------------------

def write_grid_csv(path, grid: np.ndarray, prov: dict | None = None) -> Path:
    """A 2D (or 1D) grid as a CSV matrix; rows are ``y`` from bottom to top."""
    path = Path(path)
    grid = np.atleast_2d(grid)
    lines = _comment_lines(prov) + [",".join(fmt(v) for v in row) for row in grid]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_pcf_csv(path, rows: Iterable[dict], prov: dict | None = None) -> Path:
    path = Path(path)
    lines = _comment_lines(prov) + ["r,pair,mean,lo95,hi95"]
    for r in rows:
        lines.append(f"{fmt(r['r'])},{r['pair']},{fmt(r['mean'])},{fmt(r['lo95'])},{fmt(r['hi95'])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(out_dir, files: Sequence[Path], prov: dict) -> Path:
    out_dir = Path(out_dir)
    return write_json(out_dir / "manifest.json",
                      {"provenance": prov, "files": sorted(str(Path(f).relative_to(out_dir)) for f in files)})
