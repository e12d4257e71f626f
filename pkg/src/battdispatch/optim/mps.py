"""MPS export/import and external solution files.

Lines use the classic fixed columns whenever every name fits in 8
characters and every number in 12; otherwise fields are separated by single
spaces (the free-MPS convention), which the reader also accepts.  Names must
not contain whitespace.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .model import INF, LinearProgram, MixedIntegerProgram, ModelError

_SENSE_CODE = {"<=": "L", ">=": "G", "=": "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


def _num(v: float) -> str:
    text = repr(float(v))
    return text[:-2] if text.endswith(".0") else text


def _line(code: str, name: str, name2: str = "", value: str = "",
          name3: str = "", value2: str = "") -> str:
    fixed = len(code) <= 2 and len(name) <= 8 and len(name2) <= 8 and len(value) <= 12 \
        and len(name3) <= 8 and len(value2) <= 12
    if fixed:
        text = f" {code:<2} {name:<8}  {name2:<8}  {value:>12}"
        if name3:
            text += f"   {name3:<8}  {value2:>12}"
        return text.rstrip()
    parts = [code, name, name2, value, name3, value2]
    return " " + " ".join(p for p in parts if p != "")


def _check_name(kind: str, name: str) -> None:
    if not name or any(ch.isspace() for ch in name):
        raise ModelError(f"{kind} name {name!r} cannot be written to MPS (empty or contains whitespace)")


def export_mps(model: LinearProgram, path, header_lines=()) -> Path:
    """Write ``model`` as an MPS file and return the path.

    ``header_lines`` are written as ``*`` comment lines before NAME.
    """
    path = Path(path)
    for name in model.var_names:
        _check_name("variable", name)
    for name in model.row_names:
        _check_name("constraint", name)
    obj_name = "COST"
    taken = set(model.row_names)
    while obj_name in taken:
        obj_name = "_" + obj_name

    binaries = getattr(model, "binaries", set())
    columns: list[list[tuple[str, float]]] = [[] for _ in model.var_names]
    for j, c in enumerate(model.obj):
        if c != 0.0:
            columns[j].append((obj_name, c))
    for i, (cols, vals) in enumerate(zip(model.row_cols, model.row_vals)):
        rname = model.row_names[i]
        for j, v in zip(cols, vals):
            columns[j].append((rname, v))

    out = [f"* {line}" for line in header_lines]
    out += [f"NAME          {model.name}", "ROWS", _line("N", obj_name)]
    for name, sense in zip(model.row_names, model.senses):
        out.append(_line(_SENSE_CODE[sense], name))
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, name in enumerate(model.var_names):
        is_bin = j in binaries
        if is_bin != in_int:
            tag = "'INTORG'" if is_bin else "'INTEND'"
            out.append(_line("", f"MARKER{marker:03d}", "'MARKER'", "", tag))
            marker += 1
            in_int = is_bin
        entries = columns[j] or [(obj_name, 0.0)]
        for rname, v in entries:
            out.append(_line("", name, rname, _num(v)))
    if in_int:
        out.append(_line("", f"MARKER{marker:03d}", "'MARKER'", "", "'INTEND'"))
    out.append("RHS")
    for name, rhs in zip(model.row_names, model.rhs):
        if rhs != 0.0:
            out.append(_line("", "RHS", name, _num(rhs)))
    out.append("BOUNDS")
    for j, (name, lb, ub) in enumerate(zip(model.var_names, model.lb, model.ub)):
        if j in binaries and lb == 0.0 and ub == 1.0:
            out.append(_line("BV", "BND", name))
            continue
        if lb == ub:
            out.append(_line("FX", "BND", name, _num(lb)))
            continue
        if lb == -INF and ub == INF:
            out.append(_line("FR", "BND", name))
            continue
        if lb == -INF:
            out.append(_line("MI", "BND", name))
        elif lb != 0.0:
            out.append(_line("LO", "BND", name, _num(lb)))
        if ub != INF:
            out.append(_line("UP", "BND", name, _num(ub)))
        elif j in binaries:
            out.append(_line("PL", "BND", name))
    out.append("ENDATA")
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write MPS file {path}: {exc}") from exc
    return path


def read_mps(path) -> LinearProgram:
    """Parse an MPS file written by :func:`export_mps` (or any free-MPS file
    using N/L/G/E rows, integer markers and standard bound types)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read MPS file {path}: {exc}") from exc

    name = "model"
    section = None
    obj_name = None
    rows: list[tuple[str, str]] = []
    row_pos: dict[str, int] = {}
    col_order: list[str] = []
    col_entries: dict[str, list[tuple[str, float]]] = {}
    integer_cols: set[str] = set()
    rhs: dict[str, float] = {}
    bounds: dict[str, list] = {}
    in_int = False

    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0].upper()
            if section == "NAME":
                name = head[1] if len(head) > 1 else "model"
            elif section == "ENDATA":
                break
            continue
        tok = raw.split()
        if section == "ROWS":
            code, rname = tok[0].upper(), tok[1]
            if code == "N":
                if obj_name is None:
                    obj_name = rname
                continue
            if code not in _CODE_SENSE:
                raise ModelError(f"{path}:{lineno}: unknown row type {code!r}")
            row_pos[rname] = len(rows)
            rows.append((rname, _CODE_SENSE[code]))
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            cname = tok[0]
            if cname not in col_entries:
                col_order.append(cname)
                col_entries[cname] = []
            if in_int:
                integer_cols.add(cname)
            pairs = tok[1:]
            for k in range(0, len(pairs) - 1, 2):
                col_entries[cname].append((pairs[k], float(pairs[k + 1])))
        elif section == "RHS":
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            for k in range(0, len(pairs) - 1, 2):
                rhs[pairs[k]] = float(pairs[k + 1])
        elif section == "RANGES":
            raise ModelError(f"{path}:{lineno}: RANGES section is not supported")
        elif section == "BOUNDS":
            btype = tok[0].upper()
            cname = tok[2] if len(tok) >= 3 else tok[1]
            value = float(tok[3]) if len(tok) >= 4 else None
            bounds.setdefault(cname, []).append((btype, value))
        else:
            raise ModelError(f"{path}:{lineno}: data outside a known section")

    binary_flags = {}
    model: LinearProgram = MixedIntegerProgram(name) if integer_cols else LinearProgram(name)
    for cname in col_order:
        lb, ub = 0.0, INF
        is_bin = False
        for btype, value in bounds.get(cname, []):
            if btype == "UP":
                ub = value
                if value < 0 and lb == 0.0:
                    lb = -INF
            elif btype == "LO":
                lb = value
            elif btype == "FX":
                lb = ub = value
            elif btype == "FR":
                lb, ub = -INF, INF
            elif btype == "MI":
                lb = -INF
            elif btype == "PL":
                ub = INF
            elif btype == "BV":
                lb, ub, is_bin = 0.0, 1.0, True
            else:
                raise ModelError(f"{path}: unsupported bound type {btype!r}")
        if cname in integer_cols and not is_bin:
            if bounds.get(cname) is None:
                lb, ub = 0.0, 1.0
            is_bin = lb >= 0 and ub <= 1
        obj = sum(v for r, v in col_entries[cname] if r == obj_name)
        j = model.add_variable(cname, lb, ub, obj)
        binary_flags[j] = is_bin
    if isinstance(model, MixedIntegerProgram):
        for j, flag in binary_flags.items():
            if flag:
                model.mark_binary(j)

    row_terms: list[list[tuple[int, float]]] = [[] for _ in rows]
    for j, cname in enumerate(col_order):
        for rname, v in col_entries[cname]:
            if rname == obj_name:
                continue
            if rname not in row_pos:
                raise ModelError(f"{path}: column {cname!r} references unknown row {rname!r}")
            row_terms[row_pos[rname]].append((j, v))
    for (rname, sense), terms in zip(rows, row_terms):
        model.add_constraint(rname, terms, sense, rhs.get(rname, 0.0))
    return model


def import_solution(path, model: LinearProgram) -> np.ndarray:
    """Read a ``name,value`` CSV (e.g. from an external solver) into a vector."""
    x = np.full(model.num_variables, math.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["name", "value"]:
            raise ModelError(f"{path}: expected a 'name,value' header")
        for row in reader:
            if not row:
                continue
            try:
                j = model.var_index(row[0].strip())
            except KeyError:
                raise ModelError(f"{path}: unknown variable {row[0]!r}") from None
            x[j] = float(row[1])
    missing = [model.var_names[j] for j in np.flatnonzero(np.isnan(x))]
    if missing:
        raise ModelError(f"{path}: no value for {len(missing)} variables, e.g. {missing[:3]}")
    return x


def write_solution(path, model: LinearProgram, x: np.ndarray, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value"])
        for name, v in zip(model.var_names, x):
            writer.writerow([name, repr(float(v))])
