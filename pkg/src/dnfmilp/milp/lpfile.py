"""CPLEX-LP text export/import and a plain solution-file adapter.

Grammar written by :func:`export_lp` (and the subset read back by
:func:`read_lp`)::

    \\ comment lines start with a backslash
    Minimize | Maximize
     obj: <terms> [<constant>]
    Subject To
     <row name>: <terms> <= | >= | = <number>
    Bounds
     <lb> <= <var> <= <ub>      (ub may be +inf)
    Binaries
     <var> <var> ...
    End

``<terms>`` is a sequence of ``+c name`` / ``-c name`` items; long rows are
wrapped over several lines.  An objective without terms is written as
``obj: 0``.  Solution files hold one ``name value`` pair per line; ``#`` starts
a comment and omitted variables are read as zero.
"""
from __future__ import annotations

import math
import re
import time
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from .model import MilpModel, ModelError, SolveResult, Status

PathLike = Union[str, Path]
_TERMS_PER_LINE = 8


def _num(v: float) -> str:
    if v == 0:
        return "0"
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return repr(float(v)) if v != int(v) else str(int(v))


def _terms(coefs: Dict[int, float], names: List[str]) -> List[str]:
    out = []
    for j in sorted(coefs):
        a = coefs[j]
        sign = "+" if a >= 0 else "-"
        out.append(f"{sign}{_num(abs(a))} {names[j]}")
    return out


def _wrap(head: str, items: List[str], tail: str = "") -> List[str]:
    lines = []
    chunk = [items[i:i + _TERMS_PER_LINE] for i in range(0, len(items), _TERMS_PER_LINE)] or [[]]
    for k, part in enumerate(chunk):
        prefix = head if k == 0 else " " * len(head)
        lines.append((prefix + " ".join(part)).rstrip())
    if tail:
        lines[-1] = lines[-1] + " " + tail
    return lines


def export_lp(model: MilpModel, path: PathLike) -> None:
    names = [v.name for v in model.variables]
    lines = [f"\\ Problem name: {model.name}", "Maximize" if model.sense == "max" else "Minimize"]
    obj_items = _terms(model.objective, names)
    if model.objective_constant:
        c = model.objective_constant
        obj_items.append(("+" if c >= 0 else "-") + _num(abs(c)))
    if not obj_items:
        obj_items = ["0"]
    lines += _wrap(" obj: ", obj_items)
    lines.append("Subject To")
    for con in model.constraints:
        items = _terms(con.coefs, names)
        if not items and names:
            items = ["+0 " + names[0]]
        lines += _wrap(f" {con.name}: ", items, f"{con.rel} {_num(con.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if math.isinf(v.ub):
            lines.append(f" {v.name} >= {_num(v.lb)}")
        else:
            lines.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")
    binaries = [v.name for v in model.variables if v.kind == "binary"]
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), _TERMS_PER_LINE):
            lines.append(" " + " ".join(binaries[i:i + _TERMS_PER_LINE]))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_SECTION = re.compile(r"^(minimize|minimum|min|maximize|maximum|max|subject to|such that|st|s\.t\.|"
                      r"bounds|binaries|binary|bin|generals|general|end)$", re.I)


def _parse_linear(text: str):
    """Parse ``+2 x -y +3`` into ({name: coef}, constant)."""
    text = text.strip()
    if text and text[0] not in "+-":
        text = "+" + text
    coefs: Dict[str, float] = {}
    const = 0.0
    pos = 0
    pat = re.compile(r"\s*([+-])\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf)?\s*([A-Za-z_][\w.\[\]]*)?")
    while pos < len(text):
        mt = pat.match(text, pos)
        if not mt or mt.end() == pos:
            raise ModelError(f"cannot parse linear expression near {text[pos:pos + 20]!r}")
        sign = -1.0 if mt.group(1) == "-" else 1.0
        num = mt.group(2)
        name = mt.group(3)
        val = sign * (float(num) if num else 1.0)
        if name:
            coefs[name] = coefs.get(name, 0.0) + val
        elif num:
            const += val
        else:
            raise ModelError(f"dangling sign in {text!r}")
        pos = mt.end()
    return coefs, const


def read_lp(path: PathLike) -> MilpModel:
    """Read back files in the grammar written by :func:`export_lp`."""
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    sections: Dict[str, List[str]] = {"obj": [], "st": [], "bounds": [], "bin": []}
    sense = "min"
    name = "model"
    current = None
    for line in raw:
        s = line.strip()
        if s.startswith("\\"):
            mt = re.match(r"\\\s*Problem name:\s*(\S+)", s)
            if mt:
                name = mt.group(1)
            continue
        if not s:
            continue
        key = s.lower()
        if _SECTION.match(key):
            if key.startswith("max"):
                sense, current = "max", "obj"
            elif key.startswith("min"):
                sense, current = "min", "obj"
            elif key in ("subject to", "such that", "st", "s.t."):
                current = "st"
            elif key == "bounds":
                current = "bounds"
            elif key.startswith("bin"):
                current = "bin"
            elif key.startswith("gen"):
                raise ModelError("general-integer variables are not supported")
            else:
                current = None
            continue
        if current is None:
            raise ModelError(f"content outside any section: {s!r}")
        sections[current].append(s)

    # declaration order: Bounds section first, then first appearance
    order: List[str] = []
    seen = set()

    def see(n: str):
        if n not in seen:
            seen.add(n)
            order.append(n)

    obj_text = " ".join(sections["obj"])
    if ":" in obj_text:
        obj_text = obj_text.split(":", 1)[1]
    obj_coefs, obj_const = _parse_linear(obj_text) if obj_text.strip() not in ("", "0") else ({}, 0.0)
    rows = []
    buf = ""
    for s in sections["st"]:
        buf = (buf + " " + s).strip()
        if re.search(r"(<=|>=|=<|=>|=)\s*[+-]?(\d|\.|inf)", buf):
            mt = re.match(r"^(?:([\w.\[\]]+)\s*:)?(.*?)(<=|>=|=<|=>|=)\s*(\S+)$", buf)
            if not mt:
                raise ModelError(f"cannot parse row {buf!r}")
            rname, lhs, rel, rhs = mt.groups()
            coefs, const = _parse_linear(lhs)
            rows.append((rname, coefs, rel, float(rhs) - const))
            buf = ""
    if buf:
        raise ModelError(f"unterminated row {buf!r}")
    bounds: Dict[str, List[float]] = {}
    for s in sections["bounds"]:
        mt = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", s)
        if mt:
            lo, v, hi = mt.groups()
            bounds[v] = [float(lo), float(hi)]
            continue
        mt = re.match(r"^(\S+)\s*>=\s*(\S+)$", s)
        if mt:
            v, lo = mt.groups()
            bounds[v] = [float(lo), math.inf]
            continue
        mt = re.match(r"^(\S+)\s*<=\s*(\S+)$", s)
        if mt:
            v, hi = mt.groups()
            bounds[v] = [0.0, float(hi)]
            continue
        raise ModelError(f"cannot parse bound {s!r}")
    binaries = set(" ".join(sections["bin"]).split())
    for n in bounds:
        see(n)
    for n in obj_coefs:
        see(n)
    for _, coefs, _, _ in rows:
        for n in coefs:
            see(n)
    for n in sorted(binaries):
        see(n)
    model = MilpModel(name, sense)
    for n in order:
        lo, hi = bounds.get(n, [0.0, math.inf])
        if n in binaries:
            model.add_var(n, "binary", lo, min(hi, 1.0))
        else:
            model.add_var(n, "continuous", lo, hi)
    for rname, coefs, rel, rhs in rows:
        model.add_constraint({model.index(k): a for k, a in coefs.items()}, rel, rhs, rname)
    model.set_objective({model.index(k): a for k, a in obj_coefs.items()}, obj_const)
    return model


def write_solution(model: MilpModel, x, path: PathLike) -> None:
    lines = [f"{v.name} {_num(float(val))}" for v, val in zip(model.variables, x)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_solution(model: MilpModel, path: PathLike) -> SolveResult:
    """Turn an external solver's ``name value`` listing into a :class:`SolveResult`.

    The status is ``optimal`` when the point is feasible for ``model`` (the
    adapter cannot verify optimality itself) and ``infeasible`` otherwise.
    """
    t0 = time.perf_counter()
    x = np.zeros(model.n_vars)
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        parts = s.split()
        if len(parts) != 2:
            raise ModelError(f"line {lineno}: expected 'name value', got {line!r}")
        x[model.index(parts[0])] = float(parts[1])
    ok = model.is_feasible(x)
    obj = model.objective_value(x)
    status = Status.OPTIMAL if ok else Status.INFEASIBLE
    return SolveResult(status, x if ok else None, obj if ok else math.nan,
                       obj if ok else math.nan, time.perf_counter() - t0)
