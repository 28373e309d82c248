"""Plain-text problem and reconstruction files.

Problem file::

    mvfund-problem 1
    n <views>
    I <view> <width> <height> <cx> <cy>
    F <i> <j> <m00> ... <m22> <weight>
    T <point_id> <view> <x> <y>

Reconstruction file::

    mvfund-reconstruction 1
    n <views>
    P <i> <p00> ... <p23>
    X <point_id> <x> <y> <z> <w>
    S <key> <value>

Blank lines and lines starting with ``#`` are ignored. Floats are written
with 17 significant digits, so parsing and re-writing is byte-identical.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .errors import ProblemFormatError
from .geometry import ImageMeta, Track

PROBLEM_MAGIC = "mvfund-problem"
RECON_MAGIC = "mvfund-reconstruction"
VERSION = 1


def fmt(x) -> str:
    return "%.17g" % float(x)


@dataclass
class Problem:
    n: int
    meta: List[ImageMeta] = field(default_factory=list)
    blocks: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    weights: Dict[Tuple[int, int], float] = field(default_factory=dict)
    tracks: List[Track] = field(default_factory=list)


@dataclass
class ReconstructionRecord:
    n: int
    cameras: List[np.ndarray]
    points: Dict[int, np.ndarray] = field(default_factory=dict)
    summary: Dict[str, float] = field(default_factory=dict)


def _lines(text):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield no, line.split()


def _floats(tokens, no, what):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ProblemFormatError(f"{what}: expected numbers, got {' '.join(tokens)!r}", line=no) from None
    if not all(math.isfinite(v) for v in vals):
        raise ProblemFormatError(f"{what}: non-finite value", line=no)
    return vals


def _int(tok, no, what):
    try:
        return int(tok)
    except ValueError:
        raise ProblemFormatError(f"{what}: expected an integer, got {tok!r}", line=no) from None


def _header(it, magic):
    try:
        no, tok = next(it)
    except StopIteration:
        raise ProblemFormatError("empty file", line=1) from None
    if len(tok) != 2 or tok[0] != magic:
        raise ProblemFormatError(f"expected header '{magic} {VERSION}'", line=no)
    if _int(tok[1], no, "version") != VERSION:
        raise ProblemFormatError(f"unsupported version {tok[1]}", line=no)
    try:
        no, tok = next(it)
    except StopIteration:
        raise ProblemFormatError("missing 'n' line", line=no + 1) from None
    if len(tok) != 2 or tok[0] != "n":
        raise ProblemFormatError("expected 'n <views>'", line=no)
    n = _int(tok[1], no, "n")
    if n < 1:
        raise ProblemFormatError("n must be positive", line=no)
    return n


def _view(tok, n, no, what):
    v = _int(tok, no, what)
    if not 0 <= v < n:
        raise ProblemFormatError(f"{what}: view {v} out of range [0, {n})", line=no)
    return v


def parse_problem(text: str) -> Problem:
    it = _lines(text)
    n = _header(it, PROBLEM_MAGIC)
    prob = Problem(n)
    meta: Dict[int, ImageMeta] = {}
    obs: Dict[int, List[Tuple[int, float, float]]] = {}
    for no, tok in it:
        kind = tok[0]
        if kind == "I":
            if len(tok) != 6:
                raise ProblemFormatError("image line needs: I view width height cx cy", line=no)
            v = _view(tok[1], n, no, "image line")
            w, h, cx, cy = _floats(tok[2:], no, "image line")
            if v in meta:
                raise ProblemFormatError(f"duplicate image line for view {v}", line=no)
            try:
                meta[v] = ImageMeta(v, w, h, (cx, cy))
            except ValueError as exc:
                raise ProblemFormatError(str(exc), line=no) from None
        elif kind == "F":
            if len(tok) != 13:
                raise ProblemFormatError(f"block line needs 12 fields after 'F', got {len(tok) - 1}", line=no)
            i = _view(tok[1], n, no, "block line")
            j = _view(tok[2], n, no, "block line")
            if not i < j:
                raise ProblemFormatError(f"block indices must satisfy i < j, got ({i}, {j})", line=no)
            vals = _floats(tok[3:], no, "block line")
            if (i, j) in prob.blocks:
                raise ProblemFormatError(f"duplicate block ({i}, {j})", line=no)
            if vals[9] < 0:
                raise ProblemFormatError("block weight must be nonnegative", line=no)
            prob.blocks[(i, j)] = np.array(vals[:9]).reshape(3, 3)
            prob.weights[(i, j)] = vals[9]
        elif kind == "T":
            if len(tok) != 5:
                raise ProblemFormatError("track line needs: T point_id view x y", line=no)
            pid = _int(tok[1], no, "track line")
            v = _view(tok[2], n, no, "track line")
            x, y = _floats(tok[3:], no, "track line")
            seen = obs.setdefault(pid, [])
            if any(u == v for u, _, _ in seen):
                raise ProblemFormatError(f"point {pid} observed twice in view {v}", line=no)
            seen.append((v, x, y))
        else:
            raise ProblemFormatError(f"unknown record type {kind!r}", line=no)
    if meta and len(meta) != n:
        missing = sorted(set(range(n)) - set(meta))
        raise ProblemFormatError(f"image lines missing for views {missing}", line=None)
    prob.meta = [meta[v] for v in range(n)] if meta else []
    prob.tracks = [Track(pid, [o[0] for o in ob], [o[1:] for o in ob]) for pid, ob in obs.items()]
    return prob


def format_problem(prob: Problem) -> str:
    out = [f"{PROBLEM_MAGIC} {VERSION}", f"n {prob.n}"]
    for m in prob.meta:
        out.append(" ".join(["I", str(m.view)] + [fmt(v) for v in (m.width, m.height, *m.center)]))
    for (i, j) in sorted(prob.blocks):
        vals = [fmt(v) for v in np.asarray(prob.blocks[(i, j)]).ravel()]
        out.append(" ".join(["F", str(i), str(j)] + vals + [fmt(prob.weights.get((i, j), 1.0))]))
    for tr in prob.tracks:
        for v, (x, y) in zip(tr.views, tr.xy):
            out.append(f"T {tr.point_id} {int(v)} {fmt(x)} {fmt(y)}")
    return "\n".join(out) + "\n"


def parse_reconstruction(text: str) -> ReconstructionRecord:
    it = _lines(text)
    n = _header(it, RECON_MAGIC)
    cams: Dict[int, np.ndarray] = {}
    rec = ReconstructionRecord(n, [])
    for no, tok in it:
        kind = tok[0]
        if kind == "P":
            if len(tok) != 14:
                raise ProblemFormatError("camera line needs: P i and 12 entries", line=no)
            i = _view(tok[1], n, no, "camera line")
            if i in cams:
                raise ProblemFormatError(f"duplicate camera {i}", line=no)
            cams[i] = np.array(_floats(tok[2:], no, "camera line")).reshape(3, 4)
        elif kind == "X":
            if len(tok) != 6:
                raise ProblemFormatError("point line needs: X id x y z w", line=no)
            pid = _int(tok[1], no, "point line")
            rec.points[pid] = np.array(_floats(tok[2:], no, "point line"))
        elif kind == "S":
            if len(tok) != 3:
                raise ProblemFormatError("summary line needs: S key value", line=no)
            try:
                rec.summary[tok[1]] = float(tok[2])
            except ValueError:
                raise ProblemFormatError(f"summary value {tok[2]!r} is not a number", line=no) from None
        else:
            raise ProblemFormatError(f"unknown record type {kind!r}", line=no)
    if len(cams) != n:
        raise ProblemFormatError(f"expected {n} cameras, found {len(cams)}", line=None)
    rec.cameras = [cams[i] for i in range(n)]
    return rec


def format_reconstruction(rec: ReconstructionRecord) -> str:
    out = [f"{RECON_MAGIC} {VERSION}", f"n {rec.n}"]
    for i, P in enumerate(rec.cameras):
        out.append(" ".join(["P", str(i)] + [fmt(v) for v in np.asarray(P).ravel()]))
    for pid in sorted(rec.points):
        out.append(" ".join(["X", str(pid)] + [fmt(v) for v in rec.points[pid]]))
    for key in sorted(rec.summary):
        out.append(f"S {key} {fmt(rec.summary[key])}")
    return "\n".join(out) + "\n"


def read_problem(path) -> Problem:
    with open(path) as fh:
        return parse_problem(fh.read())


def write_problem(prob: Problem, path):
    with open(path, "w") as fh:
        fh.write(format_problem(prob))


def read_reconstruction(path) -> ReconstructionRecord:
    with open(path) as fh:
        return parse_reconstruction(fh.read())


def write_reconstruction(rec: ReconstructionRecord, path):
    with open(path, "w") as fh:
        fh.write(format_reconstruction(rec))


def problem_from_bundle(bundle, graph) -> Problem:
    """Problem file contents for a synthetic scene and its estimated blocks."""
    return Problem(
        n=bundle.n,
        meta=list(bundle.meta),
        blocks={e: graph.blocks[e] for e in graph.edges},
        weights={e: graph.weights[e] for e in graph.edges},
        tracks=bundle.tracks(),
    )
