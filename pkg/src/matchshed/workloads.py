"""Synthetic stream generators, drift injection, CSV ingestion, and the
shipped pattern template library.

Generation uses numpy's PCG64 generator with SeedSequence-spawned
substreams, one per attribute, so a stream is reproducible bit-for-bit
from its seed on any platform and redrawing one attribute (drift) leaves
the others untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import DataElement

EARTH_RADIUS_KM = 6371.0


@dataclass
class Drift:
    """From element ``offset`` on, redraw ``attr`` uniformly in
    [low, high); with ``type_tag`` set only elements of that type are
    affected."""
    offset: int
    attr: str
    low: float
    high: float
    type_tag: str = None


@dataclass
class GeneratorSpec:
    alphabet: tuple                  # event types
    attrs: dict                      # name -> (low, high) or ("int", lo, hi)
    count: int
    seed: int
    drifts: list = field(default_factory=list)

    def __post_init__(self):
        for d in self.drifts:
            if not 0 <= d.offset <= self.count:
                raise ValueError("drift offset outside the stream")


def _substreams(spec: GeneratorSpec):
    """One independent PCG64 stream per column, in a fixed column order."""
    names = ["type"] + sorted(spec.attrs)
    children = np.random.SeedSequence(spec.seed).spawn(len(names))
    return {nm: np.random.default_rng(ss) for nm, ss in zip(names, children)}


def _draw(rng, dist, n):
    if dist[0] == "int":
        return rng.integers(dist[1], dist[2] + 1, size=n).astype(float)
    return rng.uniform(dist[0], dist[1], size=n)


def generate(spec: GeneratorSpec) -> list:
    """Materialize the stream; timestamps equal the arrival index."""
    n = spec.count
    rngs = _substreams(spec)
    types = rngs["type"].integers(0, len(spec.alphabet), size=n)
    cols = {nm: _draw(rngs[nm], dist, n)
            for nm, dist in sorted(spec.attrs.items())}
    for d in spec.drifts:
        redraw = np.random.default_rng(
            np.random.SeedSequence([spec.seed, d.offset,
                                    *map(ord, d.attr)])).uniform(
            d.low, d.high, size=n - d.offset)
        if d.type_tag is None:
            cols[d.attr][d.offset:] = redraw
        else:
            t = spec.alphabet.index(d.type_tag)
            mask = types[d.offset:] == t
            cols[d.attr][d.offset:][mask] = redraw[mask]
    out = []
    alphabet = spec.alphabet
    for i in range(n):
        out.append(DataElement(alphabet[types[i]], i, float(i),
                               {nm: float(col[i])
                                for nm, col in cols.items()}))
    return out


def ds1_spec(n: int, seed: int, drifts=None) -> GeneratorSpec:
    return GeneratorSpec(
        alphabet=tuple("ABCDEFGHIJ"),
        attrs={"ID": ("int", 1, 10), "x": (-90.0, 90.0),
               "y": (-180.0, 180.0), "v": (1.0, 3e6)},
        count=n, seed=seed, drifts=list(drifts or ()))


def ds2_spec(n: int, seed: int, drifts=None) -> GeneratorSpec:
    return GeneratorSpec(
        alphabet=tuple("ABCDEF"),
        attrs={"ID": ("int", 1, 25), "x": (1.0, 100.0)},
        count=n, seed=seed, drifts=list(drifts or ()))


def gen_ds1(n: int, seed: int) -> list:
    return generate(ds1_spec(n, seed))


def gen_ds2(n: int, seed: int) -> list:
    return generate(ds2_spec(n, seed))


def inject_drift(spec: GeneratorSpec, drifts) -> GeneratorSpec:
    """Spec with extra drift entries appended (the original is untouched)."""
    return GeneratorSpec(spec.alphabet, dict(spec.attrs), spec.count,
                         spec.seed, list(spec.drifts) + list(drifts))


# ------------------------------------------------------------------- CSV

def write_csv(stream, path: str):
    """Header ``type,ts,<attrs...>``; attribute order from the first
    element, floats written via repr for lossless round-trips."""
    stream = list(stream)
    names = sorted(stream[0].attrs) if stream else []
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["type", "ts"] + names)
        for d in stream:
            w.writerow([d.type_tag, repr(d.timestamp)]
                       + [repr(d.attrs[nm]) for nm in names])


class CsvFormatError(ValueError):
    pass


def load_csv(path: str, partition_by: str = None):
    """Load ``type,ts,<attrs...>`` rows.

    Stream mode (default) checks timestamps are nondecreasing and returns
    one element list.  With ``partition_by`` the rows are treated as an
    ordered table and returned as a dict partition-value -> element list.
    """
    with open(path, newline="") as f:
        rd = csv.reader(f)
        try:
            header = next(rd)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if header[:2] != ["type", "ts"]:
            raise CsvFormatError(f"{path}: header must start with type,ts")
        names = header[2:]
        if partition_by is not None and partition_by not in names:
            raise CsvFormatError(f"{path}: missing column {partition_by!r}")
        stream = []
        prev_ts = None
        for ln, row in enumerate(rd, start=2):
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{ln}: expected "
                                     f"{len(header)} columns")
            try:
                ts = float(row[1])
                attrs = {nm: float(v) for nm, v in zip(names, row[2:])}
            except ValueError:
                raise CsvFormatError(
                    f"{path}:{ln}: non-numeric value") from None
            if partition_by is None:
                if prev_ts is not None and ts < prev_ts:
                    raise CsvFormatError(f"{path}:{ln}: timestamps not "
                                         "sorted in stream mode")
                prev_ts = ts
            stream.append(DataElement(row[0], ln - 2, ts, attrs))
    if partition_by is None:
        return stream
    parts = {}
    for d in stream:
        parts.setdefault(d.attrs[partition_by], []).append(d)
    for members in parts.values():
        for i, d in enumerate(members):
            d.seq_index = i
    return parts


# -------------------------------------------------------------- templates

def templates(window: float = 1000.0, r: float = EARTH_RADIUS_KM,
              type_map: dict = None) -> dict:
    """Named pattern texts: P1..P6 with predicates, P7..P38 plain
    sequences for scalability runs.

    ``type_map`` renames template event types (e.g. {"A": "bike_trip"});
    ``r`` is the sphere radius used by the distance predicates.
    """
    w = f"{window:g}"
    t = {
        "P1": "SEQ(A a, B+ b[], C c, D d) "
              f"WHERE SAME [ID] AND SUM(b[].x) < c.x WITHIN {w}",
        "P2": "SEQ(A a, B+ b[], E e, F f) "
              f"WHERE SAME [ID] AND a.x + SUM(b[].x) < e.x + f.x WITHIN {w}",
        "P3": "SEQ(A a, B b, C c, D d, E e, F f, G g) "
              "WHERE SAME [ID] AND a.v < b.v AND b.v + c.v < d.v AND "
              f"2 * {r:g} * arcsin(sqrt(sin((e.x - d.x) / 2) ^ 2 + "
              "cos(d.x) * cos(e.x) * sin((e.y - d.y) / 2) ^ 2)) <= f.v "
              f"WITHIN {w}",
        "P4": "SEQ(A a, B b, C c, D d, H h, I i, J j) "
              "WHERE SAME [ID] AND a.v < b.v AND b.v + c.v < d.v AND "
              f"{r:g} * arccos(sin(d.x) * sin(h.x) + "
              "cos(d.x) * cos(h.x) * cos(h.y - d.y)) <= i.v "
              f"WITHIN {w}",
        "P5": f"SEQ(A a, B b, !C c, D d) WHERE SAME [ID] AND a.x < b.x "
              f"WITHIN {w}",
        "P6": f"SEQ(A a, B b, !C c, E e) WHERE SAME [ID] WITHIN {w}",
    }
    literal = {
        "P7": "A,B,C", "P8": "A,B,E", "P9": "A,!E,C", "P10": "A,!E,D",
        "P11": "A,B+,C", "P12": "A,B+,D", "P13": "A,B,B,C", "P14": "A,C,D",
        "P15": "A,B,C,D", "P16": "A,B+,E", "P17": "A,!B,C", "P18": "A,!C,D",
        "P19": "A,B,D,E", "P20": "A,C,B,D", "P21": "A,!B,D,E",
        "P22": "A,B+,C,D", "P23": "A,G,H,I", "P24": "A,G,H+,J",
        "P25": "A,G,!I,J", "P26": "A,G,I,J,A", "P27": "A,G,J,H,B",
        "P28": "A,G,!H,J,C", "P29": "A,H,H,I", "P30": "A,G,H+,I,J",
        "P31": "A,G,A,B", "P32": "A,G,!J,C", "P33": "A,H,!J,D",
        "P34": "A,G,I,!H,E", "P35": "A,G,H,I,J,F", "P36": "A,J,G,I",
        "P37": "A,G,I+,A", "P38": "A,G,J,B+"
    }
    for name, steps in literal.items():
        parts = []
        for s in steps.split(","):
            if s.endswith("+"):
                parts.append(f"{s[:-1]}+")
            else:
                parts.append(s)
        t[name] = f"SEQ({', '.join(parts)}) WITHIN {w}"
    if type_map:
        import re
        def sub(text):
            return re.sub(r"\b([A-J])\b",
                          lambda m: type_map.get(m.group(1), m.group(1)),
                          text)
        t = {k: sub(v) for k, v in t.items()}
    return t
