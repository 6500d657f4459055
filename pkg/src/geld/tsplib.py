"""TSPLIB ingestion and serialization for the EUC_2D subset.

Edge weights follow the EUC_2D convention: each edge is rounded to the
nearest integer (half away from zero) before summation, so lengths line up
with published best-known values.
"""

from __future__ import annotations

import numpy as np

from .errors import TsplibParseError, UnsupportedFormatError
from .tsp import TSPLIB_ROUNDED, TspInstance


def parse_tsplib(text: str) -> TspInstance:
    """Parse an EUC_2D TSPLIB file into an instance (0-indexed nodes)."""
    fields: dict[str, str] = {}
    lines = text.splitlines()
    coord_start = None
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        if line == "NODE_COORD_SECTION":
            coord_start = i + 1
            break
        if line == "EOF":
            break
        if ":" in line:
            key, _, value = line.partition(":")
            fields[key.strip().upper()] = value.strip()
        else:
            fields[line.upper()] = ""

    ftype = fields.get("TYPE", "")
    if ftype and ftype.split()[0] != "TSP":
        raise UnsupportedFormatError(f"TYPE {ftype!r} is not supported (expected TSP)")
    ewt = fields.get("EDGE_WEIGHT_TYPE", "")
    if ewt != "EUC_2D":
        raise UnsupportedFormatError(
            f"EDGE_WEIGHT_TYPE {ewt or '<missing>'!r} is not supported (expected EUC_2D)"
        )
    if coord_start is None:
        raise TsplibParseError("missing NODE_COORD_SECTION")
    if "DIMENSION" not in fields:
        raise TsplibParseError("missing DIMENSION")
    try:
        dimension = int(fields["DIMENSION"])
    except ValueError as exc:
        raise TsplibParseError(f"bad DIMENSION {fields['DIMENSION']!r}") from exc

    coords = []
    for raw in lines[coord_start:]:
        line = raw.strip()
        if not line or line == "EOF":
            break
        parts = line.split()
        if len(parts) != 3:
            raise TsplibParseError(f"bad coordinate line {line!r}")
        try:
            idx = int(parts[0])
            x, y = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise TsplibParseError(f"bad coordinate line {line!r}") from exc
        if idx != len(coords) + 1:
            raise TsplibParseError(
                f"node ids must be consecutive from 1, got {idx} at row {len(coords) + 1}"
            )
        coords.append((x, y))
    if len(coords) != dimension:
        raise TsplibParseError(f"DIMENSION says {dimension}, found {len(coords)} coordinates")
    return TspInstance(
        np.array(coords, dtype=np.float64),
        name=fields.get("NAME", ""),
        metric_mode=TSPLIB_ROUNDED,
    )


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly and prints integral values as "x.0",
    # which TSPLIB coordinate parsers accept.
    return repr(float(v))


def format_tsplib(inst: TspInstance) -> str:
    """Serialize an instance as EUC_2D TSPLIB text (exact round trip)."""
    out = [
        f"NAME : {inst.name}" if inst.name else "NAME : unnamed",
        "TYPE : TSP",
        f"DIMENSION : {inst.n}",
        "EDGE_WEIGHT_TYPE : EUC_2D",
        "NODE_COORD_SECTION",
    ]
    for i, (x, y) in enumerate(inst.coords, start=1):
        out.append(f"{i} {_fmt(x)} {_fmt(y)}")
    out.append("EOF")
    return "\n".join(out) + "\n"


def load_tsplib(path) -> TspInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tsplib(fh.read())
