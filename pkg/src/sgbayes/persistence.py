"""Versioned on-disk formats: surrogate files and the point-evaluation cache.

Both formats are human-readable structured text.  Floats are serialised as
C99 hex literals, so round trips are bit-exact and every consumer (tests,
resumed builds, post-hoc likelihood swaps) sees the same numbers the builder
saw.  Writes go through a temporary file followed by an atomic rename, so
concurrent readers never observe torn files.
"""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .errors import CacheError, PersistenceError
from .grid import Box, MultiIndex
from .interpolant import SparseGrid, SurrogateModel

SURROGATE_FORMAT = "sgbayes-surrogate-v1"

_KEY_RE = re.compile(r"^i[0-9.]+_j[0-9.]+$")


def _hex(value: float) -> str:
    return float(value).hex()


def _unhex(token: str) -> float:
    try:
        return float.fromhex(token)
    except ValueError as exc:
        raise PersistenceError(f"bad float token {token!r}") from exc


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Surrogate files.
# ---------------------------------------------------------------------------

def store_surrogate(model: SurrogateModel, path) -> None:
    """Write a surrogate to ``path`` in the versioned text format.

    The file holds the model identity, domain, build metadata and one record
    per grid point (level vector, position vector, surplus vector); recorded
    raw model values are not part of the format.  A checksum over the body
    guards against truncation and corruption.
    """
    path = Path(path)
    lines = [
        f"model_id {model.model_id}",
        f"ndim {model.ndim}",
        f"n_outputs {model.n_outputs}",
        f"max_level {model.max_level}",
        f"alpha {'none' if model.alpha is None else _hex(model.alpha)} {model.alpha_mode}",
        "domain_lower " + " ".join(_hex(v) for v in model.domain.lower),
        "domain_upper " + " ".join(_hex(v) for v in model.domain.upper),
        f"points {len(model)}",
    ]
    for point, surplus in zip(model.grid.points, model.surpluses):
        lines.append(
            "p "
            + ",".join(map(str, point.levels))
            + " "
            + ",".join(map(str, point.positions))
            + " "
            + " ".join(_hex(c) for c in surplus)
        )
    lines.append("end")
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    _atomic_write(path, f"{SURROGATE_FORMAT}\nsha256 {digest}\n{body}")


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise PersistenceError(message)


def load_surrogate(path) -> SurrogateModel:
    """Read a surrogate written by :func:`store_surrogate`.

    Raises a persistence error on unknown format version, checksum mismatch,
    truncation, or any malformed record.  An empty point list loads as a
    degenerate surrogate (with a warning) that evaluates to the zero vector.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PersistenceError(f"cannot read surrogate file {path}: {exc}") from exc
    head, _, rest = text.partition("\n")
    _expect(bool(rest), f"{path}: truncated surrogate file")
    if head != SURROGATE_FORMAT:
        raise PersistenceError(
            f"{path}: unsupported format version {head!r} (expected {SURROGATE_FORMAT})"
        )
    sha_line, _, body = rest.partition("\n")
    _expect(sha_line.startswith("sha256 "), f"{path}: missing checksum line")
    digest = hashlib.sha256(body.encode()).hexdigest()
    if digest != sha_line.split(" ", 1)[1].strip():
        raise PersistenceError(f"{path}: checksum mismatch (corrupt or edited file)")

    lines = body.splitlines()
    _expect(len(lines) >= 9 and lines[-1] == "end", f"{path}: truncated surrogate body")
    fields = {}
    for line in lines[:8]:
        key, _, value = line.partition(" ")
        fields[key] = value
    try:
        ndim = int(fields["ndim"])
        n_outputs = int(fields["n_outputs"])
        n_points = int(fields["points"])
        alpha_tok, alpha_mode = fields["alpha"].split()
        alpha = None if alpha_tok == "none" else _unhex(alpha_tok)
        lower = [_unhex(tok) for tok in fields["domain_lower"].split()]
        upper = [_unhex(tok) for tok in fields["domain_upper"].split()]
    except (KeyError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed header: {exc}") from exc
    _expect(len(lower) == ndim and len(upper) == ndim, f"{path}: domain length mismatch")

    records = lines[8:-1]
    _expect(len(records) == n_points, f"{path}: expected {n_points} point records, "
            f"found {len(records)}")
    points: list[MultiIndex] = []
    surpluses = np.empty((n_points, n_outputs))
    for row, line in enumerate(records):
        parts = line.split()
        _expect(len(parts) == 3 + n_outputs and parts[0] == "p",
                f"{path}: malformed point record {row}")
        try:
            levels = tuple(int(v) for v in parts[1].split(","))
            positions = tuple(int(v) for v in parts[2].split(","))
        except ValueError as exc:
            raise PersistenceError(f"{path}: malformed indices in record {row}") from exc
        points.append(MultiIndex(levels, positions))
        surpluses[row] = [_unhex(tok) for tok in parts[3:]]

    if n_points == 0:
        warnings.warn(f"{path}: surrogate has no grid points; it evaluates to zero")
    grid = SparseGrid(ndim, points)
    return SurrogateModel(
        grid,
        Box(tuple(lower), tuple(upper)),
        surpluses,
        values=None,
        alpha=alpha,
        alpha_mode=alpha_mode,
        model_id=fields.get("model_id", ""),
    )


# ---------------------------------------------------------------------------
# Evaluation cache.
# ---------------------------------------------------------------------------

def point_key(point: MultiIndex) -> str:
    """Canonical integer key of a grid point, e.g. ``i1.0.2_j2.1.1``."""
    return ("i" + ".".join(map(str, point.levels))
            + "_j" + ".".join(map(str, point.positions)))


class EvalCache:
    """Persistent map from grid-point identity to model output vector.

    One file per point under ``root/<model_id>/``; entries are written via
    temp-file-plus-rename so concurrent readers and a single writer per key
    are safe.  A corrupt or unreadable entry raises instead of silently
    recomputing, because recomputation may mean hours of solver time.
    """

    def __init__(self, root, model_id: str):
        safe = re.sub(r"[^A-Za-z0-9._-]", "_", model_id) or "model"
        self.model_id = model_id
        self.dir = Path(root) / safe
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CacheError(f"cannot create cache directory {self.dir}: {exc}") from exc

    def _path(self, point: MultiIndex) -> Path:
        return self.dir / (point_key(point) + ".txt")

    def get(self, point: MultiIndex) -> np.ndarray | None:
        """Cached output vector, or None on a (non-error) miss."""
        path = self._path(point)
        if not path.exists():
            return None
        try:
            lines = path.read_text().splitlines()
        except OSError as exc:
            raise CacheError(f"cannot read cache entry {path}: {exc}") from exc
        try:
            key, count = lines[0], int(lines[1])
            values = [float.fromhex(tok) for tok in lines[2 : 2 + count]]
            if key != point_key(point) or len(values) != count:
                raise ValueError("inconsistent entry")
        except (IndexError, ValueError) as exc:
            raise CacheError(f"corrupt cache entry {path}: {exc}") from exc
        return np.array(values)

    def put(self, point: MultiIndex, values) -> None:
        values = np.asarray(values, dtype=float).reshape(-1)
        body = "\n".join(
            [point_key(point), str(values.size), *(_hex(v) for v in values)]
        ) + "\n"
        try:
            _atomic_write(self._path(point), body)
        except OSError as exc:
            raise CacheError(f"cannot write cache entry for {point}: {exc}") from exc

    def __len__(self) -> int:
        return sum(1 for p in self.dir.glob("i*_j*.txt") if _KEY_RE.match(p.stem))
