"""Digest-keyed binary cache for eigenbases, Gram matrices and matrix dumps.

Container layout (all little endian)::

    magic      4 bytes   b"HUME" | b"HUMG" | b"HUMM"
    version    u32
    count      u64       number of arrays
    per array: ndim u64, then ndim dims u64
    payload    float64   arrays back to back, row-major
    digest     32 bytes  sha256 of every preceding byte

Each container has a JSON sidecar holding the canonical configuration it
was built from. Writers take an exclusive lock and publish atomically by
renaming a temporary file; readers never see partial files.
"""

import fcntl
import hashlib
import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

VERSION = 1
MAGICS = {b"HUME": "basis", b"HUMG": "gram", b"HUMM": "matrix"}


class CacheCorruption(ValueError):
    pass


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.ndarray, tuple)):
        return list(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def config_digest(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def encode(magic, arrays):
    if magic not in MAGICS:
        raise ValueError(f"unknown magic {magic!r}")
    parts = [magic, struct.pack("<IQ", VERSION, len(arrays))]
    data = []
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack("<Q", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        data.append(a.tobytes())
    body = b"".join(parts + data)
    return body + hashlib.sha256(body).digest()


def decode(blob, magic=None):
    if len(blob) < 4 + 4 + 8 + 32:
        raise CacheCorruption("file too short")
    body, tail = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != tail:
        raise CacheCorruption("payload digest mismatch")
    m = body[:4]
    if m not in MAGICS or (magic is not None and m != magic):
        raise CacheCorruption(f"bad magic {m!r}")
    version, count = struct.unpack_from("<IQ", body, 4)
    if version != VERSION:
        raise CacheCorruption(f"unsupported version {version}")
    off = 16
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<Q", body, off)
        off += 8
        shapes.append(struct.unpack_from(f"<{ndim}Q", body, off))
        off += 8 * ndim
    arrays = []
    for shp in shapes:
        n = int(np.prod(shp)) if shp else 1
        arrays.append(np.frombuffer(body, "<f8", n, off).reshape(shp).copy())
        off += 8 * n
    if off != len(body):
        raise CacheCorruption("trailing bytes in payload")
    return m, arrays


def write_atomic(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Cache:
    """Directory of containers named ``<kind>-<digest[:20]>.bin``."""

    EXT = ".bin"

    def __init__(self, root):
        self.root = Path(root)

    @contextmanager
    def _lock(self, exclusive):
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "a+") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def path(self, kind, key):
        return self.root / f"{kind}-{config_digest(key)[:20]}{self.EXT}"

    def load(self, kind, key, magic):
        """Arrays stored under ``key`` or None (missing or corrupt entries)."""
        p = self.path(kind, key)
        with self._lock(False):
            if not p.exists():
                return None
            blob = p.read_bytes()
        try:
            return decode(blob, magic)[1]
        except CacheCorruption:
            return None

    def store(self, kind, key, magic, arrays):
        p = self.path(kind, key)
        with self._lock(True):
            write_atomic(p, encode(magic, arrays))
            write_atomic(p.with_suffix(".json"), canonical_json(key).encode())
        return p

    def entries(self):
        if not self.root.exists():
            return []
        return sorted(p for p in self.root.iterdir() if p.suffix == self.EXT)

    def list(self):
        out = []
        for p in self.entries():
            side = p.with_suffix(".json")
            key = json.loads(side.read_text()) if side.exists() else None
            out.append({"file": p.name, "bytes": p.stat().st_size, "key": key})
        return out

    def purge(self):
        n = 0
        with self._lock(True):
            for p in self.entries():
                p.unlink()
                side = p.with_suffix(".json")
                if side.exists():
                    side.unlink()
                n += 1
        return n

    def verify(self):
        """(file name, ok, reason) per entry; checks payload and key digests."""
        out = []
        for p in self.entries():
            try:
                decode(p.read_bytes())
                side = p.with_suffix(".json")
                if not side.exists():
                    raise CacheCorruption("missing key sidecar")
                key = json.loads(side.read_text())
                kind = p.stem.split("-", 1)[0]
                if self.path(kind, key).name != p.name:
                    raise CacheCorruption("key digest does not match file name")
                out.append((p.name, True, "ok"))
            except (CacheCorruption, ValueError) as exc:
                out.append((p.name, False, str(exc)))
        return out


def save_basis_arrays(basis):
    lab = np.array(basis.labels, float).reshape(len(basis), -1)
    arrays = [basis.omegas, lab]
    if basis.kind == "fd":
        g = basis.grid
        arrays += [basis.vectors, g.xs, g.ys, np.array([g.h]), g.interior.astype(float),
                   np.asarray(getattr(basis, "residuals", np.zeros(len(basis))), float)]
    return arrays


def load_basis_arrays(domain, kind, arrays):
    from .spectral_basis import EigenBasis, FDGrid

    omegas, lab = arrays[0], arrays[1]
    labels = [tuple(int(v) for v in row) for row in lab]
    if kind != "fd":
        return EigenBasis(domain, omegas, labels, kind)
    vec, xs, ys, h, interior, res = arrays[2:8]
    grid = FDGrid(xs, ys, float(h[0]), interior.astype(bool))
    b = EigenBasis(domain, omegas, labels, "fd", vec, grid)
    b.residuals = res
    return b
