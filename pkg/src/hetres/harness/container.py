"""Binary container for stimuli, networks, states and rasters.

Layout (little-endian)::

    b"HRSV" | u16 version | u16 len + kind | u32 len + JSON header
    | u32 n_arrays | per array: u16 len + name, u8 dtype code, u8 ndim,
      u64 shape[ndim], row-major payload
    | 8-byte blake2b digest of everything before it
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import struct

import numpy as np
from scipy import sparse

from ..dynamics import SpikeRaster, StateMatrix
from ..errors import CorruptionError, UnsupportedVersionError
from ..stimgen import Stimulus
from ..topology import Network, NetworkSpec

MAGIC = b"HRSV"
VERSION = 1
DTYPES = {1: "<f2", 2: "<f4", 3: "<f8", 4: "<i4", 5: "<i8", 6: "|u1", 7: "|b1"}
CODES = {np.dtype(v): k for k, v in DTYPES.items()}
PRECISION = {"f16": "<f2", "f32": "<f4", "f64": "<f8", "half": "<f2", "full": "<f8"}


def _digest(b):
    return hashlib.blake2b(b, digest_size=8).digest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def write_container(path, kind, header, arrays):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    k = kind.encode()
    buf.write(struct.pack("<H", len(k)) + k)
    h = json.dumps(_jsonable(header), sort_keys=True).encode()
    buf.write(struct.pack("<I", len(h)) + h)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder not in "|=<" else a.dtype
        dt = np.dtype(dt.str.replace("=", "<"))
        if dt not in CODES:
            raise TypeError(f"unsupported dtype {a.dtype} for array {name!r}")
        n = name.encode()
        buf.write(struct.pack("<H", len(n)) + n)
        buf.write(struct.pack("<BB", CODES[dt], a.ndim))
        buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        buf.write(a.astype(dt, copy=False).tobytes(order="C"))
    body = buf.getvalue()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(body + _digest(body))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, b):
        self.b, self.i = b, 0

    def take(self, n):
        if self.i + n > len(self.b):
            raise CorruptionError("container truncated")
        out = self.b[self.i:self.i + n]
        self.i += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path):
    """Returns (kind, header, arrays). Fails closed on any inconsistency."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 14 or data[:4] != MAGIC:
        raise CorruptionError("not an HRSV container")
    (version,) = struct.unpack("<H", data[4:6])
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version}, reader supports {VERSION}")
    body, digest = data[:-8], data[-8:]
    if _digest(body) != digest:
        raise CorruptionError("checksum mismatch")
    r = _Reader(body)
    r.take(6)
    (kl,) = r.unpack("<H")
    kind = r.take(kl).decode()
    (hl,) = r.unpack("<I")
    header = json.loads(r.take(hl).decode())
    (na,) = r.unpack("<I")
    arrays = {}
    for _ in range(na):
        (nl,) = r.unpack("<H")
        name = r.take(nl).decode()
        code, ndim = r.unpack("<BB")
        if code not in DTYPES:
            raise CorruptionError(f"unknown dtype code {code}")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        dt = np.dtype(DTYPES[code])
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(n * dt.itemsize), dtype=dt).reshape(shape).copy()
    if r.i != len(body):
        raise CorruptionError("trailing bytes before checksum")
    return kind, header, arrays


def _triplets(M, prefix):
    M = sparse.coo_matrix(M)
    return {f"{prefix}_rows": M.row.astype("<i8"), f"{prefix}_cols": M.col.astype("<i8"),
            f"{prefix}_vals": M.data.astype("<f8")}


def _from_triplets(a, prefix, N):
    return sparse.csr_matrix((a[f"{prefix}_vals"], (a[f"{prefix}_rows"], a[f"{prefix}_cols"])), shape=(N, N))


def persist_state(path, obj, precision="f64", header=None):
    """Write a StateMatrix, SpikeRaster, Stimulus or Network."""
    header = dict(header or {})
    if isinstance(obj, StateMatrix):
        dt = PRECISION[precision]
        header.update(dt=obj.dt, meta=obj.meta, precision=precision)
        write_container(path, "state", header, {"X": np.asarray(obj.X).astype(dt)})
    elif isinstance(obj, SpikeRaster):
        header.update(dt=obj.dt, N=obj.N, n_steps=obj.n_steps, meta=obj.meta)
        write_container(path, "raster", header, {"neurons": obj.neurons.astype("<i8"),
                                                 "steps": obj.steps.astype("<i8"),
                                                 "times": obj.times.astype("<f8")})
    elif isinstance(obj, Stimulus):
        header.update(dt=obj.dt, compound_freq=obj.compound_freq, time_scale=obj.time_scale,
                      raw_peak_freqs=list(obj.raw_peak_freqs), source=list(obj.source))
        write_container(path, "stimulus", header, {"components": obj.components.astype("<f8")})
    elif isinstance(obj, Network):
        header.update(spec=obj.spec.to_dict(), tau_rejections=obj.tau_rejections, warnings=obj.warnings)
        arrays = dict(_triplets(obj.W, "W"))
        if obj.W_unit is not None:
            arrays.update(_triplets(obj.W_unit, "W_unit"))
        arrays.update(Wu=obj.Wu, tau=obj.tau, is_exc=obj.is_exc.astype(bool))
        if obj.Wu_unit is not None:
            arrays["Wu_unit"] = obj.Wu_unit
        write_container(path, "network", header, arrays)
    else:
        raise TypeError(f"cannot persist {type(obj).__name__}")


def load_state(path):
    kind, h, a = read_container(path)
    if kind == "state":
        return StateMatrix(a["X"].astype(float), h["dt"], h.get("meta", {}))
    if kind == "raster":
        return SpikeRaster(a["neurons"], a["steps"], h["dt"], h["N"], h["n_steps"], h.get("meta", {}))
    if kind == "stimulus":
        return Stimulus(a["components"], h["dt"], h["compound_freq"], h["time_scale"],
                        tuple(h["raw_peak_freqs"]), tuple(h["source"]))
    if kind == "network":
        spec = NetworkSpec(**h["spec"])
        W = _from_triplets(a, "W", spec.N)
        W_unit = _from_triplets(a, "W_unit", spec.N) if "W_unit_rows" in a else None
        return Network(spec, W, a["Wu"], a["tau"], a["is_exc"], W_unit, a.get("Wu_unit"),
                       h.get("tau_rejections", 0), h.get("warnings", []))
    raise CorruptionError(f"unknown object kind {kind!r}")
