"""Bit-exact binary interchange formats and canonical JSON report emission.

Three little-endian container formats let every pipeline stage run as a
separate process:

  GPZA — activation dump: magic "GPZA", version u32 (=1), layer_count u32,
         sample_count B u32, class_count K u32, labels B×u32, then per
         layer: name_len u32, name UTF-8, rank u32, shape rank×u32, d u32
         (= product of shape), data B×d float32 row-major.
  GPZD — dataset: magic "GPZD", version, B u32, d0 u32, K u32,
         labels B×u32, data B×d0 float32.
  GPZM — model: magic "GPZM", version, layer_count u32, split_index u32,
         per layer: in u32, out u32, activation u8 (0 relu, 1 identity),
         weights out×in float32, bias out float32.

There is no padding or compression; payload bytes feed the transmission
cost model directly.  Reads reject bad magic, unknown versions, length
mismatches, inconsistent counts, and non-finite floats — each failure is a
ParseError naming the offending field and its byte offset.

JSON reports are emitted through one canonical serializer: floats as
%.10e (11 significant digits), non-finite values as the strings
"Infinity"/"-Infinity"/"NaN", keys in insertion order, and writes are
atomic (temp file + rename).
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile

import numpy as np

from .activations import ActivationBatch, ActivationSet
from .datagen import Dataset
from .micronet import IDENTITY, RELU, Layer, MlpModel

__all__ = [
    "ParseError",
    "dumps_gpza", "loads_gpza", "write_gpza", "read_gpza",
    "dumps_gpzd", "loads_gpzd", "write_gpzd", "read_gpzd",
    "dumps_gpzm", "loads_gpzm", "write_gpzm", "read_gpzm",
    "dumps_report", "loads_report", "write_report", "sanitize_json",
    "atomic_write_bytes",
]

_VERSION = 1
_ACT_CODES = {RELU: 0, IDENTITY: 1}
_ACT_NAMES = {code: name for name, code in _ACT_CODES.items()}


class ParseError(ValueError):
    """Structured parse failure: which format, which field, which byte."""

    def __init__(self, fmt: str, fieldname: str, offset: int, message: str):
        self.format = fmt
        self.fieldname = fieldname
        self.offset = offset
        super().__init__(f"{fmt}: bad {fieldname} at byte offset {offset}: {message}")


class _Reader:
    """Cursor over a byte string that raises ParseError on short reads."""

    def __init__(self, data: bytes, fmt: str):
        self.data = data
        self.fmt = fmt
        self.pos = 0

    def fail(self, fieldname: str, message: str, offset: int | None = None) -> None:
        raise ParseError(self.fmt, fieldname, self.pos if offset is None else offset, message)

    def take(self, n: int, fieldname: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(fieldname, f"need {n} bytes, {len(self.data) - self.pos} remain")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, fieldname: str) -> int:
        return struct.unpack("<I", self.take(4, fieldname))[0]

    def u8(self, fieldname: str) -> int:
        return self.take(1, fieldname)[0]

    def u32_array(self, count: int, fieldname: str) -> np.ndarray:
        raw = self.take(4 * count, fieldname)
        return np.frombuffer(raw, dtype="<u4").copy()

    def f32_matrix(self, rows: int, cols: int, fieldname: str) -> np.ndarray:
        start = self.pos
        raw = self.take(4 * rows * cols, fieldname)
        arr = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).copy()
        if not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
            self.fail(fieldname, "non-finite float32 value", offset=start + 4 * bad)
        return arr

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(4, "magic")
        if got != magic:
            self.fail("magic", f"expected {magic!r}, got {got!r}", offset=0)

    def expect_version(self) -> None:
        at = self.pos
        version = self.u32("version")
        if version != _VERSION:
            self.fail("version", f"unsupported version {version} (expected {_VERSION})", offset=at)

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            self.fail("trailing bytes", f"{len(self.data) - self.pos} unexpected bytes after payload")

    def check_labels(self, labels: np.ndarray, k: int, block_start: int) -> None:
        if labels.size and int(labels.max()) >= k:
            bad = int(np.argmax(labels >= k))
            self.fail("labels", f"label {int(labels[bad])} >= class count {k}",
                      offset=block_start + 4 * bad)


def _f32_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to serialize non-finite float32 data")
    return arr.tobytes()


def _u32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<u4").tobytes()


# --- GPZA: activation dumps ---------------------------------------------

def dumps_gpza(acts: ActivationSet) -> bytes:
    acts.validate()
    out = bytearray()
    out += b"GPZA"
    out += struct.pack("<IIII", _VERSION, len(acts.layers), acts.labels.shape[0], acts.k)
    out += _u32_bytes(acts.labels)
    for batch in acts.layers:
        name = batch.layer_name.encode("utf-8")
        out += struct.pack("<I", len(name))
        out += name
        out += struct.pack("<I", len(batch.per_sample_shape))
        out += struct.pack(f"<{len(batch.per_sample_shape)}I", *batch.per_sample_shape)
        out += struct.pack("<I", batch.d)
        out += _f32_bytes(batch.data)
    return bytes(out)


def loads_gpza(data: bytes) -> ActivationSet:
    r = _Reader(data, "GPZA")
    r.expect_magic(b"GPZA")
    r.expect_version()
    layer_count = r.u32("layer_count")
    if layer_count < 1:
        r.fail("layer_count", "must be >= 1", offset=r.pos - 4)
    b = r.u32("sample_count")
    if b < 1:
        r.fail("sample_count", "must be >= 1", offset=r.pos - 4)
    k = r.u32("class_count")
    if k < 1:
        r.fail("class_count", "must be >= 1", offset=r.pos - 4)
    labels_at = r.pos
    labels = r.u32_array(b, "labels")
    r.check_labels(labels, k, labels_at)
    layers: list[ActivationBatch] = []
    for i in range(layer_count):
        name_len = r.u32(f"layer[{i}].name_len")
        raw_name = r.take(name_len, f"layer[{i}].name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            r.fail(f"layer[{i}].name", f"invalid UTF-8: {exc}", offset=r.pos - name_len)
        rank_at = r.pos
        rank = r.u32(f"layer[{i}].rank")
        if rank < 1:
            r.fail(f"layer[{i}].rank", "must be >= 1", offset=rank_at)
        shape = tuple(int(x) for x in r.u32_array(rank, f"layer[{i}].shape"))
        d_at = r.pos
        d = r.u32(f"layer[{i}].d")
        if d != math.prod(shape) or d < 1:
            r.fail(f"layer[{i}].d", f"d={d} does not equal product of shape {shape}", offset=d_at)
        acts = r.f32_matrix(b, d, f"layer[{i}].data")
        layers.append(ActivationBatch(layer_name=name, per_sample_shape=shape,
                                      d=d, data=acts, labels=labels))
    r.expect_end()
    out = ActivationSet(layers=layers, labels=labels, k=k)
    try:
        out.validate()
    except ValueError as exc:
        r.fail("payload", str(exc), offset=0)
    return out


# --- GPZD: datasets ------------------------------------------------------

def dumps_gpzd(dataset: Dataset) -> bytes:
    dataset.validate()
    out = bytearray()
    out += b"GPZD"
    out += struct.pack("<IIII", _VERSION, dataset.b, dataset.d0, dataset.k)
    out += _u32_bytes(dataset.labels)
    out += _f32_bytes(dataset.inputs)
    return bytes(out)


def loads_gpzd(data: bytes) -> Dataset:
    r = _Reader(data, "GPZD")
    r.expect_magic(b"GPZD")
    r.expect_version()
    b = r.u32("sample_count")
    if b < 1:
        r.fail("sample_count", "must be >= 1", offset=r.pos - 4)
    d0 = r.u32("d0")
    if d0 < 1:
        r.fail("d0", "must be >= 1", offset=r.pos - 4)
    k = r.u32("class_count")
    if k < 1:
        r.fail("class_count", "must be >= 1", offset=r.pos - 4)
    labels_at = r.pos
    labels = r.u32_array(b, "labels")
    r.check_labels(labels, k, labels_at)
    inputs = r.f32_matrix(b, d0, "data")
    r.expect_end()
    out = Dataset(inputs=inputs, labels=labels, k=k, d0=d0)
    try:
        out.validate()
    except ValueError as exc:
        r.fail("payload", str(exc), offset=0)
    return out


# --- GPZM: models --------------------------------------------------------

def dumps_gpzm(model: MlpModel) -> bytes:
    model.validate()
    out = bytearray()
    out += b"GPZM"
    out += struct.pack("<III", _VERSION, model.num_layers, model.split_index)
    for layer in model.layers:
        out += struct.pack("<IIB", layer.in_dim, layer.out_dim, _ACT_CODES[layer.activation])
        out += _f32_bytes(layer.weight)
        out += _f32_bytes(layer.bias)
    return bytes(out)


def loads_gpzm(data: bytes) -> MlpModel:
    r = _Reader(data, "GPZM")
    r.expect_magic(b"GPZM")
    r.expect_version()
    layer_count = r.u32("layer_count")
    if layer_count < 1:
        r.fail("layer_count", "must be >= 1", offset=r.pos - 4)
    split_at = r.pos
    split_index = r.u32("split_index")
    if split_index > layer_count:
        r.fail("split_index", f"{split_index} exceeds layer count {layer_count}", offset=split_at)
    layers: list[Layer] = []
    prev_out: int | None = None
    for i in range(layer_count):
        in_at = r.pos
        in_dim = r.u32(f"layer[{i}].in")
        out_dim = r.u32(f"layer[{i}].out")
        if in_dim < 1 or out_dim < 1:
            r.fail(f"layer[{i}].dims", "dimensions must be >= 1", offset=in_at)
        if prev_out is not None and in_dim != prev_out:
            r.fail(f"layer[{i}].in", f"input width {in_dim} breaks the chain "
                                     f"(previous output width {prev_out})", offset=in_at)
        act_at = r.pos
        act_code = r.u8(f"layer[{i}].activation")
        if act_code not in _ACT_NAMES:
            r.fail(f"layer[{i}].activation", f"unknown activation code {act_code}", offset=act_at)
        weight = r.f32_matrix(out_dim, in_dim, f"layer[{i}].weights")
        bias = r.f32_matrix(1, out_dim, f"layer[{i}].bias")[0]
        layers.append(Layer(weight=weight, bias=bias, activation=_ACT_NAMES[act_code]))
        prev_out = out_dim
    r.expect_end()
    model = MlpModel(layers=layers, k=prev_out, split_index=split_index)
    try:
        model.validate()
    except ValueError as exc:
        r.fail("payload", str(exc), offset=0)
    return model


# --- file helpers ---------------------------------------------------------

def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_gpza(path: str, acts: ActivationSet) -> None:
    atomic_write_bytes(path, dumps_gpza(acts))


def read_gpza(path: str) -> ActivationSet:
    with open(path, "rb") as handle:
        return loads_gpza(handle.read())


def write_gpzd(path: str, dataset: Dataset) -> None:
    atomic_write_bytes(path, dumps_gpzd(dataset))


def read_gpzd(path: str) -> Dataset:
    with open(path, "rb") as handle:
        return loads_gpzd(handle.read())


def write_gpzm(path: str, model: MlpModel) -> None:
    atomic_write_bytes(path, dumps_gpzm(model))


def read_gpzm(path: str) -> MlpModel:
    with open(path, "rb") as handle:
        return loads_gpzm(handle.read())


# --- canonical JSON reports -----------------------------------------------

def _json_fragment(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif isinstance(value, (bool, np.bool_)):
        out.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            out.append('"NaN"')
        elif x == math.inf:
            out.append('"Infinity"')
        elif x == -math.inf:
            out.append('"-Infinity"')
        else:
            out.append(f"{x:.10e}")
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, dict):
        out.append("{")
        for i, (key, item) in enumerate(value.items()):
            if not isinstance(key, str):
                raise TypeError(f"report keys must be strings, got {type(key).__name__}")
            if i:
                out.append(", ")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(": ")
            _json_fragment(item, out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(", ")
            _json_fragment(item, out)
        out.append("]")
    elif isinstance(value, np.ndarray):
        _json_fragment(value.tolist(), out)
    else:
        raise TypeError(f"cannot serialize {type(value).__name__} into a report")


def dumps_report(obj) -> str:
    """Serialize a report deterministically.

    Floats are rendered as %.10e (11 significant digits) so values written
    on any platform compare byte-for-byte; non-finite sentinels become the
    strings "Infinity" / "-Infinity" / "NaN"; keys keep insertion order.
    """
    out: list[str] = []
    _json_fragment(obj, out)
    return "".join(out) + "\n"


def loads_report(text: str):
    """Parse a report produced by dumps_report (sentinel strings stay strings)."""
    return json.loads(text)


def sanitize_json(value):
    """Rewrite a report into strict-JSON-safe primitives.

    Non-finite floats become the same sentinel strings dumps_report emits,
    and numpy scalars/arrays become native Python values, so a report can
    travel through serializers that reject NaN/Infinity and still
    re-serialize byte-identically via dumps_report on the far side.
    """
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, (np.bool_, np.integer)):
        return value.item()
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "NaN"
        if x == math.inf:
            return "Infinity"
        if x == -math.inf:
            return "-Infinity"
        return x
    if isinstance(value, dict):
        return {key: sanitize_json(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize_json(item) for item in value]
    if isinstance(value, np.ndarray):
        return sanitize_json(value.tolist())
    raise TypeError(f"cannot sanitize {type(value).__name__} for transport")


def write_report(path: str, obj) -> None:
    atomic_write_bytes(path, dumps_report(obj).encode("utf-8"))
