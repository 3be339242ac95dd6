"""Binary field dumps and CSV tables.

A dump is an ASCII header, one ``key value`` pair per line, closed by an
``END`` line and followed by the raw little-endian float64 payload in
row-major order::

    CHDDUMP 1
    name phi
    time 0.2
    shape 32 32
    domain 6.283185307179586 6.283185307179586
    byteorder <f8
    sha256 <hex digest of the payload>
    END
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "CHDDUMP 1"


class DumpError(ValueError):
    pass


@dataclass
class FieldDump:
    name: str
    data: np.ndarray
    time: float = 0.0
    domain: tuple = (1.0, 1.0)

    def payload(self) -> bytes:
        return np.ascontiguousarray(self.data, dtype="<f8").tobytes()

    def header(self) -> str:
        if any(c.isspace() for c in self.name) or not self.name:
            raise DumpError("field name must be a nonempty token")
        lines = [
            MAGIC,
            f"name {self.name}",
            f"time {float(self.time)!r}",
            "shape " + " ".join(str(n) for n in self.data.shape),
            "domain " + " ".join(repr(float(v)) for v in self.domain),
            "byteorder <f8",
            f"sha256 {hashlib.sha256(self.payload()).hexdigest()}",
            "END",
        ]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.header().encode("ascii") + self.payload())
        return path


def read_dump(path) -> FieldDump:
    raw = Path(path).read_bytes()
    end = raw.find(b"\nEND\n")
    if end < 0 or not raw.startswith(MAGIC.encode()):
        raise DumpError(f"{path}: not a field dump")
    fields = {}
    for line in raw[:end].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(" ")
        fields[key] = value
    payload = raw[end + 5:]
    if fields.get("byteorder") != "<f8":
        raise DumpError(f"{path}: unsupported byte order {fields.get('byteorder')!r}")
    if hashlib.sha256(payload).hexdigest() != fields.get("sha256"):
        raise DumpError(f"{path}: checksum mismatch")
    shape = tuple(int(v) for v in fields["shape"].split())
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise DumpError(f"{path}: payload has {data.size} values, header says {shape}")
    return FieldDump(
        name=fields["name"],
        data=data.reshape(shape).astype(float),
        time=float(fields["time"]),
        domain=tuple(float(v) for v in fields["domain"].split()),
    )


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> Path:
    """``columns`` is a list of ``(name, description)``; descriptions go in ``#`` lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for name, desc in columns:
            fh.write(f"# {name}: {desc}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name for name, _ in columns])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(header, rows)`` with values left as strings."""
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
