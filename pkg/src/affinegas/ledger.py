"""Run ledgers: JSON-lines persistence of per-snapshot records.

One record per snapshot, stream-friendly.  All floats are written through
``repr`` (17 significant digits) so ledgers are meaningful golden files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import LedgerCorrupt


@dataclass
class RunLedger:
    """Full time series of snapshot records plus run-level metadata."""

    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    status: str = "ok"

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def series(self, key: str):
        return [row[key] for row in self.rows]

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"kind": "meta", **self.meta, "status": self.status}) + "\n")
            for row in self.rows:
                fh.write(json.dumps({"kind": "snapshot", **row}) + "\n")

    @classmethod
    def read(cls, path) -> "RunLedger":
        meta, rows, status = {}, [], "ok"
        try:
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    kind = rec.pop("kind", None)
                    if kind == "meta":
                        status = rec.pop("status", "ok")
                        meta = rec
                    elif kind == "snapshot":
                        rows.append(rec)
                    else:
                        raise LedgerCorrupt(f"unknown record kind {kind!r} in {path}")
        except (OSError, json.JSONDecodeError) as exc:
            raise LedgerCorrupt(f"cannot read ledger {path}: {exc}") from exc
        if not rows and not meta:
            raise LedgerCorrupt(f"ledger {path} is empty")
        return cls(meta=meta, rows=rows, status=status)


def write_csv(path, header: list[str], rows) -> None:
    """CSV with 17-significant-digit floats (golden-file stable)."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [f"{v:.17g}" if isinstance(v, float) else str(v) for v in row]
            fh.write(",".join(cells) + "\n")
