"""Run traces as JSON lines.

A trace is a header record, a stream of event records, and one snapshot
record per process.  Everything is rendered with sorted keys so that two
runs with the same configuration and seed produce byte-identical files.
"""

from __future__ import annotations

import json


HEADER = "hdr"
EVENT = "ev"
SNAPSHOT = "snap"


class Trace:
    """Accumulates records in order; serializes to JSONL."""

    def __init__(self):
        self.records = []

    def header(self, **fields):
        rec = {"t": HEADER}
        rec.update(fields)
        self.records.append(rec)

    def event(self, step, proc, layer, kind, data=None):
        rec = {"t": EVENT, "step": step, "proc": proc, "layer": layer, "kind": kind}
        if data:
            rec["data"] = data
        self.records.append(rec)

    def snapshot(self, proc, data):
        self.records.append({"t": SNAPSHOT, "proc": proc, "data": data})

    # -- views ---------------------------------------------------------

    def events(self, layer=None, kind=None):
        out = []
        for rec in self.records:
            if rec["t"] != EVENT:
                continue
            if layer is not None and rec["layer"] != layer:
                continue
            if kind is not None and rec["kind"] != kind:
                continue
            out.append(rec)
        return out

    def snapshots(self):
        return {rec["proc"]: rec["data"] for rec in self.records if rec["t"] == SNAPSHOT}

    def head(self):
        for rec in self.records:
            if rec["t"] == HEADER:
                return rec
        return {}

    # -- serialization -------------------------------------------------

    def to_jsonl(self):
        lines = [json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text):
        tr = cls()
        for line in text.splitlines():
            line = line.strip()
            if line:
                tr.records.append(json.loads(line))
        return tr

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_jsonl(fh.read())
