"""Heartbeat failure detector driven by link token arrivals.

Every token that comes back from a peer resets that peer's heartbeat count and
ages everyone else's, saturating at the window W. A processor trusts exactly
the peers whose count is below W, so a crashed peer is expelled after W further
token arrivals and a live one is re-admitted the moment its token shows up.
The detector output pairs each trusted processor with the coordinator it last
announced, which is what the membership layer consumes.
"""

from __future__ import annotations


class FailureDetector:
    def __init__(self, self_id: int, n: int, window: int = 0, emit=None):
        if window <= 0:
            window = 4 * n
        self.self_id = self_id
        self.n = n
        self.window = window
        self.hb = [0] * n
        self.crd_of: list[int | None] = [None] * n
        self.crd_of[self_id] = self_id
        self.own_crd = self_id
        self.emit = emit or (lambda kind, **kw: None)

    def set_own_coordinator(self, crd: int):
        self.own_crd = crd
        self.crd_of[self.self_id] = crd

    def on_token(self, frm: int, peer_crd: int | None = None,
                 announce: bool = False):
        """A token came back from frm. peer_crd is the coordinator it carried;
        pass announce=True to accept None as an explicit retraction."""
        if frm == self.self_id:
            return
        for k in range(self.n):
            if k == self.self_id:
                continue
            if k == frm:
                if self.hb[k] >= self.window:
                    self.emit("trust", peer=k)
                self.hb[k] = 0
            else:
                aged = min(self.hb[k] + 1, self.window)
                if aged == self.window and self.hb[k] < self.window:
                    self.emit("suspect", peer=k)
                self.hb[k] = aged
        if peer_crd is not None or announce:
            self.crd_of[frm] = peer_crd

    def trusted(self) -> list[int]:
        return [k for k in range(self.n) if self.hb[k] < self.window]

    def output(self) -> dict[int, int | None]:
        """Trusted processors with their last announced coordinators."""
        out = {k: self.crd_of[k] for k in self.trusted()}
        out[self.self_id] = self.own_crd
        return out

    def snapshot(self) -> dict:
        return {"hb": list(self.hb), "window": self.window,
                "crd_of": list(self.crd_of)}
