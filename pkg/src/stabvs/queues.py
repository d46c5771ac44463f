"""Bounded queues with move-to-front discipline.

New records enter at the front; touching a record moves it to the front; when
a full queue takes another record the back (least recently touched) falls off.
Eviction is surfaced to the caller so it can raise a diagnostic: under correct
sizing the bound is never reached.
"""

from __future__ import annotations


class BoundedMtfQueue:
    __slots__ = ("cap", "_items")

    def __init__(self, cap: int):
        if cap < 1:
            raise ValueError("queue capacity must be >= 1")
        self.cap = cap
        self._items = []

    def add_front(self, item):
        """Insert at the front; returns the evicted back record, if any."""
        self._items.insert(0, item)
        if len(self._items) > self.cap:
            return self._items.pop()
        return None

    def move_to_front(self, item):
        for idx, it in enumerate(self._items):
            if it is item:
                if idx:
                    self._items.insert(0, self._items.pop(idx))
                return

    def remove(self, item):
        for idx, it in enumerate(self._items):
            if it is item:
                del self._items[idx]
                return

    def clear(self):
        self._items.clear()

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __bool__(self):
        return bool(self._items)
