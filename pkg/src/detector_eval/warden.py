"""Shared permit allocator bounding concurrent resource-heavy VM operations.

Requests queue per resource class and are granted strictly first-come,
first-served: a request at the head that does not fit blocks everyone
behind it. Callers either block in :meth:`Warden.acquire` (threaded use) or
file a :class:`Request` with :meth:`Warden.request` and poll it, which is
what the cooperative orchestrator loops do.
"""

from __future__ import annotations

import itertools
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional


class WardenError(RuntimeError):
    pass


class UnknownClass(WardenError):
    pass


class Timeout(WardenError):
    """No permits within the allotted time; callers treat it as retryable."""


class OverRelease(WardenError):
    pass


@dataclass(frozen=True)
class ResourceClass:
    name: str
    limit: int

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError(f"resource class {self.name!r} needs limit >= 1, got {self.limit}")


@dataclass(eq=False)
class Request:
    container: "ResourceContainer"
    class_name: str
    n: int
    seq: int
    granted: bool = False
    cancelled: bool = False

    @property
    def pending(self) -> bool:
        return not (self.granted or self.cancelled)


# (kind, class_name, n, container, held_after) -> None
Listener = Callable[[str, str, int, "ResourceContainer", int], None]


class Warden:
    def __init__(self, classes: Mapping[str, int] | list[ResourceClass], listener: Optional[Listener] = None):
        if isinstance(classes, Mapping):
            classes = [ResourceClass(name, limit) for name, limit in classes.items()]
        self.classes = {c.name: c for c in classes}
        self.held = {name: 0 for name in self.classes}
        self.queues: dict[str, deque[Request]] = {name: deque() for name in self.classes}
        self.listener = listener
        self._seq = itertools.count()
        self._lock = threading.RLock()
        self._changed = threading.Condition(self._lock)

    def limit(self, class_name: str) -> int:
        return self._class(class_name).limit

    def _class(self, class_name: str) -> ResourceClass:
        try:
            return self.classes[class_name]
        except KeyError:
            raise UnknownClass(f"resource class {class_name!r} is not registered") from None

    def _emit(self, kind: str, container: "ResourceContainer", class_name: str, n: int) -> None:
        if self.listener is not None:
            self.listener(kind, class_name, n, container, self.held[class_name])

    def _grant_ready(self, class_name: str) -> None:
        queue = self.queues[class_name]
        limit = self.classes[class_name].limit
        while queue and self.held[class_name] + queue[0].n <= limit:
            req = queue.popleft()
            self.held[class_name] += req.n
            req.container.holdings[class_name] = req.container.holdings.get(class_name, 0) + req.n
            req.granted = True
            self._emit("permit-grant", req.container, class_name, req.n)
        self._changed.notify_all()

    def request(self, container: "ResourceContainer", class_name: str, n: int = 1) -> Request:
        """Queue a request and grant it at once if it is first in line and fits."""
        cls = self._class(class_name)
        if n < 1:
            raise ValueError(f"must request at least one permit, got {n}")
        if n > cls.limit:
            raise WardenError(f"{n} permits of {class_name!r} can never be granted (limit {cls.limit})")
        with self._lock:
            req = Request(container, class_name, n, next(self._seq))
            self.queues[class_name].append(req)
            self._grant_ready(class_name)
            return req

    def cancel(self, req: Request) -> None:
        with self._lock:
            if req.granted:
                return
            req.cancelled = True
            try:
                self.queues[req.class_name].remove(req)
            except ValueError:
                pass
            self._grant_ready(req.class_name)

    def acquire(
        self, container: "ResourceContainer", class_name: str, n: int = 1, timeout_s: Optional[float] = None
    ) -> Request:
        """Block until granted; raise :class:`Timeout` after ``timeout_s`` seconds."""
        req = self.request(container, class_name, n)
        deadline = None if timeout_s is None else time.monotonic() + timeout_s
        with self._lock:
            while not req.granted:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    self.cancel(req)
                    raise Timeout(f"no {class_name!r} permit within {timeout_s}s")
                self._changed.wait(remaining)
        return req

    def release(self, container: "ResourceContainer", class_name: str, n: int = 1) -> None:
        self._class(class_name)
        with self._lock:
            have = container.holdings.get(class_name, 0)
            if n > have:
                raise OverRelease(f"{container.owner} releases {n} {class_name!r} permits but holds {have}")
            container.holdings[class_name] = have - n
            if not container.holdings[class_name]:
                del container.holdings[class_name]
            self.held[class_name] -= n
            self._emit("permit-release", container, class_name, n)
            self._grant_ready(class_name)

    def waiting(self, class_name: str) -> int:
        with self._lock:
            return len(self.queues[class_name])


@dataclass(eq=False)
class ResourceContainer:
    """Per-trial view of the warden: tracks what the trial holds."""

    warden: Warden
    owner: str = ""
    worker_id: int = 0
    holdings: dict[str, int] = field(default_factory=dict)
    pending: list[Request] = field(default_factory=list)

    def request(self, class_name: str, n: int = 1) -> Request:
        req = self.warden.request(self, class_name, n)
        if req.pending:
            self.pending.append(req)
        return req

    def acquire(self, class_name: str, n: int = 1, timeout_s: Optional[float] = None) -> Request:
        return self.warden.acquire(self, class_name, n, timeout_s)

    def release(self, class_name: str, n: int = 1) -> None:
        self.warden.release(self, class_name, n)

    def held(self, class_name: str) -> int:
        return self.holdings.get(class_name, 0)

    def release_all(self) -> None:
        """Cancel outstanding requests and return every held permit."""
        for req in self.pending:
            self.warden.cancel(req)
        self.pending.clear()
        for class_name, n in sorted(self.holdings.items()):
            self.warden.release(self, class_name, n)
