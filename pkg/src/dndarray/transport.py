"""Message-passing contract and the in-process loopback backend.

Every rank of a world runs the same program (SPMD). Collectives are matched
by call order: the i-th collective on one rank pairs with the i-th collective
on every other rank. The loopback backend runs one thread per rank and keeps
a rendezvous slot per collective call index.
"""
from __future__ import annotations

import copy
import os
import threading
from collections import Counter, defaultdict, deque
from typing import Any, Callable, List, Optional, Sequence

import numpy as np

__all__ = [
    "Communicator",
    "LoopbackComm",
    "MpiComm",
    "TransportError",
    "DeadlockError",
    "CollectiveOrderError",
    "WorldAborted",
    "default_timeout",
    "get_comm",
    "run_loopback",
]

DEFAULT_TIMEOUT_SECS = 30.0


class TransportError(RuntimeError):
    """Base class for fatal communication failures."""


class DeadlockError(TransportError):
    """A blocking call waited longer than the world's timeout."""


class CollectiveOrderError(TransportError):
    """Ranks entered different collectives at the same call index."""


class WorldAborted(TransportError):
    """Another rank of the world failed; this rank was woken to unwind."""


def default_timeout() -> float:
    value = os.environ.get("DND_TIMEOUT_SECS")
    return float(value) if value else DEFAULT_TIMEOUT_SECS


def _as_buffer(buf) -> np.ndarray:
    # contiguous, owned copy: the sender may reuse its array after send
    return np.array(buf, copy=True, order="C").reshape(-1)


class Communicator:
    """Rank handle of a message-passing world.

    Subclasses implement the point-to-point and collective primitives below.
    ``stats`` counts calls per primitive so tests can assert communication
    patterns (e.g. the number of ring shifts).
    """

    backend = "abstract"

    def __init__(self, rank: int, size: int):
        if size < 1 or not 0 <= rank < size:
            raise ValueError(f"invalid rank {rank} for world of size {size}")
        self.rank = rank
        self.size = size
        self.stats: Counter = Counter()

    def __repr__(self):
        return f"{type(self).__name__}(rank={self.rank}, size={self.size})"

    def send(self, dest: int, buf) -> None:
        raise NotImplementedError

    def recv(self, src: int) -> np.ndarray:
        raise NotImplementedError

    def sendrecv(self, dest: int, sendbuf, src: int) -> np.ndarray:
        raise NotImplementedError

    def allreduce(self, local: Any, combine: Callable[[Any, Any], Any], identity: Any) -> Any:
        raise NotImplementedError

    def allgather_varying(self, local) -> List[np.ndarray]:
        raise NotImplementedError

    def alltoall_varying(self, parts: Sequence) -> List[np.ndarray]:
        raise NotImplementedError

    def barrier(self) -> None:
        raise NotImplementedError

    def _check_peer(self, peer: int, allow_self: bool = False) -> None:
        if not 0 <= peer < self.size:
            raise ValueError(f"rank {peer} outside world of size {self.size}")
        if peer == self.rank and not allow_self:
            raise ValueError(f"rank {self.rank} cannot address itself point-to-point")


class _Slot:
    __slots__ = ("names", "payloads", "arrived", "done", "results", "error", "reads")

    def __init__(self, size: int):
        self.names: List[Optional[str]] = [None] * size
        self.payloads: List[Any] = [None] * size
        self.arrived = 0
        self.done = False
        self.results: Optional[List[Any]] = None
        self.error: Optional[Exception] = None
        self.reads = 0


class _World:
    """State shared by all loopback handles of one world."""

    def __init__(self, size: int, timeout: float):
        self.size = size
        self.timeout = timeout
        self.cond = threading.Condition()
        self.mailboxes = defaultdict(deque)  # (src, dest) -> FIFO of buffers
        self.slots: dict[int, _Slot] = {}
        self.aborted = False

    def abort(self) -> None:
        with self.cond:
            self.aborted = True
            self.cond.notify_all()


class LoopbackComm(Communicator):
    """In-process communicator; one handle per rank-thread."""

    backend = "loopback"

    def __init__(self, world: _World, rank: int):
        super().__init__(rank, world.size)
        self._world = world
        self._calls = 0

    @classmethod
    def create_world(cls, size: int, timeout: Optional[float] = None) -> List["LoopbackComm"]:
        world = _World(size, default_timeout() if timeout is None else timeout)
        return [cls(world, r) for r in range(size)]

    # -- point to point ------------------------------------------------------

    def send(self, dest, buf):
        self._check_peer(dest)
        self.stats["send"] += 1
        self._post(dest, buf)

    def _post(self, dest, buf):
        w = self._world
        with w.cond:
            w.mailboxes[(self.rank, dest)].append(_as_buffer(buf))
            w.cond.notify_all()

    def recv(self, src):
        self._check_peer(src)
        self.stats["recv"] += 1
        return self._take(src)

    def _take(self, src):
        w = self._world
        box = w.mailboxes[(src, self.rank)]
        with w.cond:
            ok = w.cond.wait_for(lambda: box or w.aborted, timeout=w.timeout)
            if w.aborted:
                raise WorldAborted(f"rank {self.rank}: world aborted during recv from rank {src}")
            if not ok:
                raise DeadlockError(
                    f"rank {self.rank} timed out after {w.timeout:g}s waiting for a message from rank {src}"
                )
            return box.popleft()

    def sendrecv(self, dest, sendbuf, src):
        self._check_peer(dest, allow_self=True)
        self._check_peer(src, allow_self=True)
        self.stats["sendrecv"] += 1
        # the send side never blocks, so cyclic exchange patterns cannot deadlock
        self._post(dest, sendbuf)
        return self._take(src)

    # -- collectives ---------------------------------------------------------

    def _collective(self, name: str, payload: Any, compute: Callable[[List[Any]], List[Any]]):
        w = self._world
        index = self._calls
        self._calls += 1
        self.stats[name] += 1
        with w.cond:
            if w.aborted:
                raise WorldAborted(f"rank {self.rank}: world aborted before {name}")
            slot = w.slots.setdefault(index, _Slot(w.size))
            slot.names[self.rank] = name
            slot.payloads[self.rank] = payload
            slot.arrived += 1
            if slot.arrived == w.size:
                if len(set(slot.names)) > 1:
                    calls = ", ".join(f"rank {r}: {n}" for r, n in enumerate(slot.names))
                    slot.error = CollectiveOrderError(f"collective #{index} mismatched ({calls})")
                else:
                    try:
                        slot.results = compute(slot.payloads)
                    except Exception as exc:  # surfaced on every rank
                        slot.error = exc
                slot.payloads = [None] * w.size
                slot.done = True
                w.cond.notify_all()
            else:
                w.cond.wait_for(lambda: slot.done or w.aborted, timeout=w.timeout)
                if not slot.done:
                    if w.aborted:
                        raise WorldAborted(f"rank {self.rank}: world aborted during {name}")
                    missing = [r for r, n in enumerate(slot.names) if n is None]
                    raise DeadlockError(
                        f"rank {self.rank} timed out after {w.timeout:g}s in {name} "
                        f"(collective #{index}); ranks {missing} never arrived"
                    )
            slot.reads += 1
            if slot.reads == w.size:
                del w.slots[index]
            if slot.error is not None:
                raise slot.error
            return slot.results[self.rank]

    def allreduce(self, local, combine, identity):
        def compute(values):
            if len(values) == 1:
                return [copy.deepcopy(values[0])]
            acc = identity
            for v in values:  # fixed rank order: bitwise identical on all ranks
                acc = combine(acc, v)
            return [copy.deepcopy(acc) for _ in values]

        return self._collective("allreduce", local, compute)

    def allgather_varying(self, local):
        def compute(bufs):
            return [[b.copy() for b in bufs] for _ in bufs]

        return self._collective("allgather_varying", _as_buffer(local), compute)

    def alltoall_varying(self, parts):
        if len(parts) != self.size:
            raise ValueError(f"alltoall needs {self.size} parts, got {len(parts)}")

        def compute(all_parts):
            return [[all_parts[s][d] for s in range(len(all_parts))] for d in range(len(all_parts))]

        return self._collective("alltoall_varying", [_as_buffer(p) for p in parts], compute)

    def barrier(self):
        self._collective("barrier", None, lambda payloads: [None] * len(payloads))


# -- per-thread default communicator -------------------------------------------

_local = threading.local()


def get_comm() -> Communicator:
    """Communicator of the calling rank-worker, or a one-rank world."""
    comm = getattr(_local, "comm", None)
    if comm is None:
        comm = LoopbackComm.create_world(1)[0]
        _local.comm = comm
    return comm


def _set_comm(comm: Optional[Communicator]) -> None:
    _local.comm = comm


def run_loopback(fn: Callable[..., Any], size: int, *args, timeout: Optional[float] = None, **kwargs) -> list:
    """Run ``fn(comm, *args, **kwargs)`` on ``size`` rank-threads.

    Returns the per-rank return values ordered by rank. If any rank raises,
    the world is aborted and the first root-cause exception is re-raised.
    """
    comms = LoopbackComm.create_world(size, timeout)
    world = comms[0]._world
    results: list = [None] * size
    errors: list = [None] * size

    def worker(comm):
        _set_comm(comm)
        try:
            results[comm.rank] = fn(comm, *args, **kwargs)
        except BaseException as exc:
            errors[comm.rank] = exc
            world.abort()
        finally:
            _set_comm(None)

    if size == 1:
        previous = getattr(_local, "comm", None)
        worker(comms[0])
        _set_comm(previous)
    else:
        threads = [
            threading.Thread(target=worker, args=(c,), name=f"rank-{c.rank}", daemon=True) for c in comms
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    root = [e for e in errors if e is not None and not isinstance(e, WorldAborted)]
    if root:
        raise root[0]
    aborted = [e for e in errors if e is not None]
    if aborted:
        raise aborted[0]
    return results


class MpiComm(Communicator):
    """Adapter running the same contract over mpi4py (external launch mode).

    Only used when the CLI is started under ``mpiexec`` with ``--transport mpi``;
    the test suite runs entirely on the loopback backend.
    """

    backend = "external"

    def __init__(self, mpi_comm=None):
        from mpi4py import MPI

        self._comm = MPI.COMM_WORLD if mpi_comm is None else mpi_comm
        super().__init__(self._comm.Get_rank(), self._comm.Get_size())

    def send(self, dest, buf):
        self._check_peer(dest)
        self.stats["send"] += 1
        self._comm.send(_as_buffer(buf), dest=dest)

    def recv(self, src):
        self._check_peer(src)
        self.stats["recv"] += 1
        return self._comm.recv(source=src)

    def sendrecv(self, dest, sendbuf, src):
        self.stats["sendrecv"] += 1
        return self._comm.sendrecv(_as_buffer(sendbuf), dest=dest, source=src)

    def allreduce(self, local, combine, identity):
        self.stats["allreduce"] += 1
        values = self._comm.allgather(local)
        if len(values) == 1:
            return values[0]
        acc = identity
        for v in values:
            acc = combine(acc, v)
        return acc

    def allgather_varying(self, local):
        self.stats["allgather_varying"] += 1
        return self._comm.allgather(_as_buffer(local))

    def alltoall_varying(self, parts):
        if len(parts) != self.size:
            raise ValueError(f"alltoall needs {self.size} parts, got {len(parts)}")
        self.stats["alltoall_varying"] += 1
        return self._comm.alltoall([_as_buffer(p) for p in parts])

    def barrier(self):
        self.stats["barrier"] += 1
        self._comm.Barrier()
