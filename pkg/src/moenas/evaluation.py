"""Objective evaluation: analytic objectives, the surrogate, the external
evaluator wire protocol and the cached parallel dispatcher.

Wire protocol
-------------
Each message is one JSON object on one newline-terminated line. Requests::

    {"id":7,"genome":{...},"macro":{"template":"cifar10","n":2,"f":32,"resolution":32,"classes":10}}

Responses, in any order::

    {"id":7,"objectives":[0.91],"error":null}
    {"id":7,"objectives":null,"error":"out of memory"}

``objectives`` holds only the externally computed slots, in declared order.
Evaluators decide how a training run is reduced to a scalar (best or final
epoch); the engine only sees the number.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import queue
import socket
import subprocess
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

from . import genome as gen
from .genome import Genome
from .network import MacroConfig, network_cost, speed

log = logging.getLogger(__name__)

BUILTIN_OBJECTIVES = ("speed", "params_inverse", "surrogate")


class EvaluatorError(RuntimeError):
    """The evaluator cannot be reached at all."""


class ProtocolError(ValueError):
    """A line that is not a valid response."""


# ---------------------------------------------------------------------------
# objectives


def objective_kind(name: str) -> str:
    if name in BUILTIN_OBJECTIVES:
        return name
    if name == "external" or name.startswith("external:"):
        return "external"
    raise ValueError(f"unknown objective {name!r}")


def surrogate_accuracy(g: Genome, macro: MacroConfig) -> float:
    """Deterministic stand-in for proxy-training accuracy.

    ``0.50 + 0.45 * (1 - exp(-M / 3e8)) + eps`` with ``M`` the network
    Mult-Adds and ``eps`` in [-0.02, 0.02) taken from a hash of the genome text.
    """
    mult_adds = network_cost(g, macro).mult_adds
    return 0.50 + 0.45 * (1.0 - math.exp(-mult_adds / 3e8)) + genome_jitter(g)


def genome_jitter(g: Genome) -> float:
    digest = hashlib.sha256(gen.serialize(g).encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return 0.04 * u - 0.02


def compose_objectives(
    g: Genome,
    objectives: Sequence[str],
    macro: MacroConfig,
    external_values: Sequence[float] = (),
) -> tuple[float, ...]:
    """Objective vector in declared order.

    ``external_values`` fills the external slots from left to right.
    """
    external = list(external_values)
    n_external = sum(objective_kind(o) == "external" for o in objectives)
    if len(external) != n_external:
        raise ValueError(f"expected {n_external} external values, got {len(external)}")
    cost = None
    out = []
    for name in objectives:
        kind = objective_kind(name)
        if kind == "external":
            out.append(float(external.pop(0)))
            continue
        if kind == "surrogate":
            out.append(surrogate_accuracy(g, macro))
            continue
        cost = cost or network_cost(g, macro)
        if kind == "speed":
            out.append(speed(cost))
        else:
            out.append(1e6 / cost.params)
    return tuple(out)


# ---------------------------------------------------------------------------
# wire protocol


@dataclass(frozen=True)
class EvaluationRequest:
    id: int
    genome: Genome
    macro: MacroConfig

    def to_line(self) -> str:
        msg = {"id": self.id, "genome": gen.to_dict(self.genome), "macro": self.macro.to_dict()}
        return json.dumps(msg, separators=(",", ":")) + "\n"

    @classmethod
    def from_line(cls, line: str) -> "EvaluationRequest":
        msg = json.loads(line)
        m = msg["macro"]
        macro = MacroConfig(m["template"], m["n"], m["f"], m["resolution"], m["classes"])
        return cls(int(msg["id"]), gen.from_dict(msg["genome"]), macro)


@dataclass(frozen=True)
class EvaluationResponse:
    id: int
    objectives: tuple[float, ...] | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_line(self) -> str:
        objs = None if self.objectives is None else list(self.objectives)
        return json.dumps({"id": self.id, "objectives": objs, "error": self.error}, separators=(",", ":")) + "\n"

    @classmethod
    def from_line(cls, line: str) -> "EvaluationResponse":
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"not JSON: {line.strip()[:80]!r}") from exc
        if not isinstance(msg, dict) or not isinstance(msg.get("id"), int):
            raise ProtocolError(f"response without integer id: {line.strip()[:80]!r}")
        error = msg.get("error")
        objs = msg.get("objectives")
        if error is not None:
            return cls(msg["id"], None, str(error))
        if not isinstance(objs, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in objs
        ):
            raise ProtocolError(f"response {msg['id']} has no finite objective list")
        return cls(msg["id"], tuple(float(v) for v in objs), None)


_EOF = object()


class _LineTransport:
    """Bidirectional line stream with a reader thread feeding a queue."""

    def __init__(self):
        self.lines: queue.Queue = queue.Queue()
        self.closed = False

    def _pump(self, stream) -> None:
        try:
            for line in stream:
                self.lines.put(line)
        except (OSError, ValueError):
            pass
        finally:
            self.lines.put(_EOF)

    def send(self, line: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class SubprocessTransport(_LineTransport):
    def __init__(self, command: Sequence[str]):
        super().__init__()
        try:
            self.proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorError(f"cannot start evaluator {command!r}: {exc}") from exc
        threading.Thread(target=self._pump, args=(self.proc.stdout,), daemon=True).start()

    def send(self, line: str) -> None:
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            self.closed = True
            raise EvaluatorError(f"evaluator stdin closed: {exc}") from exc

    def close(self) -> None:
        self.closed = True
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class SocketTransport(_LineTransport):
    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        super().__init__()
        try:
            self.sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise EvaluatorError(f"cannot connect to evaluator at {host}:{port}: {exc}") from exc
        self.sock.settimeout(None)
        self._reader = self.sock.makefile("r", encoding="utf-8", newline="\n")
        threading.Thread(target=self._pump, args=(self._reader,), daemon=True).start()

    def send(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode())
        except OSError as exc:
            self.closed = True
            raise EvaluatorError(f"evaluator connection lost: {exc}") from exc

    def close(self) -> None:
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def open_transport(command: Sequence[str] | None = None, address: str | None = None) -> _LineTransport:
    if (command is None) == (address is None):
        raise ValueError("give exactly one of an evaluator command or a host:port address")
    if command is not None:
        return SubprocessTransport(command)
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {address!r}")
    return SocketTransport(host, int(port))


class ExternalEvaluator:
    """Client side of the line protocol.

    At most ``max_in_flight`` requests are outstanding. A request that times
    out or comes back with an error is re-sent up to ``retries`` times, then
    reported as an error response. Unparseable lines and responses for unknown
    ids are logged and skipped. If the evaluator goes away, every pending
    request is answered with an error immediately.
    """

    def __init__(self, transport: _LineTransport, timeout: float = 600.0, retries: int = 1):
        self.transport = transport
        self.timeout = timeout
        self.retries = retries

    @classmethod
    def connect(cls, command=None, address=None, timeout: float = 600.0, retries: int = 1):
        return cls(open_transport(command, address), timeout, retries)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        self.transport.close()

    def evaluate(self, requests: Sequence[EvaluationRequest], max_in_flight: int = 1) -> list[EvaluationResponse]:
        if self.transport.closed:
            raise EvaluatorError("evaluator transport is closed")
        if len({r.id for r in requests}) != len(requests):
            raise ValueError("request ids must be unique")
        waiting = deque(requests)
        in_flight: dict[int, list] = {}  # id -> [request, deadline, attempts]
        done: dict[int, EvaluationResponse] = {}

        def send(req: EvaluationRequest, attempts: int) -> None:
            self.transport.send(req.to_line())
            in_flight[req.id] = [req, time.monotonic() + self.timeout, attempts]

        def retry_or_fail(rid: int, reason: str) -> None:
            req, _, attempts = in_flight.pop(rid)
            if attempts <= self.retries:
                log.warning("request %d: %s; retrying (%d/%d)", rid, reason, attempts, self.retries)
                send(req, attempts + 1)
            else:
                log.error("request %d: %s; giving up", rid, reason)
                done[rid] = EvaluationResponse(rid, None, reason)

        try:
            while waiting or in_flight:
                while waiting and len(in_flight) < max(1, max_in_flight):
                    send(waiting.popleft(), 1)
                wait = max(0.0, min(v[1] for v in in_flight.values()) - time.monotonic())
                try:
                    line = self.transport.lines.get(timeout=wait)
                except queue.Empty:
                    line = None
                if line is _EOF:
                    self.transport.closed = True
                    raise EvaluatorError("evaluator closed its output stream")
                if line is not None and line.strip():
                    try:
                        resp = EvaluationResponse.from_line(line)
                    except ProtocolError as exc:
                        log.warning("skipping malformed evaluator line: %s", exc)
                    else:
                        if resp.id not in in_flight:
                            log.warning("skipping response for unknown id %d", resp.id)
                        elif resp.ok:
                            in_flight.pop(resp.id)
                            done[resp.id] = resp
                        else:
                            retry_or_fail(resp.id, f"evaluator error: {resp.error}")
                now = time.monotonic()
                for rid in [k for k, v in in_flight.items() if v[1] <= now]:
                    retry_or_fail(rid, "timeout")
        except EvaluatorError as exc:
            for req in list(waiting) + [v[0] for v in in_flight.values()]:
                done[req.id] = EvaluationResponse(req.id, None, str(exc))
        return [done[r.id] for r in requests]


def external_evaluate(
    batch: Sequence[EvaluationRequest],
    transport: _LineTransport,
    timeout: float = 600.0,
    retries: int = 1,
    max_in_flight: int = 1,
) -> list[EvaluationResponse]:
    return ExternalEvaluator(transport, timeout, retries).evaluate(batch, max_in_flight)


# ---------------------------------------------------------------------------
# dispatch


@dataclass(frozen=True)
class Outcome:
    objectives: tuple[float, ...] | None
    error: str | None = None


def thread_map(fn: Callable, items: Sequence, parallelism: int) -> list:
    """``[fn(x) for x in items]`` computed by up to ``parallelism`` threads."""
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def dispatch(
    items: Sequence[tuple[int, object]],
    key: Callable[[object], Hashable],
    evaluate_batch: Callable[[list, int], list[Outcome]],
    cache: dict,
    parallelism: int = 1,
) -> tuple[list[Outcome], int]:
    """Evaluate ``(id, candidate)`` pairs, consulting and filling ``cache``.

    Candidates whose key is cached, or repeats a key earlier in the batch, are
    not sent to ``evaluate_batch``. Results come back aligned with ``items``.
    Failed outcomes are not cached. Returns ``(outcomes, n_dispatched)``.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    keys = [key(x) for _, x in items]
    misses: dict[Hashable, tuple[int, object]] = {}
    for k, item in zip(keys, items):
        if k not in cache and k not in misses:
            misses[k] = item
    fresh = evaluate_batch(list(misses.values()), parallelism) if misses else []
    by_key = dict(zip(misses, fresh))
    out = []
    for k in keys:
        if k in cache:
            out.append(Outcome(tuple(cache[k])))
        else:
            out.append(by_key[k])
    for k, res in by_key.items():
        if res.error is None:
            cache[k] = res.objectives
    return out, len(misses)
