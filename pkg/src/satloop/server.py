"""Batched clause evaluation over TCP.

The server holds one tree model and answers newline-delimited JSON
requests:

    {"id": "r1", "query": [[[idx, count], ...], ...], "context": [ids]}
    -> {"id": "r1", "scores": [0.62, ...]}
    -> {"id": "r1", "error": {"code": "bad_request", "message": "..."}}

A query is a list of sparse vectors, one score comes back per vector,
in order. An empty query works as a ping. The context field carries the
caller's recently processed clause ids; the model here is stateless, so
they are accepted and ignored. Malformed input earns an error response
on the same connection, which stays open.

Workers implement the batching rule: when fewer than `batch_size`
requests are waiting, a worker sleeps `wait` seconds, then drains up to
`batch_size` requests in one grab. Under load batches fill up and the
sleep is skipped; a lone request pays at most one wait. Responses on a
connection are sequenced so they leave in request order even when
several workers finish out of order.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
from typing import Optional, Sequence

from .features import SparseVector
from .gbdt import TreeModel

DEFAULT_WORKERS = 28
DEFAULT_BATCH_SIZE = 8
DEFAULT_WAIT = 0.01


class ServerError(Exception):
    """The server answered with an error response."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class ServerUnavailable(Exception):
    """Transport failure that survived the reconnect attempt."""


def take_batch(q: "queue.Queue", batch_size: int) -> list:
    """Dequeue up to batch_size items without blocking."""
    items = []
    while len(items) < batch_size:
        try:
            items.append(q.get_nowait())
        except queue.Empty:
            break
    return items


class _Connection:
    """Per-connection send state: responses go out in request order."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.lock = threading.Lock()
        self.next_seq = 0
        self.pending: dict[int, bytes] = {}
        self.closed = False

    def send_in_order(self, seq: int, payload: bytes) -> None:
        with self.lock:
            self.pending[seq] = payload
            while self.next_seq in self.pending:
                data = self.pending.pop(self.next_seq)
                self.next_seq += 1
                if not self.closed:
                    try:
                        self.sock.sendall(data)
                    except OSError:
                        self.closed = True

    def close(self) -> None:
        with self.lock:
            self.closed = True
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()


class EvalServer:
    """Threaded scoring server around a single TreeModel."""

    def __init__(
        self,
        model: TreeModel,
        host: str = "127.0.0.1",
        port: int = 0,
        workers: int = DEFAULT_WORKERS,
        batch_size: int = DEFAULT_BATCH_SIZE,
        wait: float = DEFAULT_WAIT,
    ):
        if workers < 1 or batch_size < 1 or wait < 0:
            raise ValueError("need workers >= 1, batch_size >= 1, wait >= 0")
        self.model = model
        self.host = host
        self.port = port
        self.workers = workers
        self.batch_size = batch_size
        self.wait = wait
        self.batch_sizes: list[int] = []
        self._batch_lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._accepting = False
        self._outstanding = 0
        self._drained = threading.Condition()
        self._threads: list[threading.Thread] = []
        self._connections: list[_Connection] = []
        self._conn_lock = threading.Lock()
        self._listener: Optional[socket.socket] = None

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(64)
        # A blocked accept() is not interrupted by close() on Linux; poll
        # so shutdown can actually stop the accept thread.
        listener.settimeout(0.25)
        self.port = listener.getsockname()[1]
        self._listener = listener
        self._accepting = True
        accept = threading.Thread(target=self._accept_loop, daemon=True)
        accept.start()
        self._threads.append(accept)
        for _ in range(self.workers):
            worker = threading.Thread(target=self._worker_loop, daemon=True)
            worker.start()
            self._threads.append(worker)

    def shutdown(self, drain: bool = True) -> None:
        """Stop the server. With drain=True, every request already read
        off a socket is scored and answered before threads exit."""
        self._accepting = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        if drain:
            with self._drained:
                self._drained.wait_for(
                    lambda: self._outstanding == 0 and self._queue.empty(), timeout=30
                )
        self._stop.set()
        with self._conn_lock:
            conns = list(self._connections)
        for conn in conns:
            conn.close()
        for thread in self._threads:
            thread.join(timeout=5)

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while self._accepting:
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock)
            with self._conn_lock:
                self._connections.append(conn)
            reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            reader.start()

    def _read_loop(self, conn: _Connection) -> None:
        buf = b""
        seq = 0
        while not self._stop.is_set():
            try:
                chunk = conn.sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if not line.strip():
                    continue
                self._submit(conn, seq, line)
                seq += 1

    def _submit(self, conn: _Connection, seq: int, line: bytes) -> None:
        req_id = ""
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request must be a JSON object")
            req_id = req.get("id", "")
            if not isinstance(req_id, str):
                req_id = ""
                raise ValueError("id must be a string")
            query = req.get("query")
            if not isinstance(query, list):
                raise ValueError("query must be a list of sparse vectors")
            vectors = []
            for entry in query:
                if not isinstance(entry, list):
                    raise ValueError("each query item must be a list of [index, count]")
                pairs = {}
                for pair in entry:
                    if (
                        not isinstance(pair, (list, tuple))
                        or len(pair) != 2
                        or not isinstance(pair[0], int)
                        or isinstance(pair[0], bool)
                        or not isinstance(pair[1], (int, float))
                        or pair[0] < 0
                    ):
                        raise ValueError("sparse entries must be [index >= 0, count]")
                    pairs[pair[0]] = float(pair[1])
                vectors.append(pairs)
            context = req.get("context", [])
            if not isinstance(context, list) or any(
                not isinstance(c, int) for c in context
            ):
                raise ValueError("context must be a list of ints")
        except (ValueError, json.JSONDecodeError) as exc:
            self._respond(
                conn,
                seq,
                {"id": req_id, "error": {"code": "bad_request", "message": str(exc)}},
            )
            return
        with self._drained:
            self._outstanding += 1
        self._queue.put((conn, seq, req_id, vectors))

    def _respond(self, conn: _Connection, seq: int, payload: dict) -> None:
        conn.send_in_order(seq, json.dumps(payload).encode("utf-8") + b"\n")

    def _worker_loop(self) -> None:
        while True:
            if self._queue.qsize() < self.batch_size:
                if self._stop.is_set() and self._queue.empty():
                    return
                self._stop.wait(self.wait)
            batch = take_batch(self._queue, self.batch_size)
            if not batch:
                continue
            with self._batch_lock:
                self.batch_sizes.append(len(batch))
            for conn, seq, req_id, vectors in batch:
                scores = [
                    self.model.score(SparseVector(self.model.dimension, entries))
                    for entries in vectors
                ]
                self._respond(conn, seq, {"id": req_id, "scores": scores})
                with self._drained:
                    self._outstanding -= 1
                    self._drained.notify_all()


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {addr!r}")
    return host, int(port)


class ScoreClient:
    """Blocking client for the eval server; one in-flight request at a
    time per client. Reconnects once on transport failure, then raises
    ServerUnavailable."""

    def __init__(self, address: str | tuple[str, int], timeout: float = 30.0):
        self.address = parse_address(address) if isinstance(address, str) else address
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._file = None
        self._next_id = 0

    def _connect(self) -> None:
        sock = socket.create_connection(self.address, timeout=self.timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._file = sock.makefile("rb")

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._file = None

    def __enter__(self) -> "ScoreClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _roundtrip(self, payload: bytes) -> dict:
        if self._sock is None:
            self._connect()
        assert self._sock is not None and self._file is not None
        self._sock.sendall(payload)
        line = self._file.readline()
        if not line:
            raise OSError("server closed the connection")
        return json.loads(line)

    def evaluate(
        self, vectors: Sequence[SparseVector], context: Sequence[int] = ()
    ) -> list[float]:
        """Score vectors remotely; result order matches input order."""
        self._next_id += 1
        req_id = f"q{self._next_id}"
        payload = (
            json.dumps(
                {
                    "id": req_id,
                    "query": [[[i, c] for i, c in v.to_pairs()] for v in vectors],
                    "context": list(context),
                },
                separators=(",", ":"),
            ).encode("utf-8")
            + b"\n"
        )
        try:
            resp = self._roundtrip(payload)
        except (OSError, json.JSONDecodeError):
            self.close()
            try:
                resp = self._roundtrip(payload)
            except (OSError, json.JSONDecodeError) as exc:
                self.close()
                raise ServerUnavailable(str(exc)) from exc
        if "error" in resp:
            err = resp["error"]
            raise ServerError(err.get("code", "unknown"), err.get("message", ""))
        if resp.get("id") != req_id:
            raise ServerError("bad_response", f"response id mismatch: {resp.get('id')!r}")
        scores = resp.get("scores")
        if not isinstance(scores, list) or len(scores) != len(vectors):
            raise ServerError("bad_response", "score count does not match query")
        return [float(s) for s in scores]

    def ping(self) -> bool:
        return self.evaluate([]) == []
