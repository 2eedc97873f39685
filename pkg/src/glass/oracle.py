"""Evaluation boundary: transports, the client that talks to an oracle over
the wire protocol, a server loop for hosting oracles, and deterministic
in-process oracles for tests and benchmarks.

One request is in flight per connection; responses are matched by id and
results stay aligned with the request's genome order.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import socket
import subprocess
import sys
import threading
from typing import Iterable, Optional, Sequence

import numpy as np

from .benchmarks import sphere, sphere_space, zdt1, zdt1_space
from .objectives import Measurement, ObjectiveSpec, assemble_objectives
from .protocol import (
    PROTOCOL_VERSION,
    ErrorMessage,
    EvalOk,
    EvalRequest,
    EvalResult,
    Hello,
    Message,
    ProtocolError,
    RenderOk,
    RenderRequest,
    TargetOk,
    TargetRequest,
    decode_line,
    encode_line,
)
from .space import BlockKind, LatentSpaceSpec, sample

__all__ = [
    "DEFAULT_TIMEOUT",
    "OracleError",
    "TransportError",
    "HandshakeError",
    "Oracle",
    "OracleServer",
    "OracleClient",
    "ObjectiveEvaluator",
    "LoopbackTransport",
    "ProcessTransport",
    "TcpTransport",
    "LinearEmbeddingOracle",
    "BenchmarkOracle",
    "serve_stdio",
]

DEFAULT_TIMEOUT = 300.0  # seconds per batch


class OracleError(RuntimeError):
    pass


class TransportError(OracleError):
    pass


class HandshakeError(OracleError):
    pass


# ---------------------------------------------------------------------------
# Oracle implementations (in-process side)
# ---------------------------------------------------------------------------


class Oracle:
    """Interface an in-process oracle implements; all hooks are pure given
    the construction seed."""

    def describe(self) -> Hello:
        raise NotImplementedError

    def target_embedding(self, kind: str, payload: str) -> np.ndarray:
        raise OracleError("this oracle does not serve target embeddings")

    def evaluate(self, genomes: list[np.ndarray]) -> list[Measurement]:
        raise NotImplementedError

    def render(self, genome: np.ndarray, out_path: str) -> str:
        raise OracleError("this oracle does not render outputs")


class LinearEmbeddingOracle(Oracle):
    """Stand-in for a generator+encoder stack: embedding = tanh(M z) for a
    seeded random matrix M, optional realness score exp(-|z|^2 / dim).

    A planted latent (given or derived from the seed) answers target
    requests, which makes the oracle's global optimum known by
    construction.
    """

    def __init__(
        self,
        space: LatentSpaceSpec,
        embedding_dim: int = 32,
        seed: int = 0,
        with_discriminator: bool = False,
        planted_latent: Optional[np.ndarray] = None,
    ):
        if any(block.kind is not BlockKind.REAL for block in space.blocks):
            raise ValueError("linear embedding oracle requires a real-only space")
        self.space = space
        self.embedding_dim = embedding_dim
        self.with_discriminator = with_discriminator
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((embedding_dim, space.total_dim)) / np.sqrt(
            space.total_dim
        )
        if planted_latent is None:
            planted_latent = sample(space, np.random.default_rng(seed + 1))
        self.planted_latent = np.asarray(planted_latent, dtype=np.float64)

    def describe(self) -> Hello:
        return Hello(
            version=PROTOCOL_VERSION,
            embedding_dim=self.embedding_dim,
            supports_discriminator=self.with_discriminator,
            space_fingerprint=self.space.fingerprint(),
        )

    def embed(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(self.matrix @ np.asarray(z, dtype=np.float64))

    def realness(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=np.float64)
        return float(np.exp(-np.dot(z, z) / self.space.total_dim))

    def target_embedding(self, kind: str, payload: str) -> np.ndarray:
        return self.embed(self.planted_latent)

    def evaluate(self, genomes: list[np.ndarray]) -> list[Measurement]:
        out = []
        for z in genomes:
            if len(z) != self.space.total_dim:
                out.append(Measurement(error=f"genome length {len(z)} != {self.space.total_dim}"))
                continue
            d_prob = self.realness(z) if self.with_discriminator else None
            out.append(Measurement(embedding=self.embed(z), d_prob=d_prob))
        return out

    def render(self, genome: np.ndarray, out_path: str) -> str:
        payload = {
            "genome": [float(v) for v in genome],
            "embedding": [float(v) for v in self.embed(genome)],
        }
        path = out_path if out_path.endswith(".json") else out_path + ".json"
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
        return path


class BenchmarkOracle(Oracle):
    """Raw-objective landscapes (sphere, zdt1) behind the wire protocol.

    The handshake advertises ``raw_objectives`` so the engine skips the
    embedding math and direction-normalizes the values directly.
    """

    NAMES = ("sphere", "zdt1")

    def __init__(self, name: str, dim: int = 8):
        if name not in self.NAMES:
            raise ValueError(f"unknown benchmark {name!r}; expected one of {self.NAMES}")
        if dim < 2:
            raise ValueError("benchmark dimension must be >= 2")
        self.name = name
        self.dim = dim
        self.space = sphere_space(dim) if name == "sphere" else zdt1_space(dim)
        self.objective_count = 1 if name == "sphere" else 2

    def describe(self) -> Hello:
        return Hello(
            version=PROTOCOL_VERSION,
            embedding_dim=self.dim,
            supports_discriminator=False,
            space_fingerprint=self.space.fingerprint(),
            raw_objectives=True,
            objective_count=self.objective_count,
        )

    def evaluate(self, genomes: list[np.ndarray]) -> list[Measurement]:
        out = []
        for z in genomes:
            if len(z) != self.dim:
                out.append(Measurement(error=f"genome length {len(z)} != {self.dim}"))
            elif self.name == "sphere":
                out.append(Measurement(objectives=np.array([sphere(z)])))
            else:
                out.append(Measurement(objectives=np.array(zdt1(z))))
        return out

    def render(self, genome: np.ndarray, out_path: str) -> str:
        path = out_path if out_path.endswith(".json") else out_path + ".json"
        with open(path, "w", encoding="utf-8") as handle:
            json.dump({"genome": [float(v) for v in genome]}, handle)
        return path


# ---------------------------------------------------------------------------
# Server loop
# ---------------------------------------------------------------------------


class OracleServer:
    """Drives an :class:`Oracle` through the wire protocol, one response per
    request line.  Oracle exceptions become error messages, never crashes."""

    def __init__(self, oracle: Oracle):
        self.oracle = oracle

    def hello_line(self) -> str:
        return encode_line(self.oracle.describe())

    def handle_line(self, line: str) -> str:
        try:
            message = decode_line(line)
        except ProtocolError as exc:
            return encode_line(ErrorMessage(message=str(exc)))
        return self._dispatch(message)

    def _dispatch(self, message: Message) -> str:
        if isinstance(message, TargetRequest):
            try:
                embedding = self.oracle.target_embedding(message.kind, message.payload)
            except Exception as exc:
                return encode_line(ErrorMessage(message=f"target failed: {exc}"))
            return encode_line(TargetOk(embedding=tuple(float(v) for v in embedding)))
        if isinstance(message, EvalRequest):
            try:
                genomes = [np.asarray(g, dtype=np.float64) for g in message.genomes]
                results = self.oracle.evaluate(genomes)
            except Exception as exc:
                return encode_line(ErrorMessage(message=f"eval failed: {exc}", id=message.id))
            wire_results = []
            for m in results:
                if m.failed:
                    wire_results.append(EvalResult(error=m.error))
                elif m.objectives is not None:
                    wire_results.append(
                        EvalResult(objectives=tuple(float(v) for v in m.objectives))
                    )
                else:
                    wire_results.append(
                        EvalResult(
                            embedding=tuple(float(v) for v in m.embedding),
                            d_prob=None if m.d_prob is None else float(m.d_prob),
                        )
                    )
            return encode_line(EvalOk(id=message.id, results=tuple(wire_results)))
        if isinstance(message, RenderRequest):
            try:
                path = self.oracle.render(
                    np.asarray(message.genome, dtype=np.float64), message.out_path
                )
            except Exception as exc:
                return encode_line(ErrorMessage(message=f"render failed: {exc}"))
            return encode_line(RenderOk(path=path))
        return encode_line(ErrorMessage(message=f"unexpected message type {type(message).__name__}"))

    def serve(self, lines: Iterable[str], write_line) -> None:
        write_line(self.hello_line())
        for line in lines:
            if not line.strip():
                continue
            write_line(self.handle_line(line))


def serve_stdio(oracle: Oracle) -> None:
    """Host an oracle on this process's standard streams."""
    server = OracleServer(oracle)

    def write_line(line: str) -> None:
        sys.stdout.write(line + "\n")
        sys.stdout.flush()

    server.serve(sys.stdin, write_line)


# ---------------------------------------------------------------------------
# Transports (client side)
# ---------------------------------------------------------------------------


class LoopbackTransport:
    """In-process transport that still runs every message through the codec,
    so the serialized path is exercised without a child process."""

    def __init__(self, oracle: Oracle):
        self._server = OracleServer(oracle)
        self._pending: list[str] = [self._server.hello_line()]
        self._closed = False

    def send_line(self, line: str) -> None:
        if self._closed:
            raise TransportError("transport is closed")
        self._pending.append(self._server.handle_line(line))

    def recv_line(self, timeout: Optional[float] = None) -> str:
        if not self._pending:
            raise TransportError("no pending response")
        return self._pending.pop(0)

    def close(self) -> None:
        self._closed = True


class ProcessTransport:
    """Child-process oracle over its standard streams; stderr passes through."""

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"failed to start oracle command {argv!r}: {exc}") from exc
        self._queue: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._queue.put(line.rstrip("\n"))
        self._queue.put(None)

    def send_line(self, line: str) -> None:
        if self._proc.poll() is not None:
            raise TransportError(f"oracle process exited with code {self._proc.returncode}")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"oracle process pipe broke: {exc}") from exc

    def recv_line(self, timeout: Optional[float] = None) -> str:
        try:
            line = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"oracle response timed out after {timeout}s") from None
        if line is None:
            raise TransportError("oracle process closed its output stream")
        return line

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class TcpTransport:
    """Oracle reachable on a local TCP address ("host:port")."""

    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise TransportError(f"oracle address must look like host:port, got {address!r}")
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=10.0)
        except OSError as exc:
            raise TransportError(f"cannot connect to oracle at {address}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"oracle socket write failed: {exc}") from exc

    def recv_line(self, timeout: Optional[float] = None) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._reader.readline()
        except socket.timeout:
            raise TransportError(f"oracle response timed out after {timeout}s") from None
        except OSError as exc:
            raise TransportError(f"oracle socket read failed: {exc}") from exc
        if not line:
            raise TransportError("oracle closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


class OracleClient:
    """Engine-side endpoint: handshake validation, target fetch, batched
    evaluation with optional chunking, and the end-of-run render request."""

    def __init__(
        self,
        transport,
        expected_space: LatentSpaceSpec,
        timeout: float = DEFAULT_TIMEOUT,
        batch_size: Optional[int] = None,
    ):
        if batch_size is not None and batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.transport = transport
        self.expected_fingerprint = expected_space.fingerprint()
        self.timeout = timeout
        self.batch_size = batch_size
        self.hello: Optional[Hello] = None
        self._next_id = 1

    def handshake(self) -> Hello:
        line = self.transport.recv_line(timeout=self.timeout)
        message = decode_line(line)
        if isinstance(message, ErrorMessage):
            raise HandshakeError(f"oracle refused to start: {message.message}")
        if not isinstance(message, Hello):
            raise HandshakeError(f"expected a hello message, got {type(message).__name__}")
        if message.version != PROTOCOL_VERSION:
            raise HandshakeError(
                f"protocol version mismatch: engine speaks {PROTOCOL_VERSION}, "
                f"oracle speaks {message.version}"
            )
        if message.space_fingerprint != self.expected_fingerprint:
            raise HandshakeError(
                "latent space fingerprint mismatch: engine expects "
                f"{self.expected_fingerprint}, oracle serves {message.space_fingerprint}"
            )
        if not message.raw_objectives and message.embedding_dim < 1:
            raise HandshakeError(f"oracle reported embedding_dim {message.embedding_dim}")
        self.hello = message
        return message

    def _roundtrip(self, message) -> Message:
        self.transport.send_line(encode_line(message))
        return decode_line(self.transport.recv_line(timeout=self.timeout))

    def fetch_target(self, kind: str, payload: str) -> np.ndarray:
        reply = self._roundtrip(TargetRequest(kind=kind, payload=payload))
        if isinstance(reply, ErrorMessage):
            raise OracleError(f"target request failed: {reply.message}")
        if not isinstance(reply, TargetOk):
            raise ProtocolError(f"expected target_ok, got {type(reply).__name__}")
        embedding = np.asarray(reply.embedding, dtype=np.float64)
        self._check_dim(len(embedding), "target embedding")
        return embedding

    def evaluate(self, genomes: Sequence[np.ndarray]) -> list[Measurement]:
        if self.hello is None:
            raise OracleError("handshake must complete before evaluation")
        genomes = list(genomes)
        if not genomes:
            return []
        chunk = self.batch_size or len(genomes)
        measurements: list[Measurement] = []
        for start in range(0, len(genomes), chunk):
            measurements.extend(self._evaluate_chunk(genomes[start : start + chunk]))
        return measurements

    def _evaluate_chunk(self, genomes: list[np.ndarray]) -> list[Measurement]:
        request = EvalRequest(
            id=self._next_id,
            genomes=tuple(tuple(float(v) for v in g) for g in genomes),
        )
        self._next_id += 1
        reply = self._roundtrip(request)
        if isinstance(reply, ErrorMessage):
            raise OracleError(f"evaluation batch failed: {reply.message}")
        if not isinstance(reply, EvalOk):
            raise ProtocolError(f"expected eval_ok, got {type(reply).__name__}")
        if reply.id != request.id:
            raise ProtocolError(f"response id {reply.id} does not match request id {request.id}")
        if len(reply.results) != len(genomes):
            raise ProtocolError(
                f"got {len(reply.results)} results for {len(genomes)} genomes"
            )
        measurements = []
        for i, result in enumerate(reply.results):
            measurements.append(self._to_measurement(result, f"results[{i}]"))
        return measurements

    def _to_measurement(self, result: EvalResult, where: str) -> Measurement:
        if result.error is not None:
            return Measurement(error=result.error)
        if result.objectives is not None:
            if not self.hello.raw_objectives:
                raise ProtocolError("oracle sent raw objectives without advertising them", where)
            if len(result.objectives) != (self.hello.objective_count or 0):
                raise ProtocolError(
                    f"objective count drift: got {len(result.objectives)}, "
                    f"handshake promised {self.hello.objective_count}",
                    where,
                )
            return Measurement(objectives=np.asarray(result.objectives, dtype=np.float64))
        embedding = np.asarray(result.embedding, dtype=np.float64)
        self._check_dim(len(embedding), where)
        if (
            result.d_prob is not None
            and math.isfinite(result.d_prob)
            and not 0.0 <= result.d_prob <= 1.0
        ):
            raise ProtocolError(f"d_prob {result.d_prob} outside [0, 1]", where)
        return Measurement(embedding=embedding, d_prob=result.d_prob)

    def _check_dim(self, dim: int, where: str) -> None:
        if self.hello is not None and not self.hello.raw_objectives and dim != self.hello.embedding_dim:
            raise ProtocolError(
                f"embedding dimension drift: got {dim}, handshake promised "
                f"{self.hello.embedding_dim}",
                where,
            )

    def render(self, genome: np.ndarray, out_path: str) -> str:
        reply = self._roundtrip(
            RenderRequest(genome=tuple(float(v) for v in genome), out_path=out_path)
        )
        if isinstance(reply, ErrorMessage):
            raise OracleError(f"render failed: {reply.message}")
        if not isinstance(reply, RenderOk):
            raise ProtocolError(f"expected render_ok, got {type(reply).__name__}")
        return reply.path

    def close(self) -> None:
        self.transport.close()


class ObjectiveEvaluator:
    """Adapter from the oracle client to the engine's evaluator contract:
    measurements in, internal minimized objective vectors out."""

    def __init__(
        self,
        client: OracleClient,
        specs: Sequence[ObjectiveSpec],
        target: Optional[np.ndarray] = None,
    ):
        self.client = client
        self.specs = list(specs)
        self.target = target

    def __call__(self, genomes: list[np.ndarray]) -> list[np.ndarray]:
        measurements = self.client.evaluate(genomes)
        return assemble_objectives(self.specs, measurements, self.target)
