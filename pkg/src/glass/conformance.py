"""Replayable conformance checks for oracle implementations.

A corpus is a plain JSON document: the latent space it was built for and
an ordered list of steps.  Each step optionally sends one pre-encoded
line, receives one line, and applies declarative checks to the parsed
response.  Because both sides of a step are plain text, the same corpus
file drives oracles written in any language.

Checks available per step:

* ``expect_type`` -- the response's ``type`` field must equal this.
* ``checks`` -- a list of ``{path, exists?, equals?, length?}`` probes
  into the response (``path`` uses dotted/bracket syntax,
  e.g. ``results[1].error``).
* ``save_as`` / ``matches_saved`` -- stash a response, later require
  another response to equal it (minus ignored fields); this is how
  evaluation determinism is pinned.
* ``expect_file_from`` -- the named response field holds a filesystem
  path that must now exist.

The literal string ``{OUT_DIR}`` inside a step's ``send`` line is
replaced with the replayer's output directory.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from .oracle import Oracle, LoopbackTransport, ProcessTransport
from .protocol import PROTOCOL_VERSION, EvalRequest, RenderRequest, TargetRequest, encode_line
from .space import LatentSpaceSpec, sample

__all__ = [
    "CORPUS_FORMAT",
    "ConformanceFailure",
    "build_corpus",
    "write_corpus",
    "load_corpus",
    "replay_corpus",
    "replay_against_oracle",
    "replay_against_command",
]

CORPUS_FORMAT = "oracle-conformance-corpus"
STEP_TIMEOUT = 60.0


class ConformanceFailure(AssertionError):
    """Raised by the replayer, pointing at the first failing step."""

    def __init__(self, step_index: int, step_name: str, reason: str):
        super().__init__(f"step {step_index} ({step_name}): {reason}")
        self.step_index = step_index
        self.step_name = step_name
        self.reason = reason


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------


def build_corpus(
    space: LatentSpaceSpec,
    *,
    seed: int = 2024,
    expect_discriminator: Optional[bool] = None,
    include_target: bool = True,
    target_kind: str = "text",
    target_payload: str = "a small red boat on a lake",
    include_render: bool = True,
    n_genomes: int = 3,
) -> dict:
    """Assemble a corpus for any oracle claiming to serve ``space``."""
    if n_genomes < 2:
        raise ValueError("need at least two genomes to make per-entry checks meaningful")
    rng = np.random.default_rng(seed)
    genomes = [tuple(float(v) for v in sample(space, rng)) for _ in range(n_genomes)]
    bad_index = 1

    hello_checks = [
        {"path": "version", "equals": PROTOCOL_VERSION},
        {"path": "space_fingerprint", "equals": space.fingerprint()},
    ]
    if expect_discriminator is not None:
        hello_checks.append({"path": "supports_discriminator", "equals": expect_discriminator})

    steps: list[dict] = [
        {"name": "hello", "expect_type": "hello", "checks": hello_checks},
    ]
    if include_target:
        steps.append(
            {
                "name": "target",
                "send": encode_line(TargetRequest(kind=target_kind, payload=target_payload)),
                "expect_type": "target_ok",
                "checks": [{"path": "embedding", "exists": True}],
            }
        )
    clean_checks = [{"path": "results", "length": n_genomes}] + [
        {"path": f"results[{i}].error", "exists": False} for i in range(n_genomes)
    ]
    steps.append(
        {
            "name": "eval-batch",
            "send": encode_line(EvalRequest(id=1, genomes=tuple(genomes))),
            "expect_type": "eval_ok",
            "checks": [{"path": "id", "equals": 1}] + clean_checks,
            "save_as": "first_eval",
        }
    )
    steps.append(
        {
            "name": "eval-repeat",
            "send": encode_line(EvalRequest(id=2, genomes=tuple(genomes))),
            "expect_type": "eval_ok",
            "checks": [{"path": "id", "equals": 2}],
            "matches_saved": {"key": "first_eval", "ignore": ["id"]},
        }
    )
    damaged = list(genomes)
    damaged[bad_index] = damaged[bad_index] + (0.0,)
    steps.append(
        {
            "name": "eval-bad-length",
            "send": encode_line(EvalRequest(id=3, genomes=tuple(damaged))),
            "expect_type": "eval_ok",
            "checks": [
                {"path": "id", "equals": 3},
                {"path": "results", "length": n_genomes},
                {"path": f"results[{bad_index}].error", "exists": True},
            ]
            + [
                {"path": f"results[{i}].error", "exists": False}
                for i in range(n_genomes)
                if i != bad_index
            ],
        }
    )
    steps.append(
        {
            "name": "reject-malformed-line",
            "send": "this is not a protocol message {",
            "expect_type": "error",
        }
    )
    steps.append(
        {
            "name": "reject-unknown-type",
            "send": json.dumps({"type": "frobnicate"}),
            "expect_type": "error",
        }
    )
    if include_render:
        steps.append(
            {
                "name": "render",
                "send": encode_line(
                    RenderRequest(genome=genomes[0], out_path="{OUT_DIR}/conformance-render")
                ),
                "expect_type": "render_ok",
                "expect_file_from": "path",
            }
        )
    return {
        "format": CORPUS_FORMAT,
        "version": 1,
        "seed": seed,
        "space": space.to_config(),
        "steps": steps,
    }


def write_corpus(corpus: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(corpus, handle, indent=2)
        handle.write("\n")


def load_corpus(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        corpus = json.load(handle)
    if corpus.get("format") != CORPUS_FORMAT:
        raise ValueError(f"{path} is not a conformance corpus")
    return corpus


# ---------------------------------------------------------------------------
# Replaying
# ---------------------------------------------------------------------------


def _resolve(obj: object, path: str) -> tuple[bool, object]:
    cur = obj
    for segment in path.split("."):
        name, _, rest = segment.partition("[")
        if name:
            if not isinstance(cur, dict) or name not in cur:
                return False, None
            cur = cur[name]
        while rest:
            index_text, _, rest = rest.partition("]")
            rest = rest.lstrip("[")
            try:
                index = int(index_text)
            except ValueError:
                return False, None
            if not isinstance(cur, list) or not -len(cur) <= index < len(cur):
                return False, None
            cur = cur[index]
    return True, cur


def _apply_check(response: dict, check: dict) -> Optional[str]:
    path = check["path"]
    found, value = _resolve(response, path)
    if "exists" in check:
        if bool(check["exists"]) != found:
            state = "present" if found else "missing"
            return f"{path} expected to be {'present' if check['exists'] else 'absent'}, was {state}"
        if not check["exists"]:
            return None
    if not found:
        return f"{path} is missing"
    if "equals" in check and value != check["equals"]:
        return f"{path} == {value!r}, expected {check['equals']!r}"
    if "length" in check:
        try:
            actual = len(value)
        except TypeError:
            return f"{path} has no length"
        if actual != check["length"]:
            return f"{path} has length {actual}, expected {check['length']}"
    return None


def replay_corpus(corpus: dict, transport, out_dir: str) -> int:
    """Drive ``transport`` through every step; returns the number of steps
    executed, raising :class:`ConformanceFailure` at the first deviation."""
    if corpus.get("format") != CORPUS_FORMAT:
        raise ValueError("not a conformance corpus")
    saved: dict[str, dict] = {}
    steps = corpus["steps"]
    for index, step in enumerate(steps):
        name = step.get("name", f"step-{index}")
        if "send" in step:
            transport.send_line(step["send"].replace("{OUT_DIR}", out_dir))
        try:
            line = transport.recv_line(timeout=STEP_TIMEOUT)
        except Exception as exc:
            raise ConformanceFailure(index, name, f"no response: {exc}") from exc
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConformanceFailure(index, name, f"response is not JSON: {exc}") from exc
        if not isinstance(response, dict):
            raise ConformanceFailure(index, name, "response is not a JSON object")
        if "expect_type" in step and response.get("type") != step["expect_type"]:
            raise ConformanceFailure(
                index,
                name,
                f"response type {response.get('type')!r}, expected {step['expect_type']!r}",
            )
        for check in step.get("checks", ()):
            problem = _apply_check(response, check)
            if problem:
                raise ConformanceFailure(index, name, problem)
        if "matches_saved" in step:
            spec = step["matches_saved"]
            reference = saved.get(spec["key"])
            if reference is None:
                raise ConformanceFailure(index, name, f"nothing saved under {spec['key']!r}")
            ignore = set(spec.get("ignore", ()))
            a = {k: v for k, v in reference.items() if k not in ignore}
            b = {k: v for k, v in response.items() if k not in ignore}
            if a != b:
                raise ConformanceFailure(
                    index, name, f"response differs from saved {spec['key']!r} response"
                )
        if "save_as" in step:
            saved[step["save_as"]] = response
        if "expect_file_from" in step:
            found, value = _resolve(response, step["expect_file_from"])
            if not found or not isinstance(value, str):
                raise ConformanceFailure(
                    index, name, f"response field {step['expect_file_from']!r} is not a path"
                )
            if not os.path.exists(value):
                raise ConformanceFailure(index, name, f"rendered file {value} does not exist")
    return len(steps)


def replay_against_oracle(corpus: dict, oracle: Oracle, out_dir: str) -> int:
    transport = LoopbackTransport(oracle)
    try:
        return replay_corpus(corpus, transport, out_dir)
    finally:
        transport.close()


def replay_against_command(corpus: dict, command: str, out_dir: str) -> int:
    transport = ProcessTransport(command)
    try:
        return replay_corpus(corpus, transport, out_dir)
    finally:
        transport.close()
