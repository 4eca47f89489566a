"""Transformation predictor: byte-exact prompt encoding, response decoding,
and pluggable backends (an OpenAI-compatible remote chat service, a weak
structural heuristic, and a checker-backed oracle for offline runs).
"""

from __future__ import annotations

import os
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

import requests

from .checker import CheckConfig, Unsound as CheckerUnsound, check_pair
from .ir import Block, Function, Param, Register, TransformationPair, defined_name, print_function
from .semantics import REASON_ORDER, UnsoundReason

SYSTEM_TEXT = (
    'Your task involves analyzing the given IR transformations. On receiving a '
    'transformation in the "Transformation: X → Y" format, analyze and respond in '
    'the "Status: A Reason: B" format. "A" denotes the transformation\'s correctness '
    'as CORRECT or UNSOUND. For UNSOUND transformations, list reasons "B". Your '
    'analysis involves a two-step approach:\n'
    '- Special Value Injection: Inject specific values into both original and '
    'transformed IR to observe and compare behaviors.\n'
    '- Step-by-Step Computation and Analysis: Execute detailed computations for both '
    'IR versions to pinpoint discrepancies.\n'
    'Base your analysis on the following to assess soundness:\n'
    '- Undefined Behavior Consistency: The target should only trigger UB if the '
    'source does. New UB in the target renders the transformation unsound.\n'
    "- Return Domain Consistency: The target's return domain must align with the "
    "source's, except when the source triggers UB. A mismatched return domain "
    'without source UB suggests unsoundness.\n'
    "- Poison Value Propagation: The target's return value should indicate poison "
    "only if the source's does. Any additional poison in the target signals "
    'unsoundness.\n'
    "- Undefined Value Handling: The target's return value should be Undefined only "
    "if the source's is Undefined or poison. Introduction of Undefined values by "
    'the target without source justification is unsound.\n'
    '- Return Value Consistency: The return values of both the source and target '
    'should match when the source is clear of Undefined or poison. Variances under '
    'a well-defined source indicate unsoundness.\n'
    '- Memory State Refinement: Verify that the memory state after target execution '
    "refines that of the source's. Memory state inconsistencies suggest unsoundness."
)

TOKEN_LIMIT = 4096

_REASON_PHRASE = {
    UnsoundReason.RETURN_VALUE: "return values",
    UnsoundReason.MEMORY: "memory",
    UnsoundReason.NEW_UB: "new undefined behavior",
}


class Label(Enum):
    SOUND = "sound"
    UNSOUND = "unsound"


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str


@dataclass(frozen=True)
class Prediction:
    status: Label
    reasons: frozenset[UnsoundReason]
    raw: str
    backend: str = ""


class PredictErrorKind(Enum):
    TRANSPORT = "transport"
    DECODE = "decode"
    AUTH = "auth"
    TOO_LARGE = "too_large"


class PredictError(Exception):
    def __init__(self, kind: PredictErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind


class DecodeErrorKind(Enum):
    UNPARSEABLE = "unparseable"
    MISSING_REASON = "missing_reason"


class DecodeError(Exception):
    def __init__(self, kind: DecodeErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind


# ---------------------------------------------------------------------------
# Prompt codec


def encode_prompt(pair: TransformationPair) -> PromptBundle:
    """Deterministic chat prompt for a pair; the user message separates the
    two printed functions with U+2192."""
    user = f"Transformation: {print_function(pair.src)} → {print_function(pair.tgt)}"
    return PromptBundle(SYSTEM_TEXT, user)


def encode_assistant(label: Label, reasons: frozenset[UnsoundReason] | set[UnsoundReason]) -> str:
    if label is Label.SOUND:
        if reasons:
            raise ValueError("sound label cannot carry reasons")
        return "Transformation status: SOUND Reason: none"
    if not reasons:
        raise ValueError("unsound label requires at least one reason")
    joined = ", ".join(_REASON_PHRASE[r] for r in REASON_ORDER if r in reasons)
    return f"Transformation status: UNSOUND Reason: {joined}"


_STATUS_RE = re.compile(r"status\s*:\s*([A-Za-z]+)", re.IGNORECASE)


def decode_response(text: str) -> Prediction:
    """Tolerant decode: accepts both the assistant form ("Transformation
    status: ...") and the "Status: CORRECT/UNSOUND" form."""
    m = _STATUS_RE.search(text)
    if m is None:
        raise DecodeError(DecodeErrorKind.UNPARSEABLE, "no status token found")
    word = m.group(1).upper()
    if word == "UNSOUND":
        status = Label.UNSOUND
    elif word in ("SOUND", "CORRECT"):
        status = Label.SOUND
    else:
        raise DecodeError(DecodeErrorKind.UNPARSEABLE, f"unrecognized status {word!r}")
    if status is Label.SOUND:
        return Prediction(Label.SOUND, frozenset(), text)
    tail = text[m.end() :]
    low = tail.lower()
    reasons = set()
    if "return" in low:
        reasons.add(UnsoundReason.RETURN_VALUE)
    if "memory" in low:
        reasons.add(UnsoundReason.MEMORY)
    if "undefined behavior" in low or re.search(r"\bUB\b", tail):
        reasons.add(UnsoundReason.NEW_UB)
    if not reasons:
        raise DecodeError(DecodeErrorKind.MISSING_REASON, "unsound with no recognizable reason")
    return Prediction(Label.UNSOUND, frozenset(reasons), text)


def estimate_tokens(text: str) -> int:
    # Rough 4-chars-per-token heuristic; only used for the context guard.
    return (len(text) + 3) // 4


# ---------------------------------------------------------------------------
# Backends


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    max_concurrent: int = 4


@dataclass(frozen=True)
class HeuristicConfig:
    pass


@dataclass(frozen=True)
class OracleConfig:
    noise_rate: float = 0.0
    seed: int = 0
    check: CheckConfig = field(
        default_factory=lambda: CheckConfig(fuel=200_000)
    )

    def __post_init__(self):
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must be within [0, 1]")


BackendConfig = Union[RemoteConfig, HeuristicConfig, OracleConfig]


def _alpha_rename(f: Function) -> Function:
    """Canonical register renaming (params then defs, in program order).
    The function name is normalized too; labels are left alone."""
    mapping: dict[str, str] = {}
    for i, p in enumerate(f.params):
        mapping[p.name] = f"p{i}"
    n = 0
    for block in f.blocks:
        for instr in block.instrs:
            name = defined_name(instr)
            if name is not None and name not in mapping:
                mapping[name] = f"v{n}"
                n += 1

    def ren_op(op):
        if isinstance(op, Register):
            return Register(mapping.get(op.name, op.name))
        return op

    def ren_instr(instr):
        kwargs = {}
        for fname in instr.__dataclass_fields__:
            v = getattr(instr, fname)
            if fname == "name" and isinstance(v, str) and v in mapping:
                kwargs[fname] = mapping[v]
            elif fname == "incomings":
                kwargs[fname] = tuple((lb, ren_op(val)) for lb, val in v)
            elif fname == "args":
                kwargs[fname] = tuple(ren_op(a) for a in v)
            elif isinstance(v, (Register,)):
                kwargs[fname] = ren_op(v)
            else:
                kwargs[fname] = v
        return type(instr)(**kwargs)

    blocks = tuple(
        Block(b.label, tuple(ren_instr(i) for i in b.instrs)) for b in f.blocks
    )
    params = tuple(Param(mapping[p.name], p.ty) for p in f.params)
    return Function("fn", params, f.ret_ty, blocks)


class HeuristicBackend:
    """Deliberately weak baseline: sound iff the two sides are structurally
    identical up to register renaming."""

    id = "heuristic"

    def __init__(self, cfg: HeuristicConfig = HeuristicConfig()):
        self.cfg = cfg

    def predict(self, pair: TransformationPair) -> Prediction:
        same = print_function(_alpha_rename(pair.src)) == print_function(
            _alpha_rename(pair.tgt)
        )
        if same:
            return Prediction(
                Label.SOUND, frozenset(), encode_assistant(Label.SOUND, frozenset()), self.id
            )
        reasons = frozenset({UnsoundReason.RETURN_VALUE})
        return Prediction(
            Label.UNSOUND, reasons, encode_assistant(Label.UNSOUND, reasons), self.id
        )


class OracleBackend:
    """Checker-backed stand-in for a fine-tuned model: generous-budget
    check_pair verdicts, Unknown mapped to sound, optionally perturbed by a
    seeded per-pair noise flip."""

    id = "oracle"

    def __init__(self, cfg: OracleConfig = OracleConfig()):
        self.cfg = cfg

    def predict(self, pair: TransformationPair) -> Prediction:
        verdict = check_pair(pair, self.cfg.check)
        if isinstance(verdict, CheckerUnsound):
            status, reasons = Label.UNSOUND, frozenset(verdict.reasons)
        else:
            # Sound and Unknown both read as "likely sound".
            status, reasons = Label.SOUND, frozenset()
        if self.cfg.noise_rate > 0:
            rng = random.Random(f"{self.cfg.seed}:{pair.id}")
            if rng.random() < self.cfg.noise_rate:
                if status is Label.SOUND:
                    status = Label.UNSOUND
                    reasons = frozenset({rng.choice(REASON_ORDER)})
                else:
                    status, reasons = Label.SOUND, frozenset()
        return Prediction(status, reasons, encode_assistant(status, reasons), self.id)


class RemoteBackend:
    """OpenAI-compatible chat-completions client with bounded concurrency
    and exponential-backoff retry on transport failures."""

    id = "remote"

    def __init__(self, cfg: RemoteConfig, post=None):
        self.cfg = cfg
        self._post = post or requests.post
        self._slots = threading.Semaphore(cfg.max_concurrent)

    def predict(self, pair: TransformationPair) -> Prediction:
        key = os.environ.get(self.cfg.api_key_env, "")
        if not key:
            raise PredictError(
                PredictErrorKind.AUTH,
                f"environment variable {self.cfg.api_key_env} is not set",
            )
        bundle = encode_prompt(pair)
        body = {
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
            "temperature": 0,
        }
        last_error: Optional[Exception] = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self.cfg.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._slots:
                    resp = self._post(
                        self.cfg.endpoint,
                        json=body,
                        headers={"Authorization": f"Bearer {key}"},
                        timeout=self.cfg.timeout_s,
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (401, 403):
                raise PredictError(PredictErrorKind.AUTH, f"HTTP {resp.status_code}")
            if resp.status_code != 200:
                last_error = RuntimeError(f"HTTP {resp.status_code}")
                continue
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise PredictError(
                    PredictErrorKind.DECODE, f"malformed response body: {exc}"
                ) from exc
            try:
                return replace(decode_response(content), backend=self.id)
            except DecodeError as exc:
                raise PredictError(PredictErrorKind.DECODE, str(exc)) from exc
        raise PredictError(PredictErrorKind.TRANSPORT, f"retries exhausted: {last_error}")


def make_backend(cfg: BackendConfig):
    if isinstance(cfg, RemoteConfig):
        return RemoteBackend(cfg)
    if isinstance(cfg, HeuristicConfig):
        return HeuristicBackend(cfg)
    if isinstance(cfg, OracleConfig):
        return OracleBackend(cfg)
    raise TypeError(f"not a backend config: {cfg!r}")


def predict(pair: TransformationPair, backend) -> Prediction:
    """Run one prediction.  `backend` may be a config or a constructed
    backend.  Prompts estimated over the 4096-token context limit are
    rejected before reaching any backend."""
    if isinstance(backend, (RemoteConfig, HeuristicConfig, OracleConfig)):
        backend = make_backend(backend)
    bundle = encode_prompt(pair)
    total = estimate_tokens(bundle.system) + estimate_tokens(bundle.user)
    if total > TOKEN_LIMIT:
        raise PredictError(
            PredictErrorKind.TOO_LARGE,
            f"prompt estimated at {total} tokens exceeds the {TOKEN_LIMIT} limit",
        )
    return backend.predict(pair)
