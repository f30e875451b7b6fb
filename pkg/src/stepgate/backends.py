"""Model backends: the probed agent, the critic, and oracle endpoints.

All three roles share one calling convention: render a prompt template,
send it (with an optional screenshot reference) to a backend, and parse the
reply. Scripted backends replay a fixed list of replies and make every
pipeline above them deterministic; the remote backend speaks a minimal
JSON-over-HTTP chat shape. Every call is recorded in an audit log that can
itself be replayed as a scripted backend.
"""

from __future__ import annotations

import enum
import json
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

import requests

from .codec import parse_action, parse_scored_output, serialize_action, try_parse_action_lenient
from .core import Action, Instruction, PlanSchedule, Screenshot
from .errors import (
    BackendUnavailable,
    EmptyPlan,
    MalformedAction,
    MalformedIndex,
    MalformedScore,
    MissingVariable,
    UnknownPlaceholder,
    ValidationFailed,
)

DEFAULT_RETRIES = 3
_BACKOFF_BASE = 0.25

#: The pipeline controller fills exactly these variables into templates.
DECLARED_VARIABLES = frozenset(
    {"instruction", "plan", "plan_item", "history", "screenshot", "agent_action", "critic_action"}
)

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


class TemplateName(str, enum.Enum):
    PLANNING = "PLANNING"
    ACTION_PHASE = "ACTION_PHASE"
    AGENT_ACTION = "AGENT_ACTION"
    CRITIC_ACTION = "CRITIC_ACTION"
    SCORING = "SCORING"
    COMPLETION = "COMPLETION"


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    """A prompt body with ``{{variable}}`` placeholders."""

    name: TemplateName
    body: str

    def __post_init__(self) -> None:
        for placeholder in _PLACEHOLDER_RE.findall(self.body):
            if placeholder not in DECLARED_VARIABLES:
                raise UnknownPlaceholder(placeholder)

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))


def render_prompt(tpl: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every placeholder; repeated placeholders are all replaced."""
    for name in bindings:
        if name not in DECLARED_VARIABLES:
            raise UnknownPlaceholder(name)

    def _sub(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingVariable(name)
        return bindings[name]

    return _PLACEHOLDER_RE.sub(_sub, tpl.body)


_TEMPLATE_FILES = {
    TemplateName.PLANNING: "planning.txt",
    TemplateName.ACTION_PHASE: "action_phase.txt",
    TemplateName.AGENT_ACTION: "agent_action.txt",
    TemplateName.CRITIC_ACTION: "critic_action.txt",
    TemplateName.SCORING: "scoring.txt",
    TemplateName.COMPLETION: "completion.txt",
}


class PromptLibrary:
    """The six role templates, loaded from editable text files."""

    def __init__(self, templates: dict[TemplateName, PromptTemplate]):
        missing = set(_TEMPLATE_FILES) - set(templates)
        if missing:
            raise ValidationFailed(f"missing templates: {sorted(t.value for t in missing)}")
        self._templates = dict(templates)

    def __getitem__(self, name: TemplateName) -> PromptTemplate:
        return self._templates[name]

    @classmethod
    def from_dir(cls, path: Path) -> "PromptLibrary":
        templates = {}
        for name, filename in _TEMPLATE_FILES.items():
            body = (path / filename).read_text(encoding="utf-8")
            templates[name] = PromptTemplate(name=name, body=body)
        return cls(templates)

    @classmethod
    def default(cls) -> "PromptLibrary":
        root = resources.files("stepgate").joinpath("data/templates")
        templates = {}
        for name, filename in _TEMPLATE_FILES.items():
            body = root.joinpath(filename).read_text(encoding="utf-8")
            templates[name] = PromptTemplate(name=name, body=body)
        return cls(templates)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class Backend(Protocol):
    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        """Send one prompt, return the raw reply text."""


@dataclass(frozen=True, slots=True)
class CallRecord:
    prompt: str
    image_ref: str | None
    reply: str


class AuditLog:
    """Request/response log; replayable as a scripted backend."""

    def __init__(self) -> None:
        self.records: list[CallRecord] = []

    def append(self, prompt: str, image_ref: str | None, reply: str) -> None:
        self.records.append(CallRecord(prompt=prompt, image_ref=image_ref, reply=reply))

    def save(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                doc = {"prompt": rec.prompt, "image_ref": rec.image_ref, "reply": rec.reply}
                fh.write(json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n")

    @staticmethod
    def load_replies(path: Path) -> list[str]:
        replies = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    replies.append(json.loads(line)["reply"])
        return replies


class ScriptedBackend:
    """Replays a fixed sequence of replies; deterministic by construction."""

    def __init__(self, replies: list[str], name: str = "scripted"):
        self._replies = list(replies)
        self._cursor = 0
        self.name = name
        self.audit = AuditLog()

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedBackend":
        """Load a reply script: blocks separated by lines containing ``---``."""
        text = Path(path).read_text(encoding="utf-8")
        blocks = [block.strip("\n") for block in re.split(r"^---\s*$", text, flags=re.M)]
        replies = [b for b in blocks if b.strip()]
        return cls(replies, name=f"scripted:{Path(path).name}")

    @classmethod
    def from_log(cls, log: AuditLog) -> "ScriptedBackend":
        return cls([rec.reply for rec in log.records], name="replay")

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._cursor

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        if self._cursor >= len(self._replies):
            raise BackendUnavailable(f"{self.name}: script exhausted after {self._cursor} replies")
        reply = self._replies[self._cursor]
        self._cursor += 1
        self.audit.append(prompt, image_ref, reply)
        return reply


@dataclass(frozen=True, slots=True)
class BackendConfig:
    """How to reach a backend: a remote HTTP endpoint or a reply script."""

    kind: str  # REMOTE_HTTP | SCRIPTED
    endpoint: str | None = None
    auth_token_env: str | None = None
    timeout: float = 30.0
    retries: int = DEFAULT_RETRIES
    script_path: str | None = None
    model: str = "default"

    def __post_init__(self) -> None:
        if self.kind == "REMOTE_HTTP":
            if not self.endpoint:
                raise ValidationFailed("REMOTE_HTTP backend requires an endpoint")
        elif self.kind == "SCRIPTED":
            if not self.script_path:
                raise ValidationFailed("SCRIPTED backend requires a script_path")
        else:
            raise ValidationFailed(f"unknown backend kind {self.kind!r}")


class RemoteHttpBackend:
    """Minimal JSON chat client: POST {model, messages} -> {content}."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        import os

        self.config = config
        self._session = session or requests.Session()
        self._token = os.environ.get(config.auth_token_env) if config.auth_token_env else None
        self.name = f"remote:{config.endpoint}"
        self.audit = AuditLog()

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        message: dict = {"role": "user", "content": prompt}
        if image_ref is not None:
            message["image_ref"] = image_ref
        payload = {"model": self.config.model, "messages": [message]}
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        try:
            response = self._session.post(
                self.config.endpoint,
                json=payload,
                headers=headers,
                timeout=self.config.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.name}: {exc}") from exc
        if response.status_code != 200:
            raise BackendUnavailable(f"{self.name}: HTTP {response.status_code}")
        try:
            reply = response.json()["content"]
        except (ValueError, KeyError) as exc:
            raise BackendUnavailable(f"{self.name}: bad reply shape: {exc}") from exc
        self.audit.append(prompt, image_ref, reply)
        return reply


def make_backend(config: BackendConfig) -> Backend:
    if config.kind == "SCRIPTED":
        return ScriptedBackend.from_file(Path(config.script_path))
    return RemoteHttpBackend(config)


def backend_config_from_json(source: Path | dict) -> BackendConfig:
    if isinstance(source, (str, Path)):
        doc = dict(json.loads(Path(source).read_text(encoding="utf-8")))
        if doc.get("script_path") and not Path(doc["script_path"]).is_absolute():
            doc["script_path"] = str(Path(source).parent / doc["script_path"])
    else:
        doc = source
    return BackendConfig(
        kind=doc["kind"],
        endpoint=doc.get("endpoint"),
        auth_token_env=doc.get("auth_token_env"),
        timeout=float(doc.get("timeout", 30.0)),
        retries=int(doc.get("retries", DEFAULT_RETRIES)),
        script_path=doc.get("script_path"),
        model=doc.get("model", "default"),
    )


# ---------------------------------------------------------------------------
# Call helpers
# ---------------------------------------------------------------------------

def _call_with_transport_retries(backend: Backend, prompt: str, image_ref: str | None,
                                 retries: int, backoff: float) -> str:
    last: BackendUnavailable | None = None
    for attempt in range(retries + 1):
        try:
            return backend.complete(prompt, image_ref=image_ref)
        except BackendUnavailable as exc:
            last = exc
            if attempt < retries and backoff > 0:
                time.sleep(backoff * (2 ** attempt))
    raise last  # type: ignore[misc]


def render_history(steps) -> str:
    """History bindings: one serialized executed action per line."""
    lines = []
    for step in steps:
        lines.append(f"{step.index}: {serialize_action(step.executed_action)}")
    return "\n".join(lines) if lines else "(none)"


def screenshot_binding(shot: Screenshot, layout_hook: Callable[[Screenshot], str] | None) -> str:
    """The screenshot variable: its id, plus the layout listing if hooked."""
    if layout_hook is None:
        return shot.id
    return f"{shot.id}\n{layout_hook(shot)}"


@dataclass
class CallOptions:
    """Knobs shared by the high-level operations."""

    retries: int = DEFAULT_RETRIES
    backoff: float = 0.0
    lenient: bool = True
    layout_hook: Callable[[Screenshot], str] | None = None


def _image_ref(shot: Screenshot | None) -> str | None:
    if shot is None:
        return None
    return shot.payload_ref if isinstance(shot.payload_ref, str) else shot.id


def agent_predict(
    backend: Backend,
    library: PromptLibrary,
    instruction: Instruction,
    screenshot: Screenshot,
    history,
    options: CallOptions | None = None,
) -> Action:
    """Ask the probed agent for its next action."""
    options = options or CallOptions()
    prompt = render_prompt(
        library[TemplateName.AGENT_ACTION],
        {
            "instruction": instruction.text,
            "screenshot": screenshot_binding(screenshot, options.layout_hook),
            "history": render_history(history),
        },
    )
    last_error: MalformedAction | None = None
    for _ in range(options.retries + 1):
        reply = _call_with_transport_retries(
            backend, prompt, _image_ref(screenshot), options.retries, options.backoff
        )
        if options.lenient:
            action = try_parse_action_lenient(reply)
            if action is not None:
                return action
            last_error = MalformedAction(f"no parsable action line in {reply!r}")
        else:
            try:
                return parse_action(reply)
            except MalformedAction as exc:
                last_error = exc
    raise last_error  # type: ignore[misc]


def agent_predict_scored(
    backend: Backend,
    library: PromptLibrary,
    instruction: Instruction,
    screenshot: Screenshot,
    history,
    options: CallOptions | None = None,
) -> tuple[Action, int]:
    """Ask a confidence-integrated policy for (action, score)."""
    options = options or CallOptions()
    prompt = render_prompt(
        library[TemplateName.AGENT_ACTION],
        {
            "instruction": instruction.text,
            "screenshot": screenshot_binding(screenshot, options.layout_hook),
            "history": render_history(history),
        },
    )
    last_error: Exception | None = None
    for _ in range(options.retries + 1):
        reply = _call_with_transport_retries(
            backend, prompt, _image_ref(screenshot), options.retries, options.backoff
        )
        try:
            return parse_scored_output(reply)
        except (MalformedAction, MalformedScore) as exc:
            last_error = exc
    raise last_error  # type: ignore[misc]


_PLAN_ITEM_RE = re.compile(r"^\s*(?:\d+\s*[.)]\s*|[-*]\s+)?(.+?)\s*$")


def critic_plan(
    backend: Backend,
    library: PromptLibrary,
    instruction: Instruction,
    options: CallOptions | None = None,
) -> PlanSchedule:
    """Have the critic produce the step plan for an instruction."""
    options = options or CallOptions()
    prompt = render_prompt(
        library[TemplateName.PLANNING], {"instruction": instruction.text}
    )
    reply = _call_with_transport_retries(backend, prompt, None, options.retries, options.backoff)
    items = []
    for line in reply.splitlines():
        if not line.strip():
            continue
        match = _PLAN_ITEM_RE.match(line)
        if match and match.group(1):
            items.append(match.group(1))
    if not items:
        raise EmptyPlan(f"planning reply contained no items: {reply!r}")
    return PlanSchedule(items=tuple(items), cursor=0)


def critic_supervise(
    backend: Backend,
    library: PromptLibrary,
    instruction: Instruction,
    plan_item: str,
    screenshot: Screenshot,
    history,
    options: CallOptions | None = None,
) -> Action:
    """Ask the critic for the supervisory action at the current plan item."""
    options = options or CallOptions()
    prompt = render_prompt(
        library[TemplateName.CRITIC_ACTION],
        {
            "instruction": instruction.text,
            "plan_item": plan_item,
            "screenshot": screenshot_binding(screenshot, options.layout_hook),
            "history": render_history(history),
        },
    )
    last_error: MalformedAction | None = None
    for _ in range(options.retries + 1):
        reply = _call_with_transport_retries(
            backend, prompt, _image_ref(screenshot), options.retries, options.backoff
        )
        if options.lenient:
            action = try_parse_action_lenient(reply)
            if action is not None:
                return action
            last_error = MalformedAction(f"no parsable action line in {reply!r}")
        else:
            try:
                return parse_action(reply)
            except MalformedAction as exc:
                last_error = exc
    raise last_error  # type: ignore[misc]


_INT_RE = re.compile(r"[-+]?\d+")


def _first_int(reply: str) -> int | None:
    match = _INT_RE.search(reply)
    return int(match.group(0)) if match else None


def critic_score(
    backend: Backend,
    library: PromptLibrary,
    instruction: Instruction,
    plan_item: str,
    screenshot: Screenshot,
    agent_action: Action,
    critic_action: Action,
    history,
    options: CallOptions | None = None,
) -> int:
    """Score the agent's action 1..5 against the critic's."""
    options = options or CallOptions()
    prompt = render_prompt(
        library[TemplateName.SCORING],
        {
            "instruction": instruction.text,
            "plan_item": plan_item,
            "screenshot": screenshot_binding(screenshot, options.layout_hook),
            "agent_action": serialize_action(agent_action),
            "critic_action": serialize_action(critic_action),
            "history": render_history(history),
        },
    )
    reply = _call_with_transport_retries(
        backend, prompt, _image_ref(screenshot), options.retries, options.backoff
    )
    value = _first_int(reply)
    if value is None:
        raise MalformedScore(f"no integer in scoring reply {reply!r}")
    if value not in (1, 2, 3, 4, 5):
        raise MalformedScore(f"score {value} outside 1..5")
    return value


def critic_phase(
    backend: Backend,
    library: PromptLibrary,
    plan: PlanSchedule,
    screenshot: Screenshot,
    options: CallOptions | None = None,
) -> int:
    """Locate the current plan item; len(items) means the plan is finished."""
    options = options or CallOptions()
    if not plan.items:
        raise EmptyPlan("phase tracking requires a non-empty plan")
    prompt = render_prompt(
        library[TemplateName.ACTION_PHASE],
        {
            "plan": "\n".join(f"{i}. {item}" for i, item in enumerate(plan.items)),
            "screenshot": screenshot_binding(screenshot, options.layout_hook),
        },
    )
    reply = _call_with_transport_retries(
        backend, prompt, _image_ref(screenshot), options.retries, options.backoff
    )
    value = _first_int(reply)
    if value is None:
        raise MalformedIndex(f"no integer in phase reply {reply!r}")
    if not (0 <= value <= len(plan.items)):
        raise MalformedIndex(f"phase index {value} outside [0, {len(plan.items)}]")
    return value


_AFFIRMATIVE_TOKENS = frozenset({"yes", "finished", "complete"})


def critic_done(
    backend: Backend,
    library: PromptLibrary,
    instruction: Instruction,
    plan: PlanSchedule,
    screenshot: Screenshot,
    options: CallOptions | None = None,
) -> bool:
    """True iff the critic judges the instruction finished."""
    options = options or CallOptions()
    prompt = render_prompt(
        library[TemplateName.COMPLETION],
        {
            "instruction": instruction.text,
            "plan": "\n".join(f"{i}. {item}" for i, item in enumerate(plan.items)),
            "screenshot": screenshot_binding(screenshot, options.layout_hook),
        },
    )
    reply = _call_with_transport_retries(
        backend, prompt, _image_ref(screenshot), options.retries, options.backoff
    )
    tokens = {token.casefold() for token in re.findall(r"[A-Za-z]+", reply)}
    return bool(tokens & _AFFIRMATIVE_TOKENS)
