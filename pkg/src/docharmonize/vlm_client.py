"""OpenAI-compatible vision-chat client that proposes harmonization plans.

The client refuses to run without the page image (plans must be grounded in
the rendered page, not label names), and every plan goes through the
harmonizer's validate_plan gate before it is returned. A deterministic
in-process mock transport ships here for tests; no network is touched
unless the default HTTP transport is used.
"""

import base64
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field

from .dataset_model import BBox, PageRecord
from .errors import AgentError, DataError, ParseError, TransportError
from .harmonizer import GroupDirective, HarmonizationPlan, Partition, validate_plan

DEFAULT_API_KEY_ENV = "HARMONIZER_VLM_API_KEY"


@dataclass
class AgentConfig:
    endpoint: str
    model: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_s: float = 60.0
    max_retries: int = 2
    max_concurrency: int = 4
    temperature: float = 0.0
    backoff_base_s: float = 1.0

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise DataError("timeout must be > 0")
        if self.max_retries < 0:
            raise DataError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise DataError("max_concurrency must be >= 1")


@dataclass
class AgentTranscript:
    page_id: object
    prompt: str
    response_text: str = ""
    parse_outcome: str = ""
    validator_outcome: str = ""
    attempt: int = 1
    latency_ms: float = 0.0

    def to_json(self):
        return vars(self)


_OUTPUT_INSTRUCTION = (
    "Respond with a single JSON object of the form "
    '{"groups": [{"ids": [..], "target_category": "..", "bbox": [x0, y0, x1, y1]}]}. '
    "The bbox field is optional. Every source annotation id must appear in "
    "exactly one group. Do not invent ids and do not drop any."
)


def build_prompt(page: PageRecord, annotations, rules, feedback=None) -> str:
    lines = [
        f"Page {page.image_id} is {page.width:g}x{page.height:g} pixels.",
        "Source annotations (id, category, bbox x0,y0,x1,y1):",
    ]
    for ann in sorted(annotations, key=lambda a: a.id):
        b = ann.bbox
        lines.append(f"  {ann.id}. {ann.category}: [{b.x0:g}, {b.y0:g}, {b.x1:g}, {b.y1:g}]")
    lines.append("Target categories and their conventions:")
    for name in rules.target_taxonomy:
        lines.append(f"  {name}: {rules.convention(name).description}")
    if feedback:
        lines.append("Your previous plan was rejected with these violations; fix them:")
        for v in feedback:
            lines.append(f"  - {v}")
    lines.append(_OUTPUT_INSTRUCTION)
    return "\n".join(lines)


def build_request(page: PageRecord, annotations, rules, config: AgentConfig,
                  feedback=None) -> dict:
    """Chat-completions payload: page image plus the textual grounding."""
    if page.image_path is None or not os.path.isfile(page.image_path):
        raise IOError(
            f"page {page.image_id}: image {page.image_path!r} is not readable; "
            "refusing to request an ungrounded plan"
        )
    with open(page.image_path, "rb") as fh:
        image_b64 = base64.b64encode(fh.read()).decode("ascii")
    prompt = build_prompt(page, annotations, rules, feedback=feedback)
    return {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{image_b64}"},
                    },
                ],
            }
        ],
    }


def _extract_first_json(text):
    decoder = json.JSONDecoder()
    for start, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ParseError("no JSON object found in response", fragment=text[:200])


def parse_plan(response_text: str, page: PageRecord) -> HarmonizationPlan:
    """Extract the first JSON object (prose and code fences tolerated) and
    map it to a plan. Shape is checked here; Eq-style partition constraints
    are validate_plan's job."""
    obj = _extract_first_json(response_text)
    groups_raw = obj.get("groups")
    if not isinstance(groups_raw, list):
        raise ParseError("response JSON lacks a 'groups' array", fragment=str(obj)[:200])
    groups = []
    directives = []
    for g in groups_raw:
        if not isinstance(g, dict) or not isinstance(g.get("ids"), list):
            raise ParseError("group entry without an 'ids' array", fragment=str(g)[:200])
        category = g.get("target_category")
        if not isinstance(category, str):
            raise ParseError("group entry without a target_category", fragment=str(g)[:200])
        override = None
        if g.get("bbox") is not None:
            box = g["bbox"]
            if (not isinstance(box, list) or len(box) != 4
                    or not all(isinstance(v, (int, float)) for v in box)):
                raise ParseError("group bbox is not a 4-number array", fragment=str(g)[:200])
            try:
                override = BBox(*[float(v) for v in box])
            except ValueError as exc:
                raise ParseError(f"group bbox invalid: {exc}", fragment=str(g)[:200]) from exc
        groups.append(frozenset(g["ids"]))
        directives.append(GroupDirective(target_category=category, bbox_override=override))
    return HarmonizationPlan(partition=Partition(groups=groups), directives=directives)


class HttpTransport:
    """POSTs chat payloads to an OpenAI-compatible endpoint."""

    def __init__(self, config: AgentConfig):
        self.config = config

    def __call__(self, payload):
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = requests.post(
                self.config.endpoint, json=payload, headers=headers,
                timeout=self.config.timeout_s,
            )
        except Exception as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


class MockVlmServer:
    """Deterministic in-process stand-in for the chat endpoint.

    Responses are either a fixed script (consumed in order) or produced by a
    handler called with the request payload. Raise TransportError from the
    handler (or script an int status) to simulate HTTP failures.
    """

    def __init__(self, script=None, handler=None):
        self.script = list(script or [])
        self.handler = handler
        self.requests = []
        self._lock = threading.Lock()

    def __call__(self, payload):
        with self._lock:
            self.requests.append(payload)
            if self.handler is not None:
                return self.handler(payload)
            if not self.script:
                raise TransportError("mock script exhausted")
            item = self.script.pop(0)
        if isinstance(item, int):
            raise TransportError(f"HTTP {item}: mock failure")
        return item


class VlmAgent:
    """Agent F: build_request -> transport -> parse_plan -> validate_plan,
    retrying with violation feedback until a plan passes or retries run out."""

    name = "vlm"

    def __init__(self, config: AgentConfig, rules, transport=None, sleep=time.sleep,
                 rng=None):
        self.config = config
        self.rules = rules
        self.transport = transport if transport is not None else HttpTransport(config)
        self.transcripts = []
        self._sleep = sleep
        self._rng = rng or random.Random(0)
        self._semaphore = threading.BoundedSemaphore(config.max_concurrency)
        self._transcript_lock = threading.Lock()

    def _record(self, transcript):
        with self._transcript_lock:
            self.transcripts.append(transcript)

    def propose(self, page: PageRecord) -> HarmonizationPlan:
        feedback = None
        max_attempts = 1 + self.config.max_retries
        for attempt in range(1, max_attempts + 1):
            payload = build_request(page, page.annotations, self.rules, self.config,
                                    feedback=feedback)
            prompt = payload["messages"][0]["content"][0]["text"]
            transcript = AgentTranscript(page_id=page.image_id, prompt=prompt,
                                         attempt=attempt)
            start = time.monotonic()
            try:
                with self._semaphore:
                    response_text = self.transport(payload)
            except TransportError as exc:
                transcript.parse_outcome = f"transport error: {exc}"
                transcript.latency_ms = (time.monotonic() - start) * 1000
                self._record(transcript)
                if attempt < max_attempts:
                    self._backoff(attempt)
                continue
            transcript.response_text = response_text
            transcript.latency_ms = (time.monotonic() - start) * 1000
            try:
                plan = parse_plan(response_text, page)
            except ParseError as exc:
                transcript.parse_outcome = f"parse error: {exc}"
                self._record(transcript)
                feedback = [f"unparseable response: {exc}"]
                continue
            transcript.parse_outcome = "ok"
            violations = validate_plan(page, plan, self.rules)
            if violations:
                transcript.validator_outcome = "; ".join(str(v) for v in violations)
                self._record(transcript)
                feedback = [str(v) for v in violations]
                continue
            transcript.validator_outcome = "ok"
            self._record(transcript)
            return plan
        raise AgentError(
            f"page {page.image_id}: no valid plan after {max_attempts} attempts"
        )

    def _backoff(self, attempt):
        delay = self.config.backoff_base_s * (2 ** (attempt - 1))
        delay *= 1.0 + 0.1 * self._rng.random()
        self._sleep(delay)
