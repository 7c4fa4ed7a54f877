"""Candidate generators: evolutionary operators (mock) and a chat-completions client (llm)."""
from __future__ import annotations

import hashlib
import logging
import os
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Callable, List, Optional, Sequence, Tuple

import httpx

from ..dsl import features
from ..dsl.mutate import crossover, mutate, random_program
from ..dsl.nodes import CACHE, Program
from ..dsl.render import render

log = logging.getLogger(__name__)

P_MUTATE = 0.7
P_CROSSOVER = 0.2  # the remaining 0.1 samples a fresh program


class GeneratorUnavailable(RuntimeError):
    pass


class GeneratorConfigError(ValueError):
    pass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any tuple of ints/strings."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") >> 1


@dataclass
class Proposal:
    """One generated program text plus what it cost to get it."""

    source: str
    tokens_in: Optional[int] = None
    tokens_out: Optional[int] = None
    extract_error: Optional[str] = None  # reply had no usable code block


Exemplars = Sequence[Tuple[Program, float]]


# -- mock ----------------------------------------------------------------------


def mock_generate(exemplars: Exemplars, k: int, rng_seed: int) -> List[Program]:
    """Mutation (70%), crossover of exemplar pairs (20%) and fresh samples (10%).

    Candidate ``i`` draws from its own stream seeded by ``(rng_seed, i)``, so the
    list is reproducible and any prefix is independent of ``k``.
    """
    if not exemplars:
        raise ValueError("mock_generate needs at least one exemplar")
    parents = [p for p, _ in exemplars]
    mode = parents[0].mode
    out = []
    for i in range(k):
        rng = random.Random(derive_seed(rng_seed, i))
        u = rng.random()
        op_seed = rng.getrandbits(63)
        if u < P_MUTATE:
            parent = rng.choice(parents)
            intensity = rng.choice((1, 1, 1, 2, 2, 3))
            out.append(mutate(parent, op_seed, intensity=intensity, donors=parents))
        elif u < P_MUTATE + P_CROSSOVER:
            a, b = rng.choice(parents), rng.choice(parents)
            out.append(crossover(a, b, op_seed))
        else:
            out.append(random_program(op_seed, mode))
    return out


class MockGenerator:
    label = "mock"

    def propose(self, exemplars: Exemplars, k: int, seed: int) -> List[Proposal]:
        return [Proposal(render(p)) for p in mock_generate(exemplars, k, seed)]

    def repair(self, proposal: Proposal, feedback: str, seed: int) -> Proposal:
        # the operators only emit checked programs, so nothing reaches here
        return proposal


# -- prompts -------------------------------------------------------------------

FEATURE_HELP = {
    "now": "current time (request timestamp)",
    "obj_id": "object identifier",
    "count": "number of requests to this object since it was inserted",
    "last_access_time": "time of this object's latest request",
    "insert_time": "time this object was inserted",
    "size": "object size in bytes",
    "counts": "series: access counts of resident objects",
    "ages": "series: now minus last access time of resident objects",
    "sizes": "series: sizes of resident objects",
    "cwnd": "current congestion window (bytes)",
    "prev_cwnd": "congestion window before the last change (bytes)",
    "srtt_us": "smoothed round-trip time (microseconds)",
    "min_rtt_us": "smallest round-trip time seen (microseconds)",
    "rtt_us": "latest round-trip sample (microseconds)",
    "inflight_bytes": "bytes sent but not yet acknowledged or written off",
    "mss": "packet size (bytes)",
    "acked_bytes": "bytes acknowledged by this event (0 on loss)",
    "loss_flag": "1 when this call reports a loss event, else 0",
    "delivery_rate": "bytes per second delivered over the last RTT interval",
}


def interface_description(mode: str) -> str:
    lines = []
    if mode == CACHE:
        for n in features.CACHE_SCALARS:
            lines.append(f"- {n}: {FEATURE_HELP[n]}")
        for n in features.CACHE_SERIES:
            lines.append(f"- {n}: {FEATURE_HELP[n]}; use percentile({n}, p) with a literal p in [0, 1]")
        lines.append("- history_contains(obj_id): 1 if the object was evicted recently, else 0")
        lines.append("- history_count(obj_id): its access count when it was evicted (0 if unknown)")
        lines.append("- history_age_at_eviction(obj_id): eviction time minus its last access then")
    else:
        for n in features.KERNEL_SCALARS[:10]:
            lines.append(f"- {n}: {FEATURE_HELP[n]}")
        lines.append(
            "- hist_cwnd_i, hist_srtt_i, hist_rate_i, hist_loss_i for i = 0..9: smoothed cwnd, srtt, "
            "delivery rate and loss count over the last 10 RTT intervals, slot 0 most recent"
        )
    return "\n".join(lines)


def signature(mode: str) -> str:
    if mode == CACHE:
        return "priority(" + ", ".join(features.CACHE_SCALARS) + ") -> number"
    return "cong_control(cwnd, prev_cwnd, srtt_us, min_rtt_us, ...) -> new cwnd in bytes"


def default_template(mode: str) -> str:
    name = "cache_priority.txt" if mode == CACHE else "cc_kernel.txt"
    return resources.files("policyforge.prompts").joinpath(name).read_text(encoding="utf-8")


def load_template(path: Optional[str], mode: str) -> str:
    if path is None:
        return default_template(mode)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise GeneratorConfigError(f"prompt template {path}: {e}") from None


def format_exemplars(exemplars: Exemplars) -> str:
    if not exemplars:
        return "(none yet)"
    return "\n\n".join(f"fitness {fit:.6f}\n```\n{render(p)}\n```" for p, fit in exemplars)


def fill_template(template: str, **fields) -> str:
    # plain replacement: programs in the template may contain braces
    out = template
    for key in ("interface_description", "signature", "exemplars", "feedback"):
        out = out.replace("{" + key + "}", fields.get(key, ""))
    return out


def repair_feedback(source: str, diagnostics: str) -> str:
    return (
        "Your previous program was rejected by the checker:\n"
        f"```\n{source}\n```\n"
        f"Checker output:\n{diagnostics}\n"
        "Fix these problems."
    )


_FENCE = re.compile(r"```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```", re.S)


def extract_code(reply: str) -> Optional[str]:
    """Body of the first fenced code block, or None."""
    m = _FENCE.search(reply)
    return m.group(1).strip() if m else None


# -- llm -----------------------------------------------------------------------

ENV_BASE_URL = "POLICYFORGE_LLM_BASE_URL"
ENV_MODEL = "POLICYFORGE_LLM_MODEL"
ENV_API_KEY = "POLICYFORGE_LLM_API_KEY"


@dataclass(frozen=True)
class LLMConfig:
    base_url: str
    model: str
    api_key: str
    timeout_s: float = 60.0
    max_retries: int = 4
    backoff_s: float = 1.0
    max_tokens: int = 1024
    temperature: float = 1.0
    max_in_flight: int = 4

    @classmethod
    def from_env(cls, env=None, **overrides) -> "LLMConfig":
        env = os.environ if env is None else env
        missing = [k for k in (ENV_BASE_URL, ENV_MODEL, ENV_API_KEY) if not env.get(k)]
        if missing:
            raise GeneratorConfigError("llm generator needs environment variables: " + ", ".join(missing))
        return cls(env[ENV_BASE_URL].rstrip("/"), env[ENV_MODEL], env[ENV_API_KEY], **overrides)


@dataclass
class PromptBundle:
    template: str
    mode: str
    exemplars: Exemplars = ()
    feedback: str = ""

    def text(self) -> str:
        return fill_template(
            self.template,
            interface_description=interface_description(self.mode),
            signature=signature(self.mode),
            exemplars=format_exemplars(self.exemplars),
            feedback=self.feedback,
        )


_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


class ChatClient:
    """Minimal chat-completions client with bounded exponential-backoff retry."""

    def __init__(self, config: LLMConfig, transport=None, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.sleep = sleep
        self.http = httpx.Client(
            base_url=config.base_url,
            timeout=config.timeout_s,
            transport=transport,
            headers={"Authorization": f"Bearer {config.api_key}"},
        )
        self.requests = 0

    def complete(self, prompt: str, seed: Optional[int] = None) -> Tuple[str, int, int]:
        """Return (reply text, prompt tokens, completion tokens)."""
        cfg = self.config
        body = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": cfg.max_tokens,
            "temperature": cfg.temperature,
        }
        if seed is not None:
            body["seed"] = seed % (2**31)
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self.sleep(cfg.backoff_s * 2 ** (attempt - 1))
            self.requests += 1
            try:
                resp = self.http.post("/chat/completions", json=body)
            except httpx.HTTPError as e:
                last = f"{type(e).__name__}: {e}"
                continue
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise GeneratorUnavailable(f"endpoint refused request: HTTP {resp.status_code}")
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError):
                last = "malformed response body"
                continue
            usage = data.get("usage") or {}
            return text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))
        raise GeneratorUnavailable(f"endpoint unreachable after {cfg.max_retries + 1} attempts ({last})")

    def close(self):
        self.http.close()


def _to_proposal(reply: Tuple[str, int, int]) -> Proposal:
    text, tin, tout = reply
    code = extract_code(text)
    if code is None:
        return Proposal(text, tin, tout, extract_error="reply contains no fenced code block")
    return Proposal(code, tin, tout)


def llm_generate(bundle: PromptBundle, k: int, client: ChatClient, seed: int = 0) -> List[Proposal]:
    """Issue ``k`` independent completions for one prompt; results keep request order."""
    prompt = bundle.text()
    cap = max(1, client.config.max_in_flight)
    seeds = [derive_seed(seed, i) for i in range(k)]
    if cap == 1 or k == 1:
        replies = [client.complete(prompt, s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=min(cap, k)) as pool:
            replies = list(pool.map(lambda s: client.complete(prompt, s), seeds))
    return [_to_proposal(r) for r in replies]


class LLMGenerator:
    label = "llm"

    def __init__(self, client: ChatClient, mode: str, template: Optional[str] = None):
        self.client = client
        self.mode = mode
        self.template = template if template is not None else default_template(mode)
        self.exemplars: Exemplars = ()

    def propose(self, exemplars: Exemplars, k: int, seed: int) -> List[Proposal]:
        self.exemplars = tuple(exemplars)
        return llm_generate(PromptBundle(self.template, self.mode, exemplars), k, self.client, seed)

    def repair(self, proposal: Proposal, feedback: str, seed: int) -> Proposal:
        bundle = PromptBundle(self.template, self.mode, self.exemplars, repair_feedback(proposal.source, feedback))
        return _to_proposal(self.client.complete(bundle.text(), seed))
