"""Multi-agent execution of a subject DAG.

Roles follow graph position: sources are subject experts, intermediate nodes
are supporting agents, sinks are dominant agents. Each node's prompt embeds
its upstream replies, nodes with satisfied dependencies run concurrently, and
the final answer is extracted from the highest-scoring sink's reply. Also
provides the fully-connected two-round baseline and the single-model CoT
baseline.
"""

from __future__ import annotations

import enum
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .backends import ChatClient, ChatRequest, ChatResponse
from .errors import NoRuleMatched, RoleInputMismatch, SdagError, TransportError
from .subjects import QuestionRecord, SDag, SDagNode, Subject

logger = logging.getLogger(__name__)


class AgentRole(enum.Enum):
    SUBJECT_EXPERT = "SubjectExpert"
    SUPPORTING = "Supporting"
    DOMINANT = "Dominant"


SUBJECT_EXPERT_PROMPT = (
    "You are an expert in {subject}. Your task is to analyze the following question "
    "based on your domain knowledge.\n"
    "Question: {Q}\n"
    "Please provide a clear and concise explanation or answer strictly from the "
    "perspective of {subject}."
)

SUPPORTING_PROMPT = (
    "You are an expert in {subject}. Another agent has provided information from "
    "{sources}, which may be relevant to your reasoning.\n"
    "Question: {Q}\n"
    "{support_lines}\n"
    "Please incorporate the above supporting information into your domain-specific "
    "reasoning, and produce a coherent, informed response from the perspective of "
    "{subject}."
)

DOMINANT_PROMPT = (
    "You are the lead {subject} expert responsible for integrating multi-disciplinary "
    "information to answer the following complex question.\n"
    "Question: {Q}\n"
    "You have received input from other experts:\n"
    "{expert_lines}\n"
    "Please synthesize the provided information and generate a comprehensive final "
    "answer that reflects the reasoning across these domains."
)

SINGLE_COT_PROMPT = (
    "Can you solve the problem? {Q} Explain your reasoning. Your final answer should "
    "be with the format: <<answer>>, at the end of your response."
)

ANSWER_FORMAT_LINE = (
    "Your final answer should be with the format: <<answer>>, at the end of your response."
)

UNAVAILABLE = "[unavailable]"


def question_block(question: QuestionRecord | str) -> str:
    """Question text as agents see it: stem plus lettered options."""
    if isinstance(question, QuestionRecord):
        return question.question + "\n" + question.formatted_options()
    return question


def assign_roles(g: SDag) -> dict[Subject, AgentRole]:
    """Role from degree: sinks dominant, sources experts, rest supporting."""
    roles = {}
    for node in g.nodes:
        s = node.subject
        if g.out_degree(s) == 0:
            roles[s] = AgentRole.DOMINANT
        elif g.in_degree(s) == 0:
            roles[s] = AgentRole.SUBJECT_EXPERT
        else:
            roles[s] = AgentRole.SUPPORTING
    return roles


def _canonical_upstream(upstream: list[tuple[Subject, str]]) -> list[tuple[Subject, str]]:
    return sorted(upstream, key=lambda pair: pair[0].index)


def render_prompt(
    role: AgentRole,
    subject: Subject,
    question: str,
    upstream: list[tuple[Subject, str]],
    append_answer_format: bool | None = None,
) -> str:
    """Role template with substitutions; upstream listed in canonical order.

    By default the dominant template ends with the answer-format instruction;
    pass append_answer_format to override (the executor forces it on for the
    final node even when that node renders as a subject expert).
    """
    if role is AgentRole.SUBJECT_EXPERT and upstream:
        raise RoleInputMismatch(f"{subject.value}: subject expert got upstream content")
    if role is not AgentRole.SUBJECT_EXPERT and not upstream:
        raise RoleInputMismatch(f"{subject.value}: {role.value} role needs upstream content")

    upstream = _canonical_upstream(upstream)
    if role is AgentRole.SUBJECT_EXPERT:
        text = SUBJECT_EXPERT_PROMPT.format(subject=subject.value, Q=question)
    elif role is AgentRole.SUPPORTING:
        sources = ", ".join(s.value for s, _ in upstream)
        support_lines = "\n".join(
            f"Supporting Information from {s.value}: {content}" for s, content in upstream
        )
        text = SUPPORTING_PROMPT.format(
            subject=subject.value, Q=question, sources=sources, support_lines=support_lines
        )
    else:
        expert_lines = "\n".join(f"- {s.value}: {content}" for s, content in upstream)
        text = DOMINANT_PROMPT.format(
            subject=subject.value, Q=question, expert_lines=expert_lines
        )
    if append_answer_format is None:
        append_answer_format = role is AgentRole.DOMINANT
    if append_answer_format:
        text += "\n" + ANSWER_FORMAT_LINE
    return text


def render_single_cot_prompt(question: QuestionRecord | str) -> str:
    return SINGLE_COT_PROMPT.replace("{Q}", question_block(question))


_ANSWER_RE = re.compile(r"<<(.*?)>>", re.DOTALL)
_LETTER_RE = re.compile(r"(?<![A-Za-z0-9])([A-J])(?![A-Za-z0-9])")


def extract_answer(reply: str) -> str | None:
    """Contents of the last <<...>> group, else the last standalone A-J."""
    groups = _ANSWER_RE.findall(reply)
    if groups:
        return groups[-1].strip()
    letters = _LETTER_RE.findall(reply)
    if letters:
        return letters[-1]
    return None


# -- traces -----------------------------------------------------------------


@dataclass
class TraceRecord:
    subject: str
    role: str
    model_id: str
    backend: str
    prompt: str
    reply: str
    latency: float
    attempts: int
    failed: bool = False
    round: int = 0
    sim_start: float = 0.0
    sim_finish: float = 0.0

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "role": self.role,
            "model_id": self.model_id,
            "backend": self.backend,
            "prompt": self.prompt,
            "reply": self.reply,
            "latency": self.latency,
            "attempts": self.attempts,
            "failed": self.failed,
            "round": self.round,
            "start": self.sim_start,
            "finish": self.sim_finish,
        }


@dataclass
class ExecutionTrace:
    mode: str
    records: list[TraceRecord]
    final_answer: str | None
    final_subject: str | None
    llm_calls: int
    wall_time: float
    simulated: bool

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False)
                 for r in self.records]
        lines.append(
            json.dumps(
                {
                    "summary": {
                        "mode": self.mode,
                        "final_answer": self.final_answer,
                        "final_subject": self.final_subject,
                        "llm_calls": self.llm_calls,
                        "wall_time": self.wall_time,
                        "simulated": self.simulated,
                    }
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def _question_id(question: QuestionRecord | str) -> str:
    return question.id if isinstance(question, QuestionRecord) else ""


@dataclass
class _NodeResult:
    record: TraceRecord
    contribution: str
    sim_finish: float


def _call_node(
    client: ChatClient,
    backend: str,
    model_id: str,
    subject: Subject | None,
    role_label: str,
    prompt: str,
    metadata: dict,
    sim_start: float,
    round_index: int = 0,
    t0: float | None = None,
) -> _NodeResult:
    """One agent call with failure containment and timeline bookkeeping."""
    request = ChatRequest(backend=backend, user=prompt, metadata=metadata)
    real_start = time.monotonic() - t0 if t0 is not None else 0.0
    try:
        response: ChatResponse = client.complete(request)
    except (TransportError, NoRuleMatched, SdagError) as exc:
        logger.warning("node %s (%s) failed: %s", subject.value if subject else "-",
                       model_id, exc)
        attempts = getattr(exc, "attempts", 1)
        finish = sim_start if t0 is None else time.monotonic() - t0
        record = TraceRecord(
            subject=subject.value if subject else "",
            role=role_label,
            model_id=model_id,
            backend=backend,
            prompt=prompt,
            reply="",
            latency=0.0,
            attempts=attempts,
            failed=True,
            round=round_index,
            sim_start=sim_start if t0 is None else real_start,
            sim_finish=finish,
        )
        return _NodeResult(record=record, contribution=UNAVAILABLE, sim_finish=finish)
    if t0 is None:
        start, finish = sim_start, sim_start + response.latency
    else:
        start, finish = real_start, time.monotonic() - t0
    record = TraceRecord(
        subject=subject.value if subject else "",
        role=role_label,
        model_id=model_id,
        backend=backend,
        prompt=prompt,
        reply=response.text,
        latency=response.latency,
        attempts=response.attempts,
        failed=False,
        round=round_index,
        sim_start=start,
        sim_finish=finish,
    )
    return _NodeResult(record=record, contribution=response.text, sim_finish=finish)


def _resolve_backend(selection: dict[Subject, str], pool_backends: dict[str, str],
                     subject: Subject) -> tuple[str, str]:
    model_id = selection[subject]
    backend = pool_backends.get(model_id)
    if backend is None:
        raise ValueError(f"no backend configured for model {model_id!r}")
    return model_id, backend


def pick_final_node(g: SDag, roles: dict[Subject, AgentRole]) -> Subject:
    """The answering sink: highest relevance among dominants, canonical ties."""
    dominants = [n for n in g.nodes if roles[n.subject] is AgentRole.DOMINANT]
    best = max(dominants, key=lambda n: (n.score, -n.subject.index))
    return best.subject


def execute_dag(
    g: SDag,
    question: QuestionRecord | str,
    selection: dict[Subject, str],
    pool_backends: dict[str, str],
    client: ChatClient,
    extra_metadata: dict | None = None,
) -> ExecutionTrace:
    """Run each node once after its dependencies; one LLM call per node."""
    missing = [n.subject.value for n in g.nodes if n.subject not in selection]
    if missing:
        raise ValueError(f"selection covers no model for: {missing}")
    roles = assign_roles(g)
    final_subject = pick_final_node(g, roles)
    q_text = question_block(question)
    q_id = _question_id(question)
    extra = extra_metadata or {}
    order = g.topological_order()
    simulated = client.all_simulated
    t0 = None if simulated else time.monotonic()

    results: dict[Subject, _NodeResult] = {}

    def run_node(s: Subject, futures: dict) -> _NodeResult:
        upstream = []
        sim_start = 0.0
        for dep in g.in_neighbors(s):
            dep_result: _NodeResult = futures[dep].result()
            upstream.append((dep, dep_result.contribution))
            sim_start = max(sim_start, dep_result.sim_finish)
        role = roles[s]
        template_role = role if upstream else AgentRole.SUBJECT_EXPERT
        prompt = render_prompt(
            template_role,
            s,
            q_text,
            upstream,
            append_answer_format=True if s == final_subject else None,
        )
        model_id, backend = _resolve_backend(selection, pool_backends, s)
        metadata = {"question_id": q_id, "subject": s.value, "role": role.value, **extra}
        return _call_node(
            client, backend, model_id, s, role.value, prompt, metadata, sim_start, t0=t0
        )

    with ThreadPoolExecutor(max_workers=max(1, len(order))) as executor:
        futures: dict = {}
        for s in order:
            futures[s] = executor.submit(run_node, s, futures)
        for s in order:
            results[s] = futures[s].result()

    records = [results[s].record for s in order]
    final_result = results[final_subject]
    final_answer = None if final_result.record.failed else extract_answer(
        final_result.record.reply
    )
    wall = max((r.sim_finish for r in results.values()), default=0.0) if simulated else (
        time.monotonic() - t0
    )
    return ExecutionTrace(
        mode="sdag",
        records=records,
        final_answer=final_answer,
        final_subject=final_subject.value,
        llm_calls=len(records),
        wall_time=wall,
        simulated=simulated,
    )


def execute_fcg(
    nodes: list[SDagNode],
    question: QuestionRecord | str,
    selection: dict[Subject, str],
    pool_backends: dict[str, str],
    client: ChatClient,
    extra_metadata: dict | None = None,
) -> ExecutionTrace:
    """Fully connected baseline: answer round then revision round, 2n calls."""
    if not nodes:
        raise ValueError("fully connected execution needs at least one node")
    nodes = sorted(nodes, key=lambda n: n.subject.index)
    subjects = [n.subject for n in nodes]
    if len(set(subjects)) != len(subjects):
        raise ValueError("duplicate subjects in node list")
    missing = [s.value for s in subjects if s not in selection]
    if missing:
        raise ValueError(f"selection covers no model for: {missing}")
    final_subject = max(nodes, key=lambda n: (n.score, -n.subject.index)).subject
    q_text = question_block(question)
    q_id = _question_id(question)
    extra = extra_metadata or {}
    simulated = client.all_simulated
    t0 = None if simulated else time.monotonic()

    def run_round_one(s: Subject) -> _NodeResult:
        prompt = render_prompt(AgentRole.SUBJECT_EXPERT, s, q_text, [])
        model_id, backend = _resolve_backend(selection, pool_backends, s)
        metadata = {
            "question_id": q_id, "subject": s.value,
            "role": AgentRole.SUBJECT_EXPERT.value, **extra,
        }
        return _call_node(
            client, backend, model_id, s, AgentRole.SUBJECT_EXPERT.value, prompt,
            metadata, 0.0, round_index=1, t0=t0,
        )

    with ThreadPoolExecutor(max_workers=len(subjects)) as executor:
        round_one = list(executor.map(run_round_one, subjects))
    round_one_by_subject = dict(zip(subjects, round_one))
    barrier = max((r.sim_finish for r in round_one), default=0.0)

    def run_round_two(s: Subject) -> _NodeResult:
        peers = [
            (p, round_one_by_subject[p].contribution) for p in subjects if p != s
        ]
        is_final = s == final_subject
        if peers:
            prompt = render_prompt(
                AgentRole.SUPPORTING, s, q_text, peers,
                append_answer_format=True if is_final else None,
            )
            role_label = AgentRole.SUPPORTING.value
        else:
            # Single-agent graph: revision round repeats the expert template.
            prompt = render_prompt(
                AgentRole.SUBJECT_EXPERT, s, q_text, [], append_answer_format=is_final
            )
            role_label = AgentRole.SUBJECT_EXPERT.value
        model_id, backend = _resolve_backend(selection, pool_backends, s)
        metadata = {"question_id": q_id, "subject": s.value, "role": role_label, **extra}
        return _call_node(
            client, backend, model_id, s, role_label, prompt, metadata, barrier,
            round_index=2, t0=t0,
        )

    with ThreadPoolExecutor(max_workers=len(subjects)) as executor:
        round_two = list(executor.map(run_round_two, subjects))
    round_two_by_subject = dict(zip(subjects, round_two))

    records = [r.record for r in round_one] + [r.record for r in round_two]
    final_result = round_two_by_subject[final_subject]
    final_answer = None if final_result.record.failed else extract_answer(
        final_result.record.reply
    )
    wall = max((r.sim_finish for r in round_two), default=0.0) if simulated else (
        time.monotonic() - t0
    )
    return ExecutionTrace(
        mode="fcg",
        records=records,
        final_answer=final_answer,
        final_subject=final_subject.value,
        llm_calls=len(records),
        wall_time=wall,
        simulated=simulated,
    )


def execute_single_cot(
    question: QuestionRecord | str,
    model_id: str,
    backend: str,
    client: ChatClient,
    extra_metadata: dict | None = None,
) -> ExecutionTrace:
    """One chain-of-thought call with the baseline prompt."""
    prompt = render_single_cot_prompt(question)
    q_id = _question_id(question)
    extra = extra_metadata or {}
    simulated = client.all_simulated
    t0 = None if simulated else time.monotonic()
    metadata = {"question_id": q_id, "role": "SingleCoT", **extra}
    result = _call_node(
        client, backend, model_id, None, "SingleCoT", prompt, metadata, 0.0, t0=t0
    )
    final_answer = None if result.record.failed else extract_answer(result.record.reply)
    wall = result.sim_finish if simulated else time.monotonic() - t0
    return ExecutionTrace(
        mode="single_cot",
        records=[result.record],
        final_answer=final_answer,
        final_subject=None,
        llm_calls=1,
        wall_time=wall,
        simulated=simulated,
    )
