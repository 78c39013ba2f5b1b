"""Benchmark harness: run a question set through a routing mode and report.

Modes mirror the ablation grid: full routing (sdag), annotation-derived
graphs without the router (no_gnn), fully connected execution (fcg), random
model assignment (random_model), and a single-model chain-of-thought
baseline (single_cot). Accuracy is averaged over seeded trials; wall time
per question is the simulated critical path when every backend is a mock,
or measured time otherwise.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backends import ChatClient
from .errors import EmptySplit
from .orchestrator import ExecutionTrace, execute_dag, execute_fcg, execute_single_cot
from .profiling import ModelPoolEntry, ProfileStore, selection_map
from .router.generation import GenerationConfig, generate_sdag
from .subjects import QuestionRecord, build_ground_truth_dag, dominant_subject

logger = logging.getLogger(__name__)

MODES = ("sdag", "no_gnn", "fcg", "random_model", "single_cot")


@dataclass(frozen=True)
class EvalConfig:
    mode: str
    seeds: int = 3
    parallelism: int = 1
    single_cot_model: str | None = None
    generation: GenerationConfig = field(default_factory=GenerationConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class QuestionOutcome:
    seed: int
    question_id: str
    answer: str | None
    gold: str
    correct: bool
    llm_calls: int
    wall_time: float
    trace: list[dict]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "question_id": self.question_id,
            "answer": self.answer,
            "gold": self.gold,
            "correct": self.correct,
            "llm_calls": self.llm_calls,
            "wall_time": self.wall_time,
            "trace": self.trace,
        }


@dataclass
class EvalReport:
    mode: str
    seeds: int
    questions: int
    accuracy_mean: float
    accuracy_std: float
    avg_seconds: float
    avg_calls: float
    total_llm_calls: int
    outcomes: list[QuestionOutcome]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seeds": self.seeds,
            "questions": self.questions,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "avg_seconds": self.avg_seconds,
            "avg_calls": self.avg_calls,
            "total_llm_calls": self.total_llm_calls,
            "outcomes": [o.to_dict() for o in self.outcomes],
        }


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def _extra_metadata(record: QuestionRecord) -> dict:
    extra = {"gold": record.gold, "wrong": record.wrong_label()}
    if record.subjects:
        extra["dominant_subject"] = dominant_subject(record.subjects).value
    return extra


def evaluate(
    records: list[QuestionRecord],
    client: ChatClient,
    pool: list[ModelPoolEntry],
    cfg: EvalConfig,
    params=None,
    embedder=None,
    store: ProfileStore | None = None,
) -> EvalReport:
    """Run every question under every seed in the configured mode."""
    if not records:
        raise EmptySplit("no questions to evaluate")
    if not pool:
        raise ValueError("empty model pool")
    records = sorted(records, key=lambda r: r.id)
    pool_backends = {e.model_id: e.backend for e in pool}
    model_ids = sorted(pool_backends)

    uses_router = params is not None
    if cfg.mode == "sdag":
        _require(uses_router and embedder is not None, "sdag mode needs a router checkpoint")
        _require(store is not None, "sdag mode needs capability profiles")
    if cfg.mode in ("no_gnn", "fcg") and not uses_router:
        _require(
            all(r.subjects for r in records),
            f"{cfg.mode} mode without a checkpoint needs subject annotations",
        )
    if cfg.mode == "no_gnn":
        _require(store is not None, "no_gnn mode needs capability profiles")
        _require(all(r.subjects for r in records), "no_gnn mode needs subject annotations")
    if cfg.mode == "fcg":
        _require(store is not None, "fcg mode needs capability profiles")
    if cfg.mode == "random_model" and not uses_router:
        _require(
            all(r.subjects for r in records),
            "random_model mode without a checkpoint needs subject annotations",
        )
    single_cot_model = cfg.single_cot_model or model_ids[0]
    if cfg.mode == "single_cot":
        _require(
            single_cot_model in pool_backends,
            f"single_cot model {single_cot_model!r} is not in the pool",
        )

    def base_dag(record: QuestionRecord):
        # The router path never consults stored annotations; the annotation
        # path never consults the router.
        if cfg.mode == "no_gnn" or not uses_router:
            return build_ground_truth_dag(record.subjects)
        return generate_sdag(record.question, params, embedder, cfg.generation)

    def run_question(seed: int, index: int, record: QuestionRecord) -> QuestionOutcome:
        started = time.monotonic()
        extra = _extra_metadata(record)
        if cfg.mode == "single_cot":
            trace: ExecutionTrace = execute_single_cot(
                record, single_cot_model, pool_backends[single_cot_model], client,
                extra_metadata=extra,
            )
        else:
            dag = base_dag(record)
            subjects = dag.subjects()
            if cfg.mode == "random_model":
                rng = np.random.default_rng([seed, index])
                selection = {
                    s: model_ids[int(rng.integers(0, len(model_ids)))] for s in subjects
                }
            else:
                selection = selection_map(subjects, store)
            if cfg.mode == "fcg":
                trace = execute_fcg(
                    dag.nodes, record, selection, pool_backends, client,
                    extra_metadata=extra,
                )
            else:
                trace = execute_dag(
                    dag, record, selection, pool_backends, client, extra_metadata=extra
                )
        wall = trace.wall_time if trace.simulated else time.monotonic() - started
        answer = trace.final_answer
        return QuestionOutcome(
            seed=seed,
            question_id=record.id,
            answer=answer,
            gold=record.gold,
            correct=answer == record.gold,
            llm_calls=trace.llm_calls,
            wall_time=wall,
            trace=[r.to_dict() for r in trace.records],
        )

    outcomes: list[QuestionOutcome] = []
    per_seed_accuracy: list[float] = []
    for seed in range(cfg.seeds):
        if cfg.parallelism > 1:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as executor:
                seed_outcomes = list(
                    executor.map(
                        lambda pair: run_question(seed, pair[0], pair[1]),
                        enumerate(records),
                    )
                )
        else:
            seed_outcomes = [run_question(seed, i, r) for i, r in enumerate(records)]
        per_seed_accuracy.append(
            sum(1 for o in seed_outcomes if o.correct) / len(seed_outcomes)
        )
        outcomes.extend(seed_outcomes)

    return EvalReport(
        mode=cfg.mode,
        seeds=cfg.seeds,
        questions=len(records),
        accuracy_mean=float(np.mean(per_seed_accuracy)),
        accuracy_std=float(np.std(per_seed_accuracy)),
        avg_seconds=float(np.mean([o.wall_time for o in outcomes])),
        avg_calls=float(np.mean([o.llm_calls for o in outcomes])),
        total_llm_calls=int(sum(o.llm_calls for o in outcomes)),
        outcomes=outcomes,
    )


def render_report(report: EvalReport, format: str = "text") -> str:
    """Table-shaped text summary, or canonical JSON (byte-stable)."""
    if format == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if format != "text":
        raise ValueError(f"unknown report format: {format!r}")
    header = ("Variant", "Accuracy", "Inf. Time", "#LLM Calls")
    row = (
        report.mode,
        f"{report.accuracy_mean * 100:.2f} ± {report.accuracy_std * 100:.2f}",
        f"{report.avg_seconds:.2f}",
        f"{report.avg_calls:.1f}",
    )
    widths = [max(len(h), len(c)) for h, c in zip(header, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
        "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip(),
    ]
    return "\n".join(lines) + "\n"
