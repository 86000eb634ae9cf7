"""Domain data model and JSONL persistence.

All corpus files are JSONL: UTF-8, LF line endings, one JSON object per
line, keys emitted in a fixed documented order, optional fields omitted
(never null) when absent.  Writing the same records twice produces
byte-identical files, which is what makes seeded pipeline runs
reproducible end to end.

File schemas
------------
examples:     {id, task, prompt, reference_answer?, external_difficulty?, judge_score?}
completions:  {example_id, teacher_id, text}          (raw, unsegmented teacher output)
traces:       {example_id, teacher_id, raw_text, steps: [{index, text}], tok,
               segmentation_mode, confidence}
scores:       {example_id, teacher_id, k, tok, dot_norm, n_samples}
manifest:     one {"record": "plan", ...} header line, then one
              {"record": "phase", ...} line per phase
"""

from __future__ import annotations

import json
import math
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional
from urllib.parse import urlparse

from .errors import CorpusError

SEGMENTATION_MODES = ("numbered", "labeled", "bulleted", "paragraph-fallback")
CONFIDENCE_LEVELS = ("high", "low")

# Relative tolerance for the dot_norm = k / ln(1 + tok) identity.
DOT_NORM_RTOL = 1e-12


def count_tokens(text: str) -> int:
    """Count whitespace-delimited tokens.

    The toolkit tokenizer is Unicode-whitespace splitting: maximal runs of
    non-whitespace characters.  Deterministic and dependency-free; counts
    are not comparable with subword tokenizers.
    """
    return len(text.split())


@dataclass(frozen=True)
class Example:
    """One training item: a prompt plus optional difficulty side-channels."""

    id: str
    task: str
    prompt: str
    reference_answer: Optional[str] = None
    external_difficulty: Optional[float] = None
    judge_score: Optional[float] = None
    token_length_prompt: int = -1  # derived from prompt when not supplied

    def __post_init__(self):
        if not self.id:
            raise CorpusError("example id must be nonempty")
        if not self.task:
            raise CorpusError(f"example {self.id!r}: task must be nonempty")
        if self.external_difficulty is not None and not math.isfinite(self.external_difficulty):
            raise CorpusError(f"example {self.id!r}: external_difficulty must be finite")
        if self.judge_score is not None and not (0.0 <= self.judge_score <= 1.0):
            raise CorpusError(f"example {self.id!r}: judge_score must lie in [0, 1]")
        if self.token_length_prompt < 0:
            object.__setattr__(self, "token_length_prompt", count_tokens(self.prompt))


@dataclass(frozen=True)
class Step:
    """A single reasoning step extracted from a trace."""

    index: int
    text: str

    def __post_init__(self):
        if self.index < 1:
            raise CorpusError(f"step index must be >= 1, got {self.index}")
        if not self.text:
            raise CorpusError(f"step {self.index}: text must be nonempty")


@dataclass(frozen=True)
class Trace:
    """A teacher's reasoning output for one example, segmented into steps."""

    example_id: str
    teacher_id: str
    raw_text: str
    steps: tuple[Step, ...]
    tok: int
    segmentation_mode: str
    confidence: str

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        indices = [s.index for s in self.steps]
        if indices != list(range(1, len(indices) + 1)):
            raise CorpusError(
                f"trace ({self.example_id}, {self.teacher_id}): "
                f"step indices must be exactly 1..k, got {indices}"
            )
        if self.tok < 1:
            raise CorpusError(
                f"trace ({self.example_id}, {self.teacher_id}): tok must be >= 1"
            )
        if self.segmentation_mode not in SEGMENTATION_MODES:
            raise CorpusError(f"unknown segmentation_mode {self.segmentation_mode!r}")
        if self.confidence not in CONFIDENCE_LEVELS:
            raise CorpusError(f"unknown confidence {self.confidence!r}")

    @property
    def k(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class DoTScore:
    """Depth-of-thought score for one (example, teacher) pair.

    k is the step count, tok the trace token count, and dot_norm the
    verbosity-controlled variant k / ln(1 + tok).
    """

    example_id: str
    teacher_id: str
    k: int
    tok: int
    dot_norm: float
    n_samples: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise CorpusError(f"score ({self.example_id}): k must be >= 1")
        if self.tok < 1:
            raise CorpusError(f"score ({self.example_id}): tok must be >= 1")
        if self.n_samples < 1:
            raise CorpusError(f"score ({self.example_id}): n_samples must be >= 1")
        expected = self.k / math.log1p(self.tok)
        if abs(self.dot_norm - expected) > DOT_NORM_RTOL * abs(expected):
            raise CorpusError(
                f"score ({self.example_id}): dot_norm {self.dot_norm!r} does not "
                f"equal k/ln(1+tok) = {expected!r}"
            )

    @classmethod
    def compute(cls, example_id: str, teacher_id: str, k: int, tok: int,
                n_samples: int = 1) -> "DoTScore":
        """Build a score with dot_norm derived from k and tok."""
        if k < 1 or tok < 1:
            raise CorpusError(f"score ({example_id}): k and tok must be >= 1")
        return cls(example_id, teacher_id, k, tok, k / math.log1p(tok), n_samples)


@dataclass(frozen=True)
class TeacherProfile:
    """Connection and sampling settings for one teacher endpoint."""

    teacher_id: str
    endpoint_url: str
    model_name: str
    template_id: str
    samples_per_example: int = 1
    temperature: float = 0.7

    def __post_init__(self):
        if not self.teacher_id:
            raise CorpusError("teacher_id must be nonempty")
        if self.samples_per_example < 1:
            raise CorpusError("samples_per_example must be >= 1")
        if self.temperature < 0:
            raise CorpusError("temperature must be >= 0")
        parsed = urlparse(self.endpoint_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise CorpusError(f"endpoint_url is not a valid URL: {self.endpoint_url!r}")


@dataclass(frozen=True)
class SchedulePlan:
    """Parameters of a curriculum build.

    mode "staged" trains phase t on bucket t only; mode "mixed" samples
    phase t from buckets 1..t with weights w_i proportional to i**alpha.
    mixing "adjacent" restricts a mixed phase t to buckets t-1 and t.
    """

    mode: str
    phases: int
    budget_per_phase: int
    seed: int
    alpha: float = 0.0
    with_replacement: bool = False
    mixing: str = "union"

    def __post_init__(self):
        if self.mode not in ("staged", "mixed"):
            raise CorpusError(f"unknown schedule mode {self.mode!r}")
        if self.mixing not in ("union", "adjacent"):
            raise CorpusError(f"unknown mixing {self.mixing!r}")
        if self.phases < 1:
            raise CorpusError("phases must be >= 1")
        if self.budget_per_phase < 1:
            raise CorpusError("budget_per_phase must be >= 1")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise CorpusError("alpha must be finite and >= 0")
        if not (-(2**63) <= self.seed < 2**63):
            raise CorpusError("seed must fit in 64 bits")


@dataclass(frozen=True)
class Phase:
    """One training phase: an ordered id list plus per-bucket accounting."""

    index: int
    example_ids: tuple[str, ...]
    bucket_counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "example_ids", tuple(self.example_ids))
        if self.index < 1:
            raise CorpusError(f"phase index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class CurriculumManifest:
    """A seeded, phase-ordered sampling plan consumable by any trainer."""

    plan: SchedulePlan
    phases: tuple[Phase, ...]
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise CorpusError("manifest must contain at least one phase")
        for phase in self.phases:
            if len(phase.example_ids) > self.plan.budget_per_phase:
                raise CorpusError(
                    f"phase {phase.index}: {len(phase.example_ids)} ids exceed "
                    f"budget {self.plan.budget_per_phase}"
                )
            for b in phase.bucket_counts:
                if not (1 <= b <= phase.index):
                    raise CorpusError(
                        f"phase {phase.index} draws from bucket {b}, "
                        f"outside buckets 1..{phase.index}"
                    )


# ---------------------------------------------------------------------------
# JSONL helpers


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip():
                raise CorpusError(f"{path}:{lineno}: blank line is not a record")
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: record must be a JSON object")
            yield lineno, obj


def _require(obj: dict, key: str, path: Path, lineno: int):
    if key not in obj:
        raise CorpusError(f"{path}:{lineno}: missing required field {key!r}")
    return obj[key]


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False)


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def file_sha256(path: Path) -> str:
    """Hex digest of a file's bytes, used in provenance blocks."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Examples


def read_corpus(path) -> list[Example]:
    """Read an examples JSONL file, in file order.

    Raises CorpusError with the offending line number on malformed JSON,
    a missing required field, an invariant violation, or a duplicate id.
    """
    path = Path(path)
    examples: list[Example] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        ex_id = _require(obj, "id", path, lineno)
        try:
            example = Example(
                id=str(ex_id),
                task=str(_require(obj, "task", path, lineno)),
                prompt=str(_require(obj, "prompt", path, lineno)),
                reference_answer=obj.get("reference_answer"),
                external_difficulty=obj.get("external_difficulty"),
                judge_score=obj.get("judge_score"),
            )
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        if example.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate example id {example.id!r}")
        seen.add(example.id)
        examples.append(example)
    return examples


def write_corpus(examples: Iterable[Example], path) -> None:
    def lines():
        for ex in examples:
            obj = {"id": ex.id, "task": ex.task, "prompt": ex.prompt}
            if ex.reference_answer is not None:
                obj["reference_answer"] = ex.reference_answer
            if ex.external_difficulty is not None:
                obj["external_difficulty"] = ex.external_difficulty
            if ex.judge_score is not None:
                obj["judge_score"] = ex.judge_score
            yield _dump_line(obj)

    _write_lines(Path(path), lines())


# ---------------------------------------------------------------------------
# Raw completions (unsegmented teacher output)


def read_completions(path) -> list[dict]:
    """Read raw completions: [{example_id, teacher_id, text}, ...]."""
    path = Path(path)
    records = []
    for lineno, obj in _iter_jsonl(path):
        records.append({
            "example_id": str(_require(obj, "example_id", path, lineno)),
            "teacher_id": str(_require(obj, "teacher_id", path, lineno)),
            "text": str(_require(obj, "text", path, lineno)),
        })
    return records


def write_completions(records: Iterable[dict], path) -> None:
    def lines():
        for rec in records:
            yield _dump_line({
                "example_id": rec["example_id"],
                "teacher_id": rec["teacher_id"],
                "text": rec["text"],
            })

    _write_lines(Path(path), lines())


# ---------------------------------------------------------------------------
# Traces


def read_traces(path) -> list[Trace]:
    path = Path(path)
    traces = []
    for lineno, obj in _iter_jsonl(path):
        steps = _require(obj, "steps", path, lineno)
        try:
            trace = Trace(
                example_id=str(_require(obj, "example_id", path, lineno)),
                teacher_id=str(_require(obj, "teacher_id", path, lineno)),
                raw_text=str(_require(obj, "raw_text", path, lineno)),
                steps=tuple(Step(index=s["index"], text=s["text"]) for s in steps),
                tok=int(_require(obj, "tok", path, lineno)),
                segmentation_mode=str(_require(obj, "segmentation_mode", path, lineno)),
                confidence=str(_require(obj, "confidence", path, lineno)),
            )
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        traces.append(trace)
    return traces


def write_traces(traces: Iterable[Trace], path) -> None:
    def lines():
        for tr in traces:
            yield _dump_line({
                "example_id": tr.example_id,
                "teacher_id": tr.teacher_id,
                "raw_text": tr.raw_text,
                "steps": [{"index": s.index, "text": s.text} for s in tr.steps],
                "tok": tr.tok,
                "segmentation_mode": tr.segmentation_mode,
                "confidence": tr.confidence,
            })

    _write_lines(Path(path), lines())


# ---------------------------------------------------------------------------
# Scores


def read_scores(path) -> list[DoTScore]:
    path = Path(path)
    scores = []
    for lineno, obj in _iter_jsonl(path):
        try:
            score = DoTScore(
                example_id=str(_require(obj, "example_id", path, lineno)),
                teacher_id=str(_require(obj, "teacher_id", path, lineno)),
                k=int(_require(obj, "k", path, lineno)),
                tok=int(_require(obj, "tok", path, lineno)),
                dot_norm=float(_require(obj, "dot_norm", path, lineno)),
                n_samples=int(obj.get("n_samples", 1)),
            )
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        scores.append(score)
    return scores


def write_scores(scores: Iterable[DoTScore], path) -> None:
    def lines():
        for sc in scores:
            yield _dump_line({
                "example_id": sc.example_id,
                "teacher_id": sc.teacher_id,
                "k": sc.k,
                "tok": sc.tok,
                "dot_norm": sc.dot_norm,
                "n_samples": sc.n_samples,
            })

    _write_lines(Path(path), lines())


# ---------------------------------------------------------------------------
# Manifests


def write_manifest(manifest: CurriculumManifest, path) -> None:
    """Serialize a manifest, byte-reproducibly.

    The first line is a plan header, followed by one line per phase.  Key
    order is fixed, so identical inputs and seed always produce an
    identical file.
    """
    plan = manifest.plan

    def lines():
        yield _dump_line({
            "record": "plan",
            "mode": plan.mode,
            "phases": plan.phases,
            "budget_per_phase": plan.budget_per_phase,
            "seed": plan.seed,
            "alpha": plan.alpha,
            "with_replacement": plan.with_replacement,
            "mixing": plan.mixing,
            "provenance": {k: manifest.provenance[k] for k in sorted(manifest.provenance)},
        })
        for phase in manifest.phases:
            yield _dump_line({
                "record": "phase",
                "index": phase.index,
                "example_ids": list(phase.example_ids),
                "bucket_counts": {str(b): phase.bucket_counts[b]
                                  for b in sorted(phase.bucket_counts)},
            })

    _write_lines(Path(path), lines())


def read_manifest(path) -> CurriculumManifest:
    path = Path(path)
    plan = None
    phases: list[Phase] = []
    for lineno, obj in _iter_jsonl(path):
        record = _require(obj, "record", path, lineno)
        if record == "plan":
            if plan is not None:
                raise CorpusError(f"{path}:{lineno}: duplicate plan header")
            try:
                plan_obj = SchedulePlan(
                    mode=str(_require(obj, "mode", path, lineno)),
                    phases=int(_require(obj, "phases", path, lineno)),
                    budget_per_phase=int(_require(obj, "budget_per_phase", path, lineno)),
                    seed=int(_require(obj, "seed", path, lineno)),
                    alpha=float(obj.get("alpha", 0.0)),
                    with_replacement=bool(obj.get("with_replacement", False)),
                    mixing=str(obj.get("mixing", "union")),
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            plan = (plan_obj, {str(k): str(v) for k, v in obj.get("provenance", {}).items()})
        elif record == "phase":
            phases.append(Phase(
                index=int(_require(obj, "index", path, lineno)),
                example_ids=tuple(str(x) for x in _require(obj, "example_ids", path, lineno)),
                bucket_counts={int(k): int(v)
                               for k, v in obj.get("bucket_counts", {}).items()},
            ))
        else:
            raise CorpusError(f"{path}:{lineno}: unknown record type {record!r}")
    if plan is None:
        raise CorpusError(f"{path}: manifest has no plan header")
    plan_obj, provenance = plan
    try:
        return CurriculumManifest(plan=plan_obj, phases=tuple(phases), provenance=provenance)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from exc
