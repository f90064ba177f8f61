"""Dataset ingestion into ranked candidate groups.

Raw files (WikiQA TSV or the generic JSONL interchange format) become lists
of ``QuestionGroup``: one question plus its candidates in original document
order with binary labels. Preprocessing is deterministic: lowercase,
rule-based tokenization, empty candidates dropped, unanswered questions
removed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

WIKIQA_COLUMNS = ("QuestionID", "Question", "DocumentID", "DocumentTitle",
                  "SentenceID", "Sentence", "Label")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into tokens.

    Contiguous letter-or-digit runs stay whole; every other character
    becomes its own single-character token. Deterministic, whitespace
    never yields tokens.
    """
    tokens = []
    for chunk in text.lower().split():
        run = []
        for ch in chunk:
            if ch.isalnum():
                run.append(ch)
            else:
                if run:
                    tokens.append("".join(run))
                    run = []
                tokens.append(ch)
        if run:
            tokens.append("".join(run))
    return tokens


@dataclass(frozen=True)
class Candidate:
    text: str
    tokens: tuple
    label: int
    original_rank: int  # 1-based position in the source document order


@dataclass(frozen=True)
class QuestionGroup:
    question_id: str
    question: str
    question_tokens: tuple
    candidates: tuple  # ordered by original_rank, exactly 1..n

    @property
    def labels(self):
        return [c.label for c in self.candidates]


@dataclass
class IngestReport:
    """Counts reported by ingestion (pre-filter totals and drops)."""
    total_questions: int = 0
    total_candidates: int = 0
    kept_groups: int = 0
    dropped_unanswered: int = 0
    dropped_empty_candidates: int = 0
    dropped_empty_questions: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _build_groups(raw_groups, report: IngestReport) -> list[QuestionGroup]:
    """Shared tail of every ingestion path.

    ``raw_groups`` is an ordered list of (question_id, question_text,
    [(sentence, label), ...]). Drops empty-after-tokenization candidates
    (ranks recompacted), questions that tokenize to nothing, and groups
    without a single positive label.
    """
    groups = []
    for qid, question, rows in raw_groups:
        report.total_questions += 1
        report.total_candidates += len(rows)
        q_tokens = tuple(tokenize(question))
        if not q_tokens:
            report.dropped_empty_questions += 1
            continue
        cands = []
        for text, label in rows:
            tokens = tuple(tokenize(text))
            if not tokens:
                report.dropped_empty_candidates += 1
                continue
            cands.append(Candidate(text=text, tokens=tokens, label=label,
                                   original_rank=len(cands) + 1))
        if not any(c.label for c in cands):
            report.dropped_unanswered += 1
            continue
        groups.append(QuestionGroup(question_id=qid, question=question,
                                    question_tokens=q_tokens, candidates=tuple(cands)))
    report.kept_groups = len(groups)
    return groups


def _parse_label(value, where: str) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int) and value in (0, 1):
        return value
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    raise ValueError(f"{where}: label must be 0 or 1, got {value!r}")


def ingest_wikiqa(tsv_path):
    """Read an official WikiQA TSV split into question groups.

    One group per QuestionID, candidates in file order. Returns
    (groups, IngestReport).
    """
    order = []
    by_qid = {}
    with open(tsv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{tsv_path}: empty file") from None
        col = {name: i for i, name in enumerate(header)}
        for name in WIKIQA_COLUMNS:
            if name not in col:
                raise ValueError(f"{tsv_path}: missing column {name}")
        qi, qq, qs, ql = col["QuestionID"], col["Question"], col["Sentence"], col["Label"]
        for rowno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < len(header):
                raise ValueError(f"{tsv_path}:{rowno}: expected {len(header)} columns, got {len(row)}")
            label = _parse_label(row[ql], f"{tsv_path}:{rowno}")
            qid = row[qi]
            if qid not in by_qid:
                by_qid[qid] = (row[qq], [])
                order.append(qid)
            by_qid[qid][1].append((row[qs], label))
    report = IngestReport()
    raw = [(qid, by_qid[qid][0], by_qid[qid][1]) for qid in order]
    return _build_groups(raw, report), report


def ingest_jsonl(path):
    """Read the interchange format: one JSON object per line.

    Each record is {question_id, question, candidates: [{text, label}]}
    with candidates in document order. Returns (groups, IngestReport).
    """
    raw = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            try:
                qid = str(rec["question_id"])
                question = rec["question"]
                cand_list = rec["candidates"]
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
            if not isinstance(cand_list, list):
                raise ValueError(f"{path}:{lineno}: candidates must be a list")
            rows = []
            for c in cand_list:
                try:
                    rows.append((c["text"], _parse_label(c["label"], f"{path}:{lineno}")))
                except (KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad candidate record ({exc})") from exc
            raw.append((qid, question, rows))
    report = IngestReport()
    return _build_groups(raw, report), report


def export_jsonl(groups, path) -> None:
    """Write groups to the interchange format; export then ingest round-trips."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in groups:
            rec = {
                "question_id": g.question_id,
                "question": g.question,
                "candidates": [{"text": c.text, "label": c.label} for c in g.candidates],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
