"""Rule-based polar/content question labeling with an auditable trace.

Each language has an ordered pack of matchers. Rules fire in priority order
(lowest number first) and the first hit decides the label; builtin packs
put wh-lexicon (content) rules ahead of polar-marker rules so a sentence
carrying both markers comes out content, and finish with a question-mark
fallback rule before abstaining.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .corpus import DepSentence
from .errors import ConfigError

RULE_KINDS = (
    "lexicon_match",
    "suffix_match",
    "initial_token_class",
    "final_particle",
    "regex_on_forms",
)
TARGET_FIELDS = ("form", "lemma", "upos")
VERDICTS = ("polar", "content")
LABEL_BY_VERDICT = {"polar": 1, "content": 0}


def _norm(value: str) -> str:
    return unicodedata.normalize("NFC", value).casefold()


@dataclass(frozen=True)
class Rule:
    id: str
    kind: str
    target_field: str
    payload: tuple[str, ...]
    verdict: str
    priority: int

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ConfigError(f"rule {self.id!r}: unknown kind {self.kind!r}")
        if self.target_field not in TARGET_FIELDS:
            raise ConfigError(
                f"rule {self.id!r}: unknown target field {self.target_field!r}"
            )
        if self.verdict not in VERDICTS:
            raise ConfigError(f"rule {self.id!r}: unknown verdict {self.verdict!r}")
        if not self.payload:
            raise ConfigError(f"rule {self.id!r}: payload must be nonempty")

    def matches(self, sentence: DepSentence) -> bool:
        tokens = sentence.tokens
        if not tokens:
            return False
        if self.kind == "regex_on_forms":
            joined = _norm(" ".join(tok.form for tok in tokens))
            return re.search(self.payload[0], joined) is not None

        payload = {_norm(entry) for entry in self.payload}

        def target(tok) -> str:
            return _norm(getattr(tok, self.target_field))

        if self.kind == "lexicon_match":
            return any(target(tok) in payload for tok in tokens)
        if self.kind == "suffix_match":
            return any(
                target(tok).endswith(suffix)
                for tok in tokens
                for suffix in payload
            )
        if self.kind == "initial_token_class":
            non_punct = [tok for tok in tokens if not tok.is_punct()]
            return bool(non_punct) and target(non_punct[0]) in payload
        if self.kind == "final_particle":
            # candidate positions: the very last token, and the last
            # non-punctuation token (covers "...ka ?" as well as "...?")
            candidates = [tokens[-1]]
            non_punct = [tok for tok in tokens if not tok.is_punct()]
            if non_punct:
                candidates.append(non_punct[-1])
            return any(target(tok) in payload for tok in candidates)
        raise ConfigError(f"rule {self.id!r}: unhandled kind {self.kind!r}")


@dataclass
class RulePack:
    language: str
    rules: list[Rule]
    default_verdict: str = "abstain"

    def __post_init__(self):
        if self.default_verdict not in ("polar", "content", "abstain"):
            raise ConfigError(
                f"pack {self.language!r}: bad default verdict "
                f"{self.default_verdict!r}"
            )
        priorities = [rule.priority for rule in self.rules]
        if len(set(priorities)) != len(priorities):
            raise ConfigError(
                f"pack {self.language!r}: rule priorities must be unique"
            )
        self.rules = sorted(self.rules, key=lambda rule: rule.priority)


@dataclass(frozen=True)
class Annotation:
    """label 1 = polar, 0 = content, None = abstained."""

    label: Optional[int]
    fired_rule: str
    confidence: str  # "rule" or "default"


def _pack_from_dict(data: dict) -> RulePack:
    try:
        rules = [
            Rule(
                id=entry["id"],
                kind=entry["kind"],
                target_field=entry["target_field"],
                payload=tuple(entry["payload"])
                if isinstance(entry["payload"], list)
                else (entry["payload"],),
                verdict=entry["verdict"],
                priority=int(entry["priority"]),
            )
            for entry in data["rules"]
        ]
        return RulePack(
            language=data["language"],
            rules=rules,
            default_verdict=data.get("default_verdict", "abstain"),
        )
    except KeyError as exc:
        raise ConfigError(f"rule pack is missing field {exc}")


def load_rulepack(language: str, source: Optional[str | Path] = None) -> RulePack:
    """Load a builtin pack by language code, or a user pack from a file."""
    if source is not None:
        text = Path(source).read_text(encoding="utf-8")
        return _pack_from_dict(json.loads(text))
    try:
        text = (
            resources.files("qprobe.rules").joinpath(f"{language}.json").read_text()
        )
    except FileNotFoundError:
        raise ConfigError(f"no builtin rule pack for language {language!r}")
    return _pack_from_dict(json.loads(text))


def classify_question(sentence: DepSentence, pack: RulePack) -> Annotation:
    """First firing rule wins; otherwise the pack default applies."""
    if sentence.language and sentence.language != pack.language:
        raise ConfigError(
            f"sentence {sentence.id!r} is {sentence.language!r} but the pack "
            f"is for {pack.language!r}"
        )
    for rule in pack.rules:
        if rule.matches(sentence):
            return Annotation(
                label=LABEL_BY_VERDICT[rule.verdict],
                fired_rule=rule.id,
                confidence="rule",
            )
    if pack.default_verdict == "abstain":
        return Annotation(label=None, fired_rule="default", confidence="default")
    return Annotation(
        label=LABEL_BY_VERDICT[pack.default_verdict],
        fired_rule="default",
        confidence="default",
    )


@dataclass
class CoverageReport:
    """Counts of fired rules and abstentions for one annotation run."""

    total: int = 0
    by_rule: dict[str, int] = field(default_factory=dict)
    labels: dict[int, int] = field(default_factory=dict)
    abstained: int = 0

    def add(self, annotation: Annotation) -> None:
        self.total += 1
        self.by_rule[annotation.fired_rule] = (
            self.by_rule.get(annotation.fired_rule, 0) + 1
        )
        if annotation.label is None:
            self.abstained += 1
        else:
            self.labels[annotation.label] = self.labels.get(annotation.label, 0) + 1

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "by_rule": dict(sorted(self.by_rule.items())),
            "labels": {str(k): v for k, v in sorted(self.labels.items())},
            "abstained": self.abstained,
        }


def annotate_corpus(
    sentences: Iterable[DepSentence],
    packs: Optional[dict[str, RulePack]] = None,
    overwrite: bool = False,
) -> tuple[list[tuple[DepSentence, Annotation]], CoverageReport]:
    """Annotate every sentence with its language's pack.

    Builtin packs are loaded on demand when `packs` does not provide one;
    a language with no pack at all raises ConfigError naming it. Existing
    question labels are kept unless overwrite is set.
    """
    sentences = list(sentences)
    packs = dict(packs) if packs else {}
    for sentence in sentences:
        if sentence.language not in packs:
            try:
                packs[sentence.language] = load_rulepack(sentence.language)
            except ConfigError:
                raise ConfigError(
                    f"no rule pack available for language {sentence.language!r}"
                )
    report = CoverageReport()
    annotated = []
    for sentence in sentences:
        annotation = classify_question(sentence, packs[sentence.language])
        if overwrite or sentence.question_label is None:
            if annotation.label is not None:
                sentence.question_label = annotation.label
        report.add(annotation)
        annotated.append((sentence, annotation))
    return annotated, report
