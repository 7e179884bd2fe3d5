import json

import pytest

from qprobe.annotator import (
    Rule,
    RulePack,
    annotate_corpus,
    classify_question,
    load_rulepack,
)
from qprobe.corpus import SUPPORTED_LANGUAGES
from qprobe.errors import ConfigError

from conftest import make_sentence


def q(rows, language, sent_id="q1"):
    return make_sentence(rows, language=language, sent_id=sent_id)


class TestLoadRulepack:
    def test_builtins_exist_for_all_seven_languages(self):
        for language in SUPPORTED_LANGUAGES:
            pack = load_rulepack(language)
            assert pack.language == language
            assert pack.rules

    def test_arabic_has_hal_polar_rule(self):
        pack = load_rulepack("ara")
        rule = next(r for r in pack.rules if r.id == "ara_hal_polar")
        assert rule.kind == "lexicon_match"
        assert "هل" in rule.payload
        assert rule.verdict == "polar"

    def test_finnish_has_ko_suffix_rule(self):
        pack = load_rulepack("fin")
        rule = next(r for r in pack.rules if r.kind == "suffix_match")
        assert set(rule.payload) == {"ko", "kö"}
        assert rule.verdict == "polar"

    def test_russian_has_li_particle(self):
        pack = load_rulepack("rus")
        rule = next(r for r in pack.rules if r.id == "rus_li_polar")
        assert rule.payload == ("ли",)
        assert rule.verdict == "polar"

    def test_duplicate_priorities_rejected(self):
        with pytest.raises(ConfigError):
            RulePack(
                language="eng",
                rules=[
                    Rule("a", "lexicon_match", "form", ("x",), "polar", 1),
                    Rule("b", "lexicon_match", "form", ("y",), "content", 1),
                ],
            )

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            Rule("a", "telepathy", "form", ("x",), "polar", 1)

    def test_user_pack_file(self, tmp_path):
        pack_file = tmp_path / "pack.json"
        pack_file.write_text(
            json.dumps(
                {
                    "language": "zzz",
                    "default_verdict": "abstain",
                    "rules": [
                        {
                            "id": "zzz_q",
                            "kind": "lexicon_match",
                            "target_field": "form",
                            "payload": ["blip"],
                            "verdict": "polar",
                            "priority": 1,
                        }
                    ],
                }
            )
        )
        pack = load_rulepack("zzz", source=pack_file)
        assert pack.language == "zzz"
        assert pack.rules[0].id == "zzz_q"


class TestClassifyQuestion:
    def test_japanese_wh_beats_final_ka(self):
        sent = q(
            [
                ("Itsu", "ADV", 2, "advmod"),
                ("kimasu", "VERB", 0, "root"),
                ("ka", "PART", 2, "mark"),
                ("?", "PUNCT", 2, "punct"),
            ],
            "jpn",
        )
        annotation = classify_question(sent, load_rulepack("jpn"))
        assert annotation.label == 0
        assert annotation.fired_rule == "jpn_wh_content"

    def test_japanese_final_ka_polar(self):
        sent = q(
            [
                ("Ashita", "NOUN", 2, "obl"),
                ("kimasu", "VERB", 0, "root"),
                ("ka", "PART", 2, "mark"),
                ("?", "PUNCT", 2, "punct"),
            ],
            "jpn",
        )
        annotation = classify_question(sent, load_rulepack("jpn"))
        assert annotation.label == 1
        assert annotation.fired_rule == "jpn_ka_final_polar"

    def test_english_aux_inversion_polar(self):
        sent = q(
            [
                ("Is", "AUX", 3, "aux"),
                ("it", "PRON", 3, "nsubj"),
                ("raining", "VERB", 0, "root"),
                ("?", "PUNCT", 3, "punct"),
            ],
            "eng",
        )
        annotation = classify_question(sent, load_rulepack("eng"))
        assert annotation.label == 1
        assert annotation.confidence == "rule"

    def test_english_wh_content(self):
        sent = q(
            [("Who", "PRON", 2, "nsubj"), ("left", "VERB", 0, "root"),
             ("?", "PUNCT", 2, "punct")],
            "eng",
        )
        assert classify_question(sent, load_rulepack("eng")).label == 0

    def test_arabic_hal_polar(self):
        sent = q(
            [("هل", "PART", 2, "mark"), ("جاء", "VERB", 0, "root"),
             ("؟", "PUNCT", 2, "punct")],
            "ara",
        )
        annotation = classify_question(sent, load_rulepack("ara"))
        assert annotation.label == 1
        assert annotation.fired_rule == "ara_hal_polar"

    def test_finnish_ko_suffix_polar(self):
        sent = q(
            [("Tuletko", "VERB", 0, "root"), ("mukaan", "ADV", 1, "advmod"),
             ("?", "PUNCT", 1, "punct")],
            "fin",
        )
        annotation = classify_question(sent, load_rulepack("fin"))
        assert annotation.label == 1
        assert annotation.fired_rule == "fin_ko_suffix_polar"

    def test_indonesian_apakah_beats_ambiguous_apa(self):
        polar = q(
            [("Apakah", "PART", 3, "mark"), ("kamu", "PRON", 3, "nsubj"),
             ("datang", "VERB", 0, "root"), ("?", "PUNCT", 3, "punct")],
            "ind",
        )
        annotation = classify_question(polar, load_rulepack("ind"))
        assert annotation.label == 1
        assert annotation.fired_rule == "ind_apakah_polar"
        content = q(
            [("Kamu", "PRON", 2, "nsubj"), ("makan", "VERB", 0, "root"),
             ("apa", "PRON", 2, "obj"), ("?", "PUNCT", 2, "punct")],
            "ind",
        )
        assert classify_question(content, load_rulepack("ind")).label == 0

    def test_question_mark_fallback_polar(self):
        # no particle, no wh word, no auxiliary inversion
        sent = q(
            [("He", "PRON", 2, "nsubj"), ("left", "VERB", 0, "root"),
             ("?", "PUNCT", 2, "punct")],
            "eng",
        )
        annotation = classify_question(sent, load_rulepack("eng"))
        assert annotation.label == 1
        assert annotation.fired_rule == "eng_qmark_polar"

    def test_abstain_is_explicit_unlabeled(self):
        sent = q(
            [("He", "PRON", 2, "nsubj"), ("left", "VERB", 0, "root")], "eng"
        )
        annotation = classify_question(sent, load_rulepack("eng"))
        assert annotation.label is None
        assert annotation.fired_rule == "default"
        assert annotation.confidence == "default"

    def test_language_mismatch_rejected(self):
        sent = q([("x", "NOUN", 0, "root")], "eng")
        with pytest.raises(ConfigError):
            classify_question(sent, load_rulepack("fin"))

    def test_case_insensitive_matching(self):
        sent = q(
            [("WHO", "PRON", 2, "nsubj"), ("LEFT", "VERB", 0, "root"),
             ("?", "PUNCT", 2, "punct")],
            "eng",
        )
        assert classify_question(sent, load_rulepack("eng")).label == 0

    def test_regex_on_forms_kind(self):
        pack = RulePack(
            language="eng",
            rules=[
                Rule("tag_q", "regex_on_forms", "form", (r"\bor not\b",), "polar", 1)
            ],
        )
        hit = q(
            [("coming", "VERB", 0, "root"), ("or", "CCONJ", 3, "cc"),
             ("not", "PART", 1, "advmod")],
            "eng",
        )
        miss = q([("coming", "VERB", 0, "root")], "eng")
        assert classify_question(hit, pack).label == 1
        assert classify_question(miss, pack).label is None


class TestInvariants:
    def _wh_and_polar_sentences(self):
        """One sentence per language carrying both a wh word and the polar marker."""
        return {
            "eng": q([("Is", "AUX", 3, "aux"), ("who", "PRON", 3, "nsubj"),
                      ("coming", "VERB", 0, "root"), ("?", "PUNCT", 3, "punct")], "eng"),
            "ara": q([("هل", "PART", 3, "mark"), ("متى", "ADV", 3, "advmod"),
                      ("جاء", "VERB", 0, "root"), ("؟", "PUNCT", 3, "punct")], "ara"),
            "fin": q([("Tuletko", "VERB", 0, "root"), ("milloin", "ADV", 1, "advmod"),
                      ("?", "PUNCT", 1, "punct")], "fin"),
            "rus": q([("ли", "PART", 3, "mark"), ("кто", "PRON", 3, "nsubj"),
                      ("пришёл", "VERB", 0, "root"), ("?", "PUNCT", 3, "punct")], "rus"),
            "ind": q([("Apakah", "PART", 3, "mark"), ("siapa", "PRON", 3, "nsubj"),
                      ("datang", "VERB", 0, "root"), ("?", "PUNCT", 3, "punct")], "ind"),
            "jpn": q([("いつ", "ADV", 2, "advmod"), ("来ます", "VERB", 0, "root"),
                      ("か", "PART", 2, "mark"), ("？", "PUNCT", 2, "punct")], "jpn"),
            "kor": q([("누구", "PRON", 2, "nsubj"), ("옵니까", "VERB", 0, "root"),
                      ("?", "PUNCT", 2, "punct")], "kor"),
        }

    def test_content_precedence_in_every_builtin_pack(self):
        for language, sent in self._wh_and_polar_sentences().items():
            annotation = classify_question(sent, load_rulepack(language))
            assert annotation.label == 0, language

    def test_determinism(self):
        sent = q([("Is", "AUX", 2, "aux"), ("raining", "VERB", 0, "root"),
                  ("?", "PUNCT", 2, "punct")], "eng")
        pack = load_rulepack("eng")
        first = classify_question(sent, pack)
        second = classify_question(sent, pack)
        assert first == second

    def test_priority_soundness(self):
        # dropping rules below the fired one never changes the outcome
        for language, sent in self._wh_and_polar_sentences().items():
            pack = load_rulepack(language)
            annotation = classify_question(sent, pack)
            fired = next(r for r in pack.rules if r.id == annotation.fired_rule)
            trimmed = RulePack(
                language=pack.language,
                rules=[r for r in pack.rules if r.priority <= fired.priority],
                default_verdict=pack.default_verdict,
            )
            assert classify_question(sent, trimmed) == annotation

    def test_labels_always_binary_or_none(self):
        for language, sent in self._wh_and_polar_sentences().items():
            annotation = classify_question(sent, load_rulepack(language))
            assert annotation.label in (0, 1, None)


class TestAnnotateCorpus:
    def test_arabic_counts(self):
        sentences = [
            q([("هل", "PART", 2, "mark"), ("جاء", "VERB", 0, "root")], "ara", "a1"),
            q([("هل", "PART", 2, "mark"), ("ذهب", "VERB", 0, "root")], "ara", "a2"),
            q([("جاء", "VERB", 0, "root"), ("؟", "PUNCT", 1, "punct")], "ara", "a3"),
        ]
        annotated, coverage = annotate_corpus(sentences)
        assert coverage.total == 3
        assert coverage.by_rule["ara_hal_polar"] == 2
        labels = [a.label for _, a in annotated]
        assert labels == [1, 1, 1]  # third decided by the question-mark rule

    def test_empty_corpus(self):
        annotated, coverage = annotate_corpus([])
        assert annotated == []
        assert coverage.total == 0

    def test_missing_pack_names_language(self):
        sent = q([("x", "NOUN", 0, "root")], "zzz")
        with pytest.raises(ConfigError) as err:
            annotate_corpus([sent])
        assert "zzz" in str(err.value)

    def test_existing_labels_kept_without_overwrite(self):
        sent = q([("Is", "AUX", 2, "aux"), ("raining", "VERB", 0, "root"),
                  ("?", "PUNCT", 2, "punct")], "eng")
        sent.question_label = 0  # pretend gold says content
        annotate_corpus([sent])
        assert sent.question_label == 0
        annotate_corpus([sent], overwrite=True)
        assert sent.question_label == 1
