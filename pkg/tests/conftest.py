"""Shared fixtures: hand-built dependency sentences used across test modules.

Also collects results of tests marked @pytest.mark.criterion(...) and prints
one PASS/FAIL line per acceptance criterion at the end of the session.
"""

import pytest

from qprobe.corpus import DepSentence, Token

_criterion_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker:
        _criterion_outcomes[marker.args[0]] = report.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed in _criterion_outcomes.items():
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")


def make_sentence(rows, language="eng", sent_id="s1", text=None, label=None):
    """rows: (form, upos, head, deprel) tuples, indices assigned 1..n."""
    tokens = [
        Token(index=i, form=form, lemma=form.lower(), upos=upos, head=head, deprel=deprel)
        for i, (form, upos, head, deprel) in enumerate(rows, start=1)
    ]
    sentence = DepSentence(
        id=sent_id,
        language=language,
        text=text or " ".join(form for form, *_ in rows),
        tokens=tokens,
        question_label=label,
    )
    sentence.validate()
    return sentence


@pytest.fixture
def worked_example_sentence():
    """8-token question satisfying all five worked metric examples at once.

    Non-punct N = 7; content words NOUN+ADV+VERB = 3 so density is 3/7.
    Link lengths 3+2+2+1+1+3 = 12 over 6 links giving 2.0; deepest token
    sits at depth 2; the single verb has 3 qualifying dependents (AUX and
    punctuation excluded); no subordinate clauses.
    """
    return make_sentence(
        [
            ("Who", "PRON", 4, "nsubj"),      # |1-4| = 3
            ("did", "AUX", 4, "aux"),         # |2-4| = 2
            ("the", "DET", 5, "det"),         # |3-5| = 2
            ("say", "VERB", 0, "root"),       # root
            ("boy", "NOUN", 4, "obj"),        # |5-4| = 1
            ("at", "ADP", 7, "case"),         # |6-7| = 1
            ("home", "ADV", 4, "advmod"),     # |7-4| = 3
            ("?", "PUNCT", 4, "punct"),       # excluded everywhere
        ]
    )
