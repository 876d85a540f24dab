import json

import pytest

from toim.corpus import POS_TAGS, Message, Token, build_graph, build_vocabulary


def toks(text: str) -> tuple[Token, ...]:
    """``"phone:noun is good:adj"`` -> tokens; untagged words are ``other``."""
    out = []
    for i, item in enumerate(text.split()):
        word, _, tag = item.partition(":")
        out.append(Token(word, POS_TAGS[tag or "other"], i))
    return tuple(out)


def msg(mid, user, text, parent=None, root=None, ts=0, kind=None):
    if kind is None:
        kind = "post" if parent is None else "reply"
    if parent is not None and root is None:
        root = parent
    return Message(mid, user, kind, parent, root, ts, toks(text))


LEXICON = {"good": 1, "great": 1, "cheap": 1, "bad": -1, "short": -1, "awful": -1}


def graph_of(messages, followers=None, lexicon=LEXICON):
    g = build_graph(messages, followers)
    return g, build_vocabulary(g, lexicon)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def lexicon_file(tmp_path):
    p = tmp_path / "lexicon.tsv"
    p.write_text("".join(f"{w}\t{'+1' if o > 0 else '-1'}\n" for w, o in LEXICON.items()))
    return p


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
