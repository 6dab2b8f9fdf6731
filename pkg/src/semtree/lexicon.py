"""Word lexicons and weak preterminal annotation.

The built-in functional lexicon covers negators, irrealis blockers, and
priority modifiers.  Sentiment and stopword lexicons are supplied by the
user as plain files; all lookups are case-insensitive on lowercased,
pre-tokenized forms.  Annotations drive the weakly-supervised preterminal
objective: a token found in the merged lexicon gets its label, everything
else is left untagged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

PRETERMINAL_NAMES = ("N", "P", "O", "D", "I", "+", "-")

BUILTIN_FUNCTIONAL = "builtin-functional"
USER_SENTIMENT = "user-sentiment"
USER_STOPWORD = "user-stopword"

# Precedence when several sources mention the same word (highest first).
_PRECEDENCE = {BUILTIN_FUNCTIONAL: 0, USER_SENTIMENT: 1, USER_STOPWORD: 2}


class LexiconFormatError(ValueError):
    pass


_RISERS = ["but", "however", "yet", "whereas", "still"]
_REDUCERS = ["although", "though", "despite", "regardless",
             "nevertheless", "nonetheless"]
_BLOCKERS = ["could", "should", "would", "ought", "supposed", "if"]
_NEGATORS = [
    "no", "not", "n't", "neither", "nor", "never", "none", "lack",
    "without", "cannot", "aint", "arent", "barely", "cant", "couldnt",
    "didnt", "doesnt", "dont", "hardly", "havent", "few", "isnt",
    "merely", "nothing", "nobody", "shouldnt", "wasnt", "werent",
    "wont", "wouldnt",
]


@dataclass
class Lexicon:
    """word -> preterminal label name, with per-entry source tags."""

    entries: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, word, label, source):
        word = word.lower()
        if label not in PRETERMINAL_NAMES:
            raise LexiconFormatError(
                f"label {label!r} is not preterminal-eligible")
        old = self.provenance.get(word)
        if old is not None and _PRECEDENCE[old] <= _PRECEDENCE[source]:
            return
        self.entries[word] = label
        self.provenance[word] = source

    def lookup(self, word):
        return self.entries.get(word.lower())

    def merged_with(self, other: "Lexicon") -> "Lexicon":
        out = Lexicon(dict(self.entries), dict(self.provenance))
        for w, lab in other.entries.items():
            out.add(w, lab, other.provenance[w])
        return out

    def words_for(self, label):
        return sorted(w for w, lab in self.entries.items() if lab == label)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word.lower() in self.entries


def builtin_functional() -> Lexicon:
    """The built-in functional lexicon (risers, reducers, blockers, negators)."""
    lex = Lexicon()
    for words, label in ((_RISERS, "+"), (_REDUCERS, "-"),
                         (_BLOCKERS, "I"), (_NEGATORS, "D")):
        for w in words:
            lex.add(w, label, BUILTIN_FUNCTIONAL)
    return lex


def load_lexicon_file(path, provenance=USER_SENTIMENT) -> Lexicon:
    """Load a TSV lexicon: one ``word<TAB>label`` per line, # comments.

    Duplicate words within the file keep the first occurrence (a warning
    is logged); a malformed line or non-preterminal label is an error.
    """
    lex = Lexicon()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise LexiconFormatError(
                    f"{path}: line {lineno}: expected 'word<TAB>label', "
                    f"got {line!r}")
            word, label = parts[0].strip().lower(), parts[1].strip()
            if label not in PRETERMINAL_NAMES:
                raise LexiconFormatError(
                    f"{path}: line {lineno}: label {label!r} is not a "
                    f"preterminal")
            if word in lex.entries:
                log.warning("%s: line %d: duplicate word %r ignored",
                            path, lineno, word)
                continue
            lex.add(word, label, provenance)
    return lex


def load_stopwords(path) -> Lexicon:
    """Load a plain one-word-per-line stopword list; every word maps to O."""
    lex = Lexicon()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            word = raw.strip()
            if not word or word.startswith("#"):
                continue
            if "\t" in word or " " in word:
                raise LexiconFormatError(
                    f"{path}: line {lineno}: expected a single word")
            if word.lower() in lex.entries:
                log.warning("%s: line %d: duplicate word %r ignored",
                            path, lineno, word)
                continue
            lex.add(word, "O", USER_STOPWORD)
    return lex


@dataclass(frozen=True)
class Annotation:
    """Weak preterminal tags for one sentence: position -> label name."""

    labels: dict  # position -> preterminal label name

    @property
    def positions(self):
        return frozenset(self.labels)

    def __len__(self):
        return len(self.labels)

    def __bool__(self):
        return bool(self.labels)


def annotate(lex: Lexicon, tokens) -> Annotation:
    """Tag each token found in the lexicon; others stay untagged."""
    labels = {}
    for i, tok in enumerate(tokens):
        lab = lex.lookup(tok)
        if lab is not None:
            labels[i] = lab
    return Annotation(labels)
