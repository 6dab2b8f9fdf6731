"""Semantic labels, composition rules, and the built-in grammars.

A grammar is a CFG written "upward": rules map child labels to a parent
label (``B C -> A`` for binary composition, ``B -> A`` for the unary layer
sitting directly above the words).  Terminal rules (word -> preterminal)
are implicit: any word may attach to any preterminal-eligible label, and
the scorer decides how plausible each attachment is.

The built-in sentiment composition grammar ("scg") has 11 labels and 62
non-terminal rules: 51 binary (7 polarity propagation, 4 negation, 36
conflict resolution, 4 irrealis blocking) and 11 preterminal-unary rules.
The built-in "glue" grammar is the free baseline over {P, N, O}.
"""

from __future__ import annotations

from dataclasses import dataclass, field


SENTIMENTAL = "sentimental"
FUNCTIONAL = "functional"

BINARY = "binary"
UNARY = "unary"

# Label names whose polarity carries a priority mark; they never appear as
# preterminals (a single word cannot have priority).
PRIORITIZED = ("N+", "P+", "N-", "P-")


class GrammarError(ValueError):
    """Malformed grammar definition or unknown label/rule reference."""


@dataclass(frozen=True)
class SemanticLabel:
    id: int
    name: str
    kind: str  # SENTIMENTAL or FUNCTIONAL
    preterminal: bool = False
    root: bool = False

    def __repr__(self):
        return f"SemanticLabel({self.name!r})"


@dataclass(frozen=True)
class Rule:
    """A composition rule with a dense id unique within its grammar.

    ``canonical`` marks the orientation a rule was declared in; the mirror
    added by symmetric closure carries ``canonical=False``.  Parsing treats
    both orientations identically, but the synthetic-tree sampler and the
    static lexicon scorer distinguish them.
    """

    id: int
    kind: str  # BINARY or UNARY
    parent: int
    left: int  # for UNARY this is the child (preterminal) label
    right: int = -1
    canonical: bool = True

    @property
    def child(self) -> int:
        return self.left

    def signature(self):
        if self.kind == BINARY:
            return (BINARY, self.left, self.right, self.parent)
        return (UNARY, self.left, self.parent)


class Grammar:
    """Immutable rule inventory with O(1) lookup by child pair.

    Both orientations of every commutative binary rule are materialized,
    so the chart inner loop never has to test a swapped pair.
    """

    def __init__(self, name, labels, binary_specs, unary_specs, roots,
                 symmetric_closure=True):
        """Build a grammar from label and rule declarations.

        binary_specs: iterable of (left_name, right_name, parent_name)
        unary_specs: iterable of (child_name, parent_name)
        roots: iterable of root-eligible label names
        """
        self.name = name
        self.labels = tuple(labels)
        self._by_name = {lab.name: lab for lab in self.labels}
        if len(self._by_name) != len(self.labels):
            raise GrammarError("duplicate label names")
        root_set = set(roots)
        for r in root_set:
            if r not in self._by_name:
                raise GrammarError(f"root label {r!r} not declared")
        self.root_ids = tuple(sorted(self._by_name[r].id for r in root_set))

        triples = []  # (left, right, parent, canonical)
        seen = set()
        for left, right, parent in binary_specs:
            b, c, a = (self._require(left).id, self._require(right).id,
                       self._require(parent).id)
            if (b, c, a) in seen:
                raise GrammarError(
                    f"duplicate binary rule {left} {right} -> {parent}")
            seen.add((b, c, a))
            triples.append((b, c, a, True))
        if symmetric_closure:
            for b, c, a, _ in list(triples):
                if b != c and (c, b, a) not in seen:
                    seen.add((c, b, a))
                    triples.append((c, b, a, False))

        upairs = []
        useen = set()
        for child, parent in unary_specs:
            b, a = self._require(child).id, self._require(parent).id
            if (b, a) in useen:
                raise GrammarError(f"duplicate unary rule {child} -> {parent}")
            if not self.labels[b].preterminal:
                raise GrammarError(
                    f"unary rule child {child} is not preterminal-eligible")
            useen.add((b, a))
            upairs.append((b, a))

        # Dense ids in a canonical order so serialized models reproduce:
        # binary sorted by (parent, left, right), then unary by
        # (parent, child), continuing the same id sequence.
        triples.sort(key=lambda t: (t[2], t[0], t[1]))
        upairs.sort(key=lambda t: (t[1], t[0]))
        rules = []
        for b, c, a, canon in triples:
            rules.append(Rule(id=len(rules), kind=BINARY, parent=a,
                              left=b, right=c, canonical=canon))
        self.n_binary = len(rules)
        for b, a in upairs:
            rules.append(Rule(id=len(rules), kind=UNARY, parent=a, left=b))
        self.rules = tuple(rules)
        self.binary_rules = self.rules[:self.n_binary]
        self.unary_rules = self.rules[self.n_binary:]
        self.n_unary = len(self.unary_rules)

        self._binary_by_children = {}
        self._binary_by_sig = {}
        for r in self.binary_rules:
            self._binary_by_children.setdefault((r.left, r.right), []).append(r)
            self._binary_by_sig[(r.left, r.right, r.parent)] = r
        self._unary_by_sig = {(r.left, r.parent): r for r in self.unary_rules}
        self._binary_by_parent = {}
        for r in self.binary_rules:
            self._binary_by_parent.setdefault(r.parent, []).append(r)
        self._unary_by_parent = {}
        for r in self.unary_rules:
            self._unary_by_parent.setdefault(r.parent, []).append(r)

        self.preterminal_ids = tuple(
            lab.id for lab in self.labels if lab.preterminal)

    # -- lookups ---------------------------------------------------------

    def _require(self, name) -> SemanticLabel:
        try:
            return self._by_name[name]
        except KeyError:
            raise GrammarError(f"unknown label {name!r}") from None

    def label(self, name) -> SemanticLabel:
        return self._require(name)

    def label_name(self, label_id) -> str:
        return self.labels[label_id].name

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def lookup_binary(self, left, right):
        """All binary rules with the given ordered child pair.

        ``left``/``right`` may be label names or SemanticLabel objects.
        Returns a (possibly empty) tuple of Rule.
        """
        b = self._resolve(left)
        c = self._resolve(right)
        return tuple(self._binary_by_children.get((b, c), ()))

    def lookup_unary(self, child):
        b = self._resolve(child)
        return tuple(r for r in self.unary_rules if r.left == b)

    def binary_rule(self, left, right, parent) -> Rule:
        key = (self._resolve(left), self._resolve(right), self._resolve(parent))
        try:
            return self._binary_by_sig[key]
        except KeyError:
            raise GrammarError(f"no binary rule {left} {right} -> {parent}") from None

    def unary_rule(self, child, parent) -> Rule:
        key = (self._resolve(child), self._resolve(parent))
        try:
            return self._unary_by_sig[key]
        except KeyError:
            raise GrammarError(f"no unary rule {child} -> {parent}") from None

    def rules_producing(self, parent):
        a = self._resolve(parent)
        return (tuple(self._binary_by_parent.get(a, ())),
                tuple(self._unary_by_parent.get(a, ())))

    def _resolve(self, label) -> int:
        if isinstance(label, SemanticLabel):
            label = label.name
        if isinstance(label, str):
            return self._require(label).id
        if isinstance(label, int):
            if not 0 <= label < len(self.labels):
                raise GrammarError(f"label id {label} out of range")
            return label
        raise GrammarError(f"cannot resolve label {label!r}")

    # -- equality --------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Grammar):
            return NotImplemented
        return (
            [(l.name, l.kind, l.preterminal, l.root) for l in self.labels]
            == [(l.name, l.kind, l.preterminal, l.root) for l in other.labels]
            and self.root_ids == other.root_ids
            and [(r.signature(), r.canonical) for r in self.rules]
            == [(r.signature(), r.canonical) for r in other.rules]
        )

    def __repr__(self):
        return (f"Grammar({self.name!r}, {self.n_labels} labels, "
                f"{self.n_binary} binary + {self.n_unary} unary rules)")


# ---------------------------------------------------------------------------
# Built-in grammars
# ---------------------------------------------------------------------------

_SCG_LABELS = [
    # (name, kind, preterminal)
    ("N", SENTIMENTAL, True),
    ("P", SENTIMENTAL, True),
    ("O", SENTIMENTAL, True),
    ("D", FUNCTIONAL, True),   # negator
    ("I", FUNCTIONAL, True),   # irrealis blocker
    ("+", FUNCTIONAL, True),   # priority riser
    ("-", FUNCTIONAL, True),   # priority reducer
    ("N+", FUNCTIONAL, False),
    ("P+", FUNCTIONAL, False),
    ("N-", FUNCTIONAL, False),
    ("P-", FUNCTIONAL, False),
]

# Canonical orientations; the symmetric closure supplies the mirrors.
# 27 generators, of which 3 are order-symmetric, so the closed set has
# 27 + 24 = 51 binary rules.
_SCG_BINARY = [
    # polarity propagation (sentiment first)
    ("P", "O", "P"), ("N", "O", "N"),
    ("P", "P", "P"), ("N", "N", "N"), ("O", "O", "O"),
    # negation (negator first)
    ("D", "P", "N"), ("D", "N", "P"),
    # priority modification (modifier first)
    ("+", "P", "P+"), ("+", "N", "N+"),
    ("-", "P", "P-"), ("-", "N", "N-"),
    # idempotent re-modification
    ("+", "P+", "P+"), ("+", "N+", "N+"),
    ("-", "P-", "P-"), ("-", "N-", "N-"),
    # neutral propagation for prioritized labels
    ("P+", "O", "P+"), ("N+", "O", "N+"),
    ("P-", "O", "P-"), ("N-", "O", "N-"),
    # conflict resolution (the higher-priority side, written second, wins)
    ("N", "P+", "P"), ("N-", "P+", "P"), ("N-", "P", "P"),
    ("P", "N+", "N"), ("P-", "N+", "N"), ("P-", "N", "N"),
    # irrealis blocking (blocker first)
    ("I", "P", "O"), ("I", "N", "O"),
]

_SCG_UNARY = (
    [(a, a) for a in ("N", "P", "O", "D", "I", "+", "-")]
    # the cancellation layer: a misrecognized function word may be demoted
    # to neutral instead of acting
    + [("D", "O"), ("I", "O"), ("+", "O"), ("-", "O")]
)


def builtin_scg() -> Grammar:
    """The built-in sentiment composition grammar (62 rules, 11 labels)."""
    labels = [SemanticLabel(i, n, k, preterminal=p, root=n in ("P", "N"))
              for i, (n, k, p) in enumerate(_SCG_LABELS)]
    return Grammar("scg", labels, _SCG_BINARY, _SCG_UNARY, roots=("P", "N"))


def builtin_glue() -> Grammar:
    """The free baseline grammar: every B C -> A over {P, N, O}."""
    names = ("N", "P", "O")
    labels = [SemanticLabel(i, n, SENTIMENTAL, preterminal=True,
                            root=n in ("P", "N"))
              for i, n in enumerate(names)]
    # declare the unordered half; closure mirrors it to all 27
    binary = [(b, c, a) for a in names for b in names for c in names if b <= c]
    unary = [(n, n) for n in names]
    return Grammar("glue", labels, binary, unary, roots=("P", "N"))


def get_grammar(name_or_path) -> Grammar:
    """Resolve "scg"/"glue" to the built-ins, anything else as a file path."""
    if name_or_path == "scg":
        return builtin_scg()
    if name_or_path == "glue":
        return builtin_glue()
    with open(name_or_path, encoding="utf-8") as f:
        return parse_grammar(f.read(), name=str(name_or_path))


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------
#
#   # comment
#   label <name> <sentimental|functional> [preterminal] [root]
#   rule <L> <R> -> <P>
#   unary <B> -> <A>
#   @no-symmetric-closure
#
# Symmetric closure of binary rules is on unless the directive disables it.


def parse_grammar(text: str, name: str = "custom") -> Grammar:
    labels = []
    binary = []
    unary = []
    roots = []
    closure = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "@no-symmetric-closure":
            closure = False
            continue
        parts = line.split()
        try:
            if parts[0] == "label":
                _parse_label_line(parts, labels, roots, lineno)
            elif parts[0] == "rule":
                if len(parts) != 5 or parts[3] != "->":
                    raise GrammarError("expected 'rule L R -> P'")
                binary.append((parts[1], parts[2], parts[4]))
            elif parts[0] == "unary":
                if len(parts) != 4 or parts[2] != "->":
                    raise GrammarError("expected 'unary B -> A'")
                unary.append((parts[1], parts[3]))
            else:
                raise GrammarError(f"unknown declaration {parts[0]!r}")
        except GrammarError as e:
            raise GrammarError(f"line {lineno}: {e}") from None
    try:
        return Grammar(name, labels, binary, unary, roots,
                       symmetric_closure=closure)
    except GrammarError as e:
        raise GrammarError(f"{name}: {e}") from None


def _parse_label_line(parts, labels, roots, lineno):
    if len(parts) < 3:
        raise GrammarError("expected 'label NAME KIND [preterminal] [root]'")
    lname, kind = parts[1], parts[2]
    if kind not in (SENTIMENTAL, FUNCTIONAL):
        raise GrammarError(f"unknown label kind {kind!r}")
    flags = set(parts[3:])
    bad = flags - {"preterminal", "root"}
    if bad:
        raise GrammarError(f"unknown label flag {sorted(bad)[0]!r}")
    pret = "preterminal" in flags
    if pret and lname in PRIORITIZED:
        raise GrammarError(
            f"prioritized label {lname!r} cannot be preterminal-eligible")
    if "root" in flags:
        roots.append(lname)
    labels.append(SemanticLabel(len(labels), lname, kind,
                                preterminal=pret, root="root" in flags))


def serialize_grammar(g: Grammar) -> str:
    """Emit the text form; round-trips through parse_grammar.

    When the closure of the canonical rules reproduces the full binary set,
    only canonical orientations are written and closure is left on;
    otherwise every rule is written under @no-symmetric-closure.
    """
    canon = [r for r in g.binary_rules if r.canonical]
    closed = {(r.left, r.right, r.parent) for r in canon}
    closed |= {(c, b, a) for (b, c, a) in closed}
    full = {(r.left, r.right, r.parent) for r in g.binary_rules}
    use_closure = closed == full

    lines = []
    for lab in g.labels:
        flags = (" preterminal" if lab.preterminal else "") + \
                (" root" if lab.root else "")
        lines.append(f"label {lab.name} {lab.kind}{flags}")
    if not use_closure:
        lines.append("@no-symmetric-closure")
    emit = canon if use_closure else g.binary_rules
    for r in emit:
        lines.append(f"rule {g.label_name(r.left)} {g.label_name(r.right)} "
                     f"-> {g.label_name(r.parent)}")
    for r in g.unary_rules:
        lines.append(f"unary {g.label_name(r.left)} -> {g.label_name(r.parent)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def validate(g: Grammar) -> list[str]:
    """Static diagnostics; an empty list means the grammar looks usable.

    Checks top-down reachability from the roots, bottom-up derivability
    from the (implicit) terminal rules, and that every unary rule sits on
    a preterminal-eligible child.
    """
    diags = []

    reachable = set(g.root_ids)
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            if r.parent in reachable:
                kids = {r.left} if r.kind == UNARY else {r.left, r.right}
                if not kids <= reachable:
                    reachable |= kids
                    changed = True
    for lab in g.labels:
        if lab.id not in reachable:
            diags.append(f"label {lab.name} unreachable from any root")

    derivable = set(g.preterminal_ids)
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            if r.parent in derivable:
                continue
            ok = (r.left in derivable if r.kind == UNARY
                  else r.left in derivable and r.right in derivable)
            if ok:
                derivable.add(r.parent)
                changed = True
    for lab in g.labels:
        if lab.id not in derivable:
            diags.append(f"label {lab.name} not derivable from any terminal")
    if not any(y in derivable for y in g.root_ids):
        diags.append("no root-reachable derivation exists")

    for r in g.unary_rules:
        if not g.labels[r.left].preterminal:
            diags.append(
                f"unary rule {g.label_name(r.left)} -> "
                f"{g.label_name(r.parent)} has a non-preterminal child "
                f"(second-layer placement violated)")
    return diags
