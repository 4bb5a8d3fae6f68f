"""Address-term detection in dialogue and construction of content vectors.

Spans are found by a deterministic pattern tagger keyed on the addressee's
names and the title/placeholder lexicons:

* runs of tokens matching the addressee's full, first or last name;
* a title directly before such a run (``Mr. Lebowski``);
* a lone title or placeholder in vocative position, i.e. with punctuation
  or a turn boundary on both sides (``calm , dude .``).
"""

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.stats import binom

from .errors import CorpusError
from .graph import Network

ABBREVIATIONS = frozenset({"mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "rev", "capt", "col",
                           "sgt", "lt", "gen", "gov", "sen", "rep", "fr", "hon"})
_TOKEN = re.compile(r"[^\W_]+(?:[-'’][^\W_]+)*|'[^\W_]+|\S")
_CLITIC = re.compile(r"^(.+?)('(?:s|m|re|ve|ll|d))$", re.I)

NAME_ROLES = ("fullName", "firstName", "lastName")


def tokenize(text):
    """Split on whitespace and punctuation, keeping punctuation as tokens.

    Abbreviation periods stay attached (``Mr.``) and clitics split off
    (``you're`` -> ``you 're``).
    """
    out = []
    matches = list(_TOKEN.finditer(text))
    skip = False
    for k, m in enumerate(matches):
        if skip:
            skip = False
            continue
        tok = m.group(0)
        nxt = matches[k + 1] if k + 1 < len(matches) else None
        if (nxt is not None and nxt.group(0) == "." and nxt.start() == m.end()
                and tok.casefold() in ABBREVIATIONS):
            out.append(tok + ".")
            skip = True
            continue
        c = _CLITIC.match(tok)
        if c and c.group(1).isalpha():
            out.extend([c.group(1), c.group(2)])
        else:
            out.append(tok)
    return out


def norm(token):
    return token.casefold().strip(".")


def is_punct(token):
    return not any(ch.isalnum() for ch in token)


@dataclass(frozen=True)
class DialogueLine:
    network_id: str
    speaker_id: str
    addressee_id: str
    tokens: tuple
    turn: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.speaker_id == self.addressee_id:
            raise CorpusError(f"line {self.turn} in {self.network_id}: speaker addresses themself")
        if not self.tokens:
            raise CorpusError(f"line {self.turn} in {self.network_id}: no tokens")

    @classmethod
    def from_text(cls, network_id, speaker_id, addressee_id, text, turn=0):
        return cls(network_id, speaker_id, addressee_id, tokenize(text), turn)


@dataclass(frozen=True)
class CharacterRecord:
    network_id: str
    character_id: str
    first_name: str = None
    last_name: str = None

    def __post_init__(self):
        first = (self.first_name or "").strip() or None
        last = (self.last_name or "").strip() or None
        object.__setattr__(self, "first_name", first)
        object.__setattr__(self, "last_name", last)
        if first is None and last is None:
            raise CorpusError(f"character {self.character_id} in {self.network_id} has no name")

    @property
    def first_key(self):
        return tuple(norm(t) for t in tokenize(self.first_name)) if self.first_name else ()

    @property
    def last_key(self):
        return tuple(norm(t) for t in tokenize(self.last_name)) if self.last_name else ()

    def name_patterns(self):
        """(role, folded token tuple) pairs, longest first."""
        pats = []
        if self.first_key and self.last_key:
            pats.append(("fullName", self.first_key + self.last_key))
        if self.first_key:
            pats.append(("firstName", self.first_key))
        if self.last_key:
            pats.append(("lastName", self.last_key))
        return sorted(pats, key=lambda p: -len(p[1]))


@dataclass(frozen=True)
class Lexicon:
    titles: frozenset
    placeholders: frozenset
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        titles = frozenset(norm(t) for t in self.titles)
        placeholders = frozenset(norm(t) for t in self.placeholders)
        if "" in titles or "" in placeholders:
            raise ValueError("lexicon terms must be nonempty")
        object.__setattr__(self, "titles", titles)
        object.__setattr__(self, "placeholders", placeholders)

    @property
    def shared(self):
        """Terms listed both as titles and as placeholders (legal, flagged)."""
        return self.titles & self.placeholders


def read_lexicon_file(path_or_text, from_text=False):
    """Terms and provenance tag of a one-term-per-line lexicon file."""
    if from_text:
        text = path_or_text
    else:
        with open(path_or_text, encoding="utf-8") as f:
            text = f.read()
    terms, provenance = [], "curated"
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("#"):
            m = re.match(r"#\s*provenance:\s*(\S+)", line)
            if m:
                provenance = m.group(1)
            continue
        if line:
            terms.append(line.casefold())
    return terms, provenance


def write_lexicon_file(path, terms, kind, provenance="curated"):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {kind}: address-term lexicon\n# provenance: {provenance}\n")
        for t in sorted(set(terms)):
            f.write(t + "\n")


def load_lexicon(titles_path=None, placeholders_path=None):
    """Lexicon from files; either side falls back to the bundled curated list."""
    parts = {}
    prov = {}
    for kind, path in (("titles", titles_path), ("placeholders", placeholders_path)):
        if path is None:
            text = resources.files("tvnet.data").joinpath(f"{kind}.txt").read_text(encoding="utf-8")
            terms, tag = read_lexicon_file(text, from_text=True)
        else:
            terms, tag = read_lexicon_file(path)
        parts[kind] = terms
        prov.update({t: tag for t in terms})
    return Lexicon(frozenset(parts["titles"]), frozenset(parts["placeholders"]), prov)


def default_lexicon():
    return load_lexicon()


@dataclass(frozen=True)
class AddressSpan:
    network_id: str
    turn: int
    start: int  # inclusive
    end: int  # exclusive
    tags: tuple
    category: str  # name | title+name | title-alone | placeholder
    symbol: str

    def __len__(self):
        return self.end - self.start


def span_tags(length):
    if length == 1:
        return ("U-ADDR",)
    return ("B-ADDR",) + ("I-ADDR",) * (length - 2) + ("L-ADDR",)


def line_tags(n_tokens, spans):
    tags = ["O"] * n_tokens
    for s in spans:
        tags[s.start : s.end] = s.tags
    return tags


def valid_bilou(tags):
    """I/L only continue an open B/I; U and O close any open span."""
    open_span = False
    for t in tags:
        head = t.split("-")[0]
        if head in ("I", "L"):
            if not open_span:
                return False
            open_span = head == "I"
        elif head == "B":
            if open_span:
                return False
            open_span = True
        elif head in ("U", "O"):
            if open_span:
                return False
        else:
            return False
    return not open_span


def _vocative(tokens, p):
    left = p == 0 or is_punct(tokens[p - 1])
    right = p == len(tokens) - 1 or is_punct(tokens[p + 1])
    return left and right


def _match_name(folded, p, patterns):
    for role, pat in patterns:
        if tuple(folded[p : p + len(pat)]) == pat:
            return role, len(pat)
    return None


def detect_address_spans(line, addressee, lexicon):
    """Address spans of one line toward ``addressee`` (a CharacterRecord)."""
    tokens = line.tokens
    folded = [norm(t) for t in tokens]
    patterns = addressee.name_patterns() if addressee is not None else []
    spans = []
    p = 0
    last_end = 0
    while p < len(tokens):
        hit = _match_name(folded, p, patterns) if not is_punct(tokens[p]) else None
        if hit:
            role, n = hit
            start, category, symbol = p, "name", role
            if p - 1 >= last_end and folded[p - 1] in lexicon.titles:
                start, category, symbol = p - 1, "title+name", f"title+name:{folded[p - 1]}"
            spans.append(AddressSpan(line.network_id, line.turn, start, p + n, span_tags(p + n - start),
                                     category, symbol))
            p += n
            last_end = p
            continue
        w = folded[p]
        if (w in lexicon.titles or w in lexicon.placeholders) and _vocative(tokens, p):
            if w in lexicon.titles:
                category, symbol = "title-alone", f"title:{w}"
            else:
                category, symbol = "placeholder", f"placeholder:{w}"
            spans.append(AddressSpan(line.network_id, line.turn, p, p + 1, ("U-ADDR",), category, symbol))
            last_end = p + 1
        p += 1
    return spans


# Lexicon bootstrapping ----------------------------------------------------


def binomial_tail(k, n, p):
    """P(K >= k) for K ~ Binomial(n, p)."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    return float(binom.sf(k - 1, n, p))


@dataclass(frozen=True)
class Candidate:
    term: str
    n: int
    k: int
    p_value: float


def _character_index(characters):
    index = {}
    for c in characters:
        key = (c.network_id, c.character_id)
        if key in index:
            raise CorpusError(f"duplicate character record {c.character_id} in {c.network_id}", "E_DUP_CHAR")
        index[key] = c
    return index


def candidate_counts(lines, characters, mode="titles"):
    """Per-term (occurrences, address-labeled occurrences).

    ``titles``: an occurrence is address-labeled when the next tokens spell
    the addressee's name, i.e. the word would begin a B-ADDR span.
    ``placeholders``: an occurrence is address-labeled when it sits alone in
    vocative position (a U-ADDR slot).  Tokens that are part of the
    addressee's own name are skipped.
    """
    if mode not in ("titles", "placeholders"):
        raise ValueError("mode must be 'titles' or 'placeholders'")
    chars = _character_index(characters)
    n = Counter()
    k = Counter()
    for line in lines:
        addressee = chars.get((line.network_id, line.addressee_id))
        if addressee is None:
            continue
        patterns = addressee.name_patterns()
        name_parts = {t for _, pat in patterns for t in pat}
        folded = [norm(t) for t in line.tokens]
        for p, tok in enumerate(line.tokens):
            if is_punct(tok) or folded[p] in name_parts:
                continue
            w = folded[p]
            n[w] += 1
            if mode == "titles":
                labeled = p + 1 < len(folded) and _match_name(folded, p + 1, patterns) is not None
            else:
                labeled = _vocative(line.tokens, p)
            k[w] += int(labeled)
    return n, k


def bootstrap_lexicon(lines, characters, mode="titles", baseline_rate=None, alpha=0.01):
    """Terms address-labeled significantly more often than chance.

    One-sided exact binomial test per term against ``baseline_rate``
    (default: the corpus-wide labeled fraction).  Returns candidates with
    p < alpha sorted by p-value, then term.
    """
    n, k = candidate_counts(lines, characters, mode)
    total_n = sum(n.values())
    if baseline_rate is None:
        baseline_rate = sum(k.values()) / total_n if total_n else 0.0
    out = []
    for term in n:
        if n[term] == 0:
            continue
        p = binomial_tail(k[term], n[term], baseline_rate)
        if p < alpha:
            out.append(Candidate(term, n[term], k[term], p))
    return sorted(out, key=lambda c: (c.p_value, c.term))


# Content vectors ----------------------------------------------------------


@dataclass
class IngestStats:
    lines: int = 0
    skipped_unknown: int = 0
    spans: int = 0


def build_content_vectors(lines, characters, lexicon, min_count=1, stats=None):
    """Role-normalized address-token counts per dyad.

    Returns (vocabulary, list of Network).  Names become ``firstName``,
    ``lastName`` or ``fullName``; titles and placeholders keep their term
    (``title+name:mr``, ``title:sir``, ``placeholder:dude``).  Counts from
    speaker i to addressee j land in ``x_fwd`` of edge (i, j) when i comes
    first in node order, otherwise in ``x_bwd``.  Every dyad that exchanged
    a line becomes an edge, even with no address tokens.
    """
    stats = stats if stats is not None else IngestStats()
    chars = _character_index(characters)
    dyad_tokens = defaultdict(lambda: defaultdict(list))
    films = []
    ordered = sorted(enumerate(lines), key=lambda kl: (kl[1].network_id, kl[1].turn, kl[0]))
    for _, line in ordered:
        speaker = chars.get((line.network_id, line.speaker_id))
        addressee = chars.get((line.network_id, line.addressee_id))
        if speaker is None or addressee is None:
            stats.skipped_unknown += 1
            continue
        stats.lines += 1
        if line.network_id not in films:
            films.append(line.network_id)
        a, b = line.speaker_id, line.addressee_id
        key = (a, b) if a < b else (b, a)
        direction = 0 if a < b else 1
        seq = dyad_tokens[line.network_id][key]
        for span in detect_address_spans(line, addressee, lexicon):
            seq.append((direction, span.symbol))
            stats.spans += 1

    counts = Counter(sym for film in dyad_tokens.values() for seq in film.values() for _, sym in seq)
    vocab = sorted(sym for sym, c in counts.items() if c >= min_count)
    index = {sym: w for w, sym in enumerate(vocab)}
    networks = []
    for film in sorted(films):
        dyads, tokens = {}, {}
        for key, seq in dyad_tokens[film].items():
            kept = [(d, index[s]) for d, s in seq if s in index]
            x = np.zeros((2, len(vocab)), dtype=np.int64)
            for d, w in kept:
                x[d, w] += 1
            dyads[key] = (x[0], x[1])
            tokens[key] = kept
        networks.append(Network.from_dyads(film, dyads, len(vocab), tokens=tokens))
    return vocab, networks
