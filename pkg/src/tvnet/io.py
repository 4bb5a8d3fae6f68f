"""Readers and writers for corpus, character, networks and beliefs files.

Formats
-------
corpus (JSON lines)
    ``{"film_id", "speaker_id", "addressee_id", "text"}`` per line, with an
    optional integer ``turn``; file order is used when it is absent.
characters (tab-separated, header row)
    ``film_id  character_id  first_name  last_name``; either name may be
    empty but not both.
networks (JSON)
    ``{"format": "tvnet-networks/1", "vocab": [...], "networks": [...]}``;
    each network has ``id``, ``nodes``, ``edges`` (``[i, j]`` pairs in node
    order), sparse ``x_fwd``/``x_bwd`` rows as ``[[index, count], ...]`` and
    ``tokens`` rows as ``[[direction, index], ...]`` in line order.
beliefs (JSON)
    ``{"format": "tvnet-beliefs/1", "labels": [...], "networks": [{"id",
    "edges": [[i, j, [q_0, q_1, ...]], ...]}]}``.
"""

import csv
import json

import numpy as np

from .address import CharacterRecord, DialogueLine, tokenize
from .errors import CorpusError
from .estep import EdgeBeliefs
from .graph import Network

NETWORKS_FORMAT = "tvnet-networks/1"
BELIEFS_FORMAT = "tvnet-beliefs/1"
CORPUS_FIELDS = ("film_id", "speaker_id", "addressee_id", "text")
CHARACTER_FIELDS = ("film_id", "character_id", "first_name", "last_name")


def read_corpus(path):
    lines = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON record ({exc.msg})", "E_MALFORMED") from None
            if not isinstance(rec, dict) or any(k not in rec for k in CORPUS_FIELDS):
                raise CorpusError(f"{path}:{lineno}: record needs fields {', '.join(CORPUS_FIELDS)}", "E_MALFORMED")
            tokens = tokenize(str(rec["text"]))
            if not tokens:
                raise CorpusError(f"{path}:{lineno}: empty text", "E_MALFORMED")
            if str(rec["speaker_id"]) == str(rec["addressee_id"]):
                raise CorpusError(f"{path}:{lineno}: speaker and addressee are the same", "E_MALFORMED")
            turn = rec.get("turn", lineno)
            lines.append(DialogueLine(str(rec["film_id"]), str(rec["speaker_id"]), str(rec["addressee_id"]),
                                      tokens, int(turn)))
    if not lines:
        raise CorpusError("no dialogue lines", "E_NO_LINES")
    return lines


def write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_characters(path):
    out = []
    seen = set()
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header[:4]) != CHARACTER_FIELDS:
            raise CorpusError(f"{path}:1: header must be {' '.join(CHARACTER_FIELDS)}", "E_MALFORMED")
        for lineno, row in enumerate(reader, 2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) < 4:
                row = row + [""] * (4 - len(row))
            film, cid, first, last = (cell.strip() for cell in row[:4])
            if not film or not cid:
                raise CorpusError(f"{path}:{lineno}: missing film_id or character_id", "E_MALFORMED")
            if (film, cid) in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate character record {cid!r} in film {film!r}",
                                  "E_DUP_CHAR")
            seen.add((film, cid))
            try:
                out.append(CharacterRecord(film, cid, first, last))
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}", "E_MALFORMED") from None
    return out


def write_characters(path, records):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(CHARACTER_FIELDS)
        for r in records:
            w.writerow([r.network_id, r.character_id, r.first_name or "", r.last_name or ""])


def _sparse(row):
    nz = np.flatnonzero(row)
    return [[int(k), int(row[k])] for k in nz]


def _dense(pairs, size):
    out = np.zeros(size, dtype=np.int64)
    for k, v in pairs:
        out[int(k)] = int(v)
    return out


def networks_to_dict(vocab, networks):
    docs = []
    for net in networks:
        doc = {
            "id": net.network_id,
            "nodes": list(net.nodes),
            "edges": [list(e) for e in net.edges],
            "x_fwd": [_sparse(r) for r in net.x_fwd],
            "x_bwd": [_sparse(r) for r in net.x_bwd],
        }
        if net.tokens is not None:
            doc["tokens"] = [[list(t) for t in seq] for seq in net.tokens]
        docs.append(doc)
    return {"format": NETWORKS_FORMAT, "vocab": list(vocab), "networks": docs}


def networks_from_dict(doc):
    if doc.get("format") != NETWORKS_FORMAT:
        raise CorpusError(f"unsupported networks format {doc.get('format')!r}", "E_FORMAT")
    vocab = list(doc["vocab"])
    nets = []
    for d in doc["networks"]:
        size = len(vocab)
        n_edges = len(d["edges"])
        x_fwd = np.array([_dense(r, size) for r in d["x_fwd"]], dtype=np.int64).reshape(n_edges, size)
        x_bwd = np.array([_dense(r, size) for r in d["x_bwd"]], dtype=np.int64).reshape(n_edges, size)
        nets.append(Network(d["id"], tuple(d["nodes"]), tuple(tuple(e) for e in d["edges"]),
                            x_fwd, x_bwd, d.get("tokens")))
    return vocab, nets


def dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n")


def load_json(path):
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})", "E_FORMAT") from None


def write_networks(path, vocab, networks):
    dump_json(path, networks_to_dict(vocab, networks))


def read_networks(path):
    return networks_from_dict(load_json(path))


def beliefs_to_dict(beliefs, labelset):
    return {
        "format": BELIEFS_FORMAT,
        "labels": list(labelset.labels),
        "networks": [
            {"id": b.network_id, "edges": [[i, j, [float(v) for v in q]] for (i, j), q in zip(b.edges, b.q)]}
            for b in beliefs
        ],
    }


def beliefs_from_dict(doc):
    if doc.get("format") != BELIEFS_FORMAT:
        raise CorpusError(f"unsupported beliefs format {doc.get('format')!r}", "E_FORMAT")
    out = []
    for d in doc["networks"]:
        edges = tuple((e[0], e[1]) for e in d["edges"])
        q = np.array([e[2] for e in d["edges"]], dtype=float).reshape(len(edges), len(doc["labels"]))
        out.append(EdgeBeliefs(d["id"], edges, q))
    return doc["labels"], out
