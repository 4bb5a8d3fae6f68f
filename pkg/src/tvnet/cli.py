"""Command-line entry point.

Every subcommand writes a run manifest (``<output>.manifest.json``, or
``manifest.json`` inside an output directory) holding the argument vector,
resolved configuration, input and output hashes and timestamps.
``tvnet replay MANIFEST`` reruns it.  Errors print one line of the form
``error[CODE]: message`` on stderr and exit with status 2.
"""

import argparse
import datetime as _dt
import hashlib
import logging
import os
import sys
from itertools import permutations

import numpy as np

from . import __version__
from .address import CharacterRecord, IngestStats, bootstrap_lexicon, build_content_vectors, load_lexicon, \
    write_lexicon_file
from .errors import CorpusError, TvnetError
from .io import beliefs_from_dict, beliefs_to_dict, dump_json, load_json, read_characters, read_corpus, \
    read_networks, write_characters, write_corpus, write_networks
from .labels import BINARY
from .mstep import STREAM_SIM, EmConfig, NceConfig, run_em
from .oracle import SyntheticSpec, generate_corpus
from .params import ContentParams, Model, StructParams, TyingScheme, dumps_model, file_sha256, load_model, \
    permute_labels, seed_permutation
from .report import ABLATIONS, SplitSpec, ablation_grid, export_signed_network, rank_terms, \
    report_triad_weights, split_films, triad_bar_chart

log = logging.getLogger("tvnet")

MANIFEST_FORMAT = "tvnet-manifest/1"
TRUTH_FORMAT = "tvnet-truth/1"


class CliError(TvnetError):
    pass


# Manifest -----------------------------------------------------------------


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _hashes(paths):
    return {p: file_sha256(p) for p in paths if p and os.path.isfile(p)}


def write_manifest(path, args, argv, inputs, outputs, started):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    doc = {
        "format": MANIFEST_FORMAT,
        "subcommand": args.command,
        "argv": list(argv),
        "config": config,
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "inputs": _hashes(inputs),
        "outputs": _hashes(outputs),
        "started": started,
        "finished": _now(),
    }
    dump_json(path, doc)
    return path


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def _ensure_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)


# ingest -------------------------------------------------------------------


def cmd_ingest(args):
    lines = read_corpus(args.corpus)
    characters = read_characters(args.characters)
    lexicon = load_lexicon(args.titles, args.placeholders)
    stats = IngestStats()
    vocab, networks = build_content_vectors(lines, characters, lexicon, args.min_count, stats)
    if stats.skipped_unknown:
        log.warning("skipped %d line(s) with unknown speaker or addressee ids", stats.skipped_unknown)
    if not networks:
        raise CorpusError("no dialogue lines with known speaker and addressee", "E_NO_LINES")
    write_networks(args.out, vocab, networks)
    print(f"{len(networks)} network(s), {sum(len(n.edges) for n in networks)} edge(s), "
          f"{len(vocab)} symbol(s), {stats.spans} address span(s)")
    return [args.corpus, args.characters, args.titles, args.placeholders], [args.out], args.out


# train --------------------------------------------------------------------


def _em_config(args):
    ablate = set(args.ablate or ())
    return EmConfig(
        labelset=BINARY,
        tying=TyingScheme(args.tying),
        alpha=args.alpha,
        max_iter=args.max_iter,
        tol=args.tol,
        restarts=args.restarts,
        nce=NceConfig(noise_per_true=args.noise_per_true, l2=args.l2),
        freeze_eta="mutual-friends" in ablate,
        freeze_beta="triads" in ablate,
        threads=args.threads,
    )


def _anchor(result, vocab, labelset):
    """Relabel a fit so the cluster carrying the formal seed terms is V."""
    perm = seed_permutation(result.content, vocab, labelset)
    content, struct = permute_labels(result.content, result.struct, perm, labelset)
    beliefs = [type(b)(b.network_id, b.edges, b.q[:, perm]) for b in result.beliefs]
    return content, struct, beliefs


def _read_truth(path):
    doc = load_json(path)
    if doc.get("format") != TRUTH_FORMAT:
        raise CorpusError(f"unsupported truth format {doc.get('format')!r}", "E_FORMAT")
    return doc


def truth_accuracy(beliefs, truth, labelset):
    """Anchored and best-permutation accuracy of belief argmax against truth labels."""
    pred, gold = [], []
    for b in beliefs:
        labels = {(i, j): lab for i, j, lab in truth["networks"].get(b.network_id, [])}
        for (i, j), y in zip(b.edges, b.argmax()):
            if (i, j) in labels:
                pred.append(y)
                gold.append(labelset.index(labels[(i, j)]))
    if not gold:
        raise CorpusError("truth file shares no edges with the networks", "E_TRUTH")
    pred, gold = np.array(pred), np.array(gold)
    anchored = float(np.mean(pred == gold))
    best = max(float(np.mean(np.array(p)[pred] == gold)) for p in permutations(range(len(labelset))))
    return {"edges": int(gold.size), "anchored_accuracy": anchored, "best_permutation_accuracy": best}


def cmd_train(args):
    vocab, networks = read_networks(args.networks)
    config = _em_config(args)
    result = run_em(networks, config, args.seed)
    labelset = config.labelset
    content, struct, beliefs = _anchor(result, vocab, labelset)
    model = Model(vocab, labelset, config.tying, content, struct, args.seed,
                  {"restart": result.restart, "bound": result.bound,
                   "restart_bounds": list(result.restart_bounds)})
    _ensure_dir(args.out_dir)
    model_path = os.path.join(args.out_dir, "model.json")
    beliefs_path = os.path.join(args.out_dir, "beliefs.json")
    trace_path = os.path.join(args.out_dir, "trace.tsv")
    _write_text(model_path, dumps_model(model))
    dump_json(beliefs_path, beliefs_to_dict(beliefs, labelset))
    _write_text(trace_path, result.trace.to_tsv(include_time=args.trace_time))
    outputs = [model_path, beliefs_path, trace_path]
    print(f"restart {result.restart} won with bound {result.bound:.6f}")
    if args.truth:
        acc = truth_accuracy(beliefs, _read_truth(args.truth), labelset)
        acc_path = os.path.join(args.out_dir, "accuracy.json")
        dump_json(acc_path, acc)
        outputs.append(acc_path)
        print(f"accuracy {acc['best_permutation_accuracy']:.4f} over {acc['edges']} edge(s) "
              f"(anchored {acc['anchored_accuracy']:.4f})")
    return [args.networks, args.truth], outputs, os.path.join(args.out_dir, "manifest.json")


# eval ---------------------------------------------------------------------


def cmd_eval(args):
    vocab, networks = read_networks(args.networks)
    config = _em_config(args)
    split = SplitSpec(args.holdout_frac, args.split_frac, args.seed)
    train, heldout = split_films(networks, split)
    names = [n.strip() for n in args.ablations.split(",") if n.strip()]
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise CliError(f"unknown ablation(s): {', '.join(unknown)}", "E_ARGS")
    report, models = ablation_grid(train, heldout, config, args.seed, split, names)
    hashes = []
    for name in names:
        res = models[name]
        text = dumps_model(Model(vocab, config.labelset, config.tying, res.content, res.struct, args.seed))
        hashes.append(f"{name}={hashlib.sha256(text.encode('utf-8')).hexdigest()}")
    report.model_hash = " ".join(hashes)
    _write_text(args.out, report.to_tsv())
    for r in report.rows:
        print(f"{r.name}\t{r.total_ll:.6f}\t{r.per_dyad_mean:.6f}")
    return [args.networks], [args.out], args.out


# rank / weights -----------------------------------------------------------


def cmd_rank(args):
    model = load_model(args.model)
    ranking = rank_terms(model.content, model.vocab, args.top, model.labelset)
    text = ranking.to_tsv(file_sha256(args.model))
    _write_text(args.out, text)
    sys.stdout.write(text)
    return [args.model], [args.out], args.out


def cmd_weights(args):
    model = load_model(args.model)
    text = report_triad_weights(model.struct, model.labelset, file_sha256(args.model))
    _write_text(args.out, text)
    outputs = [args.out]
    if args.chart:
        _write_text(args.chart, triad_bar_chart(model.struct, model.labelset))
        outputs.append(args.chart)
    sys.stdout.write(text)
    return [args.model], outputs, args.out


# export -------------------------------------------------------------------


def cmd_export(args):
    model_hash = file_sha256(args.model) if args.model else ""
    _, networks = read_networks(args.networks)
    labels, beliefs = beliefs_from_dict(load_json(args.beliefs))
    labelset = BINARY if tuple(labels) == BINARY.labels else type(BINARY)(tuple(labels))
    by_id = {b.network_id: b for b in beliefs}
    names = {}
    if args.characters:
        for c in read_characters(args.characters):
            names[(c.network_id, c.character_id)] = " ".join(p for p in (c.first_name, c.last_name) if p)
    wanted = set(args.film or [])
    _ensure_dir(args.out_dir)
    outputs = []
    for net in networks:
        if wanted and net.network_id not in wanted:
            continue
        b = by_id.get(net.network_id)
        if b is None or tuple(b.edges) != tuple(net.edges):
            raise CorpusError(f"beliefs do not match network {net.network_id!r}", "E_MISMATCH")
        node_names = {n: names[(net.network_id, n)] for n in net.nodes if (net.network_id, n) in names}
        path = os.path.join(args.out_dir, f"{net.network_id}.dot")
        _write_text(path, export_signed_network(net, b, args.threshold, labelset, node_names, model_hash))
        outputs.append(path)
    missing = wanted - {n.network_id for n in networks}
    if missing:
        raise CorpusError(f"unknown film id(s): {', '.join(sorted(missing))}", "E_MISMATCH")
    print(f"wrote {len(outputs)} DOT file(s) to {args.out_dir}")
    return [args.networks, args.beliefs, args.model, args.characters], outputs, \
        os.path.join(args.out_dir, "manifest.json")


# lexicon ------------------------------------------------------------------


def _review(candidates, accept_all, stream_in, stream_out):
    kept = []
    for c in candidates:
        if accept_all:
            kept.append(c.term)
            continue
        stream_out.write(f"{c.term}\tn={c.n}\tk={c.k}\tp={c.p_value:.3g}  keep? [y/N/q] ")
        stream_out.flush()
        answer = stream_in.readline()
        if not answer:
            break
        answer = answer.strip().lower()
        if answer == "q":
            break
        if answer in ("y", "yes"):
            kept.append(c.term)
    return kept


def cmd_lexicon(args):
    lines = read_corpus(args.corpus)
    characters = read_characters(args.characters)
    candidates = bootstrap_lexicon(lines, characters, args.mode, args.baseline, args.alpha)
    if not candidates:
        log.warning("no term passed the binomial test at alpha=%g", args.alpha)
    kept = _review(candidates, args.yes, sys.stdin, sys.stderr)
    write_lexicon_file(args.out, kept, args.mode, provenance="bootstrapped")
    print(f"kept {len(kept)} of {len(candidates)} candidate(s)")
    return [args.corpus, args.characters], [args.out], args.out


# simulate -----------------------------------------------------------------

# Symbols used by simulated corpora; the first half leans informal.
SIM_SYMBOLS = {
    "T": ("firstName", "placeholder:dude", "placeholder:man", "placeholder:baby", "placeholder:buddy"),
    "V": ("title+name:mr", "title+name:mrs", "lastName", "placeholder:sir", "placeholder:madam"),
}
_FIRST = ("Ada", "Bram", "Cato", "Dov", "Elke", "Fenn", "Gil", "Hedy", "Ivo", "Juno", "Kael", "Lorn", "Mika",
          "Nell", "Orin", "Pia", "Quill", "Rhea", "Soren", "Tove", "Ulla", "Vero", "Wren", "Xeno", "Yara", "Zev")
_LAST = ("Abernat", "Brask", "Corvell", "Dunmore", "Esterly", "Falkner", "Grove", "Holm", "Ingram", "Jessup",
         "Kerrow", "Lindqvist", "Marwood", "Norcott", "Osgood", "Pellam", "Quarry", "Rudd", "Stenhouse", "Thorne",
         "Upshaw", "Vance", "Whitlock", "Yarrow", "Zeller", "Ashby")


def _sim_name(table, k):
    base = table[k % len(table)]
    return base if k < len(table) else f"{base}{k // len(table)}"


def render_address(symbol, character):
    """Dialogue text whose only address span is ``symbol`` aimed at ``character``."""
    if symbol == "firstName":
        return f"Listen , {character.first_name} ."
    if symbol == "lastName":
        return f"Listen , {character.last_name} ."
    if symbol == "fullName":
        return f"Listen , {character.first_name} {character.last_name} ."
    kind, term = symbol.split(":", 1)
    if kind == "title+name":
        return f"Listen , {term.capitalize()}. {character.last_name} ."
    return f"Listen , {term} ."


def sim_content(purity):
    vocab = SIM_SYMBOLS["T"] + SIM_SYMBOLS["V"]
    half = len(SIM_SYMBOLS["T"])
    rows = []
    for own in (slice(0, half), slice(half, None)):
        row = np.full(len(vocab), (1 - purity) / half)
        row[own] = purity / half
        rows.append(row / row.sum())
    theta = np.array(rows)
    return vocab, ContentParams(theta, theta.copy())


def cmd_simulate(args):
    if not 0.5 <= args.purity < 1:
        raise CliError("--purity must lie in [0.5, 1)", "E_ARGS")
    vocab, content = sim_content(args.purity)
    # binary order: ttt, ttv, tvv, vvv; re-gauged so vvv = 0
    beta = np.array([args.beta_hom, args.beta_het, args.beta_het, args.beta_hom]) - args.beta_hom
    struct = StructParams([[args.eta_aa, 0.0]], beta, 0.0)
    spec = SyntheticSpec(args.films, args.nodes, struct, content, n_edges=args.edges,
                         tokens_mean=args.tokens_mean, seed=[args.seed, STREAM_SIM],
                         vocab=vocab)
    sims = generate_corpus(spec)
    records, characters, truth = [], [], {}
    for sim in sims:
        net = sim.network
        film = net.network_id
        chars = {}
        for k, node in enumerate(net.nodes):
            chars[node] = CharacterRecord(film, node, _sim_name(_FIRST, k), _sim_name(_LAST, k))
            characters.append(chars[node])
        turn = 0
        for e, (i, j) in enumerate(net.edges):
            # one unaddressed line keeps dyads with no address tokens in the network
            records.append({"film_id": film, "speaker_id": i, "addressee_id": j, "text": "Okay .", "turn": turn})
            turn += 1
            for d, w in net.tokens[e]:
                speaker, addressee = (i, j) if d == 0 else (j, i)
                records.append({"film_id": film, "speaker_id": speaker, "addressee_id": addressee,
                                "text": render_address(vocab[w], chars[addressee]), "turn": turn})
                turn += 1
        truth[film] = [[i, j, BINARY.labels[y]] for (i, j), y in zip(net.edges, sim.labels)]
    _ensure_dir(args.out_dir)
    corpus_path = os.path.join(args.out_dir, "corpus.jsonl")
    chars_path = os.path.join(args.out_dir, "characters.tsv")
    truth_path = os.path.join(args.out_dir, "truth.json")
    write_corpus(corpus_path, records)
    write_characters(chars_path, characters)
    dump_json(truth_path, {"format": TRUTH_FORMAT, "labels": list(BINARY.labels), "networks": truth})
    print(f"wrote {len(sims)} film(s), {len(records)} line(s) to {args.out_dir}")
    return [], [corpus_path, chars_path, truth_path], os.path.join(args.out_dir, "manifest.json")


# replay -------------------------------------------------------------------


def cmd_replay(args):
    doc = load_json(args.manifest)
    if doc.get("format") != MANIFEST_FORMAT:
        raise CliError(f"{args.manifest}: not a run manifest", "E_FORMAT")
    for path, digest in doc.get("inputs", {}).items():
        if not os.path.isfile(path) or file_sha256(path) != digest:
            raise CliError(f"input {path} changed since the recorded run", "E_REPLAY_INPUT")
    status = main(doc["argv"])
    if status:
        return None
    mismatched = [p for p, digest in doc.get("outputs", {}).items()
                  if not os.path.isfile(p) or file_sha256(p) != digest]
    if args.check and mismatched:
        raise CliError(f"replayed output differs: {', '.join(mismatched)}", "E_REPLAY_MISMATCH")
    print("replay reproduced all outputs" if not mismatched else f"{len(mismatched)} output(s) differ")
    return None


# parser -------------------------------------------------------------------


def _train_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--alpha", type=float, default=0.1, help="additive smoothing for theta")
    p.add_argument("--l2", type=float, default=NceConfig().l2, help="L2 penalty on free eta/beta in NCE")
    p.add_argument("--noise-per-true", type=int, default=1)
    p.add_argument("--ablate", action="append", choices=("mutual-friends", "triads"))
    p.add_argument("--tying", choices=("symmetric", "directed"), default="symmetric")
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="tvnet", description="Unsupervised T/V signed network induction.")
    parser.add_argument("--version", action="version", version=f"tvnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build content vectors from dialogue")
    p.add_argument("corpus")
    p.add_argument("characters")
    p.add_argument("--titles")
    p.add_argument("--placeholders")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit the model by EM")
    p.add_argument("networks")
    _train_flags(p)
    p.add_argument("--truth", help="truth labels from simulate; writes accuracy.json")
    p.add_argument("--trace-time", action="store_true",
                   help="add a wall-time column to trace.tsv (breaks byte-identical replays)")
    p.add_argument("-o", "--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out likelihood for each ablation")
    p.add_argument("networks")
    _train_flags(p)
    p.add_argument("--holdout-frac", type=float, default=0.1)
    p.add_argument("--split-frac", type=float, default=0.5)
    p.add_argument("--ablations", default=",".join(ABLATIONS))
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rank", help="most cluster-specific terms")
    p.add_argument("model")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("weights", help="triad and dyad weight table")
    p.add_argument("model")
    p.add_argument("--chart", help="also write a bar-chart JSON here")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("export", help="signed networks as DOT")
    p.add_argument("networks")
    p.add_argument("beliefs")
    p.add_argument("--model", help="model file whose hash is stamped into the output")
    p.add_argument("--characters", help="use character names as node labels")
    p.add_argument("--film", action="append")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("-o", "--out-dir", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("lexicon", help="bootstrap a lexicon by binomial test")
    p.add_argument("corpus")
    p.add_argument("characters")
    p.add_argument("--mode", choices=("titles", "placeholders"), default="titles")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--baseline", type=float, help="chance rate; default is the corpus-wide rate")
    p.add_argument("--yes", action="store_true", help="accept every candidate without prompting")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_lexicon)

    p = sub.add_parser("simulate", help="write a synthetic corpus with known labels")
    p.add_argument("--films", type=int, default=200)
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--edges", type=int, default=20)
    p.add_argument("--tokens-mean", type=float, default=20.0)
    p.add_argument("--beta-hom", type=float, default=1.0)
    p.add_argument("--beta-het", type=float, default=-1.0)
    p.add_argument("--eta-aa", type=float, default=0.0, help="Adamic-Adar weight on T edges")
    p.add_argument("--purity", type=float, default=0.9, help="theta mass on a cluster's own symbols")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="rerun a manifest")
    p.add_argument("manifest")
    p.add_argument("--check", action="store_true", help="fail unless outputs are byte-identical")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    started = _now()
    try:
        out = args.func(args)
        if out is not None:
            inputs, outputs, primary = out
            manifest = primary if primary.endswith("manifest.json") else primary + ".manifest.json"
            write_manifest(manifest, args, argv, inputs, outputs, started)
    except TvnetError as exc:
        print(f"error[{exc.code}]: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[E_IO]: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error[E_VALUE]: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
