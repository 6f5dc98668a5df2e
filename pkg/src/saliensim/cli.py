"""Command-line entry point: ``saliensim <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .classifier import TrainingConfig, load_classifier, predict, save_classifier, train_classifier
from .corpus import (Corpus, CorpusFormatError, LabeledPair, augment_pairs, build_vocab, decode,
                     downsample_balance, encode, load_corpus, preprocess, save_corpus)
from .decoding import DecoderConfig, decode as run_decoder
from .embedding import (build_embeddings, build_profile, load_embeddings, load_profile, save_embeddings,
                        save_profile)
from .harness import (ExperimentSpec, ValidationError, compare_rates, load_report, report_render,
                      run_experiment)
from .lm import load_lm, perplexity, save_lm, train_lm
from .salience import SalienceConfig, count_ngrams, extract_salient, load_salient_sets, save_salience
from .synthetic import planted_corpus

log = logging.getLogger("saliensim")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_path(args, name):
    if args.out:
        return args.out
    if args.out_dir:
        return os.path.join(args.out_dir, name)
    raise UsageError("give --out or --out-dir")


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _require_file(path, what):
    if not os.path.isfile(path):
        raise ValidationError(f"{what} not found: {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args):
    if args.synthetic:
        corpus = planted_corpus(args.synthetic, positive_rate=args.positive_rate, seed=args.seed)
    else:
        if not args.input:
            raise UsageError("ingest needs --in or --synthetic")
        _require_file(args.input, "corpus")
        corpus = load_corpus(args.input)
        corpus = Corpus(tuple(
            LabeledPair(preprocess(p.post), preprocess(p.response), p.topic, p.source, p.label, p.annotations)
            for p in corpus))
    if args.balance:
        corpus = downsample_balance(corpus, args.seed)
    if args.augment_to:
        targets = {(t, lab): args.augment_to for t in corpus.topics() for lab in (True, False)}
        corpus = augment_pairs(corpus, targets, args.seed)
    out = _out_path(args, "corpus.jsonl")
    _ensure_parent(out)
    save_corpus(corpus, out)
    log.info("wrote %d pairs to %s", len(corpus), out)


def cmd_salience(args):
    _require_file(args.input, "corpus")
    corpus = load_corpus(args.input)
    config = SalienceConfig(tuple(args.n), args.smoothing, args.threshold)
    table = count_ngrams(corpus, config=config)
    extract_salient(table)
    out = _out_path(args, "salience.json")
    _ensure_parent(out)
    save_salience(table, out)
    log.info("salient n-grams: %s", {a: len(v) for a, v in table.salient_sets.items()})


def cmd_embed(args):
    _require_file(args.input, "corpus")
    corpus = load_corpus(args.input)
    vocab = build_vocab(corpus, args.min_count)
    table = build_embeddings(corpus, vocab, args.window, args.dim, seed=args.seed)
    out = _out_path(args, "embeddings.json")
    _ensure_parent(out)
    save_embeddings(table, out, sidecar=args.sidecar)
    if args.salience:
        _require_file(args.salience, "salience table")
        _, attrs, salient = load_salient_sets(args.salience)
        profile = build_profile(salient, table, args.attribute_a, args.attribute_b)
        profile_out = args.profile_out or os.path.join(os.path.dirname(os.path.abspath(out)), "profile.json")
        save_profile(profile, profile_out)
        log.info("profile: %d / %d n-grams -> %s", len(profile.ngrams_a), len(profile.ngrams_b), profile_out)


def cmd_train_lm(args):
    _require_file(args.input, "corpus")
    corpus = load_corpus(args.input)
    if args.topic:
        corpus = corpus.filter(lambda p: p.topic == args.topic)
    vocab = build_vocab(load_corpus(args.vocab_from) if args.vocab_from else corpus, args.min_count)
    lm = train_lm(corpus, vocab, args.order, args.discount)
    out = _out_path(args, "model.json")
    _ensure_parent(out)
    save_lm(lm, out)
    if args.eval:
        _require_file(args.eval, "evaluation corpus")
        log.info("perplexity on %s: %.4f", args.eval, perplexity(lm, load_corpus(args.eval)))


def cmd_train_classifier(args):
    _require_file(args.input, "corpus")
    corpus = load_corpus(args.input)
    config = TrainingConfig(args.epochs, args.lr, args.l2, args.seed, args.threshold, args.response_only,
                            args.dev_fraction)
    model = train_classifier(corpus, config)
    out = _out_path(args, "classifier.json")
    _ensure_parent(out)
    save_classifier(model, out)
    log.info("train %s dev %s", model.train_metrics, model.dev_metrics)


def cmd_decode(args):
    _require_file(args.model, "model")
    lm = load_lm(args.model)
    profile = embeddings = None
    if args.mode == "saliensim":
        if not args.profile or not args.embeddings:
            raise UsageError("--mode saliensim needs --profile and --embeddings")
        _require_file(args.profile, "profile")
        _require_file(args.embeddings, "embeddings")
        profile = load_profile(args.profile)
        embeddings = load_embeddings(args.embeddings)
    try:
        config = DecoderConfig(args.k, args.c, args.r, args.gamma, args.backtracks, args.max_steps, args.seed)
        config.check_vocab(lm.vocab_size)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    post = preprocess(args.post)
    x = encode(post, lm.vocab) + [lm.eos_id]
    rng = np.random.default_rng(args.seed)
    out = open(args.out, "w", encoding="utf-8", newline="\n") if args.out else sys.stdout
    try:
        for _ in range(args.num_samples):
            gen = run_decoder(lm, x, args.mode, profile, embeddings, config, rng)
            body = [t for t in gen.tokens if t != lm.eos_id]
            rec = {"post": post, "response": decode(body, lm.vocab), "mode": args.mode,
                   "seed": args.seed, "backtracks_used": gen.backtracks_used}
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_classify(args):
    _require_file(args.model, "classifier")
    _require_file(args.input, "pairs file")
    model = load_classifier(args.model)
    out = _out_path(args, "labeled.jsonl")
    _ensure_parent(out)
    with open(args.input, encoding="utf-8") as src, open(out, "w", encoding="utf-8", newline="\n") as dst:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                post, response = rec["post"], rec["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"expected an object with post and response ({exc})", line=lineno)
            prob, flag = predict(model, preprocess(post), preprocess(response))
            rec["predicted"] = {"is_positive": bool(flag), "probability": prob}
            dst.write(json.dumps(rec, ensure_ascii=False) + "\n")


def cmd_experiment(args):
    if args.config_data is None:
        raise UsageError("experiment needs --config <json file>")
    spec = ExperimentSpec.from_json(args.config_data)
    if args.seed_given:
        spec.seed = args.seed
    out_dir = args.out_dir or "experiment-out"
    report = run_experiment(spec, out_dir)
    report_render(report, "csv", os.path.join(out_dir, "rates.csv"))
    report_render(report, "svg", os.path.join(out_dir, "rates.svg"))
    for c in report.cells:
        log.info("%-8s %-8s %-10s %4d/%-4d %.3f", c.topic, c.generator, c.decoder, c.positives, c.total,
                 float(c.rate))


def cmd_report(args):
    _require_file(args.input, "report")
    report = load_report(args.input)
    if args.compare:
        base, treat = args.compare
        for (topic, gen), red in compare_rates(report, base, treat).items():
            print(f"{topic}\t{gen}\t{'n/a' if red is None else format(float(red), '.4f')}")
    if args.format:
        out = _out_path(args, f"rates.{args.format}")
        _ensure_parent(out)
        report_render(report, args.format, out)


# ---------------------------------------------------------------------------
# parser


def build_parser():
    # global flags are accepted before or after the subcommand; SUPPRESS keeps
    # the subparser from clobbering a value given at the top level
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="master RNG seed (default 0)")
    common.add_argument("--config", help="JSON file; keys provide defaults for this subcommand's options")
    common.add_argument("--out-dir", help="directory for outputs when --out is not given")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="saliensim", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="preprocess/curate a corpus into canonical JSONL")
    s.add_argument("--in", dest="input")
    s.add_argument("--out")
    s.add_argument("--synthetic", type=int, metavar="N", help="generate N planted-lexicon pairs instead")
    s.add_argument("--positive-rate", type=float, default=0.3)
    s.add_argument("--balance", action="store_true", help="downsample negatives per (topic, source)")
    s.add_argument("--augment-to", type=int, metavar="N", help="augment every (topic, label) cell to N pairs")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("salience", parents=[common], help="extract salient n-grams")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.add_argument("--n", type=int, nargs="+", default=[3, 4, 5])
    s.add_argument("--lambda", dest="smoothing", type=float, default=0.5)
    s.add_argument("--gamma", dest="threshold", type=float, default=5.5)
    s.set_defaults(func=cmd_salience)

    s = sub.add_parser("embed", parents=[common], help="build PPMI-SVD embeddings (and a constraint profile)")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--min-count", type=int, default=1)
    s.add_argument("--sidecar", action="store_true", help="store vectors in a float32 sidecar file")
    s.add_argument("--salience", help="salience.json; also writes a constraint profile")
    s.add_argument("--profile-out")
    s.add_argument("--attribute-a", default="positive")
    s.add_argument("--attribute-b", default="negative")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("train-lm", parents=[common], help="train the backoff n-gram LM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.add_argument("--order", type=int, default=3)
    s.add_argument("--discount", type=float, default=0.75)
    s.add_argument("--min-count", type=int, default=1)
    s.add_argument("--topic", help="train only on pairs of this topic")
    s.add_argument("--vocab-from", help="build the vocabulary from this corpus instead")
    s.add_argument("--eval", help="log perplexity on this corpus")
    s.set_defaults(func=cmd_train_lm)

    s = sub.add_parser("train-classifier", parents=[common], help="train the attribute classifier")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--l2", type=float, default=1e-4)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--dev-fraction", type=float, default=0.0)
    s.add_argument("--response-only", action="store_true", help="ablation: ignore the post")
    s.set_defaults(func=cmd_train_classifier)

    s = sub.add_parser("decode", parents=[common], help="generate responses to a post")
    s.add_argument("--model", required=True)
    s.add_argument("--profile")
    s.add_argument("--embeddings")
    s.add_argument("--post", required=True)
    s.add_argument("--mode", choices=("topk", "saliensim"), default="topk")
    s.add_argument("--k", type=int, default=40)
    s.add_argument("--c", type=int, default=10)
    s.add_argument("--r", type=int, default=5)
    s.add_argument("--gamma", type=float, default=0.01)
    s.add_argument("--backtracks", type=int, default=5)
    s.add_argument("--max-steps", type=int, default=30)
    s.add_argument("--num-samples", type=int, default=1)
    s.add_argument("--out", help="JSONL output (default stdout)")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("classify", parents=[common], help="label (post, response) records")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("experiment", parents=[common], help="run a full rate experiment from --config")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], help="render or compare a rate report")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=("csv", "svg", "json"))
    s.add_argument("--out")
    s.add_argument("--compare", nargs=2, metavar=("BASELINE", "TREATMENT"))
    s.set_defaults(func=cmd_report)
    return p


def _apply_config(args, argv):
    args.config_data = None
    if not args.config:
        return
    try:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {args.config} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    args.config_data = data
    if args.command == "experiment":
        return
    # config values fill options the user did not pass explicitly
    given = {tok.split("=")[0].lstrip("-").replace("-", "_") for tok in argv if tok.startswith("--")}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and dest not in given and dest not in ("command", "func", "config"):
            setattr(args, dest, value)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code
    for name, default in (("seed", None), ("config", None), ("out_dir", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_config(args, argv)
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = 0
        args.func(args)
    except UsageError as exc:
        print(f"saliensim {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, CorpusFormatError, FileNotFoundError) as exc:
        print(f"saliensim {args.command}: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"saliensim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
