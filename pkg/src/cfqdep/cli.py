"""Command-line entry point: ``cfqdep {ingest,build,evaluate,analyze,errors}``.

Settings may come from an INI file given with ``--config``: keys of the
``[global]`` section and of the section named after the subcommand are
turned into the matching command-line options, which flags given on the
command line then override. Exit codes: 0 success, 1 data error,
2 configuration error.

Output layout for a split directory ``out/<split>/``::

    split.json  train.questions.tsv  train.spans.jsonl  ...   (ingest)
    gold.conllu  train.conllu  validation.conllu  failures.jsonl  build.json   (build)
    eval.json                                                   (evaluate)
    curves/  inventory/  summary.json                           (analyze)
    errors/                                                     (errors)
"""

import argparse
import configparser
import csv
import json
import logging
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import constructions as cx
from . import depconvert as dc
from . import diststats as ds
from . import errormodel as em
from . import grammar as gr
from . import metrics
from . import treebank as tb
from .errors import CfqDepError, ConfigurationError, DegenerateFitError

logger = logging.getLogger("cfqdep")

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2
PARTS = ("train", "validation", "test")
GOLD_FILE = {"train": "train.conllu", "validation": "validation.conllu", "test": "gold.conllu"}
_ENTITY_RE = re.compile(r"^M\d+$")


@dataclass
class PipelineConfig:
    grammar: Optional[str] = None
    lexicon: Optional[str] = None
    deprules: Optional[str] = None
    names: Optional[str] = None
    seed: int = 0
    jobs: int = 1
    strict_ambiguity: bool = False

    def validate(self):
        for key in ("grammar", "lexicon", "deprules", "names"):
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigurationError("%s file not found: %s" % (key, value))
        return self

    def pipeline(self):
        grammar = gr.load_grammar_file(self.grammar) if self.grammar else gr.default_grammar()
        pool = (dc.load_name_pool(Path(self.names).read_text(encoding="utf-8"))
                if self.names else dc.default_name_pool())
        lexicon = gr.load_lexicon_file(self.lexicon) if self.lexicon else gr.default_lexicon()
        lexicon = lexicon.extended({name: "Name" for name in pool}).check(grammar)
        rules = (dc.load_rules_file(self.deprules, grammar) if self.deprules
                 else dc.default_rules(grammar))
        return dc.Pipeline(grammar, lexicon, rules, tuple(pool), self.strict_ambiguity)


def _dump(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def _require(path, what):
    if path is None or not Path(path).exists():
        raise ConfigurationError("%s not found: %s" % (what, path))
    return Path(path)


# ---------------------------------------------------------------- ingest

def _bracket_question(text):
    """Strip ``[...]`` entity markers; return (question, token spans)."""
    tokens, spans, start = [], [], None
    for chunk in gr.tokenize(text.replace("[", " [ ").replace("]", " ] ")).tokens:
        if chunk == "[":
            start = len(tokens)
        elif chunk == "]":
            if start is None or start == len(tokens):
                raise ValueError("unbalanced entity brackets")
            spans.append((start, len(tokens)))
            start = None
        else:
            tokens.append(chunk)
    if start is not None:
        raise ValueError("unbalanced entity brackets")
    return " ".join(tokens), spans


def question_from_record(record, index):
    """Question text and entity spans from one CFQ record.

    Reads ``questionWithBrackets`` when present (bracketed entities), else
    ``questionPatternModEntities`` / ``question`` where ``M<k>`` tokens are
    the entities. A missing final ``?`` is appended.
    """
    if "questionWithBrackets" in record:
        text, spans = _bracket_question(record["questionWithBrackets"])
    else:
        for key in ("questionPatternModEntities", "question"):
            if key in record:
                text = record[key]
                break
        else:
            raise ConfigurationError("CFQ record %d has none of questionWithBrackets, "
                                     "questionPatternModEntities, question" % index)
        toks = gr.tokenize(text).tokens
        text = " ".join(toks)
        spans = [(i, i + 1) for i, t in enumerate(toks) if _ENTITY_RE.match(t)]
    toks = text.split()
    # a final "?" inside an entity span (e.g. a film title) is not the question mark
    if toks[-1] != "?" or (spans and spans[-1][1] == len(toks)):
        text += " ?"
    return dc.Question(str(index), text, tuple(spans))


def load_cfq(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        for key in ("questions", "data", "examples"):
            if key in data:
                data = data[key]
                break
    if not isinstance(data, list):
        raise ConfigurationError("CFQ file %s does not hold a list of records" % path)
    return data


def write_questions(questions, directory, part):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / ("%s.questions.tsv" % part), "w", encoding="utf-8", newline="\n") as qf, \
            open(directory / ("%s.spans.jsonl" % part), "w", encoding="utf-8", newline="\n") as sf:
        for q in questions:
            qf.write("%s\t%s\n" % (q.sent_id, q.text))
            sf.write(json.dumps({"sent_id": q.sent_id, "spans": [list(s) for s in q.entity_spans]})
                     + "\n")


def read_questions(path, spans_path=None):
    """Questions from ``sent_id<TAB>question`` lines or plain one-per-line text."""
    spans = {}
    if spans_path is not None and Path(spans_path).exists():
        for line in Path(spans_path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                spans[str(rec["sent_id"])] = tuple(tuple(s) for s in rec["spans"])
    out = []
    for k, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" in line:
            sid, text = line.split("\t", 1)
        else:
            sid, text = "s%d" % k, line
        out.append(dc.Question(sid, text.strip(), spans.get(sid, ())))
    return out


def cmd_ingest(args, config):
    records = load_cfq(_require(args.cfq, "CFQ dataset"))
    out = Path(args.out)
    divergences = dict(_parse_kv(args.divergence))
    results = {}
    for split_path in args.split:
        spec = tb.load_split(_require(split_path, "split file"), seed=config.seed)
        if spec.divergence is None and spec.name in divergences:
            spec.divergence = float(divergences[spec.name])
        train, validation = tb.resample_validation(spec.train, config.seed)
        spec.train, spec.validation = train, validation
        split_dir = out / spec.name
        for part, ids in (("train", train), ("validation", validation), ("test", spec.test)):
            questions = []
            for sid in ids:
                idx = int(sid)
                if not 0 <= idx < len(records):
                    raise ConfigurationError("split %s refers to record %d of %d"
                                             % (spec.name, idx, len(records)))
                questions.append(question_from_record(records[idx], idx))
            write_questions(questions, split_dir, part)
        _dump(spec.to_json(), split_dir / "split.json")
        results[spec.name] = {p: len(i) for p, i in
                              (("train", train), ("validation", validation), ("test", spec.test))}
        logger.info("split %s: %s", spec.name, results[spec.name])
    print(json.dumps(results, sort_keys=True))
    return EXIT_OK


def _parse_kv(items):
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError("expected NAME=VALUE, got %r" % item)
        yield key, value


# ---------------------------------------------------------------- build

def build_file(pipeline, questions, out_path, failures_path, jobs=1):
    result = dc.build_corpus(questions, pipeline, jobs=jobs)
    tb.write_conllu(tb.ConlluDocument.from_trees(result.trees), out_path)
    with open(failures_path, "a", encoding="utf-8", newline="\n") as fh:
        for f in result.failures:
            fh.write(f.to_json() + "\n")
    return result


def cmd_build(args, config):
    pipeline = config.pipeline()
    summary = {}
    if args.questions:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        failures = out.with_suffix(".failures.jsonl")
        failures.write_text("", encoding="utf-8")
        questions = read_questions(_require(args.questions, "question file"), args.spans)
        result = build_file(pipeline, questions, out, failures, config.jobs)
        summary[str(out)] = _build_summary(result, len(questions))
    else:
        split_dir = _require(args.split_dir, "split directory")
        failures = split_dir / "failures.jsonl"
        failures.write_text("", encoding="utf-8")
        for part in PARTS:
            qpath = split_dir / ("%s.questions.tsv" % part)
            if not qpath.exists():
                continue
            questions = read_questions(qpath, split_dir / ("%s.spans.jsonl" % part))
            result = build_file(pipeline, questions, split_dir / GOLD_FILE[part], failures,
                                config.jobs)
            summary[part] = _build_summary(result, len(questions))
        if not summary:
            raise ConfigurationError("no *.questions.tsv files in %s" % split_dir)
        _dump(summary, split_dir / "build.json")
    print(json.dumps(summary, sort_keys=True))
    failed = sum(s["failures"] for s in summary.values())
    return EXIT_OK if failed == 0 else EXIT_DATA


def _build_summary(result, n):
    return {"questions": n, "trees": len(result.trees), "failures": len(result.failures),
            "ambiguous": len(result.ambiguous)}


# ---------------------------------------------------------------- evaluate

def _run_key(path):
    m = re.search(r"(\d+)", path.stem)
    return (int(m.group(1)) if m else -1, path.name)


def find_runs(pred_dir):
    pred_dir = _require(pred_dir, "prediction directory")
    runs = sorted(pred_dir.glob("run*.conllu"), key=_run_key)
    if not runs:
        raise ConfigurationError("no run<k>.conllu files in %s" % pred_dir)
    return runs


def evaluate_runs(gold, run_paths, ignore_subtypes=False):
    reports = []
    for path in run_paths:
        pred = tb.read_conllu(path)
        reports.append(metrics.evaluate(gold, pred, ignore_subtypes=ignore_subtypes,
                                        label=path.stem))
    return reports, metrics.aggregate_runs(reports)


def cmd_evaluate(args, config):
    gold = tb.read_conllu(_require(args.gold, "gold file"))
    reports, agg = evaluate_runs(gold, find_runs(args.pred_dir), args.ignore_subtypes)
    out = {"runs": [r.to_json(per_sentence=args.per_sentence) for r in reports],
           "aggregate": agg.to_json()}
    if args.out:
        _dump(out, args.out)
    print(json.dumps({m: {"mean": round(agg.mean(m), 2), "sd": round(agg.sd(m), 2)}
                      for m in metrics.METRICS}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def _write_curve(path, curve, header="value"):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["complexity", header])
        for k in sorted(curve):
            writer.writerow([k, repr(float(curve[k]))])


def analyze_inventories(train_inv, test_inv, weighting="token", base=2.0, threshold=4):
    return {
        "js_distance": ds.divergence_by_complexity(test_inv, train_inv, weighting, base),
        "untrained": ds.untrained_proportion(test_inv, train_inv),
        "fewshot": ds.fewshot_proportion(test_inv, train_inv, threshold),
    }


def read_scores(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_analyze(args, config):
    out = Path(args.out)
    summary = {}
    if args.train or args.test:
        train = tb.read_conllu(_require(args.train, "train treebank"))
        test = tb.read_conllu(_require(args.test, "test treebank"))
        train_inv, test_inv = cx.inventory(train.trees), cx.inventory(test.trees)
        curves = analyze_inventories(train_inv, test_inv, args.weighting, args.log_base,
                                     args.fewshot_threshold)
        for name, curve in curves.items():
            _write_curve(out / "curves" / ("%s.csv" % name), curve)
        (out / "inventory").mkdir(parents=True, exist_ok=True)
        (out / "inventory" / "train.csv").write_text(train_inv.to_csv(), encoding="utf-8")
        (out / "inventory" / "test.csv").write_text(test_inv.to_csv(), encoding="utf-8")
        summary["sentences"] = {"train": len(train), "test": len(test)}
        summary["unique_constructions"] = {"train": train_inv.unique, "test": test_inv.unique}
        summary["inventory"] = {"train": train_inv.summary(), "test": test_inv.summary()}
        summary["curves"] = {k: {str(c): v for c, v in curve.items()} for k, curve in curves.items()}
    if args.scores:
        rows = read_scores(_require(args.scores, "score table"))
        fits = {}
        for metric in metrics.METRICS:
            if rows and metric in rows[0]:
                fit = ds.fit_divergence_regression(
                    [(float(r["divergence"]), float(r[metric])) for r in rows], metric)
                fits[metric] = fit.to_json()
        summary["regression"] = fits
    if not summary:
        raise ConfigurationError("analyze needs --train/--test and/or --scores")
    _dump(summary, out / "summary.json")
    print(json.dumps({k: v for k, v in summary.items() if k in ("sentences", "unique_constructions")},
                     sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- errors

def cmd_errors(args, config):
    gold = tb.read_conllu(_require(args.gold, "gold file"))
    runs = [tb.read_conllu(p) for p in find_runs(args.pred_dir)]
    out = Path(args.out)
    features = em.build_features(gold, runs)
    try:
        fit = em.fit_l1_logistic(features, args.reg_strength, args.split_fraction, config.seed,
                                 args.tol)
    except DegenerateFitError as exc:
        logger.warning("%s; using the intercept-only model", exc)
        fit = exc.fallback
    flagged = em.flag_constructions(fit, args.threshold)
    train_inv = None
    if args.train:
        train_inv = cx.inventory(tb.read_conllu(_require(args.train, "train treebank")).trees)
    report = em.reduced_test_report(gold, runs, flagged, train_inv)
    _dump(fit.to_json(), out / "errors" / "model.json")
    _dump(flagged, out / "errors" / "flagged.json")
    _dump(report.to_json(), out / "errors" / "removal.json")
    if args.sem_correct:
        table = em.crosstab(gold, runs, em.load_sem_correct(_require(args.sem_correct,
                                                                      "sem_correct file")))
        _dump(table.to_json(), out / "errors" / "crosstab.json")
    print(json.dumps({"flagged": flagged, "removed": report.sentences_removed}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser():
    parser = argparse.ArgumentParser(prog="cfqdep", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="INI file with [global] and per-command sections")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--strict-ambiguity", action="store_true")
    parser.add_argument("--grammar")
    parser.add_argument("--lexicon")
    parser.add_argument("--deprules")
    parser.add_argument("--names", help="anonymisation name pool, one name per line")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="split CFQ into per-split question files")
    p.add_argument("--cfq", required=True, help="CFQ dataset.json")
    p.add_argument("--split", action="append", required=True, help="split file (repeatable)")
    p.add_argument("--divergence", action="append", metavar="NAME=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", help="build gold CoNLL-U treebanks")
    p.add_argument("--split-dir", help="directory written by ingest")
    p.add_argument("--questions", help="question file (sent_id<TAB>question or raw lines)")
    p.add_argument("--spans", help="entity spans JSONL for --questions")
    p.add_argument("--out", help="output CoNLL-U for --questions")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("evaluate", help="score run<k>.conllu predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--out")
    p.add_argument("--ignore-subtypes", action="store_true")
    p.add_argument("--per-sentence", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="construction inventories and divergence curves")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--scores", help="CSV with divergence and las/clas/wsclas columns")
    p.add_argument("--weighting", choices=("token", "type"), default="token")
    p.add_argument("--log-base", type=float, default=2.0)
    p.add_argument("--fewshot-threshold", type=int, default=ds.FEWSHOT_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("errors", help="failure model, flagged constructions, removal report")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--train")
    p.add_argument("--sem-correct")
    p.add_argument("--reg-strength", type=float, default=em.DEFAULT_REG)
    p.add_argument("--threshold", type=float, default=em.FLAG_THRESHOLD)
    p.add_argument("--split-fraction", type=float, default=0.9)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_errors)
    return parser


def _config_argv(path, command, parser):
    """Translate INI sections into option tokens placed before the CLI's own."""
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path, encoding="utf-8"):
            raise ConfigurationError("cannot read config %s" % path)
    except configparser.Error as exc:
        raise ConfigurationError("bad config %s: %s" % (path, exc)) from None
    flags = {a.dest: a for a in parser._actions}
    subparsers = parser._subparsers._group_actions[0].choices
    sub_flags = {a.dest: a for a in subparsers[command]._actions} if command in subparsers else {}

    def tokens(section, actions):
        out = []
        if not cp.has_section(section):
            return out
        for key, value in cp.items(section):
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None or not action.option_strings or dest in ("help", "config"):
                raise ConfigurationError("unknown key %r in [%s]" % (key, section))
            opt = action.option_strings[-1]
            if isinstance(action, argparse._StoreTrueAction):
                if cp.getboolean(section, key):
                    out.append(opt)
            elif isinstance(action, argparse._AppendAction):
                for item in value.split():
                    out.extend([opt, item])
            else:
                out.extend([opt, value])
        return out

    return tokens("global", flags), tokens(command, sub_flags)


def _with_config(argv, parser):
    """Splice config-file options into ``argv`` ahead of the explicit ones."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    commands = parser._subparsers._group_actions[0].choices
    cmd_at = next((i for i, a in enumerate(argv) if a in commands), None)
    if cmd_at is None:
        return argv
    global_tokens, command_tokens = _config_argv(known.config, argv[cmd_at], parser)
    return global_tokens + argv[:cmd_at + 1] + command_tokens + argv[cmd_at + 1:]


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _with_config(argv, parser)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return EXIT_CONFIG if exc.code else EXIT_OK
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        config = PipelineConfig(args.grammar, args.lexicon, args.deprules, args.names,
                                args.seed, args.jobs, args.strict_ambiguity).validate()
        return args.func(args, config)
    except ConfigurationError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (CfqDepError, ValueError, KeyError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
