"""Command-line pipeline: synth, ingest, train, propagate, predict, eval, export.

All commands read one JSON config (``--config``); flags override its keys.
Every output embeds the seed and a short hash of the effective config.
Exit status: 0 success, 1 validation error, 2 any other failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .corpus import build_graph, build_vocabulary, export_graph, ingest_messages, load_lexicon, read_messages
from .errors import ValidationError
from .gibbs import GibbsConfig
from .influence import OAIWeights
from .model import Model, infer_topic, load_model, predict_items, save_model, train_majority
from .opinion import CoETable, build_corpus_stats, load_coe, message_polarity, resolve_all
from .predict import HistoryBaseline, PredictionConfig, evaluate, opinion_timeseries, write_timeseries_csv
from .propagation import PropagationConfig, refine_ledger, write_field_csv
from .synth import SynthSpec, read_gold, synth_generate, write_corpus
from .training import train

logger = logging.getLogger("toim")

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "paths": {"out": "out"},
    "gibbs": {"K": 2, "alpha": None, "gibbs_beta": 0.01, "iterations": 50},
    "train": {"strategy": "interleaved", "min_sd": 0.0, "smoothing": 0.0},
    "oai": {"a": 0.6, "b": 0.3, "c": 0.1, "lam": 1.0},
    "propagation": {"mode": "conservative", "decay_beta": 0.5, "steps": 2},
    "prediction": {"w": 0.5, "iterations": 100, "use_refined": False, "require_known_neighbor": True},
    "synth": {},
}


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file {path} does not exist")
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(user, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    overrides = {
        "seed": ("seed",), "workers": ("workers",), "topics": ("gibbs", "K"), "iterations": ("gibbs", "iterations"),
        "mode": ("propagation", "mode"), "t": ("propagation", "steps"), "beta": ("propagation", "decay_beta"),
        "w": ("prediction", "w"), "out": ("paths", "out"),
    }
    for flag, keys in overrides.items():
        val = getattr(args, flag, None)
        if val is not None:
            target = cfg
            for key in keys[:-1]:
                target = target[key]
            target[keys[-1]] = val
    if getattr(args, "refined", False):
        cfg["prediction"]["use_refined"] = True
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:12]


def header(cfg: dict) -> str:
    return f"toim seed={cfg['seed']} config={config_hash(cfg)}"


def meta(cfg: dict) -> dict:
    return {"seed": cfg["seed"], "config_hash": config_hash(cfg)}


def need(cfg: dict, *keys: str):
    """Look up a nested key, raising a named error when it is missing."""
    cur = cfg
    for n, key in enumerate(keys):
        if not isinstance(cur, dict) or cur.get(key) is None:
            raise ValidationError(f"missing config key {'.'.join(keys[: n + 1])!r}")
        cur = cur[key]
    return cur


def input_path(cfg: dict, key: str) -> Path:
    path = Path(need(cfg, "paths", key))
    if not path.exists():
        raise ValidationError(f"paths.{key}: {path} does not exist")
    return path


def section(cls, cfg: dict, name: str, **extra):
    """Instantiate a config dataclass, naming the section on bad keys."""
    try:
        return cls(**cfg[name], **extra)
    except TypeError as exc:
        raise ValidationError(f"config section {name!r}: {exc}") from None


def out_dir(cfg: dict) -> Path:
    out = Path(cfg["paths"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def model_path(cfg: dict, must_exist: bool = False) -> Path:
    path = Path(cfg["paths"].get("model") or Path(cfg["paths"]["out"]) / "model.json")
    if must_exist and not path.exists():
        raise ValidationError(f"model file {path} does not exist")
    return path


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(cfg: dict) -> None:
    spec = SynthSpec.from_json(cfg["synth"])  # rejects unknown keys
    corpus = synth_generate(spec, cfg["seed"])
    paths = write_corpus(corpus, out_dir(cfg), header(cfg))
    logger.info("synth: %d train, %d test messages -> %s", len(corpus.train), len(corpus.test), paths["train"].parent)


def cmd_ingest(cfg: dict) -> None:
    graph, vocab = ingest_messages(input_path(cfg, "train"), input_path(cfg, "lexicon"))
    out = out_dir(cfg)
    export_graph(graph, out / "graph.jsonl", header=header(cfg))
    summary = dict(graph.summary(), nouns=vocab.N, opinion_words=vocab.A, meta=meta(cfg))
    _write_json(out / "summary.json", summary)


def _load_coe(cfg: dict) -> CoETable:
    if cfg["paths"].get("coe") is None:
        return CoETable()
    return load_coe(input_path(cfg, "coe"))


def cmd_train(cfg: dict) -> None:
    gibbs = section(GibbsConfig, cfg, "gibbs", seed=cfg["seed"])
    weights = section(OAIWeights, cfg, "oai")
    graph, vocab = ingest_messages(input_path(cfg, "train"), input_path(cfg, "lexicon"))
    coe = _load_coe(cfg)
    stats = build_corpus_stats(graph, vocab)
    tc = cfg["train"]
    result = train(graph, vocab, stats, coe, gibbs, weights, min_sd=tc["min_sd"], smoothing=tc["smoothing"],
                   strategy=tc["strategy"], workers=cfg["workers"])
    model = Model(vocab, stats, result.topics, result.influence, train_majority(result.opinions), cfg, meta(cfg))
    out_dir(cfg)
    save_model(model_path(cfg), model)


def cmd_propagate(cfg: dict) -> None:
    model = load_model(model_path(cfg, must_exist=True))
    pc = section(PropagationConfig, cfg, "propagation")
    refined, fields = refine_ledger(model.influence, pc)
    out = out_dir(cfg)
    write_field_csv(out / "field.csv", fields, model.user_ids, pc, header(cfg))
    model.influence = refined
    model.meta = meta(cfg)
    save_model(out / "model_refined.json", model)


def _prediction_model(cfg: dict, pc: PredictionConfig) -> Model:
    if pc.use_refined:
        path = Path(cfg["paths"].get("refined_model") or Path(cfg["paths"]["out"]) / "model_refined.json")
    else:
        path = model_path(cfg)
    if not path.exists():
        raise ValidationError(f"model file {path} does not exist")
    return load_model(path)


def cmd_predict(cfg: dict) -> None:
    pc = section(PredictionConfig, cfg, "prediction", seed=cfg["seed"])
    model = _prediction_model(cfg, pc)
    test, _ = read_messages(input_path(cfg, "test"))
    gold = read_gold(input_path(cfg, "gold"))
    results = predict_items(model, test, gold, pc)
    out = out_dir(cfg)
    with (out / "predictions.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {header(cfg)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "topic", "object", "predicted", "gold", "swo", "support", "abstained"])
        for r in results:
            swo = repr(r.toim.swo) if r.toim else "0.0"
            support = r.toim.support if r.toim else 0
            writer.writerow([r.user, r.topic, r.object, r.predicted, r.gold, swo, support, int(r.predicted == 0)])


def read_predictions(path) -> list[dict]:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rows.append({"user": row["user"], "topic": int(row["topic"]), "object": row["object"],
                     "predicted": int(row["predicted"]), "gold": int(row["gold"])})
    return rows


def cmd_eval(cfg: dict) -> None:
    path = Path(cfg["paths"].get("predictions") or Path(cfg["paths"]["out"]) / "predictions.csv")
    if not path.exists():
        raise ValidationError(f"predictions file {path} does not exist")
    rows = read_predictions(path)
    model = load_model(model_path(cfg, must_exist=True))
    index = model.user_index()
    history = HistoryBaseline(model.influence)
    gold = [r["gold"] for r in rows]
    objects = [r["object"] for r in rows]
    hist = [history.predict(index.get(r["user"]), r["topic"]) for r in rows]
    toim = [r["predicted"] for r in rows]
    pipeline = [p or h or model.majority for p, h in zip(toim, hist)]
    report = {"meta": meta(cfg)}
    for name, preds in (("toim", toim), ("toim_with_fallback", pipeline), ("baseline_history", hist),
                        ("baseline_majority", [model.majority] * len(rows))):
        report[name] = evaluate(preds, gold, objects).to_json()
    _write_json(out_dir(cfg) / "report.json", report)
    overall = report["toim"]["overall"]
    print(f"toim P={overall['precision']:.4f} R={overall['recall']:.4f} F1={overall['f1']:.4f}")


def cmd_export(cfg: dict) -> None:
    model = load_model(model_path(cfg, must_exist=True))
    out = out_dir(cfg)
    head = f"# {header(cfg)}\n"
    ip = model.influence
    K = model.topics.theta.shape[1]
    with (out / "theta.csv").open("w", encoding="utf-8") as fh:
        fh.write(head + "user," + ",".join(f"topic{k}" for k in range(K)) + "\n")
        for u, row in zip(model.user_ids, model.topics.theta):
            fh.write(u + "," + ",".join(repr(float(v)) for v in row) + "\n")
    with (out / "phi.csv").open("w", encoding="utf-8") as fh:
        fh.write(head + "topic,noun,phi\n")
        for k, row in enumerate(model.topics.phi):
            for n, v in zip(model.vocab.nouns, row):
                fh.write(f"{k},{n},{float(v)!r}\n")
    with (out / "influence.csv").open("w", encoding="utf-8") as fh:
        fh.write(head + "source,target,topic,omega_agree,omega_disagree,s_agree,s_disagree\n")
        for (i, j, k), (sa, sd) in sorted(ip.strength.items()):
            pa, pd = ip.omega.get((i, j, k), (0.5, 0.5))
            fh.write(f"{model.user_ids[i]},{model.user_ids[j]},{k},{pa!r},{pd!r},{sa!r},{sd!r}\n")
    if cfg["paths"].get("train"):
        messages, followers = read_messages(input_path(cfg, "train"))
        graph = build_graph(messages, followers)
        vocab = build_vocabulary(graph, load_lexicon(input_path(cfg, "lexicon")))
        opinions = resolve_all(graph, vocab, model.stats)
        index = model.user_index()
        rows = []
        for mid, msg in graph.messages.items():
            topic = infer_topic(model, msg, index.get(msg.author))
            day = datetime.fromtimestamp(msg.timestamp, tz=timezone.utc).strftime("%Y-%m-%d")
            rows.append((day, topic, message_polarity(opinions[mid])))
        write_timeseries_csv(out / "timeseries.csv", opinion_timeseries(rows), header(cfg))


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "propagate": cmd_propagate,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--topics", type=int, help="number of topics K")
        p.add_argument("--iterations", type=int, help="Gibbs iterations")
        p.add_argument("--mode", choices=["conservative", "nonconservative"])
        p.add_argument("--t", type=int, help="propagation steps")
        p.add_argument("--beta", type=float, help="propagation decay")
        p.add_argument("--w", type=float, help="own-preference weight")
        p.add_argument("--refined", action="store_true", help="predict with propagated strengths")
        p.add_argument("--out", metavar="DIR")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - exit status contract
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
