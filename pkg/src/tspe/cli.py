"""``tspe`` command line: synth, embed, pe, train, eval, cv.

Every config key can be overridden with a dotted flag (``--train.learning_rate
1e-3``); flags win over the ``--config`` file.  Outputs are written via
temp-file rename.  Failures print one JSON line to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import container
from .config import SECTIONS, ConfigError, RunConfig, section_fields
from .encoding import EncodingBundle, GeeVariant, GpeMatrix, LpeMatrix, PeMode, build_encodings
from .graph import (ParseError, format_catalog, format_edge_list,
                    format_pairs, generate_synthetic, largest_connected_component,
                    parse_edge_list, parse_pair_dataset, parse_subgraph_catalog)
from .metrics import accuracy, roc_auc
from .model import ModelConfig, TransformerModel
from .node2vec import node2vec
from .training import (MetricsReport, TrainingError, cross_validate, predict, stratified_kfold,
                       train)

log = logging.getLogger("tspe")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, EXIT_USAGE)


def _fail(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")
    sys.exit(code)


# ---------------------------------------------------------------- arguments

_SHORTCUTS = {
    "seed": ("--seed", int),
    "mode": ("--mode", str),
    "pe_mode": ("--pe", str),
    "jobs": ("--jobs", int),
    "drop_worst_fold": ("--drop-worst-fold", int),
    "folds": ("--folds", int),
}
_PATH_FLAGS = ("edges", "catalog", "pairs", "embeddings", "encodings", "checkpoint")


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_common(p: argparse.ArgumentParser, pe_all: bool = False):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output path")
    p.add_argument("--synthetic", action="store_true",
                   help="use the generated benchmark instead of input files")
    p.add_argument("-v", "--verbose", action="store_true")
    for key, (flag, typ) in _SHORTCUTS.items():
        kwargs = {"dest": f"top:{key}", "type": typ, "default": argparse.SUPPRESS}
        if key == "pe_mode":
            kwargs["choices"] = ["nope", "lpe", "spe"] + (["all"] if pe_all else [])
        if key == "mode":
            kwargs["choices"] = ["rr0", "rr1"]
        p.add_argument(flag, **kwargs)
    p.add_argument("--use-lcc", dest="top:use_lcc", action="store_const", const=True,
                   default=argparse.SUPPRESS, help="restrict to the largest connected component")
    for name in _PATH_FLAGS:
        p.add_argument(f"--{name}", dest=f"set:paths.{name}", default=argparse.SUPPRESS)
    group = p.add_argument_group("config overrides")
    for section in SECTIONS:
        for key, _ in section_fields(section):
            group.add_argument(f"--{section}.{key}", dest=f"set:{section}.{key}", type=_value,
                               default=argparse.SUPPRESS, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tspe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "synth": "write a synthetic graph, catalog and pair file",
        "embed": "node2vec embeddings of the graph",
        "pe": "LPE, GPE and composed encodings",
        "train": "train one model with early stopping",
        "eval": "score a checkpoint on a pair file",
        "cv": "stratified k-fold cross-validation",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_common(p, pe_all=(name == "cv"))
    return parser


def resolve_config(args) -> tuple[RunConfig, bool]:
    """Config file, then flag overrides; also reports whether ``--pe all`` was given."""
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {dest[4:]: value for dest, value in vars(args).items()
                 if dest.startswith(("top:", "set:"))}
    pe_all = overrides.get("pe_mode") == "all"
    if pe_all:
        overrides.pop("pe_mode")
    cfg = cfg.with_overrides(overrides)
    return cfg, pe_all


# ---------------------------------------------------------------- pipeline pieces

def _read(path, what):
    if path is None:
        raise CliError(f"no {what} file given (set paths.{what} or pass --synthetic)")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path.read_text(encoding="utf-8")


def load_data(cfg: RunConfig, synthetic: bool, need_pairs: bool = True):
    if synthetic:
        graph, catalog, pairs = generate_synthetic(cfg.synth_params())
        pairs = pairs.relabel(cfg.threshold)
    else:
        graph = parse_edge_list(_read(cfg.paths.edges, "edges"))
        catalog = parse_subgraph_catalog(_read(cfg.paths.catalog, "catalog"), graph)
        pairs = (parse_pair_dataset(_read(cfg.paths.pairs, "pairs"), catalog, cfg.threshold)
                 if need_pairs else None)
    if cfg.use_lcc:
        graph, remap = largest_connected_component(graph)
        catalog = catalog.remapped(remap, graph.num_nodes)
        if pairs is not None:
            kept = set(catalog.ids)
            idx = [i for i, p in enumerate(pairs.pairs)
                   if p.subgraph_a in kept and p.subgraph_b in kept]
            log.info("largest component keeps %d nodes, %d subgraphs, %d of %d pairs",
                     graph.num_nodes, catalog.K, len(idx), len(pairs))
            pairs = pairs.subset(idx)
    return graph, catalog, pairs


def compute_embeddings(cfg: RunConfig, graph) -> np.ndarray:
    if cfg.paths.embeddings:
        header, tensors = container.load(cfg.paths.embeddings)
        if header.get("node_ids") != list(graph.node_ids):
            raise CliError("embedding file was computed for a different graph")
        return tensors["M"]
    log.info("running node2vec on %d nodes", graph.num_nodes)
    return node2vec(graph, cfg.walk_config(), cfg.skipgram_config()).matrix


def _bundle_from_container(path, mode) -> EncodingBundle:
    _, t = container.load(path)
    lpe = LpeMatrix(t["LPE"], t["LPE.eigenvalues"]) if "LPE" in t else None
    gpe = GpeMatrix(t["GPE"], t["GPE.singular_values"]) if "GPE" in t else None
    return EncodingBundle(t["M"], lpe, gpe, PeMode(mode))


def compute_encodings(cfg: RunConfig, graph, catalog, mode=None) -> EncodingBundle:
    mode = PeMode(mode or cfg.pe_mode)
    if cfg.paths.encodings:
        return _bundle_from_container(cfg.paths.encodings, mode)
    m = compute_embeddings(cfg, graph)
    pe = cfg.pe
    return build_encodings(graph, catalog, m, pe.k, pe.d, mode=mode, tol=pe.tol,
                           seed=cfg.stage_seed("lpe"), gee_variant=GeeVariant(pe.gee_variant),
                           scale_by_sigma=pe.scale_by_sigma, eig_method=pe.eig_method,
                           zero_threshold=pe.zero_threshold)


def _model_config(cfg: RunConfig, width: int) -> ModelConfig:
    return dataclasses.replace(cfg.model, input_width=width)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _out(args, default: str) -> Path:
    return args.out if args.out is not None else Path(default)


# ---------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig, args) -> str:
    graph, catalog, pairs = generate_synthetic(cfg.synth_params())
    out = _out(args, "synthetic")
    container.atomic_write(out / "edges.tsv", format_edge_list(graph))
    container.atomic_write(out / "catalog.tsv", format_catalog(catalog, graph))
    container.atomic_write(out / "pairs.tsv", format_pairs(pairs))
    container.atomic_write(out / "config.json", cfg.to_json())
    return (f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges, {catalog.K} subgraphs, "
            f"{len(pairs)} pairs to {out}")


def cmd_embed(cfg: RunConfig, args) -> str:
    graph, _, _ = load_data(cfg, args.synthetic, need_pairs=False)
    emb = node2vec(graph, cfg.walk_config(), cfg.skipgram_config())
    out = _out(args, "embeddings.tspe")
    container.save(out, {"M": emb.matrix}, cfg.to_dict(),
                   {"node_ids": list(graph.node_ids), "epoch_losses": emb.losses})
    return f"wrote {emb.matrix.shape[0]}x{emb.matrix.shape[1]} embeddings to {out}"


def cmd_pe(cfg: RunConfig, args) -> str:
    graph, catalog, _ = load_data(cfg, args.synthetic, need_pairs=False)
    bundle = compute_encodings(cfg, graph, catalog)
    tensors = {"M": bundle.m}
    if bundle.lpe is not None:
        tensors["LPE"] = bundle.lpe.vectors
        tensors["LPE.eigenvalues"] = bundle.lpe.eigenvalues
    if bundle.gpe is not None:
        tensors["GPE"] = bundle.gpe.vectors
        tensors["GPE.singular_values"] = bundle.gpe.singular_values
    tensors["E"] = bundle.compose()
    out = _out(args, "encodings.tspe")
    container.save(out, tensors, cfg.to_dict(),
                   {"node_ids": list(graph.node_ids), "subgraph_ids": list(catalog.ids),
                    "pe_mode": bundle.mode.value})
    return f"wrote {bundle.mode.value} encodings of width {tensors['E'].shape[1]} to {out}"


def cmd_train(cfg: RunConfig, args) -> str:
    graph, catalog, pairs = load_data(cfg, args.synthetic)
    bundle = compute_encodings(cfg, graph, catalog)
    model_cfg = _model_config(cfg, bundle.width)
    model, history, (train_idx, valid_idx) = train(model_cfg, pairs, bundle, catalog,
                                                   cfg.train_config())
    out = _out(args, "model.tspe")
    meta = {"model": model_cfg.to_dict(), "train_log": history.to_dict(),
            "train_pairs": len(train_idx), "valid_pairs": len(valid_idx)}
    container.save(out, model.params, cfg.to_dict(), meta)
    container.atomic_write(out.with_name(out.name + ".log.json"), _json(history.to_dict()))
    return (f"trained {history.stopped_epoch} epochs (best {history.best_epoch}), "
            f"checkpoint {out}")


def cmd_eval(cfg: RunConfig, args) -> str:
    if not cfg.paths.checkpoint:
        raise CliError("eval needs a checkpoint (--checkpoint PATH)")
    header, params = container.load(cfg.paths.checkpoint)
    model_cfg = ModelConfig(**header["model"])
    model = TransformerModel(model_cfg, params)
    graph, catalog, pairs = load_data(cfg, args.synthetic)
    bundle = compute_encodings(cfg, graph, catalog)
    if bundle.width != model_cfg.input_width:
        raise CliError(f"encodings have width {bundle.width}, checkpoint expects "
                       f"{model_cfg.input_width}")
    probs = predict(model, pairs, bundle, catalog)
    labels = pairs.labels
    row = {"fold": 0, "roc_auc": roc_auc(probs, labels), "accuracy": accuracy(probs, labels)}
    report = MetricsReport([row], {"model": model_cfg.to_dict()}, {"master": cfg.seed})
    doc = report.to_dict()
    doc["run_config"] = cfg.to_dict()
    doc["probabilities"] = probs.tolist()
    container.atomic_write(_out(args, "eval.json"), _json(doc))
    return report.table()


def _ablation_table(reports: dict) -> str:
    lines = [f"{'PE':<6}  {'ROC AUC':>17}  {'Accuracy':>17}"]
    for name, rep in reports.items():
        cells = [f"{rep.mean(k):.4f} ± {rep.std(k):.4f}" for k in ("roc_auc", "accuracy")]
        lines.append(f"{name.upper() if name != 'nope' else 'NoPE':<6}  "
                     f"{cells[0]:>17}  {cells[1]:>17}")
    return "\n".join(lines)


def cmd_cv(cfg: RunConfig, args, pe_all: bool = False) -> str:
    graph, catalog, pairs = load_data(cfg, args.synthetic)
    modes = ["nope", "lpe", "spe"] if pe_all else [cfg.pe_mode]
    base = compute_encodings(cfg, graph, catalog, "spe" if pe_all else cfg.pe_mode)
    plan = stratified_kfold(pairs.labels, cfg.folds, cfg.stage_seed("folds"))
    reports = {}
    for mode in modes:
        bundle = base.with_mode(mode)
        rep = cross_validate(pairs, bundle, catalog, _model_config(cfg, bundle.width),
                             cfg.train_config(), cfg.folds, cfg.seed, jobs=cfg.jobs, plan=plan)
        if cfg.drop_worst_fold:
            rep = rep.drop_worst(cfg.drop_worst_fold)
        reports[mode] = rep
    out = _out(args, "report.json")
    if pe_all:
        doc = {"ablation": {m: r.to_dict() for m, r in reports.items()},
               "run_config": cfg.to_dict()}
        text = _ablation_table(reports)
    else:
        doc = reports[modes[0]].to_dict()
        doc["run_config"] = cfg.to_dict()
        text = reports[modes[0]].table(modes[0])
    doc["fold_sizes"] = [int(f.size) for f in plan.folds]
    container.atomic_write(out, _json(doc))
    return text


COMMANDS = {"synth": cmd_synth, "embed": cmd_embed, "pe": cmd_pe, "train": cmd_train,
            "eval": cmd_eval, "cv": cmd_cv}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, pe_all = resolve_config(args)
        if pe_all and args.command != "cv":
            raise ConfigError("--pe all is only available for cv")
        if args.command == "cv":
            message = cmd_cv(cfg, args, pe_all)
        else:
            message = COMMANDS[args.command](cfg, args)
    except (ConfigError, CliError) as exc:
        _fail(type(exc).__name__, str(exc), EXIT_USAGE)
    except ParseError as exc:
        _fail("ParseError", str(exc), EXIT_FAILURE)
    except (OSError, container.ContainerError, TrainingError, ValueError, KeyError,
            ArithmeticError) as exc:
        _fail(type(exc).__name__, str(exc).strip("\"'"), EXIT_FAILURE)
    except Exception as exc:  # keep the one-line error contract
        log.debug("unexpected failure", exc_info=True)
        _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
