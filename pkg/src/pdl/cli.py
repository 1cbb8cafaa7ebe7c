"""Command-line entry point: synth, train, extract, cluster, eval.

Configuration precedence is defaults < config file < flags; config files
are `key = value` lines (# comments allowed) and unknown keys are
rejected. Exit codes: 0 success, 1 config error, 2 I/O error, 3 numeric
error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .clustering import dbscan, k_reciprocal_jaccard, pairwise_euclidean
from .data import Dataset, Domain, SynthConfig, generate_synthetic
from .encoder import EncoderConfig, init_params, load_params, save_params
from .errors import ConfigError, DataFileError, NumericError, PdlError, SamplingError
from .evaluation import evaluate, format_metrics_line
from .storage import load_embeddings, save_clusters, save_distance_matrix, \
    save_embeddings
from .trainer import TrainConfig, extract_all_features, format_history_line, train


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage as ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


class _Command:
    """Subcommand whose options can also come from a key = value config file."""

    def __init__(self, name: str, help_text: str):
        self.name = name
        self.help = help_text
        self.specs = []  # (flags, dest, kwargs, converter)
        self.required: list[str] = []

    def add(self, flag: str, converter=str, default=None, required=False, **kwargs):
        dest = flag.lstrip("-").replace("-", "_")
        if required:  # enforced after the config file merge, not by argparse
            self.required.append(dest)
        self.specs.append((flag, dest, dict(kwargs, default=default), converter))

    def add_flag(self, flag: str):
        dest = flag.lstrip("-").replace("-", "_")
        self.specs.append((flag, dest, {"default": False, "action": "store_true"},
                           _parse_bool))

    def build(self, suppress: bool) -> _Parser:
        parser = _Parser(prog=f"pdl {self.name}", description=self.help)
        parser.add_argument("--config", default=argparse.SUPPRESS if suppress else None)
        for flag, dest, kwargs, converter in self.specs:
            kw = dict(kwargs)
            if suppress:
                kw["default"] = argparse.SUPPRESS
            if "action" not in kw:
                kw["type"] = converter
            parser.add_argument(flag, dest=dest, **kw)
        return parser

    def parse(self, argv: list[str]) -> argparse.Namespace:
        base = vars(self.build(suppress=False).parse_args(argv))
        explicit = vars(self.build(suppress=True).parse_args(argv))
        values = {k: v for k, v in base.items()}
        if base.get("config"):
            values.update(self._load_file(base["config"]))
        values.update(explicit)
        values.pop("config", None)
        for dest in self.required:
            if values.get(dest) is None:
                flag = "--" + dest.replace("_", "-")
                raise ConfigError(f"{flag} is required (flag or config key)")
        return argparse.Namespace(**values)

    def _load_file(self, path: str) -> dict:
        converters = {dest: conv for _, dest, _, conv in self.specs}
        try:
            with open(path) as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise DataFileError(f"cannot read config file: {exc}") from None
        values = {}
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = key.strip(), val.strip()
            if key not in converters:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = converters[key](val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}")
        return values


def _synth_command() -> _Command:
    cmd = _Command("synth", "generate a synthetic two-domain benchmark")
    cmd.add("--out-source", str, "source.emb")
    cmd.add("--out-target", str, "target.emb")
    cmd.add("--n-identities-source", int, 10)
    cmd.add("--n-identities-target", int, 10)
    cmd.add("--samples-per-identity", int, 40)
    cmd.add("--input-dim", int, 16)
    cmd.add("--cluster-spread", float, 0.6)
    cmd.add("--style-scale", float, 1.5)
    cmd.add("--style-offset", float, 0.8)
    cmd.add("--n-cameras", int, 4)
    cmd.add("--seed", int, 0)
    return cmd


def _train_args(cmd: _Command) -> None:
    cmd.add("--epochs", int, 50)
    cmd.add("--iterations-per-epoch", int, None)
    cmd.add("--batch-p", int, 4)
    cmd.add("--batch-k", int, 16)
    cmd.add("--lr", float, 0.00035)
    cmd.add("--weight-decay", float, 0.0005)
    cmd.add("--momentum", float, 0.1)
    cmd.add("--tau", float, 0.05)
    cmd.add("--eps", float, 0.6)
    cmd.add("--min-pts", int, 4)
    cmd.add("--k-reciprocal", int, 30)
    cmd.add("--alpha", float, 2.0)
    cmd.add_flag("--no-enhance")
    cmd.add("--loss", str, "pdl", choices=("pdl", "infonce"))
    cmd.add("--seed", int, 0)
    cmd.add("--threads", int, 1)


def _train_command() -> _Command:
    cmd = _Command("train", "train an encoder on labeled source + unlabeled target")
    cmd.add("--source", str, required=True)
    cmd.add("--target", str, required=True)
    cmd.add("--out", str, "checkpoint.txt")
    cmd.add("--history", str, "history.txt")
    cmd.add("--checkpoint-every", int, 0)
    _train_args(cmd)
    return cmd


def _eval_command() -> _Command:
    cmd = _Command("eval", "retrieval metrics for a checkpoint on a dataset")
    cmd.add("--checkpoint", str, required=True)
    cmd.add("--query", str, required=True)
    cmd.add("--gallery", str, None)
    cmd.add("--threads", int, 1)
    return cmd


def _cluster_command() -> _Command:
    cmd = _Command("cluster", "pseudo-label an embedding table")
    cmd.add("--embeddings", str, required=True)
    cmd.add("--out", str, "clusters.txt")
    cmd.add("--dump-dist", str, None)
    cmd.add("--eps", float, 0.6)
    cmd.add("--min-pts", int, 4)
    cmd.add("--k-reciprocal", int, 30)
    return cmd


def _extract_command() -> _Command:
    cmd = _Command("extract", "embed a raw dataset file with a checkpoint")
    cmd.add("--checkpoint", str, required=True)
    cmd.add("--data", str, required=True)
    cmd.add("--out", str, "embeddings.emb")
    cmd.add("--threads", int, 1)
    return cmd


def _load_dataset(path: str, domain: Domain) -> Dataset:
    ids, matrix, identities, cameras = load_embeddings(path)
    if not np.array_equal(ids, np.arange(len(ids))):
        raise DataFileError(f"{path}: sample ids must be dense 0..N-1")
    return Dataset.from_arrays(matrix, identities, cameras, domain)


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_identities_source=args.n_identities_source,
        n_identities_target=args.n_identities_target,
        samples_per_identity=args.samples_per_identity,
        input_dim=args.input_dim, cluster_spread=args.cluster_spread,
        style_scale=args.style_scale, style_offset=args.style_offset,
        n_cameras=args.n_cameras, seed=args.seed)
    source, target = generate_synthetic(config)
    for dataset, path in ((source, args.out_source), (target, args.out_target)):
        save_embeddings(path, np.arange(len(dataset)), dataset.inputs(),
                        dataset.identities(), dataset.camera_ids())
        print(f"{dataset.domain.value}: wrote {len(dataset)} samples, "
              f"{dataset.n_identities} identities -> {path}")
    return 0


def cmd_train(args) -> int:
    source = _load_dataset(args.source, Domain.SOURCE)
    target = _load_dataset(args.target, Domain.TARGET)
    if source.inputs().shape[1] != target.inputs().shape[1]:
        raise DataFileError("source and target input dimensions differ")
    encoder = EncoderConfig(d_in=source.inputs().shape[1])
    config = TrainConfig(
        epochs=args.epochs, iterations_per_epoch=args.iterations_per_epoch,
        batch_p=args.batch_p, batch_k=args.batch_k, base_lr=args.lr,
        weight_decay=args.weight_decay, momentum=args.momentum, tau=args.tau,
        eps=args.eps, min_pts=args.min_pts, k_reciprocal=args.k_reciprocal,
        alpha=args.alpha, enhance=not args.no_enhance, loss_kind=args.loss,
        seed=args.seed, threads=args.threads, encoder=encoder)
    _, history = train(config, source, target, checkpoint_path=args.out,
                       checkpoint_every=args.checkpoint_every)
    with open(args.history, "w") as fh:
        for entry in history:
            fh.write(format_history_line(entry) + "\n")
    print(f"wrote checkpoint -> {args.out} ({len(history)} epochs)")
    return 0


def cmd_eval(args) -> int:
    params = load_params(args.checkpoint)
    query = _load_dataset(args.query, Domain.TARGET)
    gallery = query if args.gallery is None else _load_dataset(args.gallery, Domain.TARGET)
    for name, ds in (("query", query), ("gallery", gallery)):
        if ds.inputs().shape[1] != params.config.d_in:
            raise DataFileError(f"{name} dimension {ds.inputs().shape[1]} does not "
                                f"match checkpoint d_in={params.config.d_in}")
    q_emb = extract_all_features(params, query.inputs(), args.threads)
    g_emb = q_emb if gallery is query else \
        extract_all_features(params, gallery.inputs(), args.threads)
    result = evaluate(q_emb, g_emb, query.identities(), query.camera_ids(),
                      gallery.identities(), gallery.camera_ids())
    print(format_metrics_line(result))
    return 0


def cmd_cluster(args) -> int:
    _, matrix, _, _ = load_embeddings(args.embeddings)
    n = matrix.shape[0]
    if n < 2:
        raise DataFileError(f"{args.embeddings}: need at least 2 rows to cluster")
    k = min(args.k_reciprocal, n - 1)
    dist = k_reciprocal_jaccard(pairwise_euclidean(matrix), k)
    if args.dump_dist:
        save_distance_matrix(args.dump_dist, dist)
    assignment = dbscan(dist, args.eps, args.min_pts)
    save_clusters(args.out, assignment.labels, assignment.n_clusters)
    print(f"clusters={assignment.n_clusters} noise={assignment.noise_count()}")
    return 0


def cmd_extract(args) -> int:
    params = load_params(args.checkpoint)
    dataset = _load_dataset(args.data, Domain.TARGET)
    if dataset.inputs().shape[1] != params.config.d_in:
        raise DataFileError(f"{args.data}: dimension does not match checkpoint")
    emb = extract_all_features(params, dataset.inputs(), args.threads)
    save_embeddings(args.out, np.arange(len(dataset)), emb,
                    dataset.identities(), dataset.camera_ids())
    print(f"wrote {emb.shape[0]} embeddings (D={emb.shape[1]}) -> {args.out}")
    return 0


_COMMANDS = {
    "synth": (_synth_command, cmd_synth),
    "train": (_train_command, cmd_train),
    "eval": (_eval_command, cmd_eval),
    "cluster": (_cluster_command, cmd_cluster),
    "extract": (_extract_command, cmd_extract),
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv or argv[0] in ("-h", "--help"):
            names = ", ".join(_COMMANDS)
            print(f"usage: pdl {{{names}}} [options]   (see --help per command)")
            return 0
        name = argv[0]
        if name not in _COMMANDS:
            raise ConfigError(f"unknown command {name!r}; choose from {list(_COMMANDS)}")
        build, run = _COMMANDS[name]
        args = build().parse(argv[1:])
        return run(args)
    except (ConfigError, SamplingError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataFileError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main())
