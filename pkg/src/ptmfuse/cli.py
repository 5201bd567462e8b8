"""Command-line interface: encode, train, eval, scan, ablate, gradcheck."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .ablation import ablate, ablation_json, ablation_tsv
from .config import ModelConfig, full_config, mini_config, toy_config
from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    InputError,
    NumericError,
    PtmFuseError,
    UsageError,
)
from .features.bundle import FileFeatureSource, ResidueEmbedder
from .features.embfile import write_embedding_file
from .features.encoders import encode_aaindex, encode_blosum62, encode_pseaac
from .features.records import iter_fasta, read_dataset_tsv
from .gradcheck import TOLERANCE, gradient_suite
from .metrics import compute_metrics
from .model import init_params
from .scan import sliding_window_scan, write_scan
from .synth import Dataset, synth_splits
from .train import load_checkpoint, predict, save_checkpoint, train

log = logging.getLogger("ptmfuse")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 2, 3, 4, 5


@dataclass
class SynthOptions:
    n_train: int = 200
    n_test: int = 50
    separation: float = 3.0


@dataclass
class Embeddings:
    prott5: str | None = None
    esm2: str | None = None
    ember2: str | None = None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=full_config)
    train_tsv: str | None = None
    test_tsv: str | None = None
    embeddings: Embeddings = field(default_factory=Embeddings)
    out_dir: str = "out"
    synthetic: bool = False
    synth: SynthOptions = field(default_factory=SynthOptions)
    ember_missing: str = "error"
    checkpoint: str | None = None
    fasta: str | None = None
    target: str = "K"

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["model"] = self.model.to_dict()
        d["embeddings"] = dataclasses.asdict(self.embeddings)
        d["synth"] = dataclasses.asdict(self.synth)
        return d


def _strict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _base_model(args) -> ModelConfig:
    if args.dims is not None:
        return toy_config(args.dims, variant=args.variant or "full")
    return mini_config() if args.variant == "mini" else full_config()


def resolve_config(args) -> RunConfig:
    """Defaults, then the JSON file, then command-line flags."""
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: top level must be a JSON object")
    unknown = sorted(set(doc) - {f.name for f in dataclasses.fields(RunConfig)})
    if unknown:
        raise ConfigError(f"unknown keys in {args.config}: {', '.join(unknown)}")

    model = _base_model(args).to_dict()
    model.update(doc.get("model", {}))
    overrides = {"seed": args.seed, "epochs": args.epochs, "window": args.len}
    model.update({k: v for k, v in overrides.items() if v is not None})
    if args.len is not None and "pseaac_lambda" not in doc.get("model", {}):
        model["pseaac_lambda"] = min(model["pseaac_lambda"], args.len - 1)
    if args.variant is not None:
        model["variant"] = args.variant

    rest = {k: v for k, v in doc.items() if k not in ("model", "embeddings", "synth")}
    rc = RunConfig(
        model=_strict(ModelConfig, model, "model"),
        embeddings=_strict(Embeddings, doc.get("embeddings", {}), "embeddings"),
        synth=_strict(SynthOptions, doc.get("synth", {}), "synth"),
        **rest,
    )
    for name in ("train_tsv", "test_tsv", "checkpoint", "fasta", "out_dir", "ember_missing", "target"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(rc, name, value)
    for name in ("prott5", "esm2", "ember2"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(rc.embeddings, name, value)
    if args.synthetic:
        rc.synthetic = True
    if rc.ember_missing not in ("error", "zeros"):
        raise ConfigError(f"ember_missing must be 'error' or 'zeros', got {rc.ember_missing!r}")
    return rc


def validate_paths(rc: RunConfig, needs: tuple[str, ...]) -> None:
    """Check every input path up front, before any compute."""
    for name in needs:
        path = getattr(rc, name)
        if path is None:
            raise ConfigError(f"{name} is required")
        if not os.path.isfile(path):
            raise FileNotFoundError(f"{name}: no such file {path!r}")
    if not rc.synthetic and any(n in needs for n in ("train_tsv", "test_tsv", "fasta")):
        for name in ("prott5", "esm2"):
            path = getattr(rc.embeddings, name)
            if path is None:
                raise ConfigError(f"embeddings.{name} is required unless --synthetic is set")
            if not os.path.isfile(path):
                raise FileNotFoundError(f"embeddings.{name}: no such file {path!r}")
        if rc.embeddings.ember2 is not None and not os.path.isfile(rc.embeddings.ember2):
            raise FileNotFoundError(f"embeddings.ember2: no such file {rc.embeddings.ember2!r}")


def worker_count() -> int:
    cap = os.environ.get("UPTM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"UPTM_THREADS must be an integer, got {cap!r}") from None
    return n


def _featurizer(rc: RunConfig, protein_mode: bool = False):
    if rc.synthetic:
        return ResidueEmbedder(rc.model, rc.model.seed)
    e = rc.embeddings
    return FileFeatureSource(rc.model, e.prott5, e.esm2, e.ember2, rc.ember_missing, protein_mode)


def _load_split(rc: RunConfig, path: str) -> Dataset:
    records = read_dataset_tsv(path, rc.model.window)
    feat = _featurizer(rc)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        bundles = list(pool.map(feat.bundle, records))
    for b in bundles:
        b.check(rc.model)
    return Dataset(records, bundles)


def load_data(rc: RunConfig, need_train: bool = True) -> tuple[Dataset | None, Dataset | None]:
    if rc.synthetic and rc.train_tsv is None and rc.test_tsv is None:
        s = rc.synth
        return synth_splits(rc.model, rc.model.seed, s.n_train, s.n_test, s.separation)
    train_data = _load_split(rc, rc.train_tsv) if need_train and rc.train_tsv else None
    test_data = _load_split(rc, rc.test_tsv) if rc.test_tsv else None
    if need_train and train_data is None:
        raise ConfigError("train_tsv is required unless --synthetic is set")
    return train_data, test_data


def _prepare_out(rc: RunConfig) -> None:
    os.makedirs(rc.out_dir, exist_ok=True)
    with open(os.path.join(rc.out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(rc.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_metrics(rc: RunConfig, report, stem: str = "metrics") -> None:
    with open(os.path.join(rc.out_dir, f"{stem}.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    cols = ["tp", "tn", "fp", "fn", "acc", "sen", "spec", "mcc", "auc", "ap", "threshold"]
    d = report.to_dict()
    with open(os.path.join(rc.out_dir, f"{stem}.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n" + "\t".join(str(d[c]) for c in cols) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_encode(args, rc: RunConfig) -> int:
    src = args.input
    if not os.path.isfile(src):
        raise FileNotFoundError(f"no such file {src!r}")
    cfg = rc.model
    if src.endswith((".fa", ".fasta", ".faa")) or args.fasta_input:
        items = []
        for rid, seq, line in iter_fasta(src):
            if len(seq) <= cfg.pseaac_lambda:
                raise InputError(f"{src}: line {line}: sequence {rid!r} shorter than pseaac lambda")
            items.append((rid, seq, f"{src}: line {line}"))
    else:
        items = [(r.id, r.window, None) for r in read_dataset_tsv(src, cfg.window)]

    def encode(item):
        rid, seq, where = item
        try:
            return rid, (encode_pseaac(seq, cfg.pseaac_lambda, cfg.pseaac_weight), encode_blosum62(seq),
                         encode_aaindex(seq, cfg.aaindex_ids))
        except InputError as exc:
            raise InputError(f"{where}: {exc}" if where else str(exc)) from None

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        encoded = list(pool.map(encode, items))
    os.makedirs(rc.out_dir, exist_ok=True)
    for k, name in enumerate(("pseaac", "blosum62", "aaindex")):
        path = os.path.join(rc.out_dir, f"{name}.uptm")
        write_embedding_file(path, [(rid, mats[k]) for rid, mats in encoded])
        dim = encoded[0][1][k].shape[1] if encoded else 0
        print(f"{name}\t{len(encoded)} records\tdim {dim}\t{path}")
    return EXIT_OK


def cmd_train(args, rc: RunConfig) -> int:
    validate_paths(rc, () if rc.synthetic and rc.train_tsv is None else ("train_tsv",))
    train_data, test_data = load_data(rc)
    _prepare_out(rc)
    params, history = train(train_data, rc.model, test_data)
    ckpt = os.path.join(rc.out_dir, "checkpoint.uptm")
    digest = save_checkpoint(ckpt, params)
    with open(os.path.join(rc.out_dir, "history.tsv"), "w", encoding="utf-8") as fh:
        fh.write(history.to_tsv())
    if test_data is not None:
        report = compute_metrics(predict(params, rc.model, test_data.bundles), test_data.labels, rc.model.threshold)
        _write_metrics(rc, report)
        print(f"test MCC {report.mcc:.4f}  AUC {report.auc:.4f}  AP {report.ap:.4f}")
    print(f"checkpoint {ckpt} sha256 {digest}")
    return EXIT_OK


def cmd_eval(args, rc: RunConfig) -> int:
    needs = ("checkpoint",) if rc.synthetic and rc.test_tsv is None else ("checkpoint", "test_tsv")
    validate_paths(rc, needs)
    _, test_data = load_data(rc, need_train=False)
    if test_data is None:
        raise ConfigError("test_tsv is required unless --synthetic is set")
    _prepare_out(rc)
    params = load_checkpoint(rc.checkpoint, rc.model)
    report = compute_metrics(predict(params, rc.model, test_data.bundles), test_data.labels, rc.model.threshold)
    _write_metrics(rc, report)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_scan(args, rc: RunConfig) -> int:
    needs = ("fasta",) if rc.synthetic and rc.checkpoint is None else ("fasta", "checkpoint")
    validate_paths(rc, needs)
    if rc.checkpoint is None:
        log.warning("no checkpoint given; scanning with untrained weights")
        params = init_params(rc.model)
    else:
        params = load_checkpoint(rc.checkpoint, rc.model)
    _prepare_out(rc)
    feat = _featurizer(rc, protein_mode=True)
    for rid, seq, line in iter_fasta(rc.fasta):
        try:
            result = sliding_window_scan(rid, seq, params, rc.model, rc.target, feat)
        except InputError as exc:
            raise InputError(f"{rc.fasta}: line {line}: {exc}") from None
        path = os.path.join(rc.out_dir, f"scan_{rid}.tsv")
        write_scan(path, result)
        print(f"{rid}\t{len(seq)} residues\t{int(result.calls.sum())} calls\t{path}")
    return EXIT_OK


def cmd_ablate(args, rc: RunConfig) -> int:
    validate_paths(rc, () if rc.synthetic and rc.train_tsv is None else ("train_tsv", "test_tsv"))
    train_data, test_data = load_data(rc)
    if test_data is None:
        raise ConfigError("ablation needs a test split")
    _prepare_out(rc)
    rows = ablate(train_data, test_data, rc.model, log=log.info)
    table = ablation_tsv(rows)
    with open(os.path.join(rc.out_dir, "ablation.tsv"), "w", encoding="utf-8") as fh:
        fh.write(table)
    with open(os.path.join(rc.out_dir, "ablation.json"), "w", encoding="utf-8") as fh:
        fh.write(ablation_json(rows) + "\n")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_gradcheck(args, rc: RunConfig) -> int:
    cfg = rc.model
    results = gradient_suite(d_m=cfg.d_m, length=cfg.window, seed=cfg.seed, h=args.step)
    worst = max(r.error for r in results)
    for r in results:
        print(f"{r.name:<14} {r.error:.3e}  {'ok' if r.ok else 'FAIL'}  ({r.seconds:.2f}s)")
    print(f"max rel. err {worst:.3e} (tolerance {TOLERANCE:g})")
    return EXIT_OK if worst < TOLERANCE else EXIT_GRADCHECK


COMMANDS = {
    "encode": cmd_encode,
    "train": cmd_train,
    "eval": cmd_eval,
    "scan": cmd_scan,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--variant", choices=("full", "mini"))
    common.add_argument("--dims", type=int, help="desk-scale model width d_m (reduced input widths)")
    common.add_argument("--len", type=int, help="window length")
    common.add_argument("--synthetic", action="store_true", help="use synthetic features instead of embedding files")
    common.add_argument("--ember-missing", dest="ember_missing", choices=("error", "zeros"))
    common.add_argument("--prott5")
    common.add_argument("--esm2")
    common.add_argument("--ember2")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ptmfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="compute local encoder feature files")
    p.add_argument("input", help="dataset TSV or FASTA")
    p.add_argument("--fasta-input", action="store_true", help="treat input as FASTA regardless of extension")

    for name, help_ in (("train", "train a model"), ("eval", "evaluate a checkpoint"), ("ablate", "run the ablation grid")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--train-tsv", dest="train_tsv")
        p.add_argument("--test-tsv", dest="test_tsv")
        p.add_argument("--checkpoint")

    p = sub.add_parser("scan", parents=[common], help="score every target residue of FASTA proteins")
    p.add_argument("--fasta")
    p.add_argument("--checkpoint")
    p.add_argument("--target", help="target residue letters, e.g. K or ST")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--step", type=float, default=1e-5)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "gradcheck" and args.dims is None:
        args.dims = 16
        args.len = args.len or 9
    try:
        rc = resolve_config(args)
        return COMMANDS[args.command](args, rc)
    except (ConfigError, InputError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except PtmFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
