"""``fetcm`` command line: ingest, synth, train, eval, gradcheck.

Exit codes: 0 success, 2 input/config error, 3 training failure, 4 diagnostic failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import clicklog, config as C, diagnostics, metrics
from . import tensor as T
from .model import ConfigError as ModelConfigError
from .training import CheckpointError, TrainingError, derive_seed, load_checkpoint, save_checkpoint, train

EXIT_INPUT, EXIT_TRAIN, EXIT_DIAG = 2, 3, 4

log = logging.getLogger("fetcm")


class InputError(Exception):
    pass


def _read_sessions(path: str, what: str) -> list[clicklog.Session]:
    if not path:
        raise InputError(f"no {what} path configured")
    try:
        return clicklog.read_sessions(path)
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}") from None


def _splits(cfg: C.RunConfig):
    d = cfg.data
    if d.train_path or d.valid_path or d.test_path:
        load = lambda p, w: _read_sessions(p, w) if p else []  # noqa: E731
        return load(d.train_path, "train"), load(d.valid_path, "valid"), load(d.test_path, "test")
    if d.data_path:
        sessions = _read_sessions(d.data_path, "data")
        return clicklog.split(sessions, d.ratios(), seed=derive_seed(cfg.train.seed, "split"))
    raise InputError("configure train_path/valid_path/test_path or data_path")


# -- commands ---------------------------------------------------------------

def cmd_ingest(cfg: C.RunConfig) -> int:
    d = cfg.data
    if not d.input_path:
        raise InputError("input_path is required")
    try:
        with open(d.input_path, "rb") as f:
            if d.input_format == "canonical":
                sessions, warnings = clicklog.parse_canonical(f), 0
            elif d.input_format == "yandex":
                res = clicklog.parse_yandex(f)
                sessions, warnings = res.sessions, res.warnings
            else:
                raise InputError(f"unknown input_format {d.input_format!r} (canonical or yandex)")
    except FileNotFoundError:
        raise InputError(f"input file not found: {d.input_path}") from None
    if d.output_path:
        clicklog.write_sessions(sessions, d.output_path)
    n_q = sum(len(s.queries) for s in sessions)
    n_d = sum(s.n_docs for s in sessions)
    print(f"sessions={len(sessions)} queries={n_q} docs={n_d} warnings={warnings}")
    return 0


def cmd_synth(cfg: C.RunConfig) -> int:
    d = cfg.data
    if not d.output_path:
        raise InputError("output_path is required")
    gamma = d.gamma_values()
    if any(not 0.0 <= g <= 1.0 for g in gamma) or not 0.0 <= d.alpha_low <= d.alpha_high <= 1.0:
        raise InputError("gamma and alpha bounds must be probabilities")
    seed = cfg.train.seed
    truth = clicklog.random_truth(d.n_query_ids, d.n_url_ids, d.docs_per_query, gamma,
                                  d.alpha_low, d.alpha_high, seed=derive_seed(seed, "truth"))
    sessions, _ = clicklog.synthesize_pbm(truth, d.n_sessions, d.queries_per_session, d.docs_per_query,
                                          seed=derive_seed(seed, "clicks"))
    clicklog.write_sessions(sessions, d.output_path)
    truth_path = d.truth_path or d.output_path + ".truth.csv"
    with open(truth_path, "w", encoding="utf-8", newline="\n") as f:
        clicklog.write_truth(truth, f)
    n_d = sum(s.n_docs for s in sessions)
    print(f"sessions={len(sessions)} queries={sum(len(s.queries) for s in sessions)} docs={n_d} "
          f"clicks={sum(d.click for s in sessions for _, d in s.documents())} truth={truth_path}")
    return 0


def cmd_train(cfg: C.RunConfig) -> int:
    train_s, valid_s, _ = _splits(cfg)
    if not train_s or not valid_s:
        raise InputError("training needs non-empty train and valid splits")
    try:
        result = train(train_s, valid_s, cfg.model, cfg.train)
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_TRAIN
    save_checkpoint(result.checkpoint, cfg.data.checkpoint_path)
    with open(cfg.data.epoch_log_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(result.epoch_log())
    best = next(r for r in result.history if r.epoch == result.checkpoint.epoch)
    print(f"valid_ll={best.valid_ll:.6f} valid_ppl={best.valid_ppl:.6f} train_loss={best.train_loss:.6f} "
          f"best_epoch={best.epoch} epochs={len(result.history)}")
    return 0


def cmd_eval(cfg: C.RunConfig) -> int:
    try:
        ckpt = load_checkpoint(cfg.data.checkpoint_path)
    except FileNotFoundError:
        raise InputError(f"checkpoint not found: {cfg.data.checkpoint_path}") from None
    model = ckpt.to_model()
    train_s, _, test_s = _splits(cfg)
    if not test_s:
        raise InputError("no test sessions")
    p_max, eps = model.config.p_max, model.config.prob_clamp
    preds = metrics.model_predictions(model, test_s, ckpt.vocab)
    baseline = None
    if cfg.data.baseline:
        if not train_s:
            raise InputError("baseline needs train_path (or data_path)")
        baseline = metrics.RankCTRBaseline(train_s)
    truth = None
    if cfg.data.truth_path:
        with open(cfg.data.truth_path, encoding="utf-8") as f:
            truth = clicklog.read_truth(f)
    rep = metrics.report(preds, test_s, p_max, eps, baseline, truth)
    with open(cfg.data.report_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(rep.to_csv())
    print(rep.summary())
    return 0


def cmd_gradcheck(cfg: C.RunConfig, corrupt_fft: bool = False) -> int:
    T.CORRUPT_FFT_ADJOINT = corrupt_fft
    try:
        rows = diagnostics.run_all(cfg.train.seed)
    finally:
        T.CORRUPT_FFT_ADJOINT = False
    print("name,max_rel_err,pass")
    for r in rows:
        print(r.csv())
    failed = [r for r in rows if not r.passed]
    print(f"checks={len(rows)} failed={len(failed)}")
    return EXIT_DIAG if failed else 0


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck}
OUT_KEY = {"ingest": "output_path", "synth": "output_path", "train": "checkpoint_path", "eval": "report_path"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fetcm", description="Filter-enhanced transformer click model.",
        epilog="config keys (key = value, '#' comments):\n" + C.describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="main output path of the command")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--corrupt-fft-adjoint", action="store_true", help=argparse.SUPPRESS)
    for key in C.KEYS:
        if key == "seed":
            continue
        ap.add_argument(f"--{key.replace('_', '-')}", dest=f"key_{key}", metavar="VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = C.load_config(args.config) if args.config else C.RunConfig()
        for key in C.KEYS:
            value = getattr(args, f"key_{key}", None)
            if value is not None:
                C.apply(cfg, key, value)
        if args.seed is not None:
            cfg.train.seed = args.seed
        if args.out and args.command in OUT_KEY:
            setattr(cfg.data, OUT_KEY[args.command], args.out)
        cfg.model.validate()
        cfg.train.validate()
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.corrupt_fft_adjoint)
        return COMMANDS[args.command](cfg)
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, C.ConfigError, ModelConfigError, CheckpointError, clicklog.ParseError,
            clicklog.ValidationError, clicklog.GenerationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
