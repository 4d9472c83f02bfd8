"""Command-line entry point: ``graphlcd {train,detect,eval,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import LcdError
from .features import save_sequence
from .pipeline import VERIFIERS, StageTimer, evaluate, run_detect, run_train
from .synth import load_config, synth_generate_sequence, write_ground_truth

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
GROUND_TRUTH_NAME = "ground_truth.csv"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphlcd", description="Loop-closure detection on feature sequences.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a vocabulary from a tracked sequence")
    t.add_argument("--features", required=True, type=Path, help="directory of .lcdf files")
    t.add_argument("--out", required=True, type=Path, help="vocabulary file to write")
    t.add_argument("--kw", type=int, default=10, help="branching factor (default 10)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-depth", type=int, default=10)

    d = sub.add_parser("detect", help="detect loop closures over a sequence")
    d.add_argument("--features", required=True, type=Path)
    d.add_argument("--vocab", required=True, type=Path)
    d.add_argument("--out", required=True, type=Path, help="records CSV to write")
    d.add_argument("--eta", type=int, default=100, help="temporal exclusion window")
    d.add_argument("--zeta", type=float, default=0.55, help="graph acceptance threshold")
    d.add_argument("--top-t", type=int, default=50, help="matches used for the graphs")
    d.add_argument("--verifier", choices=VERIFIERS, default="graph")
    d.add_argument("--alpha", type=float, default=0.0, help="minimum BoW similarity")
    d.add_argument("--timing", action="store_true", help="print mean per-stage times")
    d.add_argument("--dump-graphs", type=Path, default=None, metavar="DIR",
                   help="write both graphs of every verified pair to DIR")

    e = sub.add_parser("eval", help="precision/recall of a records CSV")
    e.add_argument("--records", required=True, type=Path)
    e.add_argument("--gt", required=True, type=Path, help="ground-truth CSV of query,match")
    e.add_argument("--out", required=True, type=Path, help="P-R CSV to write")
    e.add_argument("--sweep", choices=("alpha", "zeta"), default="zeta")
    e.add_argument("--gt-window", type=int, default=0)

    s = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int, required=True)
    return p


def _check_usage(parser, args):
    checks = {
        "train": [(args.command == "train" and getattr(args, "kw", 2) < 2, "--kw must be >= 2"),
                  (getattr(args, "max_depth", 1) < 1, "--max-depth must be >= 1")],
        "detect": [(getattr(args, "eta", 0) < 0, "--eta must be >= 0"),
                   (getattr(args, "top_t", 1) < 1, "--top-t must be >= 1")],
        "eval": [(getattr(args, "gt_window", 0) < 0, "--gt-window must be >= 0")],
    }
    for bad, msg in checks.get(args.command, []):
        if bad:
            parser.error(msg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_usage(parser, args)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            summary = run_train(args.features, args.out, k=args.kw, seed=args.seed,
                                max_depth=args.max_depth)
            sys.stdout.write(summary.format())
        elif args.command == "detect":
            timer = StageTimer() if args.timing else None
            records = run_detect(args.features, args.vocab, args.out, eta=args.eta,
                                 zeta_t=args.zeta, top_t=args.top_t, verifier=args.verifier,
                                 alpha=args.alpha, timer=timer, graph_dump_dir=args.dump_graphs)
            n_cand = sum(r.candidate_id is not None for r in records)
            n_acc = sum(r.accepted for r in records)
            print(f"queries: {len(records)}  candidates: {n_cand}  accepted: {n_acc}")
            if timer is not None:
                sys.stderr.write(timer.format())
        elif args.command == "eval":
            result = evaluate(args.records, args.gt, args.out, args.sweep, args.gt_window)
            print(f"AUC: {result.auc!r}")
            print(f"R_max@1.0: {result.r_max_at_p1!r}")
        elif args.command == "synth":
            config = load_config(args.config)
            seq = synth_generate_sequence(config, args.seed)
            save_sequence(seq.frames, args.out)
            write_ground_truth(seq.ground_truth, args.out / GROUND_TRUTH_NAME)
            print(f"frames: {len(seq.frames)}  loop pairs: {len(seq.ground_truth)}")
    except (LcdError, OSError) as exc:
        print(f"graphlcd: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
