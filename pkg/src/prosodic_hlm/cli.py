"""Command-line entry point: ``phlm extract|generate|train|eval|plotdata``.

Exit codes: 0 success, 1 computation error, 2 usage or I/O error.
``PHLM_OUTPUT_DIR`` overrides the output directory and ``PHLM_WORKERS`` the
worker count of any command that has one.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from . import config as cfgmod
from . import gibbs, io
from .datagen import CorpusSpec, generate, loglog_slope, rank_frequency
from .metrics import corpus_scores
from .model import ObservationSequence
from .prosody import assemble_features, read_wav
from .segmentation import TruncationError

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2

TRACE_HEADER = ["sweep", "log_joint", "letter_ari", "word_ari", "wall_ms"]
METRIC_HEADER = ["mode", "trial", "sweep", "letter_ari", "word_ari", "boundary_p", "boundary_r",
                 "boundary_f1", "letter_ari_utt", "word_ari_utt"]


class UsageError(Exception):
    pass


def _output_dir(default) -> Path:
    return Path(os.environ.get("PHLM_OUTPUT_DIR") or default)


def _workers(default: int) -> int:
    raw = os.environ.get("PHLM_WORKERS")
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"PHLM_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("PHLM_WORKERS must be at least 1")
    return n


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else f"{x:.6f}"


def trial_seed(seed: int, trial: int) -> int:
    """Seed of one trial, shared by every prosody mode so modes are paired."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


# --------------------------------------------------------------------- extract

def cmd_extract(args) -> int:
    run = cfgmod.load(cfgmod.RunConfig, args.config) if args.config else cfgmod.RunConfig()
    audio_dir = Path(args.audio_dir or run.audio_dir or "")
    if not audio_dir.is_dir():
        raise UsageError(f"audio directory {str(audio_dir)!r} does not exist")
    files = sorted(p for p in audio_dir.iterdir() if p.suffix.lower() == ".wav")
    if not files:
        raise UsageError(f"no .wav files in {audio_dir}")
    out = _output_dir(args.out or run.data_dir)
    out.mkdir(parents=True, exist_ok=True)
    pcfg = run.prosody_config()
    failed = 0
    for path in files:
        try:
            seq = assemble_features(read_wav(path), pcfg, id=path.stem)
        except (ValueError, OSError) as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            failed += 1
            continue
        io.write_features(out / f"{path.stem}.feat", seq, pcfg.mfcc_shift_s)
    print(f"wrote {len(files) - failed} feature files to {out}")
    return EXIT_USAGE if failed else EXIT_OK


# -------------------------------------------------------------------- generate

def write_dataset(out: Path, spec: CorpusSpec):
    sequences, truths, model = generate(spec)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    for seq, truth in zip(sequences, truths):
        io.write_features(out / "features" / f"{seq.id}.feat", seq)
        io.write_labels(out / "labels" / f"{seq.id}.lab", truth.letter_labels,
                        truth.word_labels, truth.boundary_flags)
    io.save_model(out / "model.ckpt", model)
    (out / "spec.cfg").write_text(cfgmod.dump(spec))
    return sequences, truths, model


def cmd_generate(args) -> int:
    spec = cfgmod.load(CorpusSpec, args.spec)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(f"{args.spec}: {exc}") from None
    out = _output_dir(args.out)
    sequences, _, _ = write_dataset(out, spec)
    print(f"wrote {len(sequences)} sequences to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------- train

def load_features(data_dir) -> list:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise UsageError(f"feature directory {str(data_dir)!r} does not exist")
    files = sorted(data_dir.glob("*.feat"))
    if not files:
        raise UsageError(f"no .feat files in {data_dir}")
    return [io.read_features(p)[0] for p in files]


def load_label_dir(labels_dir, sequences) -> list:
    out = []
    for seq in sequences:
        path = Path(labels_dir) / f"{seq.id}.lab"
        if not path.exists():
            raise UsageError(f"missing label file {path}")
        letters, words, flags = io.read_labels(path)
        if letters.size != seq.T:
            raise UsageError(f"{path}: {letters.size} label rows for {seq.T} frames")
        out.append((letters, words, flags))
    return out


def select_mode(sequences, mode: str) -> list:
    channels = cfgmod.PROSODY_MODES[mode]
    P = sequences[0].prosody.shape[1]
    if channels and max(channels) >= P:
        raise UsageError(f"prosody mode {mode!r} needs channels {list(channels)},"
                         f" features have {P} prosody channel(s)")
    return [s.with_prosody_channels(channels) for s in sequences]


def _write_trace(path: Path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for e in trace:
            w.writerow([e.sweep, repr(e.log_joint), _fmt(e.letter_ari), _fmt(e.word_ari),
                        f"{e.wall_ms:.1f}"])


def _write_prediction(path: Path, segmentations, ids):
    path.mkdir(parents=True, exist_ok=True)
    for seg, sid in zip(segmentations, ids):
        io.write_labels(path / f"{sid}.lab", seg.letter_labels, seg.frame_word_labels(),
                        seg.boundary_flags)


def run_trial(job) -> str:
    """One chain; resumes from ``checkpoint.ckpt`` when present."""
    run, mode, trial, resume = job
    sequences = select_mode(load_features(run.data_dir), mode)
    labels = None
    if run.labels_dir:
        labels = [(l, w) for l, w, _ in load_label_dir(run.labels_dir, sequences)]
    hp = run.hyperparameters(sequences[0].spectral.shape[1], sequences[0].prosody.shape[1])
    tdir = Path(run.output_dir) / mode / f"trial_{trial:03d}"
    tdir.mkdir(parents=True, exist_ok=True)
    ckpt = tdir / "checkpoint.ckpt"
    state = io.load_train_state(ckpt) if resume and ckpt.exists() else None
    seed = trial_seed(run.seed, trial)
    if state is not None and state.rng_seed != seed:
        raise UsageError(f"{ckpt} was written with a different seed")

    def checkpoint(st):
        if run.checkpoint_every and st.sweep_index % run.checkpoint_every == 0:
            io.save_train_state(ckpt, st)
            _write_trace(tdir / "trace.csv", st.trace)

    state = gibbs.run(sequences, hp, seed, run.n_sweeps, [checkpoint], labels, state)
    io.save_train_state(ckpt, state)
    _write_trace(tdir / "trace.csv", state.trace)
    _write_prediction(tdir / "predicted", state.segmentations, [s.id for s in sequences])
    return f"{mode} trial {trial}: done after {state.sweep_index} sweeps"


def cmd_train(args) -> int:
    run = cfgmod.load(cfgmod.RunConfig, args.config)
    out = _output_dir(run.output_dir)
    workers = _workers(args.workers or run.workers)
    run = cfgmod.build(cfgmod.RunConfig, {**cfgmod.parse_pairs(cfgmod.dump(run)),
                                          "output_dir": str(out), "workers": str(workers)})
    sequences = load_features(run.data_dir)
    for mode in run.modes:
        select_mode(sequences, mode)
    if run.labels_dir:
        load_label_dir(run.labels_dir, sequences)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfgmod.dump(run))
    jobs = [(run, mode, trial, args.resume) for mode in run.modes for trial in range(run.n_trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            for msg in pool.map(run_trial, jobs):
                print(msg)
    else:
        for job in jobs:
            print(run_trial(job))
    if run.labels_dir:
        evaluate(out, run.labels_dir)
    return EXIT_OK


# ------------------------------------------------------------------------ eval

def _trial_dirs(run_dir: Path):
    found = []
    for mdir in sorted(p for p in run_dir.iterdir() if p.is_dir() and p.name in cfgmod.PROSODY_MODES):
        for tdir in sorted(mdir.glob("trial_*")):
            if (tdir / "predicted").is_dir():
                found.append((mdir.name, int(tdir.name.split("_")[1]), tdir))
    return found


def welch_p(a, b, alternative: str = "two-sided") -> float:
    """Welch t-test p-value; identical samples give 1.0."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.array_equal(np.sort(a), np.sort(b)):
        return 1.0
    if a.size < 2 or b.size < 2:
        return float("nan")
    if a.var() == 0 and b.var() == 0:
        diff = a.mean() - b.mean()
        if alternative == "greater":
            return 0.0 if diff > 0 else 1.0
        if alternative == "less":
            return 0.0 if diff < 0 else 1.0
        return 0.0
    return float(stats.ttest_ind(a, b, equal_var=False, alternative=alternative).pvalue)


def mean_std(values) -> str:
    v = np.asarray(values, dtype=float)
    sd = v.std(ddof=1) if v.size > 1 else 0.0
    return f"{v.mean():.3f}±{sd:.3f}"


def evaluate(run_dir, labels_dir) -> list:
    """Write ``metrics.csv`` and ``summary.txt``; returns the metric rows."""
    run_dir = Path(run_dir)
    trials = _trial_dirs(run_dir)
    if not trials:
        raise UsageError(f"no completed trials under {run_dir}")
    rows, truth_cache = [], {}
    for mode, trial, tdir in trials:
        pred_files = sorted((tdir / "predicted").glob("*.lab"))
        tl, tw, tf, pl, pw, pf = [], [], [], [], [], []
        for pfile in pred_files:
            if pfile.name not in truth_cache:
                tpath = Path(labels_dir) / pfile.name
                if not tpath.exists():
                    raise UsageError(f"missing label file {tpath}")
                truth_cache[pfile.name] = io.read_labels(tpath)
            l, w, f = truth_cache[pfile.name]
            a, b, c = io.read_labels(pfile)
            if a.size != l.size:
                raise UsageError(f"{pfile}: {a.size} frames, labels have {l.size}")
            tl.append(l); tw.append(w); tf.append(f)
            pl.append(a); pw.append(b); pf.append(c)
        tf = None if any(f is None for f in tf) else tf
        sc = corpus_scores(tl, tw, pl, pw, tf, pf)
        sweep = len(_read_trace(tdir / "trace.csv")) if (tdir / "trace.csv").exists() else 0
        rows.append([mode, trial, sweep, sc["letter_ari"], sc["word_ari"], sc["boundary_p"],
                     sc["boundary_r"], sc["boundary_f1"], sc["letter_ari_utt"], sc["word_ari_utt"]])
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_HEADER)
        for r in rows:
            w.writerow(r[:3] + [_fmt(x) for x in r[3:]])
    (run_dir / "summary.txt").write_text(summarize(rows))
    return rows


def summarize(rows) -> str:
    by_mode = {}
    for r in rows:
        by_mode.setdefault(r[0], []).append(r)
    buf = _io.StringIO()
    buf.write("mode\ttrials\tletter_ari\tword_ari\tboundary_f1\n")
    for mode, rs in by_mode.items():
        buf.write(f"{mode}\t{len(rs)}\t{mean_std([r[3] for r in rs])}\t"
                  f"{mean_std([r[4] for r in rs])}\t{mean_std([r[7] for r in rs])}\n")
    if len(by_mode) > 1:
        buf.write("\nmode_a\tmode_b\tp_letter_ari\tp_word_ari\n")
        for a, b in itertools.combinations(by_mode, 2):
            pa = welch_p([r[3] for r in by_mode[a]], [r[3] for r in by_mode[b]])
            pw = welch_p([r[4] for r in by_mode[a]], [r[4] for r in by_mode[b]])
            buf.write(f"{a}\t{b}\t{pa:.3g}\t{pw:.3g}\n")
    return buf.getvalue()


def _read_trace(path: Path) -> list:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise UsageError(f"run directory {str(run_dir)!r} does not exist")
    labels_dir = args.labels_dir
    if labels_dir is None and (run_dir / "config.cfg").exists():
        labels_dir = cfgmod.load(cfgmod.RunConfig, run_dir / "config.cfg").labels_dir
    if not labels_dir:
        raise UsageError("no labels directory given (use --labels-dir)")
    evaluate(run_dir, labels_dir)
    print((run_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


# -------------------------------------------------------------------- plotdata

def word_tokens_from_labels(words: np.ndarray, flags=None) -> np.ndarray:
    """One word label per segment, split at boundary flags or label changes."""
    if flags is not None:
        ends = np.flatnonzero(flags)
    else:
        ends = np.append(np.flatnonzero(np.diff(words) != 0), words.size - 1)
    return words[ends]


def cmd_plotdata(args) -> int:
    src = Path(args.path)
    if not src.is_dir() or not any(src.iterdir()):
        raise UsageError(f"{src} is missing or empty")
    out = _output_dir(args.out or src)
    out.mkdir(parents=True, exist_ok=True)
    wrote = []
    trials = [(m, t, d) for m, t, d in
              ((m.name, int(d.name.split("_")[1]), d)
               for m in sorted(src.iterdir()) if m.is_dir() and m.name in cfgmod.PROSODY_MODES
               for d in sorted(m.glob("trial_*")))
              if (d / "trace.csv").exists()]
    if trials:
        with open(out / "ari_vs_sweep.tsv", "w") as fh:
            fh.write("mode\ttrial\tsweep\tletter_ari\tword_ari\n")
            for mode, trial, tdir in trials:
                for row in _read_trace(tdir / "trace.csv"):
                    fh.write(f"{mode}\t{trial}\t{row['sweep']}\t{row['letter_ari']}\t{row['word_ari']}\n")
        wrote.append("ari_vs_sweep.tsv")
    label_files = sorted((src / "labels").glob("*.lab")) if (src / "labels").is_dir() else []
    if label_files:
        tokens = []
        for p in label_files:
            _, w, f = io.read_labels(p)
            tokens.append(word_tokens_from_labels(w, f))
        table = rank_frequency(np.concatenate(tokens))
        with open(out / "rank_frequency.tsv", "w") as fh:
            fh.write("rank\tcount\tlog_rank\tlog_count\n")
            for r, c in table:
                fh.write(f"{r}\t{c}\t{np.log(r):.6f}\t{np.log(c):.6f}\n")
        wrote.append("rank_frequency.tsv")
        if table.shape[0] > 1:
            print(f"rank-frequency log-log slope {loglog_slope(table):.3f}")
    if not wrote:
        raise UsageError(f"{src} holds neither training trials nor a labelled dataset")
    print("wrote " + ", ".join(str(out / w) for w in wrote))
    return EXIT_OK


# ------------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phlm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="audio directory -> feature files")
    e.add_argument("--config", help="run config (feature extraction keys)")
    e.add_argument("--audio-dir")
    e.add_argument("--out", help="feature output directory (default: data_dir)")
    e.set_defaults(func=cmd_extract)

    g = sub.add_parser("generate", help="synthetic labelled corpus from a corpus spec")
    g.add_argument("spec")
    g.add_argument("--out", default="synthetic")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="run Gibbs chains for every mode and trial")
    t.add_argument("config")
    t.add_argument("--resume", action="store_true", help="continue from trial checkpoints")
    t.add_argument("--workers", type=int)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="score predictions against labels")
    v.add_argument("run_dir")
    v.add_argument("--labels-dir")
    v.set_defaults(func=cmd_eval)

    d = sub.add_parser("plotdata", help="export ARI traces or rank-frequency points")
    d.add_argument("path", help="run directory or dataset directory")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError, io.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TruncationError, ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
