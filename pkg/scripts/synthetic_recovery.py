"""Letter and word ARI on a synthetic corpus, per seed and per prosody mode.

    python3 scripts/synthetic_recovery.py --seeds 5 --sweeps 100 --modes none
    python3 scripts/synthetic_recovery.py --separation 2 --seeds 10 --modes both none
"""
import argparse
import time

import numpy as np

from prosodic_hlm import gibbs
from prosodic_hlm.cli import mean_std, welch_p
from prosodic_hlm.config import PROSODY_MODES
from prosodic_hlm.datagen import CorpusSpec, generate
from prosodic_hlm.model import Hyperparameters


def run_mode(spec, mode, seeds, sweeps, fresh_words):
    seqs, truths, _ = generate(spec)
    seqs = [s.with_prosody_channels(PROSODY_MODES[mode]) for s in seqs]
    hp = Hyperparameters.defaults(spec.spectral_dim, seqs[0].prosody.shape[1],
                                  fresh_words=fresh_words)
    labels = [(t.letter_labels, t.word_labels) for t in truths]
    scores = []
    for seed in seeds:
        t0 = time.perf_counter()
        last = gibbs.run(seqs, hp, seed, sweeps, labels=labels).trace[-1]
        scores.append((last.letter_ari, last.word_ari))
        print(f"{mode:>5} seed {seed:2d}: letter ARI {last.letter_ari:.3f}"
              f"  word ARI {last.word_ari:.3f}  ({time.perf_counter() - t0:.0f}s)", flush=True)
    return np.array(scores)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--separation", type=float, default=5.0)
    ap.add_argument("--letter-duration", type=float, default=20.0)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=100)
    ap.add_argument("--fresh-words", type=int, default=10)
    ap.add_argument("--corpus-seed", type=int, default=0)
    ap.add_argument("--modes", nargs="+", default=["none"],
                    choices=["none", "f0", "pause", "both"])
    args = ap.parse_args()
    spec = CorpusSpec(emission_separation=args.separation, words_per_sequence=(2, 3),
                      mean_letter_duration=args.letter_duration, seed=args.corpus_seed)
    results = {m: run_mode(spec, m, range(args.seeds), args.sweeps, args.fresh_words)
               for m in args.modes}
    print()
    for mode, s in results.items():
        print(f"{mode:>5}: letter ARI {mean_std(s[:, 0])} (median {np.median(s[:, 0]):.3f})"
              f"  word ARI {mean_std(s[:, 1])} (median {np.median(s[:, 1]):.3f})")
    if "none" in results:
        for mode, s in results.items():
            if mode == "none":
                continue
            base = results["none"]
            print(f"{mode} vs none: word gain {s[:, 1].mean() - base[:, 1].mean():+.3f}"
                  f" (one-sided p {welch_p(s[:, 1], base[:, 1], 'greater'):.4f}),"
                  f" letter p {welch_p(s[:, 0], base[:, 0]):.4f}")


if __name__ == "__main__":
    main()
