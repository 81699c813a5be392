"""Rank-frequency slope of generated corpora for several Zipf exponents."""
import argparse

import numpy as np

from prosodic_hlm.datagen import CorpusSpec, generate, loglog_slope, rank_frequency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    ap.add_argument("--words", type=int, default=27)
    ap.add_argument("--sequences", type=int, default=1250)
    ap.add_argument("--table", action="store_true", help="print the rank/count rows")
    args = ap.parse_args()
    for alpha in args.alphas:
        spec = CorpusSpec(n_words=args.words, zipf_alpha=alpha, n_sequences=args.sequences,
                          words_per_sequence=(4, 4), mean_letter_duration=1.0, seed=11)
        _, truths, _ = generate(spec)
        tokens = np.concatenate([t.segmentation.word_labels for t in truths])
        table = rank_frequency(tokens)
        print(f"alpha {alpha}: {tokens.size} tokens, slope {loglog_slope(table):.3f}")
        if args.table:
            for rank, count in table:
                print(f"  {rank:3d} {count}")


if __name__ == "__main__":
    main()
