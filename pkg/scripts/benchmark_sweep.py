"""Wall time of Gibbs sweeps on 60 sequences of about 200 frames."""
import argparse
import time

from prosodic_hlm import gibbs
from prosodic_hlm.datagen import CorpusSpec, generate
from prosodic_hlm.model import Hyperparameters


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sweeps", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--fresh-words", type=int, default=10)
    args = ap.parse_args()
    spec = CorpusSpec(n_words=10, n_letters=10, n_sequences=60, words_per_sequence=(3, 4),
                      mean_letter_duration=20.0, seed=5)
    seqs, _, _ = generate(spec)
    hp = Hyperparameters.defaults(spec.spectral_dim, seqs[0].prosody.shape[1], max_letters=10,
                                  max_words=10, max_word_duration=90,
                                  fresh_words=args.fresh_words)
    print(f"{len(seqs)} sequences, {sum(s.T for s in seqs)} frames")
    state = gibbs.init(seqs, hp, 0, args.workers)
    times = []
    for i in range(args.sweeps + 1):
        t0 = time.perf_counter()
        state = gibbs.sweep(state, seqs, hp, workers=args.workers)
        if i:  # the first sweep includes kernel compilation
            times.append(time.perf_counter() - t0)
            print(f"sweep {i}: {times[-1]:.2f}s", flush=True)
    mean = sum(times) / len(times)
    print(f"mean {mean:.2f}s per sweep, 100 sweeps about {100 * mean / 60:.1f} min")


if __name__ == "__main__":
    main()
