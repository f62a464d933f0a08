"""Estimating a dialogue-act Markov chain and checking that it comes back.

We plant a chain, sample dialogues from it, then count transitions with
INIT and TERM states. Utterances carrying two acts contribute one count per
pair of acts, so the same code works on multi-label data.
"""

import numpy as np

from cda_crnn import gen_synthetic, render_transition_table, transition_matrix
from cda_crnn.corpus import planted_matrix

# A small help-desk flow: question, maybe details, an answer, then feedback.
planted = planted_matrix({
    "INIT": {"OQ": 0.85, "GG": 0.15},
    "GG": {"OQ": 0.7, "TERM": 0.3},
    "OQ": {"PA": 0.5, "FD": 0.3, "IR": 0.2},
    "IR": {"FD": 1.0},
    "FD": {"PA": 0.8, "FQ": 0.2},
    "FQ": {"PA": 1.0},
    "PA": {"PF": 0.45, "NF": 0.25, "TERM": 0.3},
    "NF": {"PA": 0.7, "TERM": 0.3},
    "PF": {"GG": 0.5, "TERM": 0.5},
})

corpus = gen_synthetic(500, (1, 40), planted, seed=5)
lengths = [len(d) for d in corpus]
print(f"{len(corpus)} dialogues, {corpus.num_utterances} utterances, lengths {min(lengths)}..{max(lengths)}")

estimated = transition_matrix(corpus)
print()
print(render_transition_table(estimated))

seen = ~estimated.empty_rows
print(f"\nlargest deviation from the planted chain: {np.abs(estimated.probs - planted)[seen].max():.3f}")
print("rows never visited:", [s for s, e in zip(estimated.from_states, estimated.empty_rows) if e])

# Now let a fifth of the utterances carry a second act and look at the INIT row.
multi = gen_synthetic(500, (1, 40), planted, seed=5, extra_label_rate=0.2)
init = transition_matrix(multi).probs[-1]
top = np.argsort(init)[::-1][:3]
print("\nwith 20% two-act utterances, top INIT successors:",
      ", ".join(f"{multi.taxonomy[j]} {100 * init[j]:.1f}%" for j in top))
