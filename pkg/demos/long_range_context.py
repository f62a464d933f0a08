"""Why recurrence matters: a label that depends on something said five turns ago.

Every dialogue opens with a question containing "alpha" or "beta" and ends
with the same text, "final reply". The last utterance is labelled PF after
alpha and NF after beta, so its words alone say nothing about its label.

CNN-CR only sees one neighbour on each side. The CRNN reads the whole
dialogue through its bidirectional recurrent layer and can carry the cue
forward. Takes about two minutes on one core.
"""

import numpy as np

from cda_crnn import ModelConfig, gen_long_range, hamming_score, train
from cda_crnn.models import backward, forward

train_set = gen_long_range(80, (6, 8), seed=1)
val_set = gen_long_range(30, (6, 8), seed=2)
test_set = gen_long_range(100, (6, 8), seed=3)

example = test_set.dialogues[0]
print("one test dialogue:")
for t, u in enumerate(example.utterances):
    print(f"  {t}  {u.text:<40} {sorted(u.labels)}")

models = {}
for variant in ("crnn_v3", "cnn_cr"):
    config = ModelConfig(variant=variant, embed_dim=16, hidden=32, filters=16, seed=7)
    model, report = train(train_set, val_set, config, epochs=150)
    models[variant] = model
    print(f"\n{variant}: best epoch {report.best_epoch}, {report.wall_time:.0f}s")

# The interesting number is accuracy on the last utterance only.
print("\nlast-utterance Hamming score on 100 test dialogues")
for variant, model in models.items():
    score = np.mean([hamming_score(d.utterances[-1].labels, model.predict(d)[-1]) for d in test_set])
    print(f"  {variant:<8} {score:.3f}")

# Sensitivity of the last prediction to the first utterance's embeddings.
# For CNN-CR this is exactly zero by construction; chance level is all it can reach.
print("\nmax |d y_last / d u_1| on the example dialogue")
for variant, model in models.items():
    probs, cache = forward(model.encode(example), model.config, model.params, "eval")
    seed_grad = np.zeros_like(probs)
    seed_grad[-1] = 1.0
    d_first = backward(seed_grad, cache, model.config, model.params, want_inputs=True)[1][0]
    print(f"  {variant:<8} {np.abs(d_first).max():.3g}")
