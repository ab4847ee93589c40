"""Memorise eight synthetic molecules with the tiny preset, then caption them.

Takes around ten seconds on one core.
Run: python demos/03_tiny_training.py
"""

from molvit import Model, TrainConfig, build_vocab, evaluate, preset, train
from molvit.data import generate_sample
from molvit.data.render import AugmentParams

samples = [generate_sample(3, i, 64, AugmentParams()) for i in range(8)]
images = [img for img, _ in samples]
labels = [label for _, label in samples]
vocab = build_vocab(labels)
print(f"{len(labels)} samples, vocabulary of {len(vocab)} tokens")

model = Model.init(preset("tiny", len(vocab)), seed=0)
before = evaluate(model, images, labels, vocab, "cached", max_len=60)
print(f"untrained mean Levenshtein {before.mean_distance:.2f}")

result = train(model, images, labels, vocab, TrainConfig(epochs=300, lr=1e-3, batch_size=8, decay_epochs=0))
print(f"final loss {result.epoch_losses[-1]:.4f} after {result.steps} steps")

after = evaluate(model, images, labels, vocab, "cached")
print(f"trained mean Levenshtein {after.mean_distance:.2f}, exact matches {after.exact_match_rate:.0%}")
for label, pred in list(zip(after.labels, after.predictions))[:3]:
    print(f"  {label}\n  {pred}\n")
