"""Filtering candidate tuples into a validated attack set.

Image editing does not always produce the intended attribute, so every
candidate carries attribute-classifier softmax scores per value. A tuple
is kept only if each value's image is classified as that value with
confidence >= tau.
"""

import numpy as np

from caia import AttributeSpace, CandidateTuple, build_attack_set, filter_tuple

gender = AttributeSpace("gender", ("female", "male"))
rng = np.random.default_rng(3)


def make_candidate(i):
    """Simulate an editor that occasionally fails to flip the attribute."""
    scores = {}
    for idx, value in enumerate(gender.values):
        quality = rng.uniform(0.3, 3.0)  # how cleanly the edit landed
        logits = rng.normal(0.0, 0.8, size=2)
        logits[idx] += quality
        e = np.exp(logits)
        scores[value] = (e / e.sum()).tolist()
    images = {v: f"images/{i:04d}_{v}.png" for v in gender.values}
    return CandidateTuple(f"cand{i:04d}", images=images, scores=scores)


candidates = [make_candidate(i) for i in range(60)]

one = candidates[0]
decision = filter_tuple(one, tau=0.6, space=gender)
print(f"candidate {one.tuple_id}: accepted={decision.accepted} "
      f"failures={list(decision.failures)}")

for tau in (0.0, 0.6, 0.9):
    result = build_attack_set(iter(candidates), tau, target_count=30, space=gender)
    print(f"tau={tau:.1f}: accepted {len(result.attack_set):2d} of "
          f"{len(result.decisions)} examined"
          + ("  (under target)" if result.under_target else ""))

# The no-filter arm keeps the first N candidates regardless of scores.
bypass = build_attack_set(
    iter(candidates), 0.6, target_count=30, space=gender, bypass_filter=True
)
print(f"bypass:  accepted {len(bypass.attack_set)} unconditionally")
