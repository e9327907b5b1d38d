"""The scoring primitive: relative advantage of one attack tuple.

An attack tuple holds one image per attribute value, all edited from the
same base photo. For a fixed target class, whichever variant gets the
highest logit wins the gap to the runner-up; everyone else gets zero.
"""

import numpy as np

from caia import AttributeSpace, relative_advantage, tuple_advantage_matrix

hair = AttributeSpace("hair_color", ("black", "blond", "brown", "gray"))

# One class's logits on the four variants of a single tuple. The brown
# variant wins by 0.17 over black, so brown is credited 0.17.
logits = {"black": 2.18, "blond": 1.50, "brown": 2.35, "gray": 0.90}
adv = relative_advantage(logits, hair)
print("logits:   ", logits)
print("advantage:", dict(zip(hair.values, adv.round(4))))

# A tie yields no information: the gap is zero, the whole vector is zero.
tied = {"black": 1.0, "blond": 1.0, "brown": 0.3, "gray": 0.2}
print("tied max: ", relative_advantage(tied, hair))

# Raw logits may be negative; only differences matter.
shifted = {v: x - 10.0 for v, x in logits.items()}
print("shifted:  ", relative_advantage(shifted, hair))  # identical gaps

# One forward pass per image scores every class at once: rows of the
# (k, num_classes) matrix are per-variant logit vectors, and the advantage
# for all classes comes out in one shot.
rng = np.random.default_rng(0)
matrix = rng.normal(0.0, 2.0, size=(4, 6))
per_class = tuple_advantage_matrix(matrix)
print("\nper-class advantage rows (6 classes):")
print(per_class.round(3))
