"""Hand-designed matrices shared by the unit and acceptance tests."""

import numpy as np

from conftest import make_matrix

N_LANGUAGES = 400

# (first known language, known count, true-language lists per feature)
# Groups are offset by 40 so two groups share at most 220 known languages and
# every cross-group pair fails the 250 threshold.
GROUPS = [
    # f0 true on 30, f1 on 30, 15 shared: both directions sit exactly on 250 / 15 / 0.5
    (0, 250, [range(0, 30), range(15, 45)]),
    # same counts with one fewer known language
    (40, 249, [range(0, 30), range(15, 45)]),
    # joint true count 14
    (80, 260, [range(0, 28), range(14, 28)]),
    # f6 -> f7 at 15/31, f7 -> f6 at 15/35; f8 covers both and more
    (120, 260, [range(0, 31), range(16, 51), list(range(0, 51)) + list(range(100, 149))]),
]

# Ordered (implicant, implicand) pairs that pass FilterSpec(250, 15, 0.5),
# derived by hand from the counts above.
EXPECTED_PAIRS = [(0, 1), (1, 0), (6, 8), (7, 8)]


def filter_fixture():
    cols = []
    for start, size, trues in GROUPS:
        for true in trues:
            col = np.full(N_LANGUAGES, -1, dtype=np.int8)
            col[start:start + size] = 0
            col[[start + i for i in true]] = 1
            cols.append(col)
    return make_matrix(np.stack(cols, axis=1))


def count_pairs_by_hand(cells, min_known, min_joint, min_frac):
    """Plain loops over languages; independent of the vectorised counter."""
    n, f = cells.shape
    out = []
    for a in range(f):
        for b in range(f):
            if a == b:
                continue
            known = joint = ante = 0
            for row in cells:
                if row[a] != -1 and row[b] != -1:
                    known += 1
                    if row[a] == 1:
                        ante += 1
                        joint += row[b] == 1
            if known >= min_known and joint >= min_joint and joint >= ante * min_frac:
                out.append((a, b))
    return out
