"""Hand-computed expectations for the bundled mini dataset.

Labels and detector outcomes were worked out by reading each snippet against
the rule definitions while the dataset was authored, before the analyzer
existed. The findings-oracle confusion matrix below is derived from these
sets by hand; tests must not recompute it from analyzer output.
"""

# Samples whose code carries at least one Defect-severity finding
# (KM-02..KM-05; KM-01 is Warning and does not count).
DEFECT_IDS = frozenset(
    {0, 1, 2, 3, 5, 6, 8, 9, 11, 12, 14, 16, 18, 20, 25, 28, 33}
)

# Gold labels: ids 0..21 buggy, 22..39 clean.
BUGGY_IDS = frozenset(range(0, 22))
CLEAN_IDS = frozenset(range(22, 40))

TOTAL = 40
BUGGY_COUNT = 22
CLEAN_COUNT = 18
BUGGY_RATIO = 22 / 40

# Findings-oracle outcome vs gold labels:
#   predicted buggy  = DEFECT_IDS
#   gold buggy       = BUGGY_IDS
ORACLE_TP = 14  # {0,1,2,3,5,6,8,9,11,12,14,16,18,20}
ORACLE_FP = 3   # {25,28,33}
ORACLE_FN = 8   # {4,7,10,13,15,17,19,21}
ORACLE_TN = 15
