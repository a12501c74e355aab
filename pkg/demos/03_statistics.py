"""
Odds ratios, Fisher's exact test and pass-rate tables
=====================================================
"""

from fractions import Fraction
from math import comb

from disarmlab.report import PassRateTable
from disarmlab.stats import ConfusionMatrix, fisher_exact_two_sided, odds_ratio
from disarmlab.verifier import verdict

# A 2x2 table is (TP, FP, FN, TN): predicted-positive vs labeled-positive.
m = ConfusionMatrix(3, 1, 1, 3)
print(odds_ratio(m), fisher_exact_two_sided(m), float(Fraction(34, 70)))

# A zero cell makes the plain ratio infinite; 0.5 goes into every cell instead.
print(odds_ratio(ConfusionMatrix(5, 0, 5, 10)))

# Brute force for one table: sum every same-margin table at most as likely.
a, b, c, d = 8, 2, 1, 9
r1, c1, n = a + b, a + c, a + b + c + d
probs = {x: Fraction(comb(r1, x) * comb(n - r1, c1 - x), comb(n, c1)) for x in range(max(0, r1 + c1 - n), min(r1, c1) + 1)}
exact = sum(p for p in probs.values() if p <= probs[a])
print(float(exact), fisher_exact_two_sided(ConfusionMatrix(a, b, c, d)))

# Both criteria must hold: OR >= 3 and p < 0.05.
for or_value, p in [(2.9, 0.001), (3.0, 0.049), (50.0, 0.05)]:
    print(or_value, p, verdict("demo", True, None, or_value, p).status)

# Percentages are rounded half-up in decimal arithmetic, never through binary floats.
atomic = PassRateTable.from_counts("Atomic evidence", {"Russia/Telegram": (16, 26), "China/X": (8, 34)})
technique = PassRateTable.from_counts("Technique", {"Russia/Telegram": (9, 5), "China/X": (5, 9)})
for table in (atomic, technique):
    for row in (*table.rows, table.combined):
        print(f"{table.title:16s} {row.label:16s} {row.n:3d} {row.pass_rate:5.1f}%")
