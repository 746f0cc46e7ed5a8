"""Reference Welch t-test values frozen into metrics_test.cpp (scipy.stats)."""
from scipy import stats

a = [1.0, 2.5, 3.1, 4.7, 2.2]
b = [2.9, 3.8, 5.5, 4.1]
for eq in (False, True):
    r = stats.ttest_ind(a, b, equal_var=eq)
    print("equal_var" if eq else "welch", repr(float(r.statistic)), repr(float(r.pvalue)), repr(float(r.df)))
