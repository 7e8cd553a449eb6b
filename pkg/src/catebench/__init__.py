"""catebench: sample splitting, cross-fitting and averaging for CATE meta-learners.

A simulation benchmark: four meta-learners (T, DR, R, X) with a stacked
ensemble of from-scratch base learners, twelve splitting/averaging
strategies, twelve data-generating scenarios, and a Monte Carlo driver
reporting mean MSE, mean |Bias|, mean SD and median MSE on a fixed test
set.  Exposed as a Python library, an HTTP service and a CLI.
"""

__version__ = "0.1.0"
