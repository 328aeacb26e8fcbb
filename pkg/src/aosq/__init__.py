"""Precision- and recall-target neighbor queries over a cheap proxy and an expensive oracle.

Submodules:

* :mod:`aosq.core` -- objects, proxy index, queries, answers, oracle ledger
* :mod:`aosq.pbd` -- Poisson-binomial count distributions and success probabilities
* :mod:`aosq.pqa` -- zero-call answers under a known noise law
* :mod:`aosq.pqe` -- the same with the noise scale estimated from probes
* :mod:`aosq.coreset` -- sample plans, CSC and CSE
* :mod:`aosq.refcheck` -- brute-force and Monte-Carlo reference oracles
* :mod:`aosq.harness` -- synthetic data, experiments, reports and the CLI
"""

from .core import (
    Answer,
    Dataset,
    ObjectRecord,
    OracleLedger,
    Query,
    QueryKind,
    ValidationError,
    build_index,
    core_set,
    from_arrays,
    measure,
    prefix,
)

__version__ = "0.1.0"

__all__ = [
    "Answer", "Dataset", "ObjectRecord", "OracleLedger", "Query", "QueryKind",
    "ValidationError", "build_index", "core_set", "from_arrays", "measure", "prefix",
]
