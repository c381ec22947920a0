"""Keep BLAS single-threaded for the test session.

The acceptance battery fans replicates out to worker processes; on small
machines a multi-threaded BLAS in every worker spin-waits the cores to death.
These variables must be set before numpy first loads, hence here.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
