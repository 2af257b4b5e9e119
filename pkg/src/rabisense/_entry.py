"""Console entry point.

BLAS threading is pinned before numpy loads so that block results are
independent of machine thread configuration; worker processes inherit the
same environment.
"""

import os
import sys

for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")


def main() -> None:
    from .cli.main import main as cli_main

    sys.exit(cli_main())


if __name__ == "__main__":
    main()
