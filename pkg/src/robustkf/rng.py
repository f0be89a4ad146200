"""Deterministic random-stream derivation.

All randomness in the package flows through Philox, a counter-based
generator with a documented, platform-independent algorithm.  Streams are
split with ``numpy.random.SeedSequence`` spawn keys, so a master seed plus
a small integer path always lands on the same stream:

    stream(seed)                  the root stream for a single task
    stream(seed, kind)            a purpose-labelled substream
    stream(seed, kind, index)     e.g. one stream per replication

``kind`` labels are small integers fixed below; replication ``index`` is
the replication number.  Equal (seed, path) means bit-identical draws on
every platform numpy supports.
"""

import numpy as np

# purpose labels for substreams; fixed forever, do not renumber
SIM = 1            # ideal trajectory simulation
CONTAMINATE = 2    # contamination hits and contaminating draws
ENGINE = 3         # Monte Carlo expectation engines
RISK = 4           # risk evaluation samples


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for the given seed and path.

    Parameters
    ----------
    seed : int
        Master seed (non-negative integer).
    *path : int
        Optional substream path, e.g. ``(SIM, replication_index)``.
    """
    if seed is None:
        raise ValueError("seed is required; wall-clock seeding is not supported")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))
