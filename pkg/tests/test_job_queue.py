import math
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from services.job_queue import replica_seed, run_replicas


def test_replica_seed_is_stable_and_distinct():
    assert replica_seed(7, 0) == replica_seed(7, 0)
    seeds = {replica_seed(7, r) for r in range(100)}
    assert len(seeds) == 100
    assert replica_seed(7, 0) != replica_seed(8, 0)
    assert all(0 <= s < 2**63 for s in seeds)


def test_inline_and_pool_preserve_order():
    payloads = [-1, -2, 3, -4, 5]
    assert run_replicas(abs, payloads, workers=1) == [1, 2, 3, 4, 5]
    assert run_replicas(abs, payloads, workers=2) == [1, 2, 3, 4, 5]


def test_empty_payloads():
    assert run_replicas(abs, [], workers=4) == []


def test_errors_propagate():
    with pytest.raises(ValueError):
        run_replicas(math.sqrt, [4.0, -1.0], workers=1)
    with pytest.raises(ValueError):
        run_replicas(math.sqrt, [4.0, -1.0], workers=2)
