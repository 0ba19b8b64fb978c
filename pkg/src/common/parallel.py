#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Helpers to run independent tasks (random starts, bootstrap samples, candidate steps, path
blocks) in parallel while keeping the results a pure function of the seed.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def spawn_generators(rng, count):
    """
    Derive independent random streams from a parent generator.

    Parameters
    ----------
    rng : numpy.random.Generator
        The parent generator. Exactly one draw is consumed from it.
    count : int
        The number of child streams.

    Returns
    -------
    list[numpy.random.Generator],
        The child generators, the i-th one being owned by task i.
    """

    root = np.random.SeedSequence(int(rng.integers(0, 2**63 - 1)))
    return [np.random.default_rng(child) for child in root.spawn(count)]


def parallel_map(func, items, workers=1):
    """
    Apply a function on every item, preserving the input order in the results.

    Parameters
    ----------
    func : callable
        A function of one argument.
    items : list
        The items to map.
    workers : int
        The number of worker threads. A value of 1 (or less) runs inline.

    Returns
    -------
    list,
        The results, in the order of the items.
    """

    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
