"""
Binary sum tree for proportional sampling in O(log n).
"""
import numpy as np

from errors import EmptyBufferError


class SumTree:
    """
    Complete binary tree over a power-of-two number of leaves.

    nodes[1] is the root, the children of node i are 2i and 2i+1, and leaf j
    lives at nodes[capacity + j]. Every internal node holds the sum of its
    two children.

    Args:
        capacity (int): Minimum number of leaves; rounded up to a power of two
    """
    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("SumTree capacity must be positive.")
        self.capacity = 1 << (int(capacity) - 1).bit_length()
        self.nodes = np.zeros(2 * self.capacity, dtype=np.float64)

    @property
    def total(self):
        return float(self.nodes[1])

    @property
    def depth(self):
        return self.capacity.bit_length() - 1

    def leaves(self):
        return self.nodes[self.capacity:]

    def get(self, leaf):
        return float(self.nodes[self.capacity + leaf])

    def update(self, leaf, priority):
        """Set one leaf and refresh its ancestors."""
        if not 0 <= leaf < self.capacity:
            raise IndexError(f"leaf {leaf} out of range")
        if priority < 0:
            raise ValueError("priorities must be non-negative")
        i = self.capacity + int(leaf)
        self.nodes[i] = priority
        i //= 2
        while i >= 1:
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1]
            i //= 2

    def set_many(self, leaves, priorities):
        """Set several leaves, then rebuild the internal levels bottom-up."""
        priorities = np.asarray(priorities, dtype=np.float64)
        if np.any(priorities < 0):
            raise ValueError("priorities must be non-negative")
        self.nodes[self.capacity + np.asarray(leaves, dtype=np.int64)] = priorities
        self.rebuild()

    def rebuild(self):
        lo = self.capacity
        while lo > 1:
            hi = lo
            lo //= 2
            self.nodes[lo:hi] = self.nodes[2 * lo:2 * hi:2] + self.nodes[2 * lo + 1:2 * hi:2]

    def find(self, mass):
        """
        Leaves holding the given cumulative masses.

        A mass u selects the leaf j with prefix(j) <= u < prefix(j + 1), where
        prefix sums run over leaves in index order.

        Args:
            mass (numpy.ndarray): Values in [0, total)

        Returns:
            numpy.ndarray: Leaf indices, one per mass
        """
        u = np.array(mass, dtype=np.float64, ndmin=1)
        idx = np.ones(u.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * idx
            left_sum = self.nodes[left]
            go_right = u >= left_sum
            u = np.where(go_right, u - left_sum, u)
            idx = left + go_right
        return idx - self.capacity

    def sample(self, n, rng):
        """Draw n leaves with probability proportional to their priority."""
        total = self.total
        if total <= 0:
            raise EmptyBufferError("cannot sample from a tree with zero total priority")
        leaves = self.find(rng.random(n) * total)
        # float round-off can walk onto an empty right sibling
        empty = self.nodes[self.capacity + leaves] <= 0
        if np.any(empty):
            nonzero = np.flatnonzero(self.leaves() > 0)
            leaves[empty] = nonzero[np.searchsorted(nonzero, leaves[empty], side="right") - 1]
        return leaves
