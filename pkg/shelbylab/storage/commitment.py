# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.storage.commitment` module implements Merkle-tree vector
commitments. Leaves are hashed as ``sha256(0x00 || leaf)`` and interior nodes
as ``sha256(0x01 || left || right)``; a node without a sibling is paired with
itself. Leaves share one width, and a short final leaf is zero-padded.

Inclusion proofs serialize to a length-prefixed binary layout, all integers
big-endian. Besides the leaf index and the path entries, the leaf and the path
each carry a 4-byte length prefix, which the decoder checks against the
bytes that follow:

====================  =========================================
8 bytes               leaf index
4 bytes               leaf length ``L``
``L`` bytes           leaf
4 bytes               path length ``P``
``P`` x 33 bytes      side (1 byte) followed by sibling hash (32 bytes)
====================  =========================================

where ``side`` is the bit of the leaf index at that level: 0 when the running
node is a left child, 1 when it is a right child.

.. autoclass:: MerkleCommitment
   :members:

.. autoclass:: InclusionProof
   :members:

.. autoclass:: MerkleTree
   :members:

.. autofunction:: commit

.. autofunction:: open_proof

.. autofunction:: verify

.. autofunction:: serialize_proof

.. autofunction:: deserialize_proof

.. autofunction:: split_samples
"""

import struct
import hashlib
from dataclasses import dataclass, field

from ..exceptions import ParameterError, FormatError

import logging
logger = logging.getLogger(__name__)


LEAF_PREFIX = b'\x00'
NODE_PREFIX = b'\x01'
HASH_SIZE = 32


def hash_leaf(leaf):
    return hashlib.sha256(LEAF_PREFIX + leaf).digest()

def hash_node(left, right):
    return hashlib.sha256(NODE_PREFIX + left + right).digest()

def _depth(leaf_count):
    # ceil(log2(leaf_count)) without floating point
    return (leaf_count - 1).bit_length()


@dataclass(frozen=True)
class MerkleCommitment:
    """
    The root of a Merkle tree with the shape needed to check proofs against
    it.
    """
    root: bytes
    leaf_count: int
    leaf_width: int

    def to_dict(self):
        return {'root': self.root.hex(), 'leaf_count': self.leaf_count, 'leaf_width': self.leaf_width}

    @classmethod
    def from_dict(cls, d):
        return cls(bytes.fromhex(d['root']), int(d['leaf_count']), int(d['leaf_width']))


@dataclass(frozen=True)
class InclusionProof:
    """
    A leaf with the sibling hashes from the leaf up to the root. ``path`` is
    a tuple of ``(sibling, side)`` pairs.
    """
    leaf_index: int
    leaf_bytes: bytes = field(repr=False)
    path: tuple = field(repr=False)


class MerkleTree():
    """
    A Merkle tree that keeps every level, so that any number of proofs can be
    opened without rehashing.

    >>> tree = MerkleTree(split_samples(chunk_payload, 1024))
    >>> proof = tree.open(3)
    >>> verify(tree.commitment, proof)
    True
    """

    def __init__(self, leaves):
        leaves = [bytes(leaf) for leaf in leaves]
        if not leaves:
            raise ParameterError('cannot commit to an empty list of leaves')
        width = len(leaves[0])
        if width == 0:
            raise ParameterError('leaves must not be empty')
        for i, leaf in enumerate(leaves[:-1]):
            if len(leaf) != width:
                raise ParameterError(f'leaf {i} has width {len(leaf)}, expected {width}')
        if len(leaves[-1]) > width:
            raise ParameterError(f'final leaf has width {len(leaves[-1])}, more than {width}')
        leaves[-1] = leaves[-1].ljust(width, b'\x00')

        self.leaves = leaves
        self.levels = [[hash_leaf(leaf) for leaf in leaves]]
        while len(self.levels[-1]) > 1:
            level = self.levels[-1]
            self.levels.append([
                hash_node(level[i], level[i + 1] if i + 1 < len(level) else level[i])
                for i in range(0, len(level), 2)])
        self.commitment = MerkleCommitment(self.levels[-1][0], len(leaves), width)

    @property
    def root(self):
        return self.commitment.root

    def open(self, index):
        """
        The inclusion proof for leaf ``index``.
        """
        if not 0 <= index < len(self.leaves):
            raise ParameterError(f'leaf index {index} is outside [0, {len(self.leaves)})')
        path = []
        position = index
        for level in self.levels[:-1]:
            sibling = position ^ 1
            if sibling >= len(level):
                sibling = position
            path.append((level[sibling], position & 1))
            position //= 2
        return InclusionProof(index, self.leaves[index], tuple(path))


def commit(leaves):
    """
    Commit to a non-empty list of leaves.
    """
    return MerkleTree(leaves).commitment

def open_proof(leaves, index):
    """
    The inclusion proof for ``leaves[index]``.
    """
    return MerkleTree(leaves).open(index)

def verify(commitment, proof):
    """
    Check ``proof`` against ``commitment``. Never raises; anything malformed
    simply fails to verify.
    """
    try:
        index = proof.leaf_index
        if not 0 <= index < commitment.leaf_count:
            return False
        if len(proof.leaf_bytes) != commitment.leaf_width:
            return False
        if len(proof.path) != _depth(commitment.leaf_count):
            return False
        node = hash_leaf(bytes(proof.leaf_bytes))
        for level, (sibling, side) in enumerate(proof.path):
            if side != (index >> level) & 1 or len(sibling) != HASH_SIZE:
                return False
            node = hash_node(sibling, node) if side else hash_node(node, sibling)
        return node == commitment.root
    except (AttributeError, TypeError, ValueError):
        return False

def serialize_proof(proof):
    """
    Encode a proof in the binary layout described above.
    """
    parts = [struct.pack('>QI', proof.leaf_index, len(proof.leaf_bytes)),
             bytes(proof.leaf_bytes),
             struct.pack('>I', len(proof.path))]
    for sibling, side in proof.path:
        parts.append(struct.pack('>B', side) + bytes(sibling))
    return b''.join(parts)

def deserialize_proof(data):
    """
    Decode a proof, raising :class:`FormatError
    <shelbylab.exceptions.FormatError>` if ``data`` is truncated or has
    trailing bytes.
    """
    data = bytes(data)
    try:
        index, length = struct.unpack_from('>QI', data, 0)
        offset = 12
        leaf = data[offset:offset + length]
        if len(leaf) != length:
            raise FormatError('truncated leaf')
        offset += length
        (count,) = struct.unpack_from('>I', data, offset)
        offset += 4
    except struct.error as e:
        raise FormatError(f'malformed proof header: {e}')
    if len(data) != offset + count * (1 + HASH_SIZE):
        raise FormatError(f'expected {count} path entries in {len(data) - offset} bytes')
    path = []
    for _ in range(count):
        side = data[offset]
        if side not in (0, 1):
            raise FormatError(f'path side must be 0 or 1, got {side}')
        path.append((data[offset + 1:offset + 1 + HASH_SIZE], side))
        offset += 1 + HASH_SIZE
    return InclusionProof(index, leaf, tuple(path))

def split_samples(payload, sample_size):
    """
    Split a chunk payload into samples of ``sample_size`` bytes; the last may
    be shorter.
    """
    if sample_size <= 0:
        raise ParameterError(f'sample size must be positive, got {sample_size}')
    payload = bytes(payload)
    return [payload[i:i + sample_size] for i in range(0, len(payload), sample_size)]
