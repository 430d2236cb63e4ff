# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.storage.prep` module implements the client-side data
preparation pipeline: a blob is partitioned into fixed-size chunksets (the
last one zero-padded), every chunkset is erasure coded into ``n`` chunks,
every chunk is committed to by a Merkle tree over its samples, and the blob
is committed to by a Merkle tree over the ordered list of chunk roots.

Prepared blobs can be saved to a directory as one file per chunk plus a JSON
manifest, and read back with any chunks missing, as long as ``k`` chunks of
every chunkset survive.

.. autoclass:: Blob
   :members:

.. autoclass:: ChunksetRecord
   :members:

.. autoclass:: PreparedBlob
   :members:

.. autofunction:: prepare

.. autofunction:: reassemble

.. autofunction:: save_prepared

.. autofunction:: load_prepared
"""

import os
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..coding.codec import CodingParams, CodedChunk, encode, decode
from ..exceptions import ParameterError, RangeError, FormatError
from .commitment import MerkleTree, MerkleCommitment, commit, split_samples

import logging
logger = logging.getLogger(__name__)


MANIFEST_SCHEMA_VERSION = 1
MANIFEST_FILE = 'manifest.json'


@dataclass(frozen=True)
class Blob:
    """
    A client object to be stored for ``paid_duration`` epochs.
    """
    id: str
    data: bytes = field(repr=False)
    paid_duration: int = 30


@dataclass
class ChunksetRecord:
    """
    The coded chunks of one chunkset with their commitments. ``trees`` holds
    the sample-level Merkle tree of each chunk, for opening audit proofs.
    """
    chunkset_index: int
    chunks: list = field(repr=False)
    chunk_roots: list = field(repr=False)
    trees: list = field(default=None, repr=False, compare=False)


@dataclass
class PreparedBlob:
    """
    A blob after partitioning, coding and commitment.
    """
    blob_id: str
    params: CodingParams
    chunkset_size: int
    sample_size: int
    original_length: int
    chunksets: list = field(repr=False)
    blob_root: MerkleCommitment = None

    @property
    def num_chunksets(self):
        return len(self.chunksets)

    @property
    def chunk_size(self):
        return self.chunkset_size // self.params.k

    @property
    def samples_per_chunk(self):
        return -(-self.chunk_size // self.sample_size)

    def chunk_root(self, chunkset_index, chunk_index):
        return self.chunksets[chunkset_index].chunk_roots[chunk_index]

    def to_manifest(self):
        """
        A JSON-serializable description of the blob: parameters, lengths and
        every root.
        """
        return {
            'schema_version': MANIFEST_SCHEMA_VERSION,
            'blob_id': self.blob_id,
            'params': {'k': self.params.k, 'm': self.params.m, 'd': self.params.d,
                       'scheme': self.params.scheme.value},
            'chunkset_size': self.chunkset_size,
            'sample_size': self.sample_size,
            'original_length': self.original_length,
            'num_chunksets': self.num_chunksets,
            'blob_root': self.blob_root.to_dict(),
            'chunksets': [
                {'index': record.chunkset_index,
                 'chunk_roots': [root.to_dict() for root in record.chunk_roots]}
                for record in self.chunksets],
        }


def _chunk_root_leaves(chunksets):
    return [root.root for record in chunksets for root in record.chunk_roots]

def _prepare_chunkset(index, payload, params, sample_size):
    chunks = encode(payload, params)
    trees = [MerkleTree(split_samples(chunk.payload, sample_size)) for chunk in chunks]
    return ChunksetRecord(index, chunks, [tree.commitment for tree in trees], trees)

def prepare(blob, params, chunkset_size, sample_size=1024, workers=None):
    """
    Partition, code and commit a blob.

    ``chunkset_size`` must be a multiple of ``k * alpha``. With ``workers``
    greater than 1, chunksets are prepared in a thread pool; the result is in
    chunkset order either way.
    """
    data = bytes(blob.data)
    if len(data) == 0:
        raise ParameterError(f'blob {blob.id} is empty')
    granularity = params.k * params.alpha
    if chunkset_size <= 0 or chunkset_size % granularity != 0:
        raise ParameterError(f'chunkset size {chunkset_size} is not a positive multiple of k*alpha = {granularity}')

    num_chunksets = -(-len(data) // chunkset_size)
    payloads = [data[i * chunkset_size:(i + 1) * chunkset_size].ljust(chunkset_size, b'\x00')
                for i in range(num_chunksets)]
    logger.debug(f'Preparing blob {blob.id}: {len(data)} bytes in {num_chunksets} chunksets of {params}')

    if workers is not None and workers > 1 and num_chunksets > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunksets = list(pool.map(
                lambda args: _prepare_chunkset(*args, params, sample_size),
                enumerate(payloads)))
    else:
        chunksets = [_prepare_chunkset(i, payload, params, sample_size)
                     for i, payload in enumerate(payloads)]

    return PreparedBlob(
        blob_id=blob.id,
        params=params,
        chunkset_size=chunkset_size,
        sample_size=sample_size,
        original_length=len(data),
        chunksets=chunksets,
        blob_root=commit(_chunk_root_leaves(chunksets)),
    )

def reassemble(prepared, byte_range=None, lost=()):
    """
    Return ``length`` bytes of the original blob starting at ``offset``,
    where ``byte_range = (offset, length)`` defaults to the whole blob.

    Only the chunksets that intersect the range are decoded. Chunk indices in
    ``lost`` are withheld from the decoder, as are chunks missing from a
    loaded blob.
    """
    if byte_range is None:
        byte_range = (0, prepared.original_length)
    offset, length = byte_range
    if offset < 0 or length < 0 or offset + length > prepared.original_length:
        raise RangeError(f'range ({offset}, {length}) is outside the blob of {prepared.original_length} bytes')
    if length == 0:
        return b''

    size = prepared.chunkset_size
    first, last = offset // size, (offset + length - 1) // size
    lost = set(lost)
    parts = []
    for record in prepared.chunksets[first:last + 1]:
        available = [chunk for chunk in record.chunks
                     if chunk is not None and chunk.index not in lost]
        parts.append(decode(available, prepared.params))
    start = offset - first * size
    return b''.join(parts)[start:start + length]

def save_prepared(prepared, directory, indent=2):
    """
    Write every chunk as ``cs<i>-c<j>.bin`` and the manifest as
    ``manifest.json`` into ``directory``.
    """
    os.makedirs(directory, exist_ok=True)
    for record in prepared.chunksets:
        for chunk in record.chunks:
            if chunk is None:
                continue
            path = os.path.join(directory, f'cs{record.chunkset_index}-c{chunk.index}.bin')
            with open(path, 'wb') as f:
                f.write(chunk.payload)
    manifest_file = os.path.join(directory, MANIFEST_FILE)
    with open(manifest_file, 'w') as f:
        json.dump(prepared.to_manifest(), f, indent=indent, sort_keys=True)
    logger.info(f'Wrote {prepared.num_chunksets * prepared.params.n} chunks and manifest to {directory}')
    return manifest_file

def load_prepared(directory):
    """
    Read a blob written by :func:`save_prepared`. Chunk files that are
    missing or whose Merkle root no longer matches the manifest are left out,
    with a warning.
    """
    with open(os.path.join(directory, MANIFEST_FILE)) as f:
        manifest = json.load(f)
    if manifest.get('schema_version') != MANIFEST_SCHEMA_VERSION:
        raise FormatError(f'unsupported manifest schema version: {manifest.get("schema_version")}')

    params = CodingParams(**manifest['params'])
    chunksets = []
    for entry in manifest['chunksets']:
        roots = [MerkleCommitment.from_dict(d) for d in entry['chunk_roots']]
        chunks = []
        for j, root in enumerate(roots):
            path = os.path.join(directory, f'cs{entry["index"]}-c{j}.bin')
            if not os.path.exists(path):
                logger.warning(f'Chunk {j} of chunkset {entry["index"]} is missing')
                chunks.append(None)
                continue
            with open(path, 'rb') as f:
                payload = f.read()
            if commit(split_samples(payload, manifest['sample_size'])) != root:
                logger.warning(f'Chunk {j} of chunkset {entry["index"]} does not match its root, ignoring it')
                chunks.append(None)
                continue
            chunks.append(CodedChunk(j, payload, params.alpha))
        chunksets.append(ChunksetRecord(entry['index'], chunks, roots))

    prepared = PreparedBlob(
        blob_id=manifest['blob_id'],
        params=params,
        chunkset_size=manifest['chunkset_size'],
        sample_size=manifest['sample_size'],
        original_length=manifest['original_length'],
        chunksets=chunksets,
        blob_root=MerkleCommitment.from_dict(manifest['blob_root']),
    )
    if commit(_chunk_root_leaves(chunksets)) != prepared.blob_root:
        raise FormatError('chunk roots in the manifest do not match the blob root')
    return prepared
