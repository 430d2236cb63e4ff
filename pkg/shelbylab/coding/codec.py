# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.coding.codec` module implements the erasure codes used to
turn a chunkset into ``n`` chunks: a systematic Reed-Solomon code, and a
coupled-layer Clay code that repairs a single lost chunk while downloading
only a fraction of every helper.

Both schemes are built on the same systematic MDS code over GF(2^8), whose
generator is ``[I | P]`` with a Cauchy matrix ``P``, so any ``k`` of the ``n``
columns are invertible.

A Clay code with ``n = q*t`` nodes stores ``alpha = q**t`` rows ("layers") per
chunk. Node ``i`` sits at ``(x, y) = (i % q, i // q)`` and layer ``z`` has the
base-``q`` digits ``z_0 .. z_{t-1}``. A symbol ``(x, y, z)`` with
``z_y == x`` is unpaired; any other symbol is paired with
``(z_y, y, z')``, where ``z'`` is ``z`` with digit ``y`` replaced by ``x``.
Stored (coupled) symbols ``C`` and uncoupled symbols ``U`` are related
pairwise by the symmetric transform ``[[1, GAMMA], [GAMMA, 1]]``, and every
layer of ``U`` is a codeword of the MDS code.

.. autoclass:: Scheme
   :members:

.. autoclass:: CodingParams
   :members:

.. autoclass:: CodedChunk
   :members:

.. autoclass:: RepairReport
   :members:

.. autoclass:: ChunkReader
   :members:

.. autofunction:: encode

.. autofunction:: decode

.. autofunction:: repair

.. autofunction:: repair_bandwidth
"""

import enum
import functools
from dataclasses import dataclass, field
import numpy as np

from .gf256 import gf_inv, gf_mul, gf_scale, gf_matmul, gf_invert_matrix, cauchy_matrix
from ..exceptions import ParameterError, InsufficientShardsError, FormatError, IrrecoverableError

import logging
logger = logging.getLogger(__name__)


# coupling coefficient; any value other than 0 and 1 keeps the pairwise
# transform invertible in characteristic 2
GAMMA = 2
_GAMMA_INV = gf_inv(GAMMA)
_ONE_PLUS_GAMMA_SQ = 1 ^ gf_mul(GAMMA, GAMMA)
_ONE_PLUS_GAMMA_SQ_INV = gf_inv(_ONE_PLUS_GAMMA_SQ)


class Scheme(enum.Enum):
    """
    The erasure-coding scheme of a chunkset.
    """
    REED_SOLOMON = 'ReedSolomon'
    CLAY = 'Clay'


@dataclass(frozen=True)
class CodingParams:
    """
    Erasure-coding configuration: ``k`` data chunks, ``m`` parity chunks and
    ``d`` repair helpers, which defaults to ``n - 1``.

    Clay codes need ``d = n - 1`` and ``q = d - k + 1`` dividing ``n``.
    """
    k: int
    m: int
    d: int = None
    scheme: Scheme = Scheme.CLAY

    def __post_init__(self):
        object.__setattr__(self, 'scheme', Scheme(self.scheme))
        if self.d is None:
            object.__setattr__(self, 'd', self.k + self.m - 1)

        if self.k < 1 or self.m < 1:
            raise ParameterError(f'need k >= 1 and n > k, got k={self.k} m={self.m}')
        if self.n > 256:
            raise ParameterError(f'at most 256 chunks are supported over GF(2^8), got n={self.n}')
        if not self.k <= self.d <= self.n - 1:
            raise ParameterError(f'need k <= d <= n-1, got k={self.k} d={self.d} n={self.n}')
        if self.scheme is Scheme.CLAY:
            if self.d != self.n - 1:
                raise ParameterError(f'Clay codes are supported with d = n-1 helpers only, got d={self.d} n={self.n}')
            if self.n % self.q != 0:
                raise ParameterError(f'Clay codes need q = d-k+1 to divide n, got q={self.q} n={self.n}')

    @property
    def n(self):
        """Total number of chunks."""
        return self.k + self.m

    @property
    def q(self):
        return self.d - self.k + 1

    @property
    def t(self):
        return self.n // self.q

    @property
    def alpha(self):
        """Sub-packetization: the number of rows in every chunk."""
        if self.scheme is Scheme.CLAY:
            return self.q ** self.t
        return 1

    def __str__(self):
        return f'{self.scheme.value}({self.k},{self.m},d={self.d})'


CLAY_4_2 = CodingParams(4, 2, 5, Scheme.CLAY)
CLAY_8_4 = CodingParams(8, 4, 11, Scheme.CLAY)
RS_8_4 = CodingParams(8, 4, scheme=Scheme.REED_SOLOMON)
RS_10_6 = CodingParams(10, 6, scheme=Scheme.REED_SOLOMON)


@dataclass(frozen=True)
class CodedChunk:
    """
    One of the ``n`` chunks of a chunkset. The payload holds ``alpha`` rows of
    equal width, stored one after another.
    """
    index: int
    payload: bytes = field(repr=False)
    alpha: int = 1

    @property
    def size(self):
        return len(self.payload)

    @property
    def row_width(self):
        return len(self.payload) // self.alpha

    def rows(self):
        """The payload as an ``(alpha, row_width)`` uint8 array."""
        return np.frombuffer(self.payload, dtype=np.uint8).reshape(self.alpha, -1)


@dataclass(frozen=True)
class RepairReport:
    """
    What a repair downloaded. ``method`` is ``'clay'`` for the
    bandwidth-optimal path and ``'mds'`` for decode-then-re-encode.
    """
    repaired_index: int
    bytes_downloaded: int
    helpers_used: list
    rs_equivalent_bytes: int
    method: str = 'clay'

    @property
    def savings(self):
        """Fraction of bandwidth saved relative to a Reed-Solomon repair."""
        return 1 - self.bytes_downloaded / self.rs_equivalent_bytes


class ChunkReader():
    """
    Read access to a helper chunk that counts the bytes actually taken from
    it.
    """

    def __init__(self, chunk):
        self.chunk = chunk
        self.bytes_read = 0
        self._rows = chunk.rows()

    def read_rows(self, rows):
        out = self._rows[list(rows)]
        self.bytes_read += out.nbytes
        return out

    def read_all(self):
        self.bytes_read += self._rows.nbytes
        return self._rows


@functools.lru_cache(maxsize=None)
def _generator(k, m):
    return np.concatenate([np.eye(k, dtype=np.uint8), cauchy_matrix(k, m)], axis=1)

@functools.lru_cache(maxsize=4096)
def _recovery_matrix(k, m, known, erased):
    """
    The ``(len(erased), k)`` matrix mapping the symbols of the ``known``
    columns of a codeword to those of the ``erased`` columns.
    """
    g = _generator(k, m)
    inv = gf_invert_matrix(g[:, list(known)])
    matrix = gf_matmul(inv, g[:, list(erased)]).T.copy()
    matrix.setflags(write=False)
    return matrix

def _digit(z, y, q):
    return (z // q ** y) % q

def _partner(i, z, q):
    """
    The node and layer paired with symbol ``(i, z)``, or None if the symbol is
    unpaired.
    """
    x, y = i % q, i // q
    z_y = _digit(z, y, q)
    if z_y == x:
        return None
    return z_y + q * y, z + (x - z_y) * q ** y

def _split_rows(data, rows, params):
    data = np.frombuffer(bytes(data), dtype=np.uint8)
    if len(data) == 0 or len(data) % (rows * params.alpha) != 0:
        raise ParameterError(f'data length {len(data)} is not a positive multiple of k*alpha = {rows * params.alpha}')
    return data.reshape(rows, params.alpha, -1)

def _fill_mds(params, symbols, known, erased):
    r = _recovery_matrix(params.k, params.m, tuple(known), tuple(erased))
    symbols[list(erased)] = gf_matmul(r, symbols[list(known)])

def _fill_clay(params, coupled, known, erased):
    """
    Recover the coupled symbols of the ``erased`` nodes in place, working
    through layers in order of how many erased nodes are unpaired in them.
    """
    q, alpha = params.q, params.alpha
    erased_set = set(erased)
    r = _recovery_matrix(params.k, params.m, tuple(known), tuple(erased))
    uncoupled = np.zeros_like(coupled)

    scores = [sum(1 for e in erased if _digit(z, e // q, q) == e % q) for z in range(alpha)]
    for score in sorted(set(scores)):
        layers = [z for z in range(alpha) if scores[z] == score]

        for z in layers:
            for i in known:
                pair = _partner(i, z, q)
                if pair is None:
                    uncoupled[i, z] = coupled[i, z]
                    continue
                j, z_pair = pair
                if j in erased_set:
                    # the partner's uncoupled symbol sits in a layer with a
                    # lower score, so it is already known
                    uncoupled[i, z] = (gf_scale(_ONE_PLUS_GAMMA_SQ, coupled[i, z])
                                       ^ gf_scale(GAMMA, uncoupled[j, z_pair]))
                else:
                    uncoupled[i, z] = coupled[i, z] ^ gf_scale(GAMMA, coupled[j, z_pair])
            uncoupled[list(erased), z] = gf_matmul(r, uncoupled[list(known), z])

        for z in layers:
            for e in erased:
                pair = _partner(e, z, q)
                if pair is None:
                    coupled[e, z] = uncoupled[e, z]
                    continue
                j, z_pair = pair
                if j in erased_set:
                    coupled[e, z] = gf_scale(_ONE_PLUS_GAMMA_SQ_INV,
                                             uncoupled[e, z] ^ gf_scale(GAMMA, uncoupled[j, z_pair]))
                else:
                    coupled[e, z] = uncoupled[e, z] ^ gf_scale(GAMMA, coupled[j, z_pair])

def _fill(params, symbols, known, erased):
    if params.scheme is Scheme.CLAY:
        _fill_clay(params, symbols, known, erased)
    else:
        _fill_mds(params, symbols, known, erased)

def _to_chunks(symbols, params):
    return [CodedChunk(i, symbols[i].tobytes(), params.alpha) for i in range(params.n)]

def _check_chunks(chunks, params):
    """
    Drop duplicate indices and check that the remaining chunks agree in size.
    """
    unique = {}
    for chunk in chunks:
        if not 0 <= chunk.index < params.n:
            raise FormatError(f'chunk index {chunk.index} is outside [0, {params.n})')
        unique.setdefault(chunk.index, chunk)
    sizes = {chunk.size for chunk in unique.values()}
    if len(sizes) > 1:
        raise FormatError(f'chunks have inconsistent sizes: {sorted(sizes)}')
    if sizes:
        size = sizes.pop()
        if size == 0 or size % params.alpha != 0:
            raise FormatError(f'chunk size {size} is not a positive multiple of alpha = {params.alpha}')
    return [unique[i] for i in sorted(unique)]


def encode(data, params):
    """
    Encode ``k * chunk_size`` bytes into ``n`` chunks. The first ``k`` chunks
    hold the data stripes unchanged.
    """
    stripes = _split_rows(data, params.k, params)
    symbols = np.zeros((params.n,) + stripes.shape[1:], dtype=np.uint8)
    symbols[:params.k] = stripes
    _fill(params, symbols, list(range(params.k)), list(range(params.k, params.n)))
    return _to_chunks(symbols, params)

def decode(chunks, params):
    """
    Reconstruct the original data from any ``k`` chunks with distinct
    indices. Extra chunks are ignored, preferring the systematic ones.
    """
    chunks = _check_chunks(chunks, params)
    if len(chunks) < params.k:
        raise InsufficientShardsError(f'{len(chunks)} distinct chunks supplied, {params.k} needed')
    chunks = chunks[:params.k]
    known = [chunk.index for chunk in chunks]

    symbols = np.zeros((params.n, params.alpha, chunks[0].row_width), dtype=np.uint8)
    for chunk in chunks:
        symbols[chunk.index] = chunk.rows()
    missing_data = [i for i in range(params.k) if i not in known]
    if missing_data:
        erased = [i for i in range(params.n) if i not in known]
        _fill(params, symbols, known, erased)
    return symbols[:params.k].tobytes()

def repair(lost_index, helpers, params):
    """
    Rebuild the chunk at ``lost_index`` from surviving ``helpers``.

    A Clay code given all ``d = n-1`` helpers downloads only ``alpha/q`` rows
    from each, ``d*B/(k*q)`` bytes in total for a chunkset of ``B`` bytes.
    Otherwise any ``k`` helpers are downloaded in full, decoded and
    re-encoded, which costs ``B`` bytes. Returns the rebuilt chunk and a
    :class:`RepairReport`.
    """
    if not 0 <= lost_index < params.n:
        raise ParameterError(f'lost index {lost_index} is outside [0, {params.n})')
    helpers = [chunk for chunk in _check_chunks(helpers, params) if chunk.index != lost_index]
    if len(helpers) < params.k:
        raise IrrecoverableError(f'{len(helpers)} helpers survive, at least {params.k} are needed to rebuild chunk {lost_index}')
    chunkset_bytes = params.k * helpers[0].size

    if params.scheme is Scheme.CLAY and len(helpers) >= params.d:
        readers = {chunk.index: ChunkReader(chunk) for chunk in helpers[:params.d]}
        rows = _repair_clay(lost_index, readers, params)
        method = 'clay'
    else:
        logger.debug(f'Repairing chunk {lost_index} of {params} by full decode from {len(helpers)} helpers')
        readers = {chunk.index: ChunkReader(chunk) for chunk in helpers[:params.k]}
        full = [CodedChunk(i, reader.read_all().tobytes(), params.alpha) for i, reader in readers.items()]
        rows = encode(decode(full, params), params)[lost_index].rows()
        method = 'mds'

    report = RepairReport(
        repaired_index=lost_index,
        bytes_downloaded=sum(reader.bytes_read for reader in readers.values()),
        helpers_used=sorted(readers),
        rs_equivalent_bytes=chunkset_bytes,
        method=method,
    )
    return CodedChunk(lost_index, np.ascontiguousarray(rows).tobytes(), params.alpha), report

def _repair_clay(lost_index, readers, params):
    """
    Rebuild a lost chunk from the layers in which it is unpaired.

    In each such layer the lost node and the other ``q-1`` nodes of its
    column are the only unknown uncoupled symbols, which the MDS code
    recovers from the remaining ``k`` nodes. Each column neighbor then yields
    the lost node's symbol in one of the layers that was not downloaded.
    """
    q, alpha = params.q, params.alpha
    x0, y0 = lost_index % q, lost_index // q
    layers = [z for z in range(alpha) if _digit(z, y0, q) == x0]
    position = {z: p for p, z in enumerate(layers)}
    downloaded = {i: reader.read_rows(layers) for i, reader in readers.items()}

    column = [x + q * y0 for x in range(q)]
    known = [i for i in range(params.n) if i not in column]
    r = _recovery_matrix(params.k, params.m, tuple(known), tuple(column))

    width = next(iter(downloaded.values())).shape[1]
    out = np.zeros((alpha, width), dtype=np.uint8)
    for z in layers:
        p = position[z]
        uncoupled = np.zeros((len(known), width), dtype=np.uint8)
        for row, i in enumerate(known):
            pair = _partner(i, z, q)
            if pair is None:
                uncoupled[row] = downloaded[i][p]
            else:
                j, z_pair = pair
                uncoupled[row] = downloaded[i][p] ^ gf_scale(GAMMA, downloaded[j][position[z_pair]])
        recovered = gf_matmul(r, uncoupled)
        for row, node in enumerate(column):
            if node == lost_index:
                out[z] = recovered[row]
            else:
                z_lost = z + (node % q - x0) * q ** y0
                out[z_lost] = gf_scale(_GAMMA_INV, recovered[row] ^ downloaded[node][p])
    return out

def repair_bandwidth(params, chunkset_bytes):
    """
    Bytes a single-chunk repair downloads for a chunkset of
    ``chunkset_bytes``: ``d*B/(k*(d-k+1))`` for Clay, ``B`` for Reed-Solomon.
    """
    if params.scheme is Scheme.CLAY:
        return params.d * chunkset_bytes / (params.k * params.q)
    return chunkset_bytes
