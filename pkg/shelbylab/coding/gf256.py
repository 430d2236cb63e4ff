# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.coding.gf256` module provides arithmetic in GF(2^8) with
the irreducible polynomial 0x11D, and the small amount of linear algebra the
erasure codes need. The field itself is a :mod:`galois` field class,
:data:`GF`; the functions here accept and return plain integers and uint8
arrays so that chunk payloads never have to be converted by callers.

Scaling a byte vector by one coefficient is the innermost operation of Clay
decoding and repair, so it looks products up in a 256x256 table computed once
from :data:`GF` and then frozen.

.. autodata:: GF

.. autofunction:: gf_add

.. autofunction:: gf_mul

.. autofunction:: gf_div

.. autofunction:: gf_inv

.. autofunction:: gf_pow

.. autofunction:: gf_scale

.. autofunction:: gf_matmul

.. autofunction:: gf_invert_matrix

.. autofunction:: cauchy_matrix

.. autofunction:: mul_table
"""

import functools
import numpy as np
import galois

from ..exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


POLYNOMIAL = 0x11D

#: GF(2^8) reduced by x^8 + x^4 + x^3 + x^2 + 1
GF = galois.GF(2**8, irreducible_poly=POLYNOMIAL)


def _field_array(values):
    return GF(np.asarray(values, dtype=np.uint8))

def _as_bytes(array):
    return np.asarray(array.view(np.ndarray), dtype=np.uint8)

@functools.lru_cache(maxsize=None)
def mul_table():
    """
    The read-only 256x256 multiplication table, where ``mul_table()[a, b]``
    is the product of ``a`` and ``b``.
    """
    elements = _field_array(np.arange(256))
    table = _as_bytes(elements[:, None] * elements[None, :])
    table.setflags(write=False)
    logger.debug('Built GF(2^8) multiplication table')
    return table

def gf_add(a, b):
    """
    Add two field elements.
    """
    return int(GF(a) + GF(b))

def gf_mul(a, b):
    """
    Multiply two field elements.
    """
    return int(GF(a) * GF(b))

def gf_inv(a):
    """
    The multiplicative inverse of a nonzero field element.
    """
    if a == 0:
        raise ZeroDivisionError('0 has no inverse in GF(2^8)')
    return int(np.reciprocal(GF(a)))

def gf_div(a, b):
    """
    Divide ``a`` by the nonzero element ``b``.
    """
    if b == 0:
        raise ZeroDivisionError('division by 0 in GF(2^8)')
    return int(GF(a) / GF(b))

def gf_pow(a, power):
    """
    Raise a field element to a non-negative integer power.
    """
    return int(GF(a) ** power)

def gf_scale(coefficient, vector):
    """
    Multiply every byte of a uint8 array by a single field element.
    """
    return mul_table()[coefficient][vector]

def gf_matmul(a, b):
    """
    Multiply an (r, k) coefficient matrix by a (k, ...) array of byte rows,
    returning an (r, ...) uint8 array.
    """
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ParameterError(f'cannot multiply {a.shape} by {b.shape}')
    product = GF(a) @ GF(b.reshape(b.shape[0], -1))
    return _as_bytes(product).reshape((a.shape[0],) + b.shape[1:])

def gf_invert_matrix(matrix):
    """
    Invert a square matrix over GF(2^8).

    Raises :class:`ParameterError <shelbylab.exceptions.ParameterError>` if the
    matrix is singular or not square.
    """
    m = np.asarray(matrix, dtype=np.uint8)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f'matrix of shape {m.shape} is not square')
    try:
        return _as_bytes(np.linalg.inv(GF(m))).copy()
    except np.linalg.LinAlgError as e:
        raise ParameterError(f'matrix is singular over GF(2^8): {e}') from e

def cauchy_matrix(rows, cols):
    """
    A (rows, cols) Cauchy matrix ``1 / (x_i + y_j)`` with ``x_i = cols + i``
    and ``y_j = j``. Every square submatrix of it is invertible, so
    ``[I | cauchy_matrix(k, m)]`` generates an MDS code.
    """
    if rows + cols > 256:
        raise ParameterError(f'a Cauchy matrix over GF(2^8) supports at most 256 rows plus columns, not {rows + cols}')
    x = _field_array(np.arange(cols, cols + rows))
    y = _field_array(np.arange(cols))
    return _as_bytes(np.reciprocal(x[:, None] + y[None, :])).copy()
