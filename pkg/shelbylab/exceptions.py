# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.exceptions` module defines the errors raised throughout
the package. Each one subclasses a builtin exception, so callers may catch
either the specific error or the builtin it extends.

.. autoexception:: ParameterError
.. autoexception:: InsufficientShardsError
.. autoexception:: FormatError
.. autoexception:: IrrecoverableError
.. autoexception:: RangeError
.. autoexception:: PaymentError
.. autoexception:: ConflictError
.. autoexception:: IncompleteWriteError
.. autoexception:: NotFoundError
.. autoexception:: InsufficientEvaluationsError
.. autoexception:: ProtocolViolationError
.. autoexception:: TooEarlyError
.. autoexception:: AssignmentError
"""


class ParameterError(ValueError):
    """
    An argument or configuration value is outside its valid domain.
    """

class InsufficientShardsError(ParameterError):
    """
    Fewer than k distinct chunks were supplied to a decoder.
    """

class FormatError(ValueError):
    """
    Input bytes or chunk payloads are malformed or inconsistent.
    """

class IrrecoverableError(RuntimeError):
    """
    Too few helpers survive to rebuild a lost chunk by any method.
    """

class RangeError(IndexError):
    """
    A byte range reaches past the end of a blob.
    """

class PaymentError(ValueError):
    """
    A payment is too small, overdraws an account, or overdraws a channel.
    """

class ConflictError(KeyError):
    """
    An identifier is already registered.
    """

class IncompleteWriteError(RuntimeError):
    """
    A blob was marked ready before every assigned provider acknowledged it.
    """

class NotFoundError(KeyError):
    """
    An account, blob or channel is unknown to the ledger.
    """

class InsufficientEvaluationsError(ValueError):
    """
    Too few peer evaluations remain to trim f from each end.
    """

class ProtocolViolationError(RuntimeError):
    """
    A channel update breaks the monotonicity rules, or a channel is used after
    it closed.
    """

class TooEarlyError(RuntimeError):
    """
    A channel state was presented for settlement before it became valid.
    """

class AssignmentError(RuntimeError):
    """
    Not enough eligible storage providers exist to place a chunkset.
    """
