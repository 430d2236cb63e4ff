# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.protocol.payments` module implements unidirectional
micropayment channels. Opening a channel locks the payer's deposit on the
ledger; every payment is then an off-ledger update that shrinks the amount
refundable to the payer and moves the refund's earliest settlement time
earlier; settlement splits the deposit on the ledger.

Updates are attributed to the payer rather than signed. When both parties
present states for settlement, the highest sequence number presented wins.

.. autoclass:: ChannelStatus
   :members:

.. autoclass:: ChannelState
   :members:

.. autoclass:: PaymentChannel
   :members:

.. autoclass:: ReadSession
   :members:

.. autofunction:: open_channel

.. autofunction:: pay

.. autofunction:: settle
"""

import enum
import dataclasses
from dataclasses import dataclass

from ..exceptions import ParameterError, PaymentError, ProtocolViolationError, TooEarlyError

import logging
logger = logging.getLogger(__name__)


DEFAULT_SETTLE_DELTA = 1.0  # seconds the refund becomes valid earlier per payment


class ChannelStatus(enum.Enum):
    OPEN = 'Open'
    SETTLED = 'Settled'
    EXPIRED = 'Expired'  # settled without any payment made


@dataclass(frozen=True)
class ChannelState:
    """
    One signed refund: the payer may reclaim ``refund_amount`` of ``deposit``
    from ``settle_after`` on.
    """
    channel_id: str
    payer: str
    payee: str
    deposit: float
    refund_amount: float
    settle_after: float
    seq: int
    status: ChannelStatus = ChannelStatus.OPEN

    @property
    def paid(self):
        return self.deposit - self.refund_amount


class PaymentChannel():
    """
    A channel with its full update history.

    >>> channel = open_channel(ledger, 'rpc0', 'sp03', deposit=1.0, initial_settle_after=ledger.now + 3600)
    >>> pay(channel, 1e-9)
    >>> channel.state.seq
    1
    """

    def __init__(self, ledger, state, settle_delta=DEFAULT_SETTLE_DELTA):
        self.ledger = ledger
        self.opened_at = ledger.now
        self.settle_delta = settle_delta
        self.history = {state.seq: state}
        self.presented = {}  # seq -> party that presented it
        self.status = ChannelStatus.OPEN
        self.payments = 0

    @property
    def state(self):
        return self.history[max(self.history)]

    @property
    def channel_id(self):
        return self.state.channel_id

    def next_settle_after(self):
        """The settlement time of the next update by the fixed decrement."""
        return max(self.state.settle_after - self.settle_delta, self.opened_at)

    def present(self, seq, by):
        """
        Present the state with sequence number ``seq`` for settlement.
        """
        if self.status is not ChannelStatus.OPEN:
            raise ProtocolViolationError(f'channel {self.channel_id} is {self.status.value}')
        if seq not in self.history:
            raise ProtocolViolationError(f'channel {self.channel_id} has no state {seq}')
        self.presented[seq] = by

    def winning_state(self):
        return self.history[max(self.presented)] if self.presented else None


def open_channel(ledger, payer, payee, deposit, initial_settle_after, settle_delta=DEFAULT_SETTLE_DELTA):
    """
    Lock ``deposit`` from ``payer`` on the ledger and return the channel at
    sequence number 0, fully refundable.
    """
    if settle_delta < 0:
        raise ParameterError(f'settle_delta must not be negative, got {settle_delta}')
    channel_id = f'{payer}->{payee}#{len(ledger.channels)}'
    ledger.lock_channel_funds(channel_id, payer, payee, deposit)
    state = ChannelState(channel_id, payer, payee, float(deposit), float(deposit), float(initial_settle_after), 0)
    return PaymentChannel(ledger, state, settle_delta)

def pay(channel, amount, new_settle_after=None):
    """
    Issue the next refund state, ``amount`` smaller than the last and valid
    no later. ``new_settle_after`` defaults to the fixed decrement. The
    ledger is not involved.
    """
    if channel.status is not ChannelStatus.OPEN:
        raise ProtocolViolationError(f'channel {channel.channel_id} is {channel.status.value}')
    state = channel.state
    if new_settle_after is None:
        new_settle_after = channel.next_settle_after()
    if not amount > 0:
        raise PaymentError(f'payment must be positive, got {amount}')
    if amount > state.refund_amount:
        raise PaymentError(f'payment {amount} overdraws the remaining {state.refund_amount} of {channel.channel_id}')
    if new_settle_after > state.settle_after:
        raise ProtocolViolationError(f'settle_after may not increase from {state.settle_after} to {new_settle_after}')
    new_state = dataclasses.replace(
        state,
        refund_amount=max(state.refund_amount - amount, 0.0),
        settle_after=float(new_settle_after),
        seq=state.seq + 1)
    channel.history[new_state.seq] = new_state
    channel.payments += 1
    return new_state

def settle(channel, presented_seq, by=None, now=None):
    """
    Present ``presented_seq`` and settle the channel at ledger time ``now``.
    The highest sequence number presented by either party decides the split.

    Returns ``(payee_amount, payer_amount)``.
    """
    if channel.status is not ChannelStatus.OPEN:
        raise ProtocolViolationError(f'channel {channel.channel_id} was already {channel.status.value}')
    now = channel.ledger.now if now is None else now
    presented = channel.history.get(presented_seq)
    if presented is None:
        raise ProtocolViolationError(f'channel {channel.channel_id} has no state {presented_seq}')
    if now < presented.settle_after:
        raise TooEarlyError(f'state {presented_seq} of {channel.channel_id} is valid from {presented.settle_after}, now is {now}')
    channel.present(presented_seq, by if by is not None else presented.payer)

    winner = channel.winning_state()
    payee_amount, payer_amount = winner.paid, winner.refund_amount
    channel.ledger.release_channel_funds(channel.channel_id, payee_amount, payer_amount)
    channel.status = ChannelStatus.SETTLED if winner.seq > 0 else ChannelStatus.EXPIRED
    channel.history[winner.seq] = dataclasses.replace(winner, status=channel.status)
    logger.debug(f'Settled {channel.channel_id} at seq {winner.seq}: {payee_amount} to payee, {payer_amount} to payer')
    return payee_amount, payer_amount


class ReadSession():
    """
    Pay-then-serve reads over one channel. Each read is paid before it is
    served; a payer stops using the channel after the first read that is not
    served, so at most one read price is ever lost.
    """

    def __init__(self, channel, price):
        if price <= 0:
            raise ParameterError(f'read price must be positive, got {price}')
        self.channel = channel
        self.price = price
        self.served = 0
        self.lost = 0.0
        self.aborted = False

    def read(self, serve):
        """
        Pay for one read and call ``serve()`` for the data. Returns the data,
        or ``None`` if the session is aborted or the payee did not serve.
        """
        if self.aborted or self.channel.state.refund_amount < self.price:
            return None
        pay(self.channel, self.price)
        data = serve()
        if data is None:
            self.lost += self.price
            self.aborted = True
            logger.debug(f'Payee of {self.channel.channel_id} did not serve a paid read, aborting session')
            return None
        self.served += 1
        return data
