"""Exception hierarchy shared by every module.

`DataError` subclasses describe problems in the input data (exit code 1 at
the command line); `ConfigError` describes invalid parameters (exit code 2).
"""


class LobPhysError(Exception):
    """Base class for all package errors."""


class DataError(LobPhysError):
    pass


class ConfigError(LobPhysError, ValueError):
    pass


class UnknownOrderId(DataError):
    def __init__(self, order_id, kind=None):
        self.order_id = order_id
        self.kind = kind
        super().__init__(f"{kind or 'event'} references unknown order id {order_id!r}")


class DuplicateOrderId(DataError):
    def __init__(self, order_id):
        self.order_id = order_id
        super().__init__(f"order id {order_id!r} is already live")


class CrossedBook(DataError):
    def __init__(self, best_bid, best_ask, ts=None):
        self.best_bid = best_bid
        self.best_ask = best_ask
        self.ts = ts
        super().__init__(f"crossed book at ts={ts}: best bid {best_bid} >= best ask {best_ask}")


class EmptyStream(DataError):
    pass


class MalformedRecord(DataError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class UnsupportedType(DataError):
    pass


class ClockSkew(DataError):
    pass


class NoMatches(DataError):
    pass


class DegenerateSeries(DataError):
    pass


class InsufficientData(DataError):
    pass


class InsufficientVolume(DataError):
    pass


class SizesUnavailable(DataError):
    pass


class TooFewPoints(DataError):
    pass


class ZeroVolume(DataError):
    pass


class DegenerateRegressor(DataError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class SeriesTooShort(DataError):
    pass


class NoPriceChanges(DataError):
    pass


class InfeasibleConfig(ConfigError):
    pass


class InsufficientLiquidity(DataError):
    pass


class OutOfOrder(DataError, ValueError):
    pass
