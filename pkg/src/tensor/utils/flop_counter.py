import contextlib
from collections import defaultdict
from typing import Dict, Iterator, List, Optional

_active: Optional["FlopCounter"] = None
_scopes: List[str] = []


class FlopCounter:
    """
    Accumulates multiply-accumulate work of convolutions and matrix products.

    FLOPs are reported as 2·MACs. BatchNorm, activations, pooling and
    elementwise ops are not counted. Every recorded amount is added to the
    grand total and to each scope open at the time.

    Usage:
        with FlopCounter() as counter:
            with flop_scope("neck"):
                ...
        counter.total, counter.by_scope["neck"]
    """

    def __init__(self):
        self.total = 0
        self.by_scope: Dict[str, int] = defaultdict(int)

    def record(self, macs: int) -> None:
        flops = 2 * int(macs)
        self.total += flops
        for scope in _scopes:
            self.by_scope[scope] += flops

    def __enter__(self) -> "FlopCounter":
        global _active
        self._previous = _active
        _active = self
        return self

    def __exit__(self, *exc) -> None:
        global _active
        _active = self._previous


@contextlib.contextmanager
def flop_scope(name: str) -> Iterator[None]:
    _scopes.append(name)
    try:
        yield
    finally:
        _scopes.pop()


def record_macs(macs: int) -> None:
    if _active is not None:
        _active.record(macs)
