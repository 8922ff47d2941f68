from .book import (
    DEFAULT_CAPACITY, CapacityError, OrderBook, book_tops, init_from_l2, l2_snapshot,
    mid_price, new_book, process_message,
)
from .types import (
    AGENT_ID_BASE, AGENT_ID_STRIDE, SYNTH_ID_BASE, Kind, L2Snapshot, Message, Side,
    TradeRecord, messages_to_array, trades_from_array,
)

__all__ = [
    "AGENT_ID_BASE", "AGENT_ID_STRIDE", "DEFAULT_CAPACITY", "SYNTH_ID_BASE", "CapacityError",
    "Kind", "L2Snapshot", "Message", "OrderBook", "Side", "TradeRecord", "book_tops",
    "init_from_l2", "l2_snapshot", "messages_to_array", "mid_price", "new_book",
    "process_message", "trades_from_array",
]
