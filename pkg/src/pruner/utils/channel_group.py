from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from model.model_graph import ModelGraph
from nn.blocks import BOTTLENECKS
from nn.utils.block_params import BlockParams


@dataclass
class ChannelGroup:
    """
    A run of channels that can leave the model together.

    The channels are produced by the `rows` units (output axis, starting at
    the given offset) and read by the `cols` units (input axis, once per
    listed offset). `score_unit` is the BatchNorm feeding the consumers
    directly; its |gamma| ranks the channels.
    """
    layer: int
    name: str
    score_unit: str
    rows: List[Tuple[str, int]]
    cols: List[Tuple[str, Tuple[int, ...]]]
    size: int

    @property
    def key(self) -> str:
        return f"{self.layer}.{self.name}"

    def scores(self, p: BlockParams) -> np.ndarray:
        offset = dict(self.rows)[self.score_unit]
        return np.abs(p[f"{self.score_unit}.bn.g"].data[offset:offset + self.size])


def segment_index(total: int, keep: np.ndarray, size: int, offsets: Tuple[int, ...]) -> np.ndarray:
    """
    Indices along an axis of extent `total` that survive when only `keep`
    remains of each `size`-long segment starting at `offsets`.
    """
    mask = np.ones(total, dtype=bool)
    for offset in offsets:
        mask[offset:offset + size] = False
        mask[offset + np.asarray(keep, dtype=np.int64)] = True
    return np.flatnonzero(mask)


def _chain(layer: int, p: BlockParams, producer: str, consumer: str, offsets: Tuple[int, ...] = (0,)) -> ChannelGroup:
    return ChannelGroup(layer, producer, producer, [(producer, 0)], [(consumer, offsets)],
                        p[f"{producer}.w"].shape[0])


def channel_groups(model: ModelGraph) -> List[ChannelGroup]:
    """
    Prunable channel groups in layer order.

    Only channels internal to a layer qualify: bottleneck hidden channels,
    the SPPF reduction and output, the kept half and FFN hidden channels of
    the attention tail, and the hidden channels of the head towers. Layer
    outputs, which feed residual adds, concats and the channel gates, stay.
    """
    groups: List[ChannelGroup] = []
    for layer in model.layers:
        p, i = layer.params, layer.index
        if layer.kind == "c3k2":
            for b in range(BOTTLENECKS):
                groups.append(_chain(i, p, f"m{b}.cv1", f"m{b}.cv2"))
        elif layer.kind == "dw_c3k2":
            for b in range(BOTTLENECKS):
                dw = f"m{b}.cv2.dw"
                groups.append(ChannelGroup(i, f"m{b}.hidden", dw, [(f"m{b}.cv1.pw", 0), (dw, 0)],
                                           [(f"m{b}.cv2.pw", (0,))], p[f"{dw}.w"].shape[0]))
        elif layer.kind == "sppf_c2psa":
            reduced = p["sppf.cv1.w"].shape[0]
            groups.append(_chain(i, p, "sppf.cv1", "sppf.cv2", tuple(k * reduced for k in range(4))))
            groups.append(_chain(i, p, "sppf.cv2", "psa.cv1"))
            kept = p["psa.cv1.w"].shape[0] - p["psa.q.w"].shape[1]
            groups.append(ChannelGroup(i, "psa.cv1", "psa.cv1", [("psa.cv1", 0)], [("psa.cv2", (0,))], kept))
            groups.append(_chain(i, p, "psa.ffn1", "psa.ffn2"))
        elif layer.kind == "cdh":
            groups.append(_chain(i, p, "cls.pw", "cls.pred"))
            for s in range(len(layer.inputs)):
                groups.append(_chain(i, p, f"reg{s}.cv1", f"reg{s}.cv2"))
                groups.append(_chain(i, p, f"reg{s}.cv2", f"reg{s}.pred"))
    return groups
