import logging
from typing import List, Union

import numpy as np

from model.builder import forward
from model.model_graph import HeadOutputs, ModelGraph
from postprocess.center_point import route_and_localize
from postprocess.decode import CONF_THRESH, decode
from postprocess.nms import IOU_THRESH, nms
from postprocess.utils.detection import Detection
from tensor.tensor import Tensor
from utils.sample import RIPE

logger = logging.getLogger(__name__)


def postprocess(heads: HeadOutputs, conf_thresh: float = CONF_THRESH,
                iou_thresh: float = IOU_THRESH) -> List[List[Detection]]:
    """Decode, per-class NMS, then class routing with picking-point refinement."""
    results = []
    for b, dets in enumerate(decode(heads, conf_thresh)):
        kept = nms(dets, iou_thresh)
        if heads.num_classes > RIPE:
            maps = [1.0 / (1.0 + np.exp(-logits.data[b, RIPE])) for logits in heads.cls_logits]
            kept = route_and_localize(kept, maps, heads.strides)
        results.append(kept)
    return results


def detect(model: ModelGraph, images: Union[np.ndarray, Tensor], conf_thresh: float = CONF_THRESH,
           iou_thresh: float = IOU_THRESH) -> List[List[Detection]]:
    """
    Run the model and postprocess its output.

    Args:
        model: Model in any mode; it is switched to eval
        images: (N, 3, S, S) in [0, 1]
        conf_thresh: Minimum class score
        iou_thresh: NMS threshold

    Returns:
        Final detections per image
    """
    heads = forward(model, images, mode="eval")
    results = postprocess(heads, conf_thresh, iou_thresh)
    logger.debug("detected %s objects", [len(r) for r in results])
    return results
