import csv
import math
import os
from dataclasses import dataclass
from typing import List, Optional

LOG_FIELDS = ["phase", "epoch", "lr", "box_loss", "cls_loss", "dfl_loss", "val_map50", "val_map5095"]


@dataclass
class EpochRecord:
    """One row of the training log. Validation fields are None on epochs without evaluation."""
    phase: str
    epoch: int
    lr: float
    box_loss: float
    cls_loss: float
    dfl_loss: float
    val_map50: Optional[float] = None
    val_map5095: Optional[float] = None

    def row(self) -> List[str]:
        def fmt(value: Optional[float]) -> str:
            if value is None or (isinstance(value, float) and math.isnan(value)):
                return ""
            return f"{value:.6g}"

        return [self.phase, str(self.epoch), fmt(self.lr), fmt(self.box_loss), fmt(self.cls_loss),
                fmt(self.dfl_loss), fmt(self.val_map50), fmt(self.val_map5095)]


def write_log_csv(records: List[EpochRecord], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for record in records:
            writer.writerow(record.row())


def read_log_csv(path: str) -> List[EpochRecord]:
    def parse(value: str) -> Optional[float]:
        return float(value) if value else None

    with open(path, newline="") as f:
        return [EpochRecord(r["phase"], int(r["epoch"]), float(r["lr"]), float(r["box_loss"]),
                            float(r["cls_loss"]), float(r["dfl_loss"]), parse(r["val_map50"]),
                            parse(r["val_map5095"]))
                for r in csv.DictReader(f)]
