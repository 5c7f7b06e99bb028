import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple


@dataclass
class PruneReport:
    """
    Outcome of one pruning pass.

    `kept` maps each channel group (`<layer>.<unit>`) to the original
    indices of its surviving channels, strictly increasing.
    """
    kept: Dict[str, List[int]]
    params_before: int
    params_after: int
    ratio_requested: float
    ratio_achieved: float
    channels_total: int
    channels_removed: int
    floored: List[str] = field(default_factory=list)

    @property
    def params_ratio(self) -> float:
        return self.params_after / self.params_before if self.params_before else 1.0

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d["params_ratio"] = self.params_ratio
        return d

    def summary_rows(self) -> List[Tuple[str, str]]:
        return [
            ("Ratio requested", f"{self.ratio_requested:.3f}"),
            ("Ratio achieved", f"{self.ratio_achieved:.3f}"),
            ("Channels removed", f"{self.channels_removed} / {self.channels_total}"),
            ("Params", f"{self.params_before:,} -> {self.params_after:,} ({self.params_ratio:.3f})"),
            ("Groups at floor", str(len(self.floored))),
        ]


def write_prune_report(report: PruneReport, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2)
