from typing import Dict, Iterable, Sequence, Tuple

import rich.box
from rich.table import Table

from trainer.ablation import AblationRow


def summary_table(title: str, rows: Iterable[Tuple[str, str]]) -> Table:
    table = Table(title=title, box=rich.box.SIMPLE, show_header=False, padding=(0, 1))
    table.add_column("metric", style="bold")
    table.add_column("value", justify="right")
    for name, value in rows:
        table.add_row(name, value)
    return table


def complexity_table(params: Dict[str, int], flops: Dict[str, int]) -> Table:
    """Params and GFLOPs per module group, with a total row."""
    table = Table(title="Model complexity", box=rich.box.SIMPLE, padding=(0, 1))
    for column in ("GROUP", "PARAMS", "PARAMS (M)", "GFLOPs"):
        table.add_column(column, justify="left" if column == "GROUP" else "right")
    for group in params:
        table.add_row(group, f"{params[group]:,}", f"{params[group] / 1e6:.3f}", f"{flops[group] / 1e9:.3f}")
    total_params, total_flops = sum(params.values()), sum(flops.values())
    table.add_row("[bold]total[/]", f"{total_params:,}", f"{total_params / 1e6:.3f}",
                  f"{total_flops / 1e9:.3f}")
    return table


def ablation_table(rows: Sequence[AblationRow]) -> Table:
    table = Table(title="Ablation", box=rich.box.SIMPLE, padding=(0, 1))
    for column in ("CONFIG", "SETUP", "PARAMS (M)", "mAP@50", "mAP@50:95", "P", "R"):
        table.add_column(column, style="bold" if column == "CONFIG" else None)
    for row in rows:
        table.add_row(row.config, row.label, f"{row.params / 1e6:.3f}", f"{row.map50:.4f}", f"{row.map5095:.4f}",
                      f"{row.precision:.4f}", f"{row.recall:.4f}")
    return table
