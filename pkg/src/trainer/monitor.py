import datetime
import sys
import time
from collections import deque
from typing import Deque, List, Optional

import rich.box
from rich.console import Console
from rich.layout import Layout
from rich.live import Live
from rich.panel import Panel
from rich.table import Table

from trainer.utils.epoch_record import EpochRecord


class TrainingMonitor:
    """
    Live terminal dashboard of a training run: run stats, the latest epochs
    and recent events. Does nothing when disabled or when stdout is not a TTY.
    """

    def __init__(self, total_epochs: int, title: str = "RipeLoc training", enabled: bool = True,
                 console: Optional[Console] = None):
        self.total_epochs = total_epochs
        self.title = title
        self.console = console or Console()
        self.enabled = enabled and sys.stdout.isatty()
        self.records: List[EpochRecord] = []
        self.events: Deque[str] = deque(maxlen=12)
        self.phase = "-"
        self.trainable = 0
        self.incidents = 0
        self.start_time: Optional[float] = None
        self.live_display: Optional[Live] = None

    def start(self) -> None:
        self.start_time = time.time()
        if self.enabled:
            self.live_display = Live(self._generate_display(), console=self.console, refresh_per_second=4)
            self.live_display.start()

    def stop(self) -> None:
        if self.live_display is not None:
            self.live_display.update(self._generate_display())
            self.live_display.stop()
            self.live_display = None

    def phase_started(self, name: str, trainable: int) -> None:
        self.phase = name
        self.trainable = trainable
        self.event(f"[bold]{name}[/] started, {trainable:,} trainable parameters")

    def epoch_done(self, record: EpochRecord) -> None:
        self.records.append(record)
        self._refresh()

    def incident(self, message: str) -> None:
        self.incidents += 1
        self.event(f"[red]✗[/] {message}")

    def event(self, message: str) -> None:
        self.events.append(message)
        self._refresh()

    def _refresh(self) -> None:
        if self.live_display is not None:
            self.live_display.update(self._generate_display())

    def _format_time(self, seconds: float) -> str:
        return str(datetime.timedelta(seconds=int(seconds)))

    def _estimate_completion(self) -> str:
        done = len(self.records)
        if not self.start_time or done == 0:
            return "N/A"
        per_epoch = (time.time() - self.start_time) / done
        return self._format_time(per_epoch * max(self.total_epochs - done, 0))

    def _generate_display(self) -> Layout:
        layout = Layout()
        layout.split(
            Layout(name="padding", size=1),
            Layout(name="content"),
        )
        layout["content"].split(
            Layout(name="fixed_panels", ratio=1, minimum_size=11),
            Layout(name="events", ratio=1, minimum_size=3),
        )
        layout["content"]["fixed_panels"].split_row(
            Layout(name="stats", ratio=1, minimum_size=40),
            Layout(name="epochs", ratio=2, minimum_size=60),
        )
        layout["padding"].update("\n")

        if self.start_time:
            elapsed = time.time() - self.start_time
            done = len(self.records)
            lr = f"{self.records[-1].lr:.2e}" if self.records else "-"
            stats_text = (
                f"[bold]{self.title}[/]\n\n"
                f"[bold]Phase:[/] {self.phase}\n"
                f"[bold]Trainable:[/] {self.trainable:,}\n"
                f"[bold]Progress:[/] {done}/{self.total_epochs} epochs "
                f"({done / max(self.total_epochs, 1) * 100:.1f}%)\n"
                f"[bold]LR:[/] {lr}\n"
                f"[bold]Incidents:[/] {self.incidents}\n"
                f"[bold]Time:[/] {self._format_time(elapsed)}\n"
                f"[bold]ETA:[/] {self._estimate_completion()}"
            )
            layout["content"]["fixed_panels"]["stats"].update(
                Panel(stats_text, title="Stats", border_style="blue", padding=(0, 1)))
        else:
            layout["content"]["fixed_panels"]["stats"].update(Panel("Starting...", title=self.title))

        table = Table(box=rich.box.SIMPLE, padding=(0, 1), collapse_padding=True)
        for column in ("PHASE", "EPOCH", "LR", "BOX", "CLS", "DFL", "mAP@50", "mAP@50:95"):
            table.add_column(column, style="bold" if column == "PHASE" else None)
        for record in self.records[-8:]:
            table.add_row(record.phase, str(record.epoch), f"{record.lr:.2e}", f"{record.box_loss:.4f}",
                          f"{record.cls_loss:.4f}", f"{record.dfl_loss:.4f}",
                          "-" if record.val_map50 is None else f"[green]{record.val_map50:.4f}[/]",
                          "-" if record.val_map5095 is None else f"{record.val_map5095:.4f}")
        layout["content"]["fixed_panels"]["epochs"].update(
            Panel(table, title="Epochs", border_style="green", padding=(0, 1)))

        if self.events:
            layout["content"]["events"].update(
                Panel("\n".join(self.events), title="Recent Events", border_style="yellow", padding=(0, 1)))
        else:
            layout["content"]["events"].update(Panel("No events yet", title="Recent Events"))
        return layout
