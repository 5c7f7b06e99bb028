import datetime
import json
import os
from typing import Any, Dict, List


class IncidentKind:
    NAN_LOSS = "NAN_LOSS"          # Loss evaluated to NaN or Inf
    NAN_GRADIENT = "NAN_GRADIENT"  # Finite loss, non-finite gradient; the step was skipped


class IncidentTracker:
    """
    Archives numeric incidents met during training.

    Each incident gets its own directory holding the context as JSON, the ids
    of the samples in the failing batch, and a README describing how to replay
    the step.
    """

    def __init__(self, output_dir: str = "incidents"):
        """
        Initialize the incident tracker.

        Args:
            output_dir: Directory to store incident reports
        """
        self.output_dir = output_dir
        self.count = 0

    def save_incident(self, kind: str, context: Dict[str, Any], sample_ids: List[str]) -> str:
        """
        Save one incident.

        Args:
            kind: An IncidentKind value
            context: Phase, epoch, step, lr, loss and offending parameter names
            sample_ids: Ids of the batch that triggered the incident

        Returns:
            Path to the created incident directory
        """
        kind_dir = os.path.join(self.output_dir, kind.lower())
        os.makedirs(kind_dir, exist_ok=True)

        timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        step = context.get("step", 0)
        incident_dir = os.path.join(kind_dir, f"{kind.lower()}_step{step}_{timestamp}")
        counter = 1
        original = incident_dir
        while os.path.exists(incident_dir):
            incident_dir = f"{original}_{counter}"
            counter += 1
        os.makedirs(incident_dir)

        with open(os.path.join(incident_dir, "incident.json"), "w") as f:
            json.dump({"kind": kind, **context}, f, indent=2, default=str)
        with open(os.path.join(incident_dir, "samples.txt"), "w") as f:
            f.write("\n".join(sample_ids) + "\n")
        self._create_readme(incident_dir, kind, context, sample_ids)
        self.count += 1
        return incident_dir

    def _create_readme(self, incident_dir: str, kind: str, context: Dict[str, Any], sample_ids: List[str]) -> None:
        with open(os.path.join(incident_dir, "README.md"), "w") as f:
            f.write(f"# {kind}\n\n")
            f.write(f"Recorded on {datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S')}.\n\n")
            f.write("## Context\n\n")
            for key in ("phase", "epoch", "step", "lr", "loss"):
                if key in context:
                    f.write(f"- **{key}**: {context[key]}\n")
            params = context.get("parameters") or []
            if params:
                f.write("\n## Offending parameters\n\n")
                for name in params[:50]:
                    f.write(f"- `{name}`\n")
            f.write("\n## Batch\n\n")
            f.write(f"{len(sample_ids)} sample(s), listed in `samples.txt`.\n\n")
            f.write("## Steps to Reproduce\n\n")
            f.write("1. Load the weights saved before the failing epoch\n")
            f.write("2. Rebuild the batch from `samples.txt` with the run seed and the epoch above\n")
            f.write("3. Run one training step at the recorded learning rate\n")
