"""Watch the validator reject a strategy and the model fix it.

The scripted first answer lists a "Heartbeat" sensor that no phone has.  The
validator flags it, the feedback goes back into the prompt, and the second
answer is accepted.

Run:  python3 demos/02_repair_loop.py
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from mobisense import MockBackend, MockScript, PipelineConfig, default_knowledge_base, generate_strategy
from mobisense.validator import violation_feedback_text

scripts = Path(str(resources.files("mobisense").joinpath("data", "mock_scripts")))
kb = default_knowledge_base()
inquiry = "I wish to understand the mood instability of the user during the night"

record = generate_strategy(inquiry, PipelineConfig.default(), kb, MockBackend(MockScript.load(scripts / "repair.yaml")))
for n, attempt in enumerate(record.attempts, 1):
    report = attempt.report  # an empty report is falsy, so compare with None
    verdict = "clean" if report is not None and report.accepted else "rejected"
    print(f"attempt {n}: {verdict}")
    if report is not None and not report.accepted:
        print(violation_feedback_text(attempt.report, kb))
print(f"\nfinal outcome: {record.outcome.value}")

# With no repairs allowed the same script ends in rejection.
strict = PipelineConfig.default(max_repairs=0)
record = generate_strategy(inquiry, strict, kb, MockBackend(MockScript.load(scripts / "repair.yaml")))
print(f"max_repairs=0: {record.outcome.value} after {len(record.attempts)} attempt")
