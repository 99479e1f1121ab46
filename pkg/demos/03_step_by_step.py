"""Run the five generation steps as separate prompts and inspect each one.

Run:  python3 demos/03_step_by_step.py
"""

from __future__ import annotations

import tempfile
from importlib import resources
from pathlib import Path

from mobisense import (
    MockBackend,
    MockScript,
    PipelineConfig,
    StepMode,
    default_knowledge_base,
    generate_strategy,
    load_run,
    persist_run,
)

scripts = Path(str(resources.files("mobisense").joinpath("data", "mock_scripts")))
kb = default_knowledge_base()
config = PipelineConfig.default(step_mode=StepMode.PER_STEP)
backend = MockBackend(MockScript.load(scripts / "per_step.yaml"))

record = generate_strategy("I wish to understand the mood instability of the user during the night", config, kb, backend)
for exchange in record.attempts[0].steps:
    first_line = exchange.completion.strip().splitlines()[0]
    print(f"{exchange.step.value:<10} {first_line[:70]}")

print(f"\nsensors: {', '.join(sorted(record.strategy.data_sources.sensors))}")
print(f"model:   {record.strategy.model.model} ({record.strategy.model.task_kind.value})")

# Records are plain JSON and reload to an equal value.
with tempfile.TemporaryDirectory() as store:
    path = persist_run(record, store)
    assert load_run(path) == record
    print(f"record round-tripped through {path.name}")
