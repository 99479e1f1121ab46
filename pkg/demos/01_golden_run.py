"""Generate a strategy for a night-time mood question with the scripted backend.

Run:  python3 demos/01_golden_run.py
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from mobisense import (
    Inquiry,
    MockBackend,
    MockScript,
    PipelineConfig,
    default_knowledge_base,
    generate_strategy,
    render_strategy_markdown,
)

scripts = Path(str(resources.files("mobisense").joinpath("data", "mock_scripts")))
backend = MockBackend(MockScript.load(scripts / "demo.yaml"))
kb = default_knowledge_base()

# The shipped rules text and two worked examples form the prompt prefix.
config = PipelineConfig.default()
record = generate_strategy(
    Inquiry("INPUT: I wish to understand the mood instability of the user during the night"),
    config,
    kb,
    backend,
)

print(f"outcome: {record.outcome.value} after {len(record.attempts)} attempt(s)\n")
print(render_strategy_markdown(record.strategy, kb))
