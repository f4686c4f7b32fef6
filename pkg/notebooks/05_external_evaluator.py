"""
Plugging in an external evaluator
=================================

External objectives are computed by another process that reads one JSON
request per line on stdin and writes one JSON response per line on stdout.
Here a tiny evaluator is written to a temporary file and started as a
subprocess; it scores each genome by its parameter count.
"""

# %%
import sys
import tempfile
from pathlib import Path

from moenas import SearchConfig, run

script = Path(tempfile.mkdtemp()) / "evaluator.py"
script.write_text('''
import json, sys
from moenas.evaluation import EvaluationRequest, EvaluationResponse
from moenas.network import network_cost

for line in sys.stdin:
    req = EvaluationRequest.from_line(line)
    score = 1.0 - 1.0 / (1.0 + network_cost(req.genome, req.macro).params / 1e6)
    sys.stdout.write(EvaluationResponse(req.id, (score,)).to_line())
    sys.stdout.flush()
''')

# %%
config = SearchConfig.from_dict({
    "population_size": 16,
    "max_generations": 5,
    "objectives": ["external", "speed"],
    "evaluator": {"command": [sys.executable, str(script)], "timeout": 30, "retries": 1},
    "parallelism": 4,
})
result = run(config)
for ind in sorted(result.archive, key=lambda i: -i.objectives[0])[:5]:
    print(ind.id, [round(v, 4) for v in ind.objectives])

# %% [markdown]
# A line that is not a valid response is logged and skipped. A request with
# no answer within the timeout is sent again, and after the last retry the
# individual gets the failure objectives and never enters the archive.
