"""Transport transparency: the attack cannot tell providers apart.

The same scenario is attacked three ways: in process, over HTTP against
the served simulator, and offline from an exported logit file. All three
produce bitwise-identical advantage tables.
"""

import tempfile
from pathlib import Path

from caia import (
    AttributeSpace,
    HttpLogitProvider,
    LogitRecord,
    ScenarioConfig,
    SimulatorLogitProvider,
    generate_scenario,
    read_logit_file,
    run_attack,
    serve,
    simulate_logits,
    write_logit_file,
)

hair = AttributeSpace("hair_color", ("black", "blond", "brown", "gray"))
scenario = generate_scenario(
    ScenarioConfig(
        num_classes=16, attribute=hair, mu=1.0, sigma=0.5, sigma_c=0.5,
        base_std=1.0, num_tuples=12, seed=99,
    )
)
tuples = scenario.attack_tuples()

in_process = run_attack(tuples, SimulatorLogitProvider(scenario), hair)
print("in-process run done")

with serve(scenario) as server:
    print(f"simulator serving at {server.address}")
    http_provider = HttpLogitProvider(server.address)
    over_http = run_attack(tuples, http_provider, hair)
print("http run done")

with tempfile.TemporaryDirectory() as tmp:
    logit_file = Path(tmp) / "exported.jsonl"
    records = [
        LogitRecord(tid, value, simulate_logits(scenario, tid, value))
        for tid in scenario.tuple_ids()
        for value in hair.values
    ]
    write_logit_file(logit_file, records, scenario.num_classes)
    from_file = run_attack(tuples, read_logit_file(logit_file), hair)
print("file run done")

assert (in_process.table.totals == over_http.table.totals).all()
assert (in_process.table.totals == from_file.table.totals).all()
assert in_process.predictions == over_http.predictions == from_file.predictions
print("\nall three advantage tables are bitwise identical")
