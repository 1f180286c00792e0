"""Modeled latency for mediated and unmediated accesses.

Ticks are a model calibrated per access, not a measurement.
"""

from allmempro_sim import AccessEvent, CostModel, Hypervisor, Metrics, estimate_cost

model = CostModel()
print(f"per access: cached={model.cached_unprotected} uncached={model.uncached_unprotected} mediated={model.mediated}")

hv = Hypervisor()
owner = hv.machine.register_module("owner.sys", 0xFFFFF8016F630000, 0xB000, is_protected=True)
hv.policy.on_alloc(owner, 0xFFFFA400AC479FD0, 0x10)

for _ in range(10):
    hv.execute_access(AccessEvent.read(0xFFFFF8016F631000, 0xFFFFA400AC479FD0, 8))
print("10 mediated reads:  ", hv.modeled_ticks(), "ticks")

for _ in range(10):
    hv.execute_access(AccessEvent.read(0xFFFFF8016F631000, 0xFFFFA400AC500000, 8))
print("plus 10 unmediated: ", hv.modeled_ticks(), "ticks")

# what the mediated fraction costs in a larger workload
for mediated in (0, 10, 100, 1000):
    m = Metrics(ept_violations=mediated, mtf_traps=mediated, granted_accesses=mediated)
    print(f"{mediated:5d} of 10000 mediated -> {estimate_cost(m, model, 10_000):>12,d} ticks")
