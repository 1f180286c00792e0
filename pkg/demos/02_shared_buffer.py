"""Two explicit rules share one buffer between a driver and the kernel."""

from allmempro_sim import AccessEvent, Hypervisor, parse_rule

BUF = 0xFFFFA400AC479F80

hv = Hypervisor()
hv.machine.register_module("mem_allocator_driver.sys", 0xFFFFF8016F630000, 0xB000, is_protected=True)
hv.machine.register_module("mem_attacker_driver.sys", 0xFFFFF8016F650000, 0x9000)
hv.machine.register_module("ntkrnlmp.exe", 0xFFFFF80170201000, 0x8D2000)

hv.policy.add_rule(parse_rule("rule FFFFF8016F630000 B000 FFFFA400AC479F80 40"))
hv.policy.add_rule(parse_rule("rule FFFFF80170201000 8D2000 FFFFA400AC479F80 40"))

# the kernel fills in the system information block
for ip, off, data in [
    (0xFFFFF801702FB65B, 0x4, "5a620200"),
    (0xFFFFF801702FB65F, 0x8, "00100000"),
    (0xFFFFF801702FB737, 0xC, "7dff0f00"),
]:
    hv.execute_access(AccessEvent.write(ip, BUF + off, bytes.fromhex(data)))

owner = hv.execute_access(AccessEvent.read(0xFFFFF8016F631743, BUF + 4, 8))
spy = hv.execute_access(AccessEvent.read(0xFFFFF8016F651228, BUF + 4, 8))
print("owner sees   ", owner.observed.hex(), owner.decision.kind.value)
print("attacker sees", spy.observed.hex(), spy.decision.kind.value)
