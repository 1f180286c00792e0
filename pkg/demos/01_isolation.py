"""A spyware driver tries to read and overwrite another driver's pool block.

The allocator driver is protected, so its allocation gets an owner-only rule.
The attacker's read comes back as zeros and its write lands on the decoy page.
"""

from allmempro_sim import AccessEvent, Hypervisor

ALLOC = 0xFFFFA400AC479FD0

hv = Hypervisor()
allocator = hv.machine.register_module("mem_allocator_driver.sys", 0xFFFFF8016F630000, 0xB000, is_protected=True)
hv.machine.register_module("mem_attacker_driver.sys", 0xFFFFF8016F650000, 0x9000)

for rule in hv.policy.on_alloc(allocator, ALLOC, 0x10):
    print("installed:", rule.to_text())

hv.execute_access(AccessEvent.write(0xFFFFF8016F6314EA, ALLOC + 8, b"\xba\x0a"))
owner = hv.execute_access(AccessEvent.read(0xFFFFF8016F6317C8, ALLOC + 8, 8))
spy = hv.execute_access(AccessEvent.read(0xFFFFF8016F651228, ALLOC + 8, 8))
hv.execute_access(AccessEvent.write(0xFFFFF8016F651257, ALLOC + 8, b"\xff"))

print("owner sees   ", owner.observed.hex())
print("attacker sees", spy.observed.hex())
print("memory holds ", hv.machine.raw_read(ALLOC + 8, 8).hex())
print()
print(hv.trace.text())
