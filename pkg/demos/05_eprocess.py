"""Token stealing against a kernel-owned rule over the EPROCESS Token field."""

from allmempro_sim import AccessEvent, Hypervisor, MemoryAccessRule

TOKEN = 0xFFFFA400AD2E6080 + 0x358
KERNEL_IP = 0xFFFFF801702FB65B
ATTACKER_IP = 0xFFFFF8016F651257

hv = Hypervisor()
hv.machine.register_module("ntkrnlmp.exe", 0xFFFFF80170201000, 0x8D2000)
hv.machine.register_module("mem_attacker_driver.sys", 0xFFFFF8016F650000, 0x9000)

hv.execute_access(AccessEvent.write(KERNEL_IP, TOKEN, bytes.fromhex("a4e6c81d00c0ffff")))
hv.policy.add_rule(MemoryAccessRule(0xFFFFF80170201000, 0x8D2000, TOKEN, 8))

out = hv.execute_access(AccessEvent.write(ATTACKER_IP, TOKEN, bytes.fromhex("4ac1600300a0ffff")))
print("attacker write denied:", out.denied)
print("token still          :", hv.machine.raw_read(TOKEN, 8).hex())
print()
print(hv.trace.text())
