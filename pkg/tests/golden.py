"""Addresses, sizes and instruction pointers from the reference demo captures."""

ALLOCATOR = ("mem_allocator_driver.sys", 0xFFFFF8016F630000, 0xB000)
ATTACKER = ("mem_attacker_driver.sys", 0xFFFFF8016F650000, 0x9000)
KERNEL = ("ntkrnlmp.exe", 0xFFFFF80170201000, 0x8D2000)

ALLOC_ADDR = 0xFFFFA400AC479FD0
SHARED_ADDR = 0xFFFFA400AC479F80
OWNER_READ_IP = 0xFFFFF8016F6317C8
OWNER_WRITE_IP = 0xFFFFF8016F6314EA
ATTACKER_READ_IP = 0xFFFFF8016F651228
ATTACKER_WRITE_IP = 0xFFFFF8016F651257
KERNEL_IP = 0xFFFFF801702FB65B
