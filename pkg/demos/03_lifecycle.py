"""Rules appear on alloc and vanish on free; a freed block is zeroed.

Runs a scenario from text and prints the per-expectation report.
"""

from allmempro_sim import run_text

SCENARIO = """
load mem_allocator_driver.sys FFFFF8016F630000 B000 protected share=ntkrnlmp.exe
load ntkrnlmp.exe             FFFFF80170201000 8D2000
load mem_attacker_driver.sys  FFFFF8016F650000 9000

alloc mem_allocator_driver.sys auto 10
write mem_allocator_driver.sys auto FFFFA400AC479000 1122334455667788
read  ntkrnlmp.exe auto FFFFA400AC479000 8 expect=1122334455667788
read  mem_attacker_driver.sys auto FFFFA400AC479000 8 expect=zeros

free  mem_allocator_driver.sys FFFFA400AC479000
write mem_attacker_driver.sys auto FFFFA400AC479000 41 expect=41
"""

report = run_text(SCENARIO, "lifecycle")
print(report.summary())
print(report.metrics_text())
