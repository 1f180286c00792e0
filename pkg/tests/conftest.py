from __future__ import annotations

import pytest

from allmempro_sim import Hypervisor, SimConfig

from golden import ALLOCATOR, ATTACKER, KERNEL

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.passed else "FAIL"
        prev = _criteria.get(label)
        if prev is None or prev[0] == "PASS":
            _criteria[label] = (status, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split()[0])):
        status, name = _criteria[label]
        terminalreporter.write_line(f"{status}  criterion {label}  [{name}]")


@pytest.fixture
def hv() -> Hypervisor:
    return Hypervisor(self_check=True)


@pytest.fixture
def demo_hv() -> Hypervisor:
    """Allocator (protected), attacker and kernel loaded; nothing allocated."""
    hv = Hypervisor(SimConfig(), self_check=True)
    hv.machine.register_module(*ALLOCATOR, is_protected=True)
    hv.machine.register_module(*ATTACKER)
    hv.machine.register_module(*KERNEL)
    return hv
