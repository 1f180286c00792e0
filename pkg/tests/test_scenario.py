from importlib import resources

import pytest
from hypothesis import given, settings, strategies as st

from allmempro_sim import MemoryAccessRule, parse, render, run, run_text
from allmempro_sim.errors import ParseError
from allmempro_sim.scenario import Alloc, Config, ContextOverride, Free, Load, Read, Rule, Unload, Write

SCENARIOS = sorted(p.name for p in resources.files("allmempro_sim").joinpath("scenarios").iterdir() if p.name.endswith(".scn"))


def scenario_text(name: str) -> str:
    return resources.files("allmempro_sim").joinpath("scenarios", name).read_text()


def test_parse_examples():
    sc = parse(
        "load a.sys 1000 100 protected share=b.sys,c.sys  # comment\n"
        "// whole-line comment\n"
        "alloc a.sys auto 10\n"
        "read a.sys auto 0xFFFF0008 8 expect=zeros pid=9 proc=x\n"
        "write a.sys 1010 FFFF0008 ba0a expect=ba0a expect_unchanged\n"
        "rule 1000 100 FFFF0000 10 R=1\n"
        "free a.sys FFFF0000\n"
        "unload a.sys\n"
        "config mediated 40000\n"
    )
    cmds = sc.commands
    assert cmds[0] == Load("a.sys", 0x1000, 0x100, True, ("b.sys", "c.sys"))
    assert cmds[0].line == 1
    assert cmds[1] == Alloc("a.sys", None, 0x10) and cmds[1].line == 3
    assert cmds[2] == Read("a.sys", None, 0xFFFF0008, 8, bytes(8), ContextOverride(pid=9, process="x"))
    assert cmds[3] == Write("a.sys", 0x1010, 0xFFFF0008, b"\xba\x0a", b"\xba\x0a", True)
    assert cmds[4] == Rule(MemoryAccessRule(0x1000, 0x100, 0xFFFF0000, 0x10, True, False))
    assert cmds[5] == Free("a.sys", 0xFFFF0000)
    assert cmds[6] == Unload("a.sys")
    assert cmds[7] == Config("mediated", "40000")
    assert sc.config.mediated == 40000


@pytest.mark.parametrize(
    "text,line,col",
    [
        ("frobnicate x", 1, 1),
        ("\nload a.sys zz 10", 2, 12),
        ("read a.sys auto 1000 9", 1, 22),
        ("read a.sys auto 1000", 1, 21),
        ("write a.sys auto 1000 abc", 1, 23),
        ("write a.sys auto 1000 aa expect=aabb", 1, 26),
        ("read a.sys auto 1000 1 bogus=1", 1, 24),
        ("config nope 1", 1, 8),
        ("config mediated x", 1, 17),
        ("rule 1000 10 2000", 1, 18),
        ("rule 1000 10 2000 10 X=1", 1, 22),
        ("load a.sys 10000000000000000 10", 1, 12),
        ("alloc a.sys 1000 0", 1, 18),
    ],
)
def test_parse_errors_locate_the_problem(text, line, col):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert (info.value.line, info.value.column) == (line, col)


names = st.from_regex(r"[a-z][a-z0-9_]{0,8}\.sys", fullmatch=True)
addrs = st.integers(0, (1 << 64) - 1)
ips = st.none() | addrs
ctx = st.builds(
    ContextOverride,
    cpu=st.none() | st.integers(0, 64),
    pid=st.none() | st.integers(0, 99999),
    tid=st.none() | st.integers(0, 99999),
    process=st.none() | st.from_regex(r"[A-Za-z_][A-Za-z0-9_.]{0,14}", fullmatch=True),
)


@st.composite
def rules(draw):
    drv = draw(st.integers(0, (1 << 63) - 1))
    drv_size = draw(st.integers(1, 1 << 20))
    alloc = draw(st.integers(drv + drv_size, (1 << 64) - 2))
    size = draw(st.integers(1, (1 << 64) - alloc))
    return MemoryAccessRule(drv, drv_size, alloc, size, draw(st.booleans()), draw(st.booleans()))


@st.composite
def reads(draw):
    width = draw(st.integers(1, 8))
    expect = draw(st.none() | st.binary(min_size=width, max_size=width))
    return Read(draw(names), draw(ips), draw(addrs), width, expect, draw(ctx))


@st.composite
def writes(draw):
    data = draw(st.binary(min_size=1, max_size=8))
    expect = draw(st.none() | st.binary(min_size=len(data), max_size=len(data)))
    return Write(draw(names), draw(ips), draw(addrs), data, expect, draw(st.booleans()), draw(ctx))


commands = st.one_of(
    st.builds(Load, names, addrs, st.integers(1, (1 << 64) - 1), st.booleans(), st.lists(names, max_size=3).map(tuple)),
    st.builds(Unload, names),
    st.builds(Alloc, names, st.none() | addrs, st.integers(1, (1 << 64) - 1)),
    st.builds(Free, names, addrs),
    reads(),
    writes(),
    rules().map(Rule),
    st.sampled_from(["mediated", "cpu", "process", "protect_module_image"]).flatmap(
        lambda k: st.builds(
            Config, st.just(k),
            {"mediated": st.integers(1, 10**6).map(str), "cpu": st.integers(0, 7).map(str),
             "process": st.just("Idle"), "protect_module_image": st.sampled_from(["0", "1"])}[k],
        )
    ),
)


@settings(max_examples=200)
@given(st.lists(commands, max_size=12))
def test_render_parse_round_trip(cmds):
    from allmempro_sim import Scenario

    text = render(Scenario(cmds))
    assert parse(text).commands == cmds


@pytest.mark.parametrize("name", SCENARIOS)
def test_bundled_scenarios_pass(name):
    report = run_text(scenario_text(name), name)
    assert report.ok, report.summary()
    assert report.metrics.identities_hold()
    assert report.expectations


def test_bundled_scenario_runs_are_deterministic():
    text = scenario_text("demo1_isolation.scn")
    a, b = run_text(text), run_text(text)
    assert a.to_dict() == b.to_dict()


def test_empty_scenario():
    report = run_text("# nothing here\n")
    assert report.ok and report.trace == [] and report.modeled_ticks == 0


def test_failed_expectation_is_reported():
    report = run_text(
        "load a.sys FFFF800000000000 10000\n"
        "write a.sys auto 5000 01\n"
        "read a.sys auto 5000 1 expect=02\n"
    )
    assert not report.ok
    assert "FAIL line 3" in report.summary()


def test_runtime_error_stops_unless_continuing():
    text = "load a.sys FFFF800000000000 10000\nunload b.sys\nwrite a.sys auto 5000 01 expect=01\n"
    report = run_text(text)
    assert not report.ok and report.errors[0].line == 2 and report.expectations == []
    report = run_text(text, overrides=[("continue_on_error", "1")])
    assert len(report.errors) == 1 and report.expectations[0].passed


def test_ip_must_lie_inside_the_driver():
    report = run_text("load a.sys FFFF800000000000 10000\nread a.sys FFFF800000020000 5000 1\n")
    assert report.errors and "outside" in str(report.errors[0])


def test_bump_allocator_is_aligned_and_skips_explicit_blocks():
    report = run_text(
        "load a.sys FFFF800000000000 10000 protected\n"
        "alloc a.sys auto 3\n"
        "alloc a.sys FFFFA400AC479100 8\n"
        "alloc a.sys auto 10\n"
    )
    assert report.ok
    addrs = [o.value[0] for o in report.outcomes[1:]]
    assert addrs == [0xFFFFA400AC479000, 0xFFFFA400AC479100, 0xFFFFA400AC479110]


def test_config_lines_shape_the_run():
    report = run_text(
        "config mediated 1000\n"
        "load a.sys FFFF800000000000 10000 protected\n"
        "load b.sys FFFF800000010000 10000\n"
        "alloc a.sys auto 10\n"
        "read b.sys auto FFFFA400AC479000 1 expect=zeros proc=evil\n"
    )
    assert report.ok and report.modeled_ticks == 1000
    assert "INF #0 4 7732 evil" in report.trace_text()
