import pytest

from allmempro_sim import AccessKind, Check, EptEntry, EptTable, StaleToken, WindowAlreadyOpen
from allmempro_sim.ept import FAKE_PFN

R, W = AccessKind.READ, AccessKind.WRITE
PAGE = 0xFFFFA400AC479
ADDR = 0xFFFFA400AC479FD8


@pytest.fixture
def ept():
    return EptTable()


def test_default_permits_everything(ept):
    assert ept.check(ADDR, R) is Check.PERMIT
    assert ept.check(ADDR, W) is Check.PERMIT
    assert ept.entry(PAGE) == EptEntry(pfn=PAGE)
    assert ept.translate(ADDR) == PAGE


def test_clear_rw_traps_page_only(ept):
    ept.clear_rw(PAGE)
    assert ept.check(ADDR, R) is Check.VIOLATION
    assert ept.check(ADDR, W) is Check.VIOLATION
    assert ept.check(0xFFFFA400AC478FFF, R) is Check.PERMIT
    assert ept.check(0xFFFFA400AC47A000, W) is Check.PERMIT
    assert ept.entry(PAGE).exec_permit


def test_clear_rw_idempotent_and_restore(ept):
    ept.clear_rw(PAGE)
    once = ept.entry(PAGE)
    ept.clear_rw(PAGE)
    assert ept.entry(PAGE) == once
    ept.restore_default(PAGE)
    assert ept.check(ADDR, R) is Check.PERMIT
    assert ept.touched_pages() == []


def test_check_is_pure(ept):
    ept.clear_rw(PAGE)
    assert ept.check(ADDR, W) == ept.check(ADDR, W)
    assert ept.touched_pages() == [PAGE]


def test_grant_window_sets_only_named_permit(ept):
    ept.clear_rw(PAGE)
    prior = ept.entry(PAGE)
    token = ept.open_grant_window(PAGE, R)
    assert token.prior == prior
    assert ept.mtf_armed
    assert ept.check(ADDR, R) is Check.PERMIT
    assert ept.check(ADDR, W) is Check.VIOLATION
    assert ept.translate(ADDR) == PAGE
    ept.close_window(token)
    assert ept.entry(PAGE) == prior
    assert not ept.mtf_armed


def test_windows_do_not_nest(ept):
    ept.clear_rw(PAGE)
    ept.open_grant_window(PAGE, R)
    with pytest.raises(WindowAlreadyOpen):
        ept.open_deny_window(PAGE, W)


def test_deny_window_redirects_to_decoy(ept):
    ept.clear_rw(PAGE)
    token = ept.open_deny_window(PAGE, W)
    assert ept.translate(ADDR) == FAKE_PFN
    assert ept.check(ADDR, W) is Check.PERMIT
    assert ept.check(ADDR, R) is Check.VIOLATION
    ept.decoy[0xFD8] = 0xFF
    ept.close_window(token)
    assert ept.decoy_is_clean()
    assert ept.translate(ADDR) == PAGE
    assert ept.check(ADDR, W) is Check.VIOLATION


def test_two_deny_opens_fail(ept):
    ept.open_deny_window(PAGE, R)
    with pytest.raises(WindowAlreadyOpen):
        ept.open_deny_window(PAGE, R)


def test_stale_token(ept):
    ept.clear_rw(PAGE)
    token = ept.open_grant_window(PAGE, R)
    ept.close_window(token)
    with pytest.raises(StaleToken):
        ept.close_window(token)
    fresh = ept.open_grant_window(PAGE, W)
    with pytest.raises(StaleToken):
        ept.close_window(token)
    ept.close_window(fresh)


def test_grant_window_on_default_page_leaves_no_entry(ept):
    token = ept.open_grant_window(PAGE, R)
    ept.close_window(token)
    assert ept.touched_pages() == []
