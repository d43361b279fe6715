import pytest
from hypothesis import given, settings, strategies as st

from scenicsim.congestion import (Ack, Cnp, DcqcnCc, DcqcnParams, DualSlot,
                                  EcnEcho, Sent, Timer, WindowCc,
                                  UNBOUNDED_ALLOWANCE)

KIB = 1024
LINE = 100e9


def test_window_sent_consumes_allowance():
    cc = WindowCc(256 * KIB)
    dec = cc.update(Sent(128 * KIB))
    assert dec.allowance_bytes == 128 * KIB


def test_window_ack_restores_allowance():
    cc = WindowCc(256 * KIB)
    cc.update(Sent(128 * KIB))
    dec = cc.update(Ack(128 * KIB))
    assert dec.allowance_bytes == 256 * KIB


def test_window_ignores_congestion_signals():
    cc = WindowCc(64 * KIB)
    cc.update(Sent(10 * KIB))
    before = cc.decision()
    cc.update(Cnp(5))
    cc.update(EcnEcho(6))
    assert cc.decision() == before
    assert cc.next_deadline() is None


def test_window_allowance_never_negative():
    cc = WindowCc(KIB)
    cc.update(Sent(4 * KIB))
    assert cc.decision().allowance_bytes == 0


def dcqcn(g=1 / 256, **kw):
    return DcqcnCc(DcqcnParams(line_rate_bps=LINE, g=g, **kw))


def test_cnp_with_alpha_one_halves_rate():
    cc = dcqcn()
    assert cc.state.alpha == 1.0
    dec = cc.update(Cnp(at=1000))
    assert cc.state.rate_current_bps == LINE / 2
    assert cc.state.rate_target_bps == LINE
    assert dec.pacing_rate_bps == LINE / 2


def test_cnp_partial_alpha():
    cc = dcqcn()
    cc.state.alpha = 0.5
    cc.update(Cnp(at=1000))
    assert cc.state.rate_current_bps == pytest.approx(LINE * 0.75)


def test_fast_recovery_halves_the_gap_each_period():
    """After one decrease, five timer periods each halve the distance to the
    target; the sixth adds the additive step to the (already line-rate)
    target.  Hand-computed expectations."""
    cc = dcqcn()
    cc.update(Cnp(at=1000))
    expect = [50e9]
    rc, rt = 50e9, 100e9
    for _ in range(6):
        rc = (rt + rc) / 2
        expect.append(rc)
    observed = [cc.state.rate_current_bps]
    t = 1000
    for _ in range(6):
        t += 55_000
        cc.update(Timer(at=t))
        observed.append(cc.state.rate_current_bps)
    assert observed == pytest.approx(expect, rel=1e-12)
    assert cc.state.rate_current_bps <= cc.state.rate_target_bps


def test_byte_counter_triggers_increase():
    cc = dcqcn(byte_counter_bytes=10_000_000)
    cc.update(Cnp(at=0))
    assert cc.state.byte_counter == 0
    cc.update(Sent(4_000_000))
    cc.update(Sent(4_000_000))
    assert cc.state.byte_counter == 0
    cc.update(Sent(4_000_000))
    assert cc.state.byte_counter == 1
    assert cc.state.bytes_since_event == 2_000_000


def test_alpha_decays_without_marks():
    cc = dcqcn()
    cc.update(Cnp(at=0))
    a0 = cc.state.alpha
    cc.update(Timer(at=55_000))
    assert cc.state.alpha == pytest.approx(a0 * (1 - 1 / 256))


def test_dcqcn_allowance_unbounded_rate_binding():
    dec = dcqcn().decision()
    assert dec.allowance_bytes == UNBOUNDED_ALLOWANCE
    assert dec.pacing_rate_bps == LINE


signal_strategy = st.lists(
    st.one_of(
        st.builds(Sent, st.integers(1, 1 << 20)),
        st.builds(Ack, st.integers(1, 1 << 20), st.integers(0, 10_000)),
        st.just(Cnp(0)),
        st.just(EcnEcho(0)),
    ),
    min_size=1, max_size=300,
)


@given(signal_strategy)
@settings(max_examples=60, deadline=None)
def test_dcqcn_invariants_over_random_traces(signals):
    cc = dcqcn()
    t = 0
    for sig in signals:
        t += 1000
        if isinstance(sig, Cnp):
            sig = Cnp(at=t)
        elif isinstance(sig, EcnEcho):
            sig = EcnEcho(at=t)
        cc.update(sig)
        st_ = cc.state
        assert 0.0 <= st_.alpha <= 1.0
        assert 0.0 < st_.rate_current_bps <= LINE
        assert st_.rate_current_bps <= st_.rate_target_bps + 1e-6


@given(signal_strategy)
@settings(max_examples=30, deadline=None)
def test_dcqcn_replay_equality(signals):
    def run():
        cc = dcqcn()
        t = 0
        for sig in signals:
            t += 500
            if isinstance(sig, (Cnp, EcnEcho)):
                sig = type(sig)(at=t)
            cc.update(sig)
        return (cc.state.rate_current_bps, cc.state.rate_target_bps,
                cc.state.alpha, cc.state.byte_counter, cc.state.timer_counter)

    assert run() == run()


# -- dual slot -------------------------------------------------------------


def wfactory(w=64 * KIB):
    return lambda at: WindowCc(w)


def dfactory():
    return lambda at: DcqcnCc(DcqcnParams(line_rate_bps=LINE), at)


def test_load_completes_after_reconfig_delay():
    slot = DualSlot(WindowCc(KIB))
    ready = slot.load_shadow(dfactory(), now=0)
    assert ready == 8_000_000
    assert not slot.shadow_ready(7_999_999)
    assert slot.shadow_ready(8_000_000)


def test_swap_before_ready_is_rejected():
    slot = DualSlot(WindowCc(KIB))
    slot.load_shadow(dfactory(), now=0)
    assert slot.swap_active(4_000_000) is False
    assert isinstance(slot.active, WindowCc)


def test_swap_without_shadow_is_rejected():
    slot = DualSlot(WindowCc(KIB))
    assert slot.swap_active(0) is False


def test_shadow_warms_only_after_ready():
    slot = DualSlot(WindowCc(KIB))
    slot.load_shadow(dfactory(), now=0)
    slot.update(Cnp(at=1_000_000), now=1_000_000)      # load in progress: opaque
    slot.update(Cnp(at=9_000_000), now=9_000_000)      # warmed
    assert slot.swap_active(9_000_001)
    assert slot.active.kind == "dcqcn"
    assert slot.active.state.rate_current_bps < LINE   # reflects the warm-up CNP


def test_decision_at_swap_comes_from_new_active():
    slot = DualSlot(WindowCc(KIB))
    slot.load_shadow(dfactory(), now=0)
    slot.update(Sent(KIB), now=8_000_000)
    assert slot.decision().allowance_bytes == 0        # old window exhausted
    assert slot.swap_active(8_000_000)
    assert slot.decision().pacing_rate_bps == LINE     # new active, no gap


def test_swap_then_reload_restores_kind_with_fresh_state():
    slot = DualSlot(WindowCc(KIB))
    slot.load_shadow(dfactory(), now=0)
    slot.update(Sent(KIB), now=8_000_000)              # exhaust the window
    assert slot.swap_active(8_000_000)
    slot.load_shadow(wfactory(KIB), now=8_000_000)
    assert slot.swap_active(16_000_000)
    assert slot.active.kind == "window"
    assert slot.active.decision().allowance_bytes == KIB  # fresh, not exhausted


def test_pending_load_is_replaced():
    slot = DualSlot(WindowCc(KIB))
    slot.load_shadow(dfactory(), now=0)
    ready = slot.load_shadow(wfactory(2 * KIB), now=4_000_000)
    assert ready == 12_000_000
    assert slot.swap_active(12_000_000)
    assert slot.active.kind == "window"
    assert slot.active.window_bytes == 2 * KIB
