import copy

import pytest

SMALL = dict(
    name="small",
    seed=3,
    dt=0.001,
    horizon=1.5,
    oracle_every=10,
    grid=dict(buses="ieee14_buses.csv", lines="ieee14_lines.csv"),
    service=dict(kind="DC", c_agg=20.0),
    events=[dict(kind="step", bus="2", t0=0.5, magnitude=1.0)],
    arus=[dict(
        name="aru1", algorithm="tot1", plant="first_order", start_time=0.5,
        assets=[
            dict(name="b1", bus="4", cost=dict(a=2.0, b=1.0), p_max=8.8, tau=0.05),
            dict(name="b2", bus="5", cost=dict(a=3.2, b=1.0), p_max=7.7, tau=0.16),
            dict(name="b3", bus="9", cost=dict(a=3.0, b=1.0), p_max=9.3, tau=0.12),
        ])],
)


@pytest.fixture
def small_doc():
    """A 1.5 s scenario with a step event at 0.5 s; safe to mutate."""
    return copy.deepcopy(SMALL)


ACCEPTANCE = []


def record(number, ok, detail):
    """Log one acceptance verdict; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
