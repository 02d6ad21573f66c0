import numpy as np
import pytest

from statprinciples.hierarchy import LinearHM


def random_spd(rng, d, jitter=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + jitter * np.eye(d)


def random_hm(rng, state_dim=None, data_dim=None):
    p = state_dim or int(rng.integers(1, 11))
    m = data_dim or int(rng.integers(1, 26))
    return LinearHM(
        c=rng.standard_normal(m),
        K=rng.standard_normal((m, p)),
        noise_cov=random_spd(rng, m),
        prior_mean=rng.standard_normal(p),
        prior_cov=random_spd(rng, p),
    )


def scalar_hm(prior_mean=1.0, prior_var=4.0, noise_var=1.0, k=1.0, c=0.0):
    return LinearHM([c], [[k]], [[noise_var]], [prior_mean], [[prior_var]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_chain(rng, max_events=4, max_outcomes=10, zero_prob=0.0):
    import itertools

    from statprinciples.chains import make_chain

    spec = []
    prev = []
    for k in range(int(rng.integers(1, max_events + 1))):
        outcomes = tuple(f"e{k}o{j}" for j in range(int(rng.integers(1, max_outcomes + 1))))
        table = {}
        for hist in itertools.product(*prev):
            p = rng.dirichlet(np.ones(len(outcomes)))
            if zero_prob and len(outcomes) > 1:
                p[rng.random(len(outcomes)) < zero_prob] = 0.0
                if p.sum() == 0:
                    p[0] = 1.0
                p = p / p.sum()
            table[hist] = tuple(p)
        spec.append((f"event{k}", outcomes, table))
        prev.append(outcomes)
    return make_chain(spec)


# ---- acceptance reporting ---------------------------------------------------

import time

SUITE_BUDGET_S = 300.0
ACCEPTANCE_LINES = []
_session_start = [None]


def record_criterion(number, ok, detail):
    """Print and remember one acceptance line; callers assert ``ok`` afterwards."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_sessionstart(session):
    _session_start[0] = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - _session_start[0]
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
    ok = elapsed < SUITE_BUDGET_S
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'} criterion 13 (suite runtime): {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)"
    )


def pytest_sessionfinish(session, exitstatus):
    if ACCEPTANCE_LINES and time.perf_counter() - _session_start[0] >= SUITE_BUDGET_S:
        session.exitstatus = 1
