"""Shared fixtures.

The expensive corpora (random-design simulation sweeps, the demo ratio grid)
are session-scoped and aggregate everything the acceptance tests need, so
each simulation runs exactly once per session.
"""

import time
from collections import Counter

import pytest

import helpers
from pipesched.model import Policy, tile_costs
from pipesched.schedulability import utilization_profile
from pipesched.analysis import period_sweep
from pipesched.sim import detect_divergence, simulate, verify_trace


@pytest.fixture
def golden_budget():
    return helpers.golden_budget()


@pytest.fixture
def golden_ts():
    return helpers.golden_taskset()


@pytest.fixture
def blocking():
    return helpers.blocking_fixture()


def _simulate_and_audit(design, ts):
    """Simulate at the divergence-capable horizon and collect per-run facts."""
    horizon = 128 * ts.max_period
    trace = simulate(design, ts, horizon=horizon)
    problems = verify_trace(trace)
    xi = [tile_costs(a).preemption_bound for a in design.accs]
    groups = Counter()
    overhead_violations = 0
    for rec in trace.preempts:
        groups[(rec.preemptor_task, rec.preemptor_job, rec.acc)] += 1
        if rec.inflicted > xi[rec.acc] or rec.suffered > xi[rec.acc]:
            overhead_violations += 1
    return {
        "max_util": utilization_profile(design, ts).max_util,
        "divergent": bool(detect_divergence(trace, ts)),
        "verify_problems": len(problems),
        "problem_sample": problems[:3],
        "events": len(trace.events),
        "responses": sum(len(v) for v in trace.responses.values()),
        "preemptions": len(trace.preempts),
        "max_initiations_per_job_acc": max(groups.values(), default=0),
        "overhead_violations": overhead_violations,
    }


@pytest.fixture(scope="session")
def fifo_corpus_report():
    """200 schedulable + 50 overloaded random FIFO designs, each simulated
    once at 128x the max period and audited."""
    t0 = time.time()
    feasible = helpers.feasible_corpus(seed=101, count=200)
    overload = helpers.overload_corpus(seed=202, count=50)
    report = {
        "feasible": [_simulate_and_audit(d, ts) for d, ts in feasible],
        "overload": [_simulate_and_audit(d, ts) for d, ts in overload],
    }
    report["elapsed"] = time.time() - t0
    return report


@pytest.fixture(scope="session")
def edf_corpus_report():
    """30 schedulable-band + 10 overloaded random EDF designs plus the
    blocking fixture, simulated once each with preemption accounting."""
    t0 = time.time()
    corpus = helpers.feasible_corpus(seed=303, count=30, policy=Policy.EDF)
    corpus += helpers.overload_corpus(seed=404, count=10, policy=Policy.EDF)
    corpus.append(helpers.blocking_fixture())
    report = {"runs": [_simulate_and_audit(d, ts) for d, ts in corpus]}
    report["elapsed"] = time.time() - t0
    return report


@pytest.fixture(scope="session")
def demo_sweep():
    """The shipped 7x7 ratio-grid demo (two antagonistic tasks, three search
    methods) plus its wall-clock time."""
    t0 = time.time()
    grid = period_sweep(helpers.sweep_demo_template(), helpers.sweep_demo_budget())
    return grid, time.time() - t0
