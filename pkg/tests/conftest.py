import os

import pytest

from ppde import experiments as ex

# Desk-scale profile shared by the slow experiment tests.
DESK = ex.ExperimentConfig.from_dict({"family": {"type": "t1", "p": 10, "sigma": 0, "mu": 1}})
SEEDS = (0, 1, 2)

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("PPDE_FULLSCALE") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set PPDE_FULLSCALE=1")
    for item in items:
        if "fullscale" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")


class Runner:
    """Memoizes run_testcase by configuration so criteria can share runs."""

    def __init__(self):
        self.cache = ex.DatasetCache()
        self.records = {}
        self.log = os.environ.get("PPDE_RUN_LOG")

    def __call__(self, config, seed):
        key = repr((config.with_seed(seed).to_dict(), seed))
        if key not in self.records:
            out = ex.run_testcase(config.with_seed(seed), self.cache, seed)
            summary = ex.convergence_report(out.history)
            self.records[key] = (out.record, summary)
            if self.log:
                r = out.record
                with open(self.log, "a") as fh:
                    fh.write(f"{r.testcase} p={r.p} sigma={r.sigma} mu={r.mu} n={r.n_train} "
                             f"seed={seed} test={r.mean_rel_test:.4f} train={r.mean_rel_train:.4f} "
                             f"max={r.max_rel_test:.4f} overfit={summary['overfit']} "
                             f"t={r.wall_time_s:.0f}s\n")
        return self.records[key]


@pytest.fixture(scope="session")
def runner():
    return Runner()
