import pytest
import torch

from fmsr.toy import toy_overfit


@pytest.fixture(scope="session", autouse=True)
def _single_thread():
    # bitwise determinism and the timing budgets assume one intra-op thread
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """The 2000-step toy overfit, shared by every test that needs a trained model."""
    return toy_overfit(out_dir=str(tmp_path_factory.mktemp("toy")))


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    log = getattr(pytestconfig, "_acceptance_log", None)
    if log is None:
        log = pytestconfig._acceptance_log = {}
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance_log", None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(log):
        ok, name, detail = log[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {num:>2} {name}: {detail}")
