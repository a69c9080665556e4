import numpy as np
import pytest

from wiretap_lab.channels import BscScenario, make_state_bsc

# reference values, 40-digit evaluation of the binary closed forms
H_01 = 0.46899559358928122
H_018 = 0.68007704572827984
C_NS_0 = 0.21108145213899862
C_NS_SAT = 0.53100440641071878
C_NS_SAT_RF = 0.31992295427172016
C_S_Q01 = 0.68125870812399944
KEY_TERM_Q01 = 0.75208598248804753
C_S_Q001 = 0.37715984385999759
C_S_Q05_SAT = 0.55188136908382172


@pytest.fixture
def paper_scn():
    return BscScenario()


@pytest.fixture
def paper_sys(paper_scn):
    return make_state_bsc(paper_scn)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, shown after the run even when output is captured
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
