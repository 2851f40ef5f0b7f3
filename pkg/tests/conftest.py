import datetime as dt

import numpy as np
import pytest

from idmix import constants as C
from idmix.estimation import FittedMixtureModel, Standardization
from idmix.features import STATIC_NAMES, SessionStatics, manifest, mo_names
from idmix.simulation import PathHistory

KEY = (dt.date(2021, 3, 3), 14)


def identity_std(p):
    return Standardization(np.zeros(p), np.ones(p), np.zeros(p, bool))


def hand_model(family="jsu", intercepts=(0.0, 1.0, 0.0, 1.0), constant_pi=None, pi_intercept=0.0,
               logistic_coef=None, gamlss_coefs=None, links=None):
    """Mixture model with coefficients set directly on an unstandardized design."""
    from idmix import distributions as D

    lm, gm = manifest("logistic"), manifest("gamlss")
    lc = np.zeros(len(lm))
    for name, v in (logistic_coef or {}).items():
        lc[lm.index(name)] = v
    gc = np.zeros((4, len(gm)))
    for (k, name), v in (gamlss_coefs or {}).items():
        gc[k, gm.index(name)] = v
    return FittedMixtureModel(family, tuple(links or D.DEFAULT_LINKS[family]), tuple(lm), identity_std(len(lm)),
                              pi_intercept, lc, 0.0, constant_pi, tuple(gm), identity_std(len(gm)),
                              np.asarray(intercepts, float), gc, np.zeros(4), {"id": f"mix_{family}"})


def flat_statics(da_price=40.0, anchor=40.0):
    vals = {n: 0.0 for n in list(STATIC_NAMES) + mo_names(C.DEFAULT_Q_GRID)}
    return SessionStatics(KEY, da_price, anchor, vals)


def flat_history(P0=40.0):
    return PathHistory(np.zeros(C.LAG_DEPTH), np.ones(C.LAG_DEPTH), P0)


@pytest.fixture
def statics():
    return flat_statics()


@pytest.fixture
def history():
    return flat_history()


ACCEPTANCE: dict[int, tuple[bool, str]] = {}
CRITERIA = {1: "distribution correctness", 2: "S_U normal limit", 3: "estimation oracle equivalence",
            4: "GAMLSS recovery", 5: "scoring-rule oracles", 6: "DM test calibration",
            7: "simulation determinism", 8: "merit-order slope", 9: "end-to-end synthetic study",
            10: "leakage canary"}


def record(n: int, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n} failed: {detail}"


def pytest_terminal_summary(terminalreporter):
    ran = [n for n in CRITERIA if n in ACCEPTANCE]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d} ({CRITERIA[n]}): {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d} ({CRITERIA[n]}): NOT RUN")
