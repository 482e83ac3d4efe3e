import numpy as np
import pytest

from sglstm.core import Scene, Track


def line_scene(n_frames=10, n_peds=1, stride=1, dt=0.4):
    tracks = {}
    frames = np.arange(n_frames) * stride
    for p in range(n_peds):
        xy = np.stack([np.arange(n_frames) * 0.5, np.full(n_frames, float(p))], axis=1)
        tracks[p] = Track(p, frames, xy)
    return Scene(frames, dt, tracks)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    detail = getattr(item, "acceptance_detail", "")
    line = f"[acceptance {n:>2}] {status} {title}" + (f" ({detail})" if detail else "")
    _ACCEPTANCE[(n, item.nodeid)] = line
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[key])


@pytest.fixture
def detail(request):
    """Attach a short free-text result to the acceptance pass/fail line."""
    def put(text):
        request.node.acceptance_detail = text
    return put
