import numpy as np
import pytest

from hemiembed.render import make_sphere_scene, render_stack, sample_uniform_lights

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _criteria[props["criterion"]] = (props.get("title", ""), report.outcome,
                                     props.get("measured", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, outcome, measured = _criteria[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {num:2d}: {status}  {title}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)


@pytest.fixture
def criterion(request, record_property):
    """Tag an acceptance test; call the returned function with the measured value."""
    marker = request.node.get_closest_marker("criterion")
    record_property("criterion", marker.args[0])
    record_property("title", marker.args[1])

    def measured(text):
        record_property("measured", text)

    return measured


@pytest.fixture(scope="session")
def small_sphere():
    return make_sphere_scene(24)


@pytest.fixture(scope="session")
def small_stack(small_sphere):
    return render_stack(small_sphere, sample_uniform_lights(40, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
