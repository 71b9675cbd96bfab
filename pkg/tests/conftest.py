import numpy as np
import pytest

from cohex.dataset import PatientGenConfig, generate_patients
from cohex.models import FunctionModel, train_cart


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""

    def record(name, ok, detail=""):
        request.config._acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return record


@pytest.fixture(scope="session")
def patients():
    return generate_patients(PatientGenConfig(200, 0))


@pytest.fixture(scope="session")
def patient_tree(patients):
    return train_cart(patients, 2)


@pytest.fixture
def step_model():
    """1-D classifier: class 1 iff x >= 0.5."""
    return FunctionModel(lambda X: (X[:, 0] >= 0.5).astype(int))


class ConstantExplainer:
    name = "constant"
    uses_context = False

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def explain(self, model, context, x):
        return self.value.copy()

    def explain_batch(self, model, context, points):
        return np.tile(self.value, (len(points), 1))


class ContextFreeExplainer:
    """Importance depends on the sample only, never on the context."""

    name = "context_free"
    uses_context = False

    def explain(self, model, context, x):
        return self.explain_batch(model, context, np.atleast_2d(x))[0]

    def explain_batch(self, model, context, points):
        P = np.atleast_2d(points)
        return np.column_stack([np.sin(P[:, 0] / 10.0) ** 2, np.cos(3 * P[:, 1]) ** 2])


@pytest.fixture
def constant_explainer():
    return ConstantExplainer([0.3, 0.7])


@pytest.fixture
def context_free_explainer():
    return ContextFreeExplainer()
