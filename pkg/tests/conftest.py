import pytest


class FakeLink:
    """Records everything a router sends; timers are kept, not fired."""

    def __init__(self):
        self.now = 0.0
        self.sent = []
        self.timers = []

    def broadcast(self, sender, packet):
        self.sent.append(("broadcast", sender, None, packet))
        return 0

    def unicast(self, sender, receiver, packet):
        self.sent.append(("unicast", sender, receiver, packet))
        return True

    def set_timer(self, delay, action, label=""):
        self.timers.append((self.now + delay, action, label))

    def of_type(self, cls):
        return [s for s in self.sent if isinstance(s[3], cls)]

    def fire_due(self):
        due = [t for t in self.timers if t[0] <= self.now]
        self.timers = [t for t in self.timers if t[0] > self.now]
        for _, action, _ in due:
            action()


@pytest.fixture
def link():
    return FakeLink()


CRITERIA_LINES = []


@pytest.fixture
def criterion():
    """Call with (number, ok, detail); the line is printed in the terminal summary."""
    def record(number, ok, detail):
        CRITERIA_LINES.append((number, ok, detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(CRITERIA_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
