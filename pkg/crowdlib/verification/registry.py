import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from crowdlib.utils.protocols import VerificationSuite
from crowdlib.verification.exceptions import DuplicateSuiteError, UnknownSuiteError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: str
    expected: str

    def describe(self) -> str:
        status = "ok" if self.passed else "FAILED"
        return f"{self.name}: {status} (observed {self.observed}, expected {self.expected})"


def within(name: str, observed: float, expected: float, tolerance: float) -> CheckResult:
    error = abs(observed - expected)
    return CheckResult(
        name, bool(error <= tolerance), f"{observed:.10g}", f"{expected:.10g} +- {tolerance:g}"
    )


def below(name: str, observed: float, bound: float) -> CheckResult:
    return CheckResult(name, bool(observed < bound), f"{observed:.3e}", f"< {bound:g}")


def holds(name: str, passed: bool, observed: str, expected: str) -> CheckResult:
    return CheckResult(name, bool(passed), observed, expected)


@dataclass(frozen=True)
class RegisteredSuite:
    name: str
    group: str
    run: VerificationSuite
    slow: bool = False


@dataclass(frozen=True)
class SuiteOutcome:
    name: str
    group: str
    results: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def failures(self) -> list[CheckResult]:
        return [result for result in self.results if not result.passed]


_suites: dict[str, RegisteredSuite] = dict()


def register_suite(name: str, group: str, slow: bool = False):
    """
    Decorate a function returning check results to make it runnable by name and
    by group. Slow suites are skipped by quick runs.
    """

    def wrapper(fn: Callable[[], Iterable[CheckResult]]):
        if name in _suites:
            raise DuplicateSuiteError(f"suite {name!r} is already registered. ")
        _suites[name] = RegisteredSuite(name, group, fn, slow)
        return fn

    return wrapper


def get_suite(name: str) -> RegisteredSuite:
    try:
        return _suites[name]
    except KeyError:
        raise UnknownSuiteError(f"no verification suite named {name!r}. ")


def groups() -> list[str]:
    return sorted({suite.group for suite in _suites.values()})


def select_suites(
    group: Optional[str] = None, quick: bool = False
) -> list[RegisteredSuite]:
    """
    Registered suites in registration order, optionally restricted to one group.
    `quick` drops slow suites unless their group is asked for by name.
    """
    if group is None:
        return [suite for suite in _suites.values() if not (quick and suite.slow)]
    selected = [suite for suite in _suites.values() if suite.group == group]
    if not selected:
        raise UnknownSuiteError(
            f"no verification group {group!r}; groups are {', '.join(groups())}. "
        )
    return selected


def run_suites(group: Optional[str] = None, quick: bool = False) -> list[SuiteOutcome]:
    outcomes = []
    for suite in select_suites(group, quick):
        results = tuple(suite.run())
        outcome = SuiteOutcome(suite.name, suite.group, results)
        logger.info("suite %s: %s", suite.name, "passed" if outcome.passed else "FAILED")
        for failure in outcome.failures():
            logger.warning(failure.describe())
        outcomes.append(outcome)
    return outcomes
