from tests.unit.verification.test_registry import *
from tests.unit.verification.test_suites import *
