from tests.integration.test_cli import *
from tests.integration.test_experiments import *
