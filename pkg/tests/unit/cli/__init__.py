from tests.unit.cli.test_config import *
from tests.unit.cli.test_main import *
