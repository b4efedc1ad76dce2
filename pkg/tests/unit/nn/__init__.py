from tests.unit.nn.test_functional import *
from tests.unit.nn.test_module import *
