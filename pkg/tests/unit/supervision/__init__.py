from tests.unit.supervision.test_losses import *
from tests.unit.supervision.test_posterior import *
