from tests.unit.training.test_checkpoint import *
from tests.unit.training.test_evaluation import *
from tests.unit.training.test_optimizer import *
from tests.unit.training.test_trainer import *
