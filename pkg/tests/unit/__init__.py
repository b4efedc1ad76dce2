from tests.unit.tensors import *
from tests.unit.nn import *
from tests.unit.models import *
from tests.unit.supervision import *
from tests.unit.data import *
from tests.unit.training import *
from tests.unit.verification import *
from tests.unit.cli import *
