from tests.unit.models.test_backbone import *
from tests.unit.models.test_config import *
from tests.unit.models.test_gcm import *
from tests.unit.models.test_pscnet import *
from tests.unit.models.test_psm import *
