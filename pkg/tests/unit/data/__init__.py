from tests.unit.data.test_annotations import *
from tests.unit.data.test_images import *
from tests.unit.data.test_rasters import *
from tests.unit.data.test_synthetic import *
from tests.unit.data.test_transforms import *
