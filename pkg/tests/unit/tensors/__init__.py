from tests.unit.tensors.test_functions import *
from tests.unit.tensors.test_gradcheck import *
from tests.unit.tensors.test_tensor import *
