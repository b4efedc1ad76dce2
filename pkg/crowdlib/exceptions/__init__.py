from crowdlib.exceptions.exceptions import *
from crowdlib.tensors.exceptions import *
from crowdlib.nn.exceptions import *
from crowdlib.models.exceptions import *
from crowdlib.supervision.exceptions import *
from crowdlib.data.exceptions import *
from crowdlib.training.exceptions import *
from crowdlib.verification.exceptions import *
from crowdlib.cli.exceptions import *
from crowdlib.utils.exceptions import *
