import unittest

from test.gridgeom_test import GridGeomTest
from test.shapelib_test import ShapeLibTest
from test.packenv_test import PackEnvTest
from test.candgen_test import CandGenTest
from test.policies_test import PoliciesTest
from test.learner_test import LearnerTest
from test.buffered_test import BufferedTest
from test.bench_test import BenchTest
from test.cli_test import CliTest

if __name__ == "__main__":
    unittest.main()
