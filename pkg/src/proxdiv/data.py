"""Bundled fixture data."""

import numpy as np

# ten draws from the standard Cauchy distribution used for the Cauchy scale examples
CAUCHY_TABLE1 = np.array([0.534, -18.197, 0.726, -0.439, -1.945, 0.0119, 12.376, -0.953, 0.698, 0.818])
CAUCHY_TABLE1.setflags(write=False)

DATASETS = {"cauchy_table1": CAUCHY_TABLE1}
