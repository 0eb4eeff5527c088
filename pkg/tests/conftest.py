import hypothesis
import numpy as np

np.seterr(all="warn")

# select with --hypothesis-profile=ci
hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=1000, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)
hypothesis.settings.load_profile("fast")
