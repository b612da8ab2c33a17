"""
Test suite for barrierstl.

- unit/: robustness, autodiff, QP, HOCBF construction, networks, training and
  the monitor API, run in-process against the bundled scenarios.
- integration/: the ``barrierstl`` command line driven end to end through
  ``main(argv)``, including exit codes and written artifacts.
"""
