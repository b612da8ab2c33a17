"""
End-to-end runs of the ``barrierstl`` CLI.

Each test calls ``main(argv)`` with a scenario file in a temporary output
directory and checks the exit code, the log output and the files written.
"""
