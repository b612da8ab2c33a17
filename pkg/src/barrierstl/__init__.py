"""
barrier-stl - controllers that satisfy Signal Temporal Logic by construction.

A formula from the reach/avoid fragment is compiled into high-order control
barrier functions whose class-K parameters are produced by a network and
squashed into a feasibility ledger, so every rollout of the differentiable
QP controller satisfies the formula from the first training iteration.

Layers:

- core: config, exceptions, reverse-mode scalar tape
- models: shapes, formulas, dynamics, trajectories and file schemas
- services: STL monitor, HOCBF synthesis, differentiable QP, networks,
  controllers, simulation, training and reporting
- api: FastAPI monitor service
"""

__version__ = "0.1.0"
