"""tomokit: a workbench for quantum state, process, and detector tomography.

Submodules
----------
matcore    dense complex-matrix kernel (vectorization, inertia, Schur complement)
qobjects   quantum object types, random ensembles, fidelities
povmlib    measurement-family constructors (SIC, MUB, pair bases, polynomial bases, ...)
simkit     measurement records under noise and error models
solvers    estimation programs (linear inversion, LS, ML, trace-min, l1, rank-r)
eprec      algebraic element-probing reconstruction and completeness probes
qptsets    probe-state catalogs for process tomography
bench      benchmark sweeps (CSV/JSON emitting)
cli        command-line entry point
"""

__version__ = "0.1.0"
