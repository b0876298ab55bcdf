"""Custom-instruction discovery for RV64IM programs.

The pipeline decodes a program, builds per-block data-flow graphs, enumerates
convex I/O-constrained patterns, groups them into isomorphism classes and
selects the classes worth turning into custom instructions.
"""

__version__ = "0.1.0"
