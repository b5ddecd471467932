"""Heat production of driven lattice fermions: one-particle engine, Fock oracle and tree expansions."""

__version__ = "0.1.0"
