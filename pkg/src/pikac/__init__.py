"""pikac: a compiler front-end for the Pika specification language.

Pika programs define algebraic data types, memory layouts for them, and
recursive functions over the ADTs.  The compiler type-checks a program and,
for each ``%generate`` directive, emits a SuSLik-syntax inductive predicate
(plus auxiliary layout/read-only/copy predicates and an optional synthesis
goal).  A separate executable core interprets a restricted subset of the
language on a concrete store/heap machine and checks the machine's final
states against the separation-logic translation of the evaluated expression.
"""

__version__ = "0.1.0"
