"""BuildFormer с оконным линейным вниманием на numpy: модель, обучение, оценка, бенчмарк."""

__version__ = "0.1.0"
